import csv
import io
import json

import pytest

from consistency_lab.core import InvalidInput, posterior
from consistency_lab.diagnostics import (
    ExperimentSpec,
    resolve_theta,
    run_clr,
    run_consistency,
    run_dl,
    run_experiment,
    run_posterior_consistency,
)
from consistency_lab.zoo import make_problem

GRID = {"problem": "binomial", "params": {"p": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]}}


def spec(**kw):
    base = dict(problem=GRID, horizons=(10, 50), replications=6, master_seed=1, estimators=("map",), thetas=("0.3",))
    base.update(kw)
    return ExperimentSpec(**base)


def test_spec_validation():
    with pytest.raises(InvalidInput):
        spec(horizons=(10, 10))
    with pytest.raises(InvalidInput):
        spec(horizons=())
    with pytest.raises(InvalidInput):
        spec(replications=0)
    with pytest.raises(InvalidInput):
        spec(estimators=("mode",))
    with pytest.raises(InvalidInput):
        ExperimentSpec.from_dict({**spec().to_dict(), "colour": 1})
    s = spec()
    assert ExperimentSpec.from_dict(s.to_dict()) == s


def test_resolve_theta():
    b3 = make_problem("base3-ml-trap")
    assert str(b3.param(resolve_theta(b3, "02"))) == "02"
    assert resolve_theta(b3, 3) == 3
    with pytest.raises(InvalidInput):
        resolve_theta(b3, "11")


def test_reproducible_across_workers():
    s = spec(estimators=("map", "ml", "aml"), replications=8, thetas=("0.3", "0.7"))
    one = run_consistency(s, workers=1).to_json()
    again = run_consistency(s, workers=1).to_json()
    three = run_consistency(s, workers=3).to_json()
    assert one == again == three
    s2 = spec(master_seed=2, estimators=("map", "ml", "aml"), replications=8, thetas=("0.3", "0.7"))
    assert run_consistency(s2).to_json() != one


def test_map_two_point_hits():
    s = ExperimentSpec(
        problem={"problem": "binomial", "params": {"p": [0.3, 0.7]}},
        horizons=(200,),
        replications=100,
        master_seed=5,
        estimators=("map",),
        thetas=("0.7",),
        radii=(0.1,),
    )
    row = run_consistency(s).rows[0]
    assert row["hit_fraction"] == 1.0


def test_single_parameter_hits():
    s = ExperimentSpec(
        problem={"problem": "binomial", "params": {"p": [0.42]}},
        horizons=(1, 5, 20),
        replications=5,
        master_seed=3,
        estimators=("map", "ml", "aml", "minekl"),
        thetas=(0,),
    )
    assert all(r["hit_fraction"] == 1.0 for r in run_consistency(s).rows)


def test_fractions_in_unit_interval_and_prior_thetas():
    s = spec(thetas="prior", replications=10, estimators=("map", "aml"))
    rep = run_consistency(s)
    assert all(0.0 <= r["hit_fraction"] <= 1.0 for r in rep.rows)
    assert {r["theta"] for r in rep.rows} == {"prior"}


def test_posterior_ones_then_zeros_point_mass():
    s = ExperimentSpec(
        problem={"problem": "ones-then-zeros", "params": {}}, horizons=(1, 2, 3, 4, 8), replications=3, master_seed=0, thetas=(2,)
    )
    rep = run_posterior_consistency(s)
    for g in rep.replications:
        assert g["posterior_mass"][2:] == [1.0, 1.0, 1.0]
        assert g["posterior_mass"][0] < 1.0


def test_posterior_mass_cross_check():
    s = ExperimentSpec(problem=GRID, horizons=(5, 20), replications=4, master_seed=9, thetas=("0.4",))
    problem = make_problem(GRID["problem"], GRID["params"])
    rep = run_posterior_consistency(s)
    for g in rep.replications:
        xs = tuple(g["trajectory"])
        for n, m in zip(s.horizons, g["posterior_mass"]):
            assert m == posterior(problem, xs[:n], s.tail_eps).mass(g["theta"])


def test_truncation_eps_does_not_flip_hits():
    a = run_consistency(spec(tail_eps=1e-12, replications=10))
    b = run_consistency(spec(tail_eps=1e-6, replications=10))
    assert [r["hit_fraction"] for r in a.rows] == [r["hit_fraction"] for r in b.rows]


def test_clr_binomial_decay():
    s = ExperimentSpec(
        problem={"problem": "binomial", "params": {"p": [0.5, 0.25]}},
        horizons=(400,),
        replications=200,
        master_seed=4,
        thetas=("0.5",),
    )
    rep = run_clr(s, k_alternatives=1)
    ratios = [g["max_ratio"][0] for g in rep.replications]
    assert sum(r < 1e-5 for r in ratios) >= 0.99 * len(ratios)


def test_clr_disjoint_support_zero():
    s = ExperimentSpec(problem={"problem": "ones-then-zeros", "params": {}}, horizons=(1, 3), replications=2, master_seed=0, thetas=(1,))
    rep = run_clr(s, k_alternatives=3)
    # theta = 2 keeps pace at n = 1 but is ruled out by x_2 = 0
    assert all(g["max_ratio"][0] == 1.0 and g["max_ratio"][1] == 0.0 for g in rep.replications)


def test_dl_binomial_eventually_below_one():
    s = ExperimentSpec(
        problem={"problem": "binomial", "params": {"p": [0.1, 0.3, 0.5, 0.7, 0.9]}},
        horizons=(50, 100, 200, 300, 400, 500),
        replications=100,
        master_seed=6,
        thetas=("0.5",),
        dl_radius=0.15,
    )
    rep = run_dl(s)
    assert rep.summary["0.5"]["below_one_eventually"] >= 0.95
    assert rep.summary["0.5"]["certified"]


def test_dl_base3_at_least_one():
    s = ExperimentSpec(
        problem={"problem": "base3-ml-trap", "params": {}}, horizons=(3, 6, 12), replications=5, master_seed=2, thetas=("02",), dl_radius=1 / 108
    )
    rep = run_dl(s)
    assert all(v >= 1.0 for g in rep.replications for v in g["dl_ratio"])


def test_csv_and_json_shapes():
    rep = run_experiment("consistency", spec(radii=(0.05, 0.2)))
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert len(rows) == 2 * 2
    assert {"estimator", "theta", "n", "radius", "hit_fraction", "median_estimate_distance", "posterior_mass_q50"} <= set(rows[0])
    d = json.loads(rep.to_json())
    assert d["provenance"]["bit_generator"] == "Philox"
    with pytest.raises(InvalidInput):
        run_experiment("bootstrap", spec())


def test_ml_no_maximizer_tallied():
    s = ExperimentSpec(
        problem={"problem": "binomial", "params": {"grid": "rational-offset"}},
        horizons=(5, 10),
        replications=3,
        master_seed=0,
        estimators=("ml",),
        thetas=(0,),
        track_posterior=False,
    )
    rep = run_consistency(s)
    assert all(r["no_maximizer"] == 3 and r["hit_fraction"] == 0.0 for r in rep.rows)
