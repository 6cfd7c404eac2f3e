"""Golden checks behind ``verify-paper``.

Each suite runs a fixed set of experiments under a pinned master seed and
returns a report whose checks are plain pass/fail records. Reports contain
no timings or host details, so equal seeds give byte-identical JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import NEG_INF, NO_MAXIMIZER, Neighborhood, make_rng, posterior, sample_trajectory
from .diagnostics import ExperimentSpec, dumps, run_clr, run_consistency, run_dl, run_posterior_consistency
from .estimators import (
    DISCRETE_LOSS,
    KL_LOSS,
    aml_estimate,
    bayes_estimate,
    discerning_statistic,
    log_sup_likelihood,
    map_estimator,
    ml_estimate,
)
from .smml import (
    CodebookAssignment,
    enumerate_support,
    excess_length_I2,
    partition_check,
    smml_search,
    zero_excess_check,
)
from .zoo import AmlNoDl, OnesThenZeros, RationalOffsetBinomial, SmmlCounterexample, make_binomial

DEFAULT_SEED = 314159
BINOMIAL_GRID = [round(0.1 * i, 1) for i in range(1, 10)]


@dataclass
class SuiteReport:
    suite: str
    seed: int
    checks: list[dict] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def check(self, name: str, passed: bool, **detail) -> bool:
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})
        return bool(passed)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def failing(self) -> list[str]:
        return [c["name"] for c in self.checks if not c["passed"]]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "seed": self.seed,
            "passed": self.passed,
            "checks": self.checks,
            "data": self.data,
            "version": __version__,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _row(report, **match):
    for r in report.rows:
        if all(r.get(k) == v for k, v in match.items()):
            return r
    raise KeyError(match)


# -- suites -----------------------------------------------------------------


def suite_map_proper(seed: int = DEFAULT_SEED, workers: int = 1) -> SuiteReport:
    rep = SuiteReport("map-proper", seed)
    spec = ExperimentSpec(
        problem={"problem": "binomial", "params": {"p": BINOMIAL_GRID}},
        horizons=(50, 100, 200, 500),
        replications=200,
        master_seed=seed,
        estimators=("map",),
        thetas=("0.3",),
        radii=(0.05,),
    )
    run = run_consistency(spec, workers=workers)
    row = _row(run, estimator="map", n=500, radius=0.05)
    rep.check("map hit fraction at n=500, r=0.05 >= 0.99", row["hit_fraction"] >= 0.99, hit_fraction=row["hit_fraction"])
    rep.check(
        "median posterior mass on truth at n=500 >= 0.99",
        row["posterior_mass_q50"] >= 0.99,
        median=row["posterior_mass_q50"],
    )
    rep.check("no uncertified MAP outputs", sum(r["uncertified"] for r in run.rows) == 0)

    two = ExperimentSpec(
        problem={"problem": "binomial", "params": {"p": [0.3, 0.7]}},
        horizons=(200,),
        replications=100,
        master_seed=seed,
        estimators=("map",),
        thetas=("0.7",),
        radii=(0.1,),
        track_posterior=False,
    )
    row2 = _row(run_consistency(two, workers=workers), n=200)
    rep.check("two-point binomial, theta=0.7, n=200: hit fraction 1.0", row2["hit_fraction"] == 1.0, hit_fraction=row2["hit_fraction"])

    problem = make_binomial(BINOMIAL_GRID)
    truth = problem.index_of(0.3)
    vals = [
        discerning_statistic(problem, DISCRETE_LOSS, truth, Neighborhood((0.3,), 0.05), range(9), n).value
        for n in (1, 10, 100)
    ]
    rep.check("discrete loss is discerning: statistic 1 at every n", all(v == 1.0 for v in vals), values=vals)
    rep.data = {
        "rows": run.rows,
        "stable": run.summary,
    }
    return rep


def suite_ml_trap(seed: int = DEFAULT_SEED, workers: int = 1) -> SuiteReport:
    rep = SuiteReport("ml-trap", seed)
    spec = ExperimentSpec(
        problem={"problem": "base3-ml-trap", "params": {}},
        horizons=tuple(range(1, 41)),
        replications=100,
        master_seed=seed,
        estimators=("ml", "map"),
        thetas=("02",),
        radii=(1 / 108, 1 / 54),
        track_posterior=False,
    )
    run = run_consistency(spec, workers=workers)
    ml = [e for g in run.replications for e in g["estimates"]["ml"] if e["n"] > 2]
    certified = [e for e in ml if e["status"] == "ok"]
    min_d = min(e["distance"] for e in certified)
    rep.check(
        "every certified ML output at n > 2 is at distance >= 1/54",
        min_d >= 1 / 54 and len(certified) == len(ml),
        min_distance=min_d,
        certified=len(certified),
        total=len(ml),
    )
    hit = _row(run, estimator="map", n=40, radius=1 / 108)["hit_fraction"]
    rep.check("MAP hit fraction at n=40, r=1/108 >= 0.95", hit >= 0.95, hit_fraction=hit)

    clr_spec = ExperimentSpec(
        problem={"problem": "base3-ml-trap", "params": {}},
        horizons=(10, 20, 40),
        replications=100,
        master_seed=seed,
        thetas=("02",),
    )
    clr = run_clr(clr_spec, workers=workers)
    med = [r["ratio_q50"] for r in clr.rows]
    rep.check("CLR max-ratio medians decrease over n = 10, 20, 40", med[0] > med[1] > med[2], medians=med)

    dl_spec = ExperimentSpec(
        problem={"problem": "base3-ml-trap", "params": {}},
        horizons=(5, 10, 20, 40),
        replications=20,
        master_seed=seed,
        thetas=("02",),
        dl_radius=1 / 108,
    )
    dl = run_dl(dl_spec, workers=workers)
    ratios = [v for g in dl.replications for v in g["dl_ratio"]]
    rep.check("distinctive-likelihood ratio >= 1 at every tested n", min(ratios) >= 1.0, min_ratio=min(ratios))
    rep.data = {
        "map_rows": [r for r in run.rows if r["estimator"] == "map" and r["n"] in (10, 20, 30, 40)],
        "ml_rows": [r for r in run.rows if r["estimator"] == "ml" and r["n"] in (10, 20, 30, 40)],
        "clr_rows": clr.rows,
    }
    return rep


def suite_aml(seed: int = DEFAULT_SEED, workers: int = 1) -> SuiteReport:
    rep = SuiteReport("aml-characterization", seed)
    # (a) dense grid: the likelihood maximum is never attained
    ro = RationalOffsetBinomial()
    no_max_ok, ratio_ok, worst, cases = True, True, math.inf, 0
    for rep_i in range(10):
        rng = make_rng(seed, 1000, rep_i)
        xs = sample_trajectory(ro, rep_i % 6, 300, rng).symbols
        for n in (1, 2, 3, 5, 10, 20, 50, 100, 200, 300):
            x = xs[:n]
            cases += 1
            no_max_ok &= ml_estimate(ro, x) is NO_MAXIMIZER
            a = aml_estimate(ro, x)
            r = math.exp(ro.log_likelihood(a.index, x) - ro.sup_log_likelihood(x, 0))
            worst = min(worst, r - (n - 1) / n)
            ratio_ok &= r >= (n - 1) / n - 1e-12
    rep.check("rational-offset binomial: ML never attained", no_max_ok, cases=cases)
    rep.check("rational-offset binomial: AML ratio to sup >= (n-1)/n", ratio_ok, worst_margin=worst, cases=cases)
    a = aml_estimate(ro, (1, 0))
    th = ro.rate(a.index)
    rep.check("x=(1,0): AML returns theta with 2 theta (1-theta) >= 1/4", 2 * th * (1 - th) >= 0.25, theta=th)

    # (b) three-symbol problem at theta = 0
    dl_spec = ExperimentSpec(
        problem={"problem": "aml-no-dl", "params": {}},
        horizons=tuple(range(1, 301)),
        replications=20,
        master_seed=seed,
        thetas=(0,),
        dl_radius=0.5,
    )
    dl = run_dl(dl_spec, workers=workers)
    checked, bad = 0, 0
    for g in dl.replications:
        xs = g["trajectory"]
        for n in range(2, 301):
            if xs[n - 1] == 1:
                checked += 1
                bad += not g["dl_ratio"][n - 1] >= n / (n - 1) * (1 - 1e-12)
    rep.check("theta=0: DL ratio >= n/(n-1) whenever x_n = 1 (n >= 2)", bad == 0 and checked > 0, indices_checked=checked, violations=bad)

    cons = ExperimentSpec(
        problem={"problem": "aml-no-dl", "params": {}},
        horizons=(50, 100, 200, 300),
        replications=100,
        master_seed=seed,
        estimators=("aml",),
        thetas=(0,),
        radii=(0.5,),
        track_posterior=False,
    )
    hit = _row(run_consistency(cons, workers=workers), n=300)["hit_fraction"]
    rep.check("theta=0: AML hit fraction at n=300 >= 0.9", hit >= 0.9, hit_fraction=hit)

    four = ExperimentSpec(
        problem={"problem": "aml-no-dl", "params": {}},
        horizons=tuple(range(1, 31)),
        replications=50,
        master_seed=seed,
        estimators=("aml",),
        thetas=(4,),
        radii=(0.5,),
        track_posterior=False,
    )
    run4 = run_consistency(four, workers=workers)
    ok4 = all(e["index"] == 4 for g in run4.replications for e in g["estimates"]["aml"] if e["n"] >= 5)
    rep.check("theta=4: AML equals 4 from n=5 onward in every replication", ok4)
    rep.data = {"dl_summary": dl.summary, "aml_theta4_stable_from": [g["stable_from"]["aml"] for g in run4.replications]}
    return rep


def suite_smml(seed: int = DEFAULT_SEED, workers: int = 1) -> SuiteReport:
    rep = SuiteReport("smml-counterexample", seed)
    sm = SmmlCounterexample()
    i2s = {}
    for n in (2, 3, 4):
        table = enumerate_support(sm, n)
        cb = CodebookAssignment.constant(table, sm.index_of(n + 1))
        i2s[n] = excess_length_I2(sm, cb, table=table).I2
        rep.check(f"n={n}: constant estimate n+1 has I2 = 0", abs(i2s[n]) <= 1e-9, I2=i2s[n])
        rep.check(f"n={n}: constant estimate n+1 passes zero-excess check", zero_excess_check(sm, cb, table).ok)

    res = smml_search(sm, 3, quotient=True)
    tail = sm.index_of(4)
    only_tail = all(set(cb.used()) == {tail} for cb in res.assignments)
    rep.check(
        "n=3 quotiented search: every optimum maps all points to the theta>3 class",
        res.exact and bool(res.assignments) and only_tail and abs(res.optimum) <= 1e-9,
        optimum=res.optimum,
        optima=len(res.assignments),
    )
    plain = smml_search(sm, 3, quotient=False)
    rep.check("n=3: search without quotient reaches the same optimum", abs(plain.optimum - res.optimum) <= 1e-9, optimum=plain.optimum)

    n = 4
    table = enumerate_support(sm, n)
    two = sm.index_of(2)
    cb = CodebookAssignment.from_function(table, lambda x: two if sm.log_likelihood(two, x) > NEG_INF else sm.index_of(n + 1))
    x1 = (2, 2, 1, 1)
    q = cb.induced(table)[two]
    cond = float(table.r[table.index()[x1]]) / q
    lik = math.exp(sm.log_likelihood(two, x1))
    target = 2 / 3 + 1 / (3 * 2 ** (n - 2))
    zx = zero_excess_check(sm, cb, table)
    rep.check(
        "n=4, estimate 2 on supp(P_2): conditional of (2,2,1,1) is 3/4 vs likelihood 1/4",
        abs(cond - target) <= 1e-12 and abs(cond - 0.75) <= 1e-12 and abs(lik - 0.25) <= 1e-12 and not zx.ok,
        conditional=cond,
        likelihood=lik,
        witness=zx.witness,
    )
    t3 = enumerate_support(sm, 3)
    cb3 = CodebookAssignment.from_mapping(3, {(2, 2, 1): 0, (2, 2, 0): 1, (2, 2, 2): 2})
    rep.check("overlapping supports both in use: partition check fails", not partition_check(sm, cb3, t3).ok)

    post_spec = ExperimentSpec(
        problem={"problem": "smml-counterexample", "params": {}},
        horizons=(5, 10, 25, 50, 100),
        replications=30,
        master_seed=seed,
        thetas=("2",),
    )
    pc = run_posterior_consistency(post_spec, workers=workers)
    med = [r["posterior_mass_q50"] for r in pc.rows]
    rep.check(
        "theta=2: median posterior mass on truth non-decreasing, rising over horizons to 100",
        all(b >= a for a, b in zip(med, med[1:])) and med[-1] > med[0],
        medians=med,
    )
    rep.data = {"smml_n3": res.to_dict(sm), "I2_constant": {str(k): v for k, v in i2s.items()}}
    return rep


def suite_distribution_based(seed: int = DEFAULT_SEED, workers: int = 1) -> SuiteReport:
    rep = SuiteReport("distribution-based-counterexample", seed)
    otz = OnesThenZeros()
    losses, dists, map_ok = [], [], True
    for r in range(5):
        xs = sample_trajectory(otz, 0, 50, make_rng(seed, 0, r)).symbols
        for n in range(1, 51):
            post = posterior(otz, xs[:n])
            est = bayes_estimate(otz, post, KL_LOSS, candidates=[n])
            if r == 0:
                losses.append(est.expected_loss)
                dists.append(otz.distance(n, 0))
            map_ok &= map_estimator(otz, xs[:n]).index == 0
    rep.check("rogue estimate n has posterior expected KL loss 0 for n <= 50", all(v == 0.0 for v in losses), max_loss=max(losses))
    rep.check("rogue estimate drifts away: distance n from the truth", all(d == n for n, d in enumerate(dists, 1)), last_distance=dists[-1])
    rep.check("MAP equals the truth for every n >= 1", map_ok)
    d = discerning_statistic(otz, KL_LOSS, 0, Neighborhood((0.0,), 0.5), range(0, 6), 5)
    rep.check("KL normaliser at theta=0 is infinite: statistic flagged 0", d.value == 0.0 and d.flag == "normalizer-infinite", flag=d.flag)
    rep.data = {"expected_kl_loss": losses, "distance": dists}
    return rep


SUITES = {
    "map-proper": suite_map_proper,
    "ml-trap": suite_ml_trap,
    "aml-characterization": suite_aml,
    "smml-counterexample": suite_smml,
    "distribution-based-counterexample": suite_distribution_based,
}


def run_suite(name: str, seed: int = DEFAULT_SEED, workers: int = 1) -> SuiteReport:
    return SUITES[name](seed=seed, workers=workers)
