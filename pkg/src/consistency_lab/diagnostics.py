"""Seeded Monte Carlo experiments on estimator and posterior consistency.

Every replication draws from its own Philox stream keyed by
(master_seed, theta_slot, replication), so results do not depend on how
replications are scheduled. Limits cannot be observed; all statistics are
finite-horizon surrogates and are labelled as such in reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .core import (
    NEG_INF,
    EstimationProblem,
    InvalidInput,
    LabError,
    NoMaximizer,
    UncertifiedError,
    likelihood_ratio_profile,
    make_rng,
    posterior,
    sample_prior,
    sample_trajectory,
)
from .estimators import get_estimator
from .zoo import problem_from_config

KINDS = ("consistency", "posterior", "clr", "dl")
SURROGATE_NOTE = (
    "finite-horizon surrogates: hit fractions estimate P(estimate in ball) at each n; "
    "'stable_from' is the first tested horizon after which the estimate stays correct within the run"
)


@dataclass(frozen=True)
class ExperimentSpec:
    problem: dict
    horizons: tuple[int, ...]
    replications: int
    master_seed: int
    estimators: tuple[str, ...] = ()
    thetas: tuple = ()
    radii: tuple[float, ...] = (0.1, 0.01)
    tail_eps: float = 1e-12
    k_alternatives: int = 64
    dl_radius: float = 0.1
    track_posterior: bool = True

    def __post_init__(self):
        hs = tuple(int(h) for h in self.horizons)
        if not hs or any(b <= a for a, b in zip(hs, hs[1:])) or hs[0] < 1:
            raise InvalidInput("horizons must be positive and strictly increasing")
        if int(self.replications) < 1:
            raise InvalidInput("replications must be at least 1")
        if not all(r > 0 for r in self.radii):
            raise InvalidInput("radii must be positive")
        object.__setattr__(self, "horizons", hs)
        object.__setattr__(self, "estimators", tuple(self.estimators))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        thetas = self.thetas
        if thetas != "prior":
            thetas = tuple(thetas)
            if not thetas:
                raise InvalidInput("thetas must be a non-empty list or 'prior'")
        object.__setattr__(self, "thetas", thetas)
        for name in self.estimators:
            get_estimator(name)
        problem_from_config(self.problem)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["horizons"] = list(self.horizons)
        d["estimators"] = list(self.estimators)
        d["radii"] = list(self.radii)
        d["thetas"] = self.thetas if self.thetas == "prior" else list(self.thetas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        allowed = set(cls.__dataclass_fields__)
        extra = set(d) - allowed - {"kind", "workers"}
        if extra:
            raise InvalidInput(f"unknown experiment fields {sorted(extra)}")
        args = {k: v for k, v in d.items() if k in allowed}
        for k in ("horizons", "estimators", "radii"):
            if k in args:
                args[k] = tuple(args[k])
        if isinstance(args.get("thetas"), list):
            args["thetas"] = tuple(args["thetas"])
        return cls(**args)


def resolve_theta(problem: EstimationProblem, theta, search: int = 100_000) -> int:
    """Index for an int, or for a label such as "02" or "0.3"."""
    if isinstance(theta, bool):
        raise InvalidInput("theta must be an index or a label")
    if isinstance(theta, int):
        problem.check_index(theta)
        return theta
    label = str(theta)
    limit = problem.n_params if problem.n_params is not None else search
    for k in range(limit):
        if str(problem.param(k)) == label:
            return k
    raise InvalidInput(f"no parameter labelled {label!r} among the first {limit}")


# -- JSON helpers -----------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _quantiles(values: Sequence[float]) -> dict:
    vals = [v for v in values if v is not None]
    if not vals:
        return {"q10": None, "q50": None, "q90": None}
    q = np.quantile(np.array(vals, dtype=float), [0.1, 0.5, 0.9])
    return {"q10": float(q[0]), "q50": float(q[1]), "q90": float(q[2])}


@dataclass
class ExperimentReport:
    kind: str
    spec: dict
    rows: list[dict]
    replications: list[dict]
    provenance: dict
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "spec": self.spec,
            "rows": self.rows,
            "replications": self.replications,
            "provenance": self.provenance,
            "summary": self.summary,
            "semantics": SURROGATE_NOTE,
            "version": __version__,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    CSV_COLUMNS = (
        "kind", "estimator", "theta", "n", "radius", "hit_fraction", "uncertified", "no_maximizer",
        "median_estimate_distance", "posterior_mass_q10", "posterior_mass_q50", "posterior_mass_q90",
        "ratio_q10", "ratio_q50", "ratio_q90",
    )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in self.rows:
            w.writerow({k: ("" if row.get(k) is None else _clean(row.get(k))) for k in self.CSV_COLUMNS})
        return buf.getvalue()


def _provenance(spec: ExperimentSpec) -> dict:
    return {
        "bit_generator": "Philox",
        "seeding": "SeedSequence(entropy=master_seed, spawn_key=(theta_slot, replication))",
        "master_seed": spec.master_seed,
        "numpy": np.__version__,
    }


# -- one replication --------------------------------------------------------


def _estimate_record(problem: EstimationProblem, name: str, xs, truth: int) -> dict:
    est = get_estimator(name)
    try:
        out = est(problem, xs)
    except UncertifiedError as exc:
        return {"status": "uncertified", "index": None, "label": None, "distance": None, "detail": str(exc)}
    if isinstance(out, NoMaximizer):
        return {"status": "no-maximizer", "index": None, "label": None, "distance": None}
    d = problem.distance(out.index, truth)
    return {"status": "ok", "index": out.index, "label": str(out), "distance": d}


def _stable_from(horizons, flags) -> int | None:
    start = None
    for n, ok in zip(horizons, flags):
        if ok and start is None:
            start = n
        elif not ok:
            start = None
    return start


def _dl_ratio(problem: EstimationProblem, xs, truth: int, radius: float, k_alt: int) -> dict:
    inside = problem.log_likelihood(truth, xs)
    outside = NEG_INF
    seen = []
    for k, _ in problem.candidates(xs):
        seen.append(k)
        if len(seen) >= k_alt:
            break
    done = len(seen) < k_alt
    if seen:
        lls = problem.log_likelihoods(seen, xs)
        for k, ll in zip(seen, lls):
            if k == truth:
                continue
            if problem.distance(k, truth) < radius:
                inside = max(inside, float(ll))
            else:
                outside = max(outside, float(ll))
    certified = True
    if not done:
        bound = problem.sup_log_likelihood(xs, seen[-1] + 1 if seen else 0)
        if bound is None:
            certified = False
        else:
            outside = max(outside, bound)
    if inside == NEG_INF:
        ratio = math.inf
    else:
        ratio = math.exp(outside - inside) if outside > NEG_INF else 0.0
    return {"ratio": ratio, "certified": certified}


def _replicate(args) -> dict:
    spec_d, kind, slot, theta, rep = args
    spec = ExperimentSpec.from_dict(spec_d)
    problem = problem_from_config(spec.problem)
    rng = make_rng(spec.master_seed, slot, rep)
    truth = sample_prior(problem, rng) if theta == "prior" else resolve_theta(problem, theta)
    nmax = spec.horizons[-1]
    traj = sample_trajectory(problem, truth, nmax, rng)
    xs = traj.symbols
    rec: dict = {
        "theta": truth,
        "theta_label": str(problem.param(truth)),
        "theta_slot": slot,
        "replication": rep,
        "stream": [spec.master_seed, slot, rep],
    }
    if nmax <= 2000:
        rec["trajectory"] = list(xs)
    hs = spec.horizons
    if kind == "consistency":
        ests = {}
        stable = {}
        for name in spec.estimators:
            recs = []
            for n in hs:
                r = _estimate_record(problem, name, xs[:n], truth)
                r["n"] = n
                recs.append(r)
            ests[name] = recs
            stable[name] = _stable_from(hs, [r["index"] == truth for r in recs])
        rec["estimates"] = ests
        rec["stable_from"] = stable
    if kind == "posterior" or (kind == "consistency" and spec.track_posterior):
        masses = []
        for n in hs:
            try:
                masses.append(posterior(problem, xs[:n], spec.tail_eps).mass(truth))
            except LabError:
                masses.append(None)
        rec["posterior_mass"] = masses
    if kind == "clr":
        ratios = []
        for n in hs:
            prof = likelihood_ratio_profile(problem, truth, xs[:n], spec.k_alternatives)
            ratios.append(math.exp(max(v for _, v in prof)) if prof else 0.0)
        rec["max_ratio"] = ratios
    if kind == "dl":
        out = [_dl_ratio(problem, xs[:n], truth, spec.dl_radius, spec.k_alternatives) for n in hs]
        rec["dl_ratio"] = [o["ratio"] for o in out]
        rec["dl_certified"] = all(o["certified"] for o in out)
        rec["below_one_from"] = _stable_from(hs, [o["ratio"] < 1.0 for o in out])
    return rec


# -- aggregation ------------------------------------------------------------


def _tasks(spec: ExperimentSpec, kind: str):
    d = spec.to_dict()
    slots = ["prior"] if spec.thetas == "prior" else list(spec.thetas)
    return [(d, kind, s, th, rep) for s, th in enumerate(slots) for rep in range(spec.replications)]


def _run(spec: ExperimentSpec, kind: str, workers: int) -> list[dict]:
    tasks = _tasks(spec, kind)
    if workers <= 1:
        return [_replicate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _by_slot(recs):
    out: dict[int, list[dict]] = {}
    for r in recs:
        out.setdefault(r["theta_slot"], []).append(r)
    return out


def _theta_key(spec: ExperimentSpec, slot: int, recs) -> str:
    return "prior" if spec.thetas == "prior" else recs[0]["theta_label"]


def _aggregate_consistency(spec: ExperimentSpec, recs) -> tuple[list[dict], dict]:
    rows = []
    summary = {}
    for slot, group in _by_slot(recs).items():
        theta = _theta_key(spec, slot, group)
        for name in spec.estimators:
            for j, n in enumerate(spec.horizons):
                cell = [g["estimates"][name][j] for g in group]
                dists = [c["distance"] for c in cell if c["distance"] is not None]
                mass = _quantiles([g["posterior_mass"][j] for g in group]) if "posterior_mass" in group[0] else _quantiles([])
                for rad in spec.radii:
                    hits = sum(1 for c in cell if c["distance"] is not None and c["distance"] < rad)
                    rows.append(
                        {
                            "kind": "consistency",
                            "estimator": name,
                            "theta": theta,
                            "n": n,
                            "radius": rad,
                            "hit_fraction": hits / len(cell),
                            "uncertified": sum(c["status"] == "uncertified" for c in cell),
                            "no_maximizer": sum(c["status"] == "no-maximizer" for c in cell),
                            "median_estimate_distance": float(np.median(dists)) if dists else None,
                            "posterior_mass_q10": mass["q10"],
                            "posterior_mass_q50": mass["q50"],
                            "posterior_mass_q90": mass["q90"],
                        }
                    )
            stable = [g["stable_from"][name] for g in group]
            summary[f"{name}@{theta}"] = {
                "stable_fraction": sum(s is not None for s in stable) / len(stable),
            }
    return rows, summary


def _aggregate_series(spec: ExperimentSpec, recs, key: str, prefix: str, kind: str) -> list[dict]:
    rows = []
    for slot, group in _by_slot(recs).items():
        theta = _theta_key(spec, slot, group)
        for j, n in enumerate(spec.horizons):
            q = _quantiles([g[key][j] for g in group])
            row = {"kind": kind, "estimator": None, "theta": theta, "n": n, "radius": None}
            row.update({f"{prefix}_{k}": v for k, v in q.items()})
            rows.append(row)
    return rows


def run_consistency(spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    if not spec.estimators:
        raise InvalidInput("a consistency experiment needs at least one estimator")
    recs = _run(spec, "consistency", workers)
    rows, summary = _aggregate_consistency(spec, recs)
    return ExperimentReport("consistency", spec.to_dict(), rows, recs, _provenance(spec), summary)


def run_posterior_consistency(spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    recs = _run(spec, "posterior", workers)
    rows = _aggregate_series(spec, recs, "posterior_mass", "posterior_mass", "posterior")
    return ExperimentReport("posterior", spec.to_dict(), rows, recs, _provenance(spec))


def run_clr(spec: ExperimentSpec, k_alternatives: int | None = None, workers: int = 1) -> ExperimentReport:
    if k_alternatives is not None:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), "k_alternatives": k_alternatives})
    recs = _run(spec, "clr", workers)
    rows = _aggregate_series(spec, recs, "max_ratio", "ratio", "clr")
    return ExperimentReport("clr", spec.to_dict(), rows, recs, _provenance(spec))


def run_dl(spec: ExperimentSpec, radius: float | None = None, k_alternatives: int | None = None, workers: int = 1) -> ExperimentReport:
    """Finite-set surrogate of the distinctive-likelihood ratio at each horizon.

    Outside-ball suprema over the first k_alternatives candidates are topped
    up with the problem's bound for the rest; runs without such a bound are
    flagged as enumerated surrogates.
    """
    upd = {}
    if radius is not None:
        upd["dl_radius"] = radius
    if k_alternatives is not None:
        upd["k_alternatives"] = k_alternatives
    if upd:
        spec = ExperimentSpec.from_dict({**spec.to_dict(), **upd})
    recs = _run(spec, "dl", workers)
    rows = _aggregate_series(spec, recs, "dl_ratio", "ratio", "dl")
    summary = {}
    for slot, group in _by_slot(recs).items():
        theta = _theta_key(spec, slot, group)
        half = len(spec.horizons) // 2
        summary[theta] = {
            "below_one_eventually": sum(g["below_one_from"] is not None for g in group) / len(group),
            "exceeded_one_in_tail_window": sum(any(v > 1.0 for v in g["dl_ratio"][half:]) for g in group) / len(group),
            "certified": all(g["dl_certified"] for g in group),
        }
    return ExperimentReport("dl", spec.to_dict(), rows, recs, _provenance(spec), summary)


RUNNERS = {
    "consistency": run_consistency,
    "posterior": run_posterior_consistency,
    "clr": run_clr,
    "dl": run_dl,
}


def run_experiment(kind: str, spec: ExperimentSpec, workers: int = 1) -> ExperimentReport:
    if kind not in RUNNERS:
        raise InvalidInput(f"unknown experiment kind {kind!r}; valid: {sorted(RUNNERS)}")
    return RUNNERS[kind](spec, workers=workers)
