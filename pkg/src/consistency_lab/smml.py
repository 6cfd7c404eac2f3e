"""Message-length objectives and exhaustive strict MML search.

Codebooks map every support point of x_1..x_n to a parameter index. All
lengths are in nats.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .core import (
    NEG_INF,
    EstimationProblem,
    InvalidInput,
    ParamId,
    UncertifiedError,
    UnreachableObservation,
    log_evidence,
)

ZERO_TOL = 1e-9


# -- support ----------------------------------------------------------------


@dataclass(frozen=True)
class SupportTable:
    """Points of positive marginal probability at horizon n, in lexicographic order."""

    horizon: int
    points: tuple[tuple[int, ...], ...]
    log_r: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.log_r)

    def index(self) -> dict[tuple[int, ...], int]:
        return {x: i for i, x in enumerate(self.points)}


def enumerate_support(problem: EstimationProblem, n: int, rel_eps: float = 1e-13, max_points: int = 100_000) -> SupportTable:
    """Depth-first walk over prefixes, dropping those of zero marginal."""
    if n < 0:
        raise InvalidInput("horizon must be non-negative")
    pts: list[tuple[int, ...]] = []
    lrs: list[float] = []

    def walk(prefix: tuple[int, ...]) -> None:
        if len(prefix) == n:
            pts.append(prefix)
            lrs.append(log_evidence(problem, prefix, rel_eps))
            if len(pts) > max_points:
                raise UncertifiedError(f"support exceeds {max_points} points")
            return
        for s in problem.alphabet(len(prefix) + 1):
            nxt = prefix + (s,)
            try:
                if log_evidence(problem, nxt, rel_eps) == NEG_INF:
                    continue
            except UnreachableObservation:
                continue
            walk(nxt)

    walk(())
    return SupportTable(n, tuple(pts), np.array(lrs, dtype=float))


# -- codebooks --------------------------------------------------------------


@dataclass(frozen=True)
class CodebookAssignment:
    """A finite estimator: support point -> parameter index at one horizon."""

    horizon: int
    items: tuple[tuple[tuple[int, ...], int], ...]

    @classmethod
    def from_mapping(cls, n: int, mapping: Mapping[tuple[int, ...], int]) -> "CodebookAssignment":
        for x in mapping:
            if len(x) != n:
                raise InvalidInput(f"point {x} does not have length {n}")
        return cls(n, tuple(sorted((tuple(x), int(k)) for x, k in mapping.items())))

    @classmethod
    def constant(cls, table: SupportTable, k: int) -> "CodebookAssignment":
        return cls.from_mapping(table.horizon, {x: k for x in table.points})

    @classmethod
    def from_function(cls, table: SupportTable, fn: Callable[[tuple[int, ...]], int]) -> "CodebookAssignment":
        return cls.from_mapping(table.horizon, {x: fn(x) for x in table.points})

    @property
    def mapping(self) -> dict[tuple[int, ...], int]:
        return dict(self.items)

    def __getitem__(self, x) -> int:
        return self.mapping[tuple(x)]

    def used(self) -> list[int]:
        return sorted({k for _, k in self.items})

    def induced(self, table: SupportTable) -> dict[int, float]:
        """Marginal mass of each estimate under the marginal of x."""
        m = self.mapping
        out: dict[int, list[float]] = {}
        for x, r in zip(table.points, table.r):
            out.setdefault(m[x], []).append(float(r))
        return {k: math.fsum(v) for k, v in sorted(out.items())}

    def to_dict(self, problem: EstimationProblem | None = None) -> list[dict]:
        rows = []
        for x, k in self.items:
            row = {"x": list(x), "index": k}
            if problem is not None:
                row["label"] = str(problem.param(k))
            rows.append(row)
        return rows


def _checked(cb: CodebookAssignment, table: SupportTable) -> dict[tuple[int, ...], int]:
    if cb.horizon != table.horizon:
        raise InvalidInput("codebook horizon differs from the support horizon")
    m = cb.mapping
    for x in table.points:
        if x not in m:
            raise InvalidInput(f"assignment missing support point {x}")
    return m


class _LikCache:
    def __init__(self, problem: EstimationProblem):
        self.problem = problem
        self.cache: dict = {}

    def __call__(self, k: int, x: tuple[int, ...]) -> float:
        key = (k, x)
        v = self.cache.get(key)
        if v is None:
            v = self.cache[key] = float(self.problem.log_likelihood(k, x))
        return v


# -- message lengths --------------------------------------------------------


def _neg_xlogx(t: float) -> float:
    return -t * math.log(t) if t > 0.0 else 0.0


@dataclass(frozen=True)
class MessageLengthReport:
    horizon: int
    I1: float
    I2: float
    I2_definition: float
    entropy_H: float
    entropy_x: float
    induced_mass: dict
    gibbs_terms: dict

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "I1": self.I1,
            "I2": self.I2,
            "I2_definition": self.I2_definition,
            "entropy_H": self.entropy_H,
            "entropy_x": self.entropy_x,
            "induced_mass": {str(k): v for k, v in self.induced_mass.items()},
            "gibbs_terms": {str(k): v for k, v in self.gibbs_terms.items()},
        }


def message_lengths(problem: EstimationProblem, cb: CodebookAssignment, table: SupportTable | None = None, rel_eps: float = 1e-13) -> MessageLengthReport:
    table = table if table is not None else enumerate_support(problem, cb.horizon, rel_eps)
    m = _checked(cb, table)
    lik = _LikCache(problem)
    r = table.r
    groups: dict[int, list[int]] = {}
    for i, x in enumerate(table.points):
        groups.setdefault(m[x], []).append(i)
    induced = {k: math.fsum(r[i] for i in idx) for k, idx in sorted(groups.items())}
    h_est = math.fsum(_neg_xlogx(q) for q in induced.values())
    h_x = math.fsum(_neg_xlogx(float(v)) for v in r)

    cross_terms, code_terms = [], []
    gibbs: dict[int, float] = {}
    for k, idx in sorted(groups.items()):
        q = induced[k]
        g = []
        for i in idx:
            ri, lri = float(r[i]), float(table.log_r[i])
            if ri == 0.0:
                continue
            ll = lik(k, table.points[i])
            if ll == NEG_INF:
                g = [math.inf]
                cross_terms.append(math.inf)
                code_terms.append(math.inf)
                break
            cross_terms.append(ri * (lri - ll))
            code_terms.append(-ri * ll)
            g.append((ri / q) * (lri - math.log(q) - ll))
        gibbs[k] = math.inf if math.inf in g else math.fsum(g)

    inf = math.inf in cross_terms
    i2_def = math.inf if inf else h_est + math.fsum(cross_terms)
    i2 = math.inf if inf else math.fsum(induced[k] * gibbs[k] for k in gibbs)
    i1 = math.inf if inf else h_est + math.fsum(code_terms)
    return MessageLengthReport(cb.horizon, i1, i2, i2_def, h_est, h_x, induced, gibbs)


def excess_length_I2(problem: EstimationProblem, cb: CodebookAssignment, tail_eps: float = 1e-13, table: SupportTable | None = None) -> MessageLengthReport:
    return message_lengths(problem, cb, table, tail_eps)


def expected_length_I1(problem: EstimationProblem, cb: CodebookAssignment, tail_eps: float = 1e-13, table: SupportTable | None = None) -> float:
    return message_lengths(problem, cb, table, tail_eps).I1


# -- zero-excess and partition checks ---------------------------------------


@dataclass(frozen=True)
class ZeroExcessResult:
    ok: bool
    witness: dict | None = None

    def __bool__(self) -> bool:
        return self.ok


def zero_excess_check(problem: EstimationProblem, cb: CodebookAssignment, table: SupportTable | None = None, tol: float = ZERO_TOL) -> ZeroExcessResult:
    """Does the law of x given each estimate equal that estimate's likelihood?"""
    table = table if table is not None else enumerate_support(problem, cb.horizon)
    m = _checked(cb, table)
    lik = _LikCache(problem)
    induced = cb.induced(table)
    r = table.r
    for k, q in induced.items():
        if q <= 0.0:
            continue
        for i, x in enumerate(table.points):
            cond = float(r[i]) / q if m[x] == k else 0.0
            p = math.exp(lik(k, x))
            if abs(cond - p) > tol:
                return ZeroExcessResult(False, {"index": k, "label": str(problem.param(k)), "x": list(x), "conditional": cond, "likelihood": p})
    return ZeroExcessResult(True)


@dataclass(frozen=True)
class PartitionResult:
    ok: bool
    disjoint: bool
    covers: bool
    preimages_match: bool

    def __bool__(self) -> bool:
        return self.ok


def partition_check(problem: EstimationProblem, cb: CodebookAssignment, table: SupportTable | None = None) -> PartitionResult:
    table = table if table is not None else enumerate_support(problem, cb.horizon)
    m = _checked(cb, table)
    lik = _LikCache(problem)
    used = [k for k, q in cb.induced(table).items() if q > 0.0]
    supports = {k: {x for x in table.points if lik(k, x) > NEG_INF} for k in used}
    disjoint = all(not (supports[a] & supports[b]) for a, b in itertools.combinations(used, 2))
    covers = set().union(*supports.values()) == set(table.points) if used else not table.points
    pre = all({x for x in table.points if m[x] == k} == supports[k] for k in used)
    return PartitionResult(disjoint and covers and pre, disjoint, covers, pre)


# -- search -----------------------------------------------------------------


@dataclass
class _Component:
    points: list[int]
    cols: list[int]


def _components(allowed: list[list[int]]) -> list[_Component]:
    parent = list(range(len(allowed)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner: dict[int, int] = {}
    for i, cols in enumerate(allowed):
        for c in cols:
            if c in owner:
                ra, rb = find(i), find(owner[c])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                owner[c] = i
    comps: dict[int, _Component] = {}
    for i, cols in enumerate(allowed):
        comp = comps.setdefault(find(i), _Component([], []))
        comp.points.append(i)
        comp.cols.extend(c for c in cols if c not in comp.cols)
    return [comps[k] for k in sorted(comps)]


class _BranchAndBound:
    """Exact minimiser of the excess length on one connected component.

    Objective: sum r log r + H(q) - sum r log P_F(x). The entropy part is
    concave in the group masses q, so over all completions of a partial
    assignment it is minimised by sending all unassigned mass to one group.
    """

    def __init__(self, r, loglik, comp: _Component, tol: float, node_budget: int, max_solutions: int):
        self.tol = tol
        self.node_budget = node_budget
        self.max_solutions = max_solutions
        self.cols = sorted(comp.cols)
        col_pos = {c: j for j, c in enumerate(self.cols)}
        pts = sorted(comp.points, key=lambda i: (sum(loglik[i, c] > NEG_INF for c in self.cols), -r[i], i))
        self.pts = pts
        self.r = [float(r[i]) for i in pts]
        self.allowed = []
        for i in pts:
            opts = [(col_pos[c], float(loglik[i, c])) for c in self.cols if loglik[i, c] > NEG_INF]
            opts.sort(key=lambda t: (-t[1], t[0]))
            self.allowed.append(opts)
        self.const = math.fsum(ri * math.log(ri) for ri in self.r if ri > 0)
        best_ll = [max(ll for _, ll in opts) for opts in self.allowed]
        self.rest_cross = [0.0] * (len(pts) + 1)
        self.rest_mass = [0.0] * (len(pts) + 1)
        for j in range(len(pts) - 1, -1, -1):
            self.rest_cross[j] = self.rest_cross[j + 1] - self.r[j] * best_ll[j]
            self.rest_mass[j] = self.rest_mass[j + 1] + self.r[j]
        self.nodes = 0
        self.truncated = False

    def objective(self, assign: list[int]) -> float:
        q = [0.0] * len(self.cols)
        cross = []
        for j, c in enumerate(assign):
            q[c] += self.r[j]
            ll = dict(self.allowed[j])[c]
            cross.append(-self.r[j] * ll)
        return self.const + math.fsum(_neg_xlogx(v) for v in q) + math.fsum(cross)

    def _greedy(self) -> list[int]:
        return [opts[0][0] for opts in self.allowed]

    def _single(self) -> list[list[int]]:
        out = []
        for c in range(len(self.cols)):
            if all(any(cc == c for cc, _ in opts) for opts in self.allowed):
                out.append([c] * len(self.pts))
        return out

    def solve(self) -> tuple[float, list[list[int]]]:
        starts = [self._greedy()] + self._single()
        self.best = min(self.objective(a) for a in starts)
        self.found: list[tuple[float, list[int]]] = []
        q = [0.0] * len(self.cols)
        self._dfs(0, [], q, 0.0)
        sols = sorted((a for v, a in self.found if v <= self.best + self.tol))
        return self.best, sols

    def _dfs(self, j: int, assign: list[int], q: list[float], cross: float) -> None:
        self.nodes += 1
        if self.nodes > self.node_budget:
            raise UncertifiedError(f"SMML search exceeded {self.node_budget} nodes")
        if j == len(self.pts):
            v = self.objective(assign)
            if v <= self.best + self.tol:
                if v < self.best:
                    self.best = v
                    self.found = [(w, a) for w, a in self.found if w <= v + self.tol]
                if len(self.found) < self.max_solutions:
                    self.found.append((v, list(assign)))
                else:
                    self.truncated = True
            return
        h = sum(_neg_xlogx(v) for v in q)
        rm = self.rest_mass[j]
        h_min = min(h - _neg_xlogx(qc) + _neg_xlogx(qc + rm) for qc in q)
        lb = self.const + h_min + cross + self.rest_cross[j]
        if lb > self.best + self.tol:
            return
        rj = self.r[j]
        for c, ll in self.allowed[j]:
            q[c] += rj
            assign.append(c)
            self._dfs(j + 1, assign, q, cross - rj * ll)
            assign.pop()
            q[c] -= rj


@dataclass
class SmmlResult:
    horizon: int
    optimum: float
    assignments: list[CodebookAssignment]
    candidates: list[ParamId]
    classes: list[dict]
    quotient: bool
    exact: bool
    truncated: bool
    components: int
    nodes: int
    table: SupportTable = field(repr=False)

    def to_dict(self, problem: EstimationProblem) -> dict:
        rows = []
        for cb in self.assignments:
            rep = message_lengths(problem, cb, self.table)
            rows.append(
                {
                    "assignment": cb.to_dict(problem),
                    "used": [str(problem.param(k)) for k in cb.used()],
                    "I2": rep.I2,
                    "gibbs_terms": {str(problem.param(k)): v for k, v in rep.gibbs_terms.items()},
                    "partition_ok": partition_check(problem, cb, self.table).ok,
                    "zero_excess": zero_excess_check(problem, cb, self.table).ok,
                }
            )
        return {
            "problem": problem.config(),
            "horizon": self.horizon,
            "optimum_nats": self.optimum,
            "quotient": self.quotient,
            "exact": self.exact,
            "truncated": self.truncated,
            "support_size": len(self.table),
            "candidates": self.classes,
            "assignments": rows,
            "certificates": {
                "gibbs_terms": [row["gibbs_terms"] for row in rows],
                "partition_ok": [row["partition_ok"] for row in rows],
            },
        }


def _search_candidates(problem: EstimationProblem, table: SupportTable, quotient: bool, extra: int) -> tuple[list[int], bool]:
    n = table.horizon
    exact = True
    chosen: set[int] = set()
    for x in table.points:
        qc = problem.quotient_candidates(x)
        if qc is None:
            exact = False
            qc = []
        if quotient and qc:
            chosen.update(qc)
            continue
        # no quotient: the first few positive-likelihood members in index order
        want = len(qc) + extra
        got = 0
        for k, _ in problem.candidates(x):
            if problem.log_likelihood(k, x) > NEG_INF:
                chosen.add(k)
                got += 1
                if got >= want:
                    break
            if problem.n_params is None and k > 10_000:
                break
    if quotient:
        reps: dict = {}
        for k in sorted(chosen):
            reps.setdefault(problem.horizon_class(k, n), k)
        chosen = set(reps.values())
    return sorted(chosen), exact


def smml_search(
    problem: EstimationProblem,
    n: int,
    quotient: bool = True,
    max_candidates: int = 12,
    max_points: int = 30,
    node_budget: int = 2_000_000,
    max_solutions: int = 10_000,
    tol: float = ZERO_TOL,
    table: SupportTable | None = None,
) -> SmmlResult:
    """Exact minimum of the excess length over codebooks on the candidate set.

    With ``quotient`` the candidates are one representative per class of
    parameters with identical n-step laws. Without it, each point also
    offers one extra member of its last class so the two runs can be
    compared. ``exact`` is False when a problem cannot list its classes.
    """
    table = table if table is not None else enumerate_support(problem, n, max_points=10 * max_points)
    if len(table) > max_points:
        raise UncertifiedError(f"support has {len(table)} points, budget is {max_points}")
    cands, exact = _search_candidates(problem, table, quotient, extra=0 if quotient else 1)
    if len(cands) > max_candidates:
        raise UncertifiedError(f"{len(cands)} candidate parameters, budget is {max_candidates}")
    loglik = np.array([problem.log_likelihoods(cands, x) for x in table.points], dtype=float).reshape(len(table), len(cands))
    allowed = [[c for c in range(len(cands)) if loglik[i, c] > NEG_INF] for i in range(len(table))]
    for i, a in enumerate(allowed):
        if not a:
            raise UncertifiedError(f"no candidate gives positive likelihood to {table.points[i]}")
    comps = _components(allowed)
    optimum = 0.0
    per_comp = []
    nodes = 0
    truncated = False
    for comp in comps:
        bb = _BranchAndBound(table.r, loglik, comp, tol, node_budget, max_solutions)
        best, sols = bb.solve()
        nodes += bb.nodes
        truncated |= bb.truncated
        optimum += best
        per_comp.append([{table.points[bb.pts[j]]: cands[bb.cols[c]] for j, c in enumerate(a)} for a in sols])
    assignments = []
    for combo in itertools.product(*per_comp):
        merged: dict = {}
        for part in combo:
            merged.update(part)
        assignments.append(CodebookAssignment.from_mapping(n, merged))
        if len(assignments) >= max_solutions:
            truncated = True
            break
    assignments.sort(key=lambda cb: cb.items)
    classes = [
        {
            "index": k,
            "label": str(problem.param(k)),
            "class": str(problem.horizon_class(k, n)),
            "log_prior_mass": problem.horizon_class_log_prior(k, n) if quotient else problem.log_prior(k),
        }
        for k in cands
    ]
    return SmmlResult(n, optimum, assignments, [problem.param(k) for k in cands], classes, quotient, exact, truncated, len(comps), nodes, table)
