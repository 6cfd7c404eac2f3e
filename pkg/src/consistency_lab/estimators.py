"""MAP, ML, approximate ML and Bayes estimators, plus the discerning statistic.

Every estimator is deterministic and breaks ties toward the smallest
enumeration index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    DEFAULT_BUDGET,
    DEFAULT_TAIL_EPS,
    NEG_INF,
    NO_MAXIMIZER,
    EstimationProblem,
    InvalidInput,
    LabError,
    Neighborhood,
    NoMaximizer,
    ParamId,
    PosteriorState,
    UncertifiedError,
    UnreachableObservation,
    as_symbols,
    posterior,
)

__all__ = [
    "NO_MAXIMIZER",
    "NoMaximizer",
    "LossFunction",
    "DISCRETE_LOSS",
    "KL_LOSS",
    "EstimatorFn",
    "BayesEstimate",
    "map_estimate",
    "map_estimator",
    "ml_estimate",
    "aml_estimate",
    "bayes_estimate",
    "kl_loss",
    "discerning_statistic",
    "get_estimator",
    "get_loss",
]

# relative slack for likelihood comparisons that are equalities in exact arithmetic
LOG_TIE_TOL = 1e-12
KL_ENUM_DEPTH = 12


# -- MAP --------------------------------------------------------------------


def _map_certified(post: PosteriorState) -> bool:
    if not post.log_entries:
        return False
    t = post.tail_bound
    if t == 0.0:
        return True
    # any unseen parameter has mass <= t/(1+t) after renormalising, and the
    # leader keeps at least max/(1+t)
    return t * (1.0 + t) < math.exp(max(post.log_entries))


def map_estimate(post: PosteriorState) -> ParamId:
    if not _map_certified(post):
        raise UncertifiedError("posterior tail may hide a larger mode")
    best = max(post.log_entries)
    winners = [p for p, v in zip(post.params, post.log_entries) if v == best]
    return min(winners, key=lambda p: p.index)


def map_estimator(problem: EstimationProblem, x, tail_eps: float = 1e-3, budget: int = DEFAULT_BUDGET) -> ParamId:
    """MAP with an enumeration deepened until the mode is certified."""
    eps = tail_eps
    while True:
        post = posterior(problem, x, eps, budget)
        if _map_certified(post):
            return map_estimate(post)
        if eps < 1e-300:
            raise UncertifiedError("posterior mode not certified")
        eps *= 1e-6


# -- ML and approximate ML --------------------------------------------------


@dataclass
class _Scan:
    """Candidates pulled so far with their log-likelihoods."""

    problem: EstimationProblem
    xs: tuple[int, ...]
    budget: int
    indices: list[int] = field(default_factory=list)
    lls: list[float] = field(default_factory=list)
    done: bool = False

    def __post_init__(self):
        self._stream = iter(self.problem.candidates(self.xs))
        self._chunk = 16

    def pull(self) -> None:
        if self.done:
            return
        if len(self.indices) >= self.budget:
            raise UncertifiedError(f"no certificate after {len(self.indices)} parameters")
        batch = [k for k, _ in itertools.islice(self._stream, self._chunk)]
        if len(batch) < self._chunk:
            self.done = True
        self._chunk = min(2 * self._chunk, 4096)
        if batch:
            self.indices.extend(batch)
            self.lls.extend(float(v) for v in self.problem.log_likelihoods(batch, self.xs))

    def remainder_bound(self) -> float | None:
        if self.done:
            return NEG_INF
        nxt = self.indices[-1] + 1 if self.indices else 0
        return self.problem.sup_log_likelihood(self.xs, nxt)

    def best(self) -> tuple[int | None, float]:
        if not self.lls:
            return None, NEG_INF
        j = int(np.argmax(self.lls))  # first maximum = smallest index
        return self.indices[j], self.lls[j]


def ml_estimate(problem: EstimationProblem, x, budget: int = DEFAULT_BUDGET):
    """Certified likelihood argmax, or NO_MAXIMIZER from an analytic oracle."""
    xs = problem.validate(x)
    oracle = problem.ml_oracle(xs)
    if oracle is NO_MAXIMIZER:
        return NO_MAXIMIZER
    if oracle is not None:
        return problem.param(oracle)
    scan = _Scan(problem, xs, budget)
    while True:
        scan.pull()
        k, ll = scan.best()
        bound = scan.remainder_bound()
        if scan.done:
            if k is None or ll == NEG_INF:
                raise UnreachableObservation("observation has probability zero under every parameter")
            return problem.param(k)
        # unseen indices are larger, so ties still go to k
        if k is not None and ll > NEG_INF and bound is not None and ll >= bound:
            return problem.param(k)


def log_sup_likelihood(problem: EstimationProblem, x, budget: int = DEFAULT_BUDGET) -> float:
    """Certified supremum of the log-likelihood over the whole parameter set."""
    return _certified_sup(_Scan(problem, problem.validate(x), budget))


def _certified_sup(scan: _Scan) -> float:
    while True:
        scan.pull()
        _, ll = scan.best()
        bound = scan.remainder_bound()
        if scan.done or (bound is not None and ll >= bound):
            if ll == NEG_INF:
                raise UnreachableObservation("observation has probability zero under every parameter")
            return ll
        if bound is not None and scan.problem.sup_is_exact:
            return max(ll, bound)


def aml_estimate(problem: EstimationProblem, x, n: int | None = None, budget: int = DEFAULT_BUDGET) -> ParamId:
    """First index whose likelihood is at least (1 - 1/n) times the supremum."""
    xs = problem.validate(x)
    n = len(xs) if n is None else n
    scan = _Scan(problem, xs, budget)
    log_sup = _certified_sup(scan)
    if log_sup == NEG_INF:
        raise UnreachableObservation("observation has probability zero under every parameter")
    thr = NEG_INF if n <= 1 else math.log1p(-1.0 / n) + log_sup - LOG_TIE_TOL
    seen = 0
    while True:
        for k, ll in zip(scan.indices[seen:], scan.lls[seen:]):
            if ll > NEG_INF and ll >= thr:
                return problem.param(k)
        seen = len(scan.indices)
        if scan.done:
            raise UncertifiedError("no enumerated parameter reaches the approximate-ML threshold")
        scan.pull()


# -- losses -----------------------------------------------------------------


def _kl_coord(p: Sequence[float], q: Sequence[float]) -> float:
    total = 0.0
    for lp, lq in zip(p, q):
        if lp == NEG_INF:
            continue
        if lq == NEG_INF:
            return math.inf
        total += math.exp(lp) * (lp - lq)
    return total


def _kl_chain(problem: EstimationProblem, a: int, b: int, n: int) -> float:
    total = 0.0
    for i in range(1, n + 1):
        pa = problem.kernel(a, (), i)
        pb = problem.kernel(b, (), i)
        lq = [pb.logprob(s) for s in pa.support]
        total += _kl_coord(pa.logp, lq)
        if total == math.inf:
            return math.inf
    return max(total, 0.0)


def _kl_enumerate(problem: EstimationProblem, a: int, b: int, n: int, max_depth: int) -> float:
    if n > max_depth:
        raise UncertifiedError(f"KL enumeration depth {n} exceeds budget {max_depth}")
    terms: list[float] = []

    def walk(hist: tuple[int, ...], la: float, lb: float) -> bool:
        if len(hist) == n:
            terms.append(math.exp(la) * (la - lb))
            return True
        i = len(hist) + 1
        da = problem.kernel(a, hist, i)
        for s, lpa in zip(da.support, da.logp):
            if lpa == NEG_INF:
                continue
            lpb = problem.kernel(b, hist, i).logprob(s)
            if lpb == NEG_INF:
                return False
            if not walk(hist + (s,), la + lpa, lb + lpb):
                return False
        return True

    if not walk((), 0.0, 0.0):
        return math.inf
    return max(math.fsum(terms), 0.0)


def kl_loss(problem: EstimationProblem, theta: int, theta_prime: int, n: int, method: str = "auto", max_depth: int = KL_ENUM_DEPTH) -> float:
    """KL divergence from P_theta to P_theta' over the first n coordinates."""
    if theta == theta_prime:
        return 0.0
    if method == "auto":
        method = "chain" if problem.independent_coordinates else "enumerate"
    if method == "chain":
        if not problem.independent_coordinates:
            raise InvalidInput("chain-rule KL needs conditionally independent coordinates")
        return _kl_chain(problem, theta, theta_prime, n)
    if method == "enumerate":
        return _kl_enumerate(problem, theta, theta_prime, n, max_depth)
    raise InvalidInput(f"unknown KL method {method!r}")


@dataclass(frozen=True)
class LossFunction:
    """L(theta, theta', n), zero on the diagonal.

    ``kind`` is "parameter" (n is ignored) or "distribution".
    """

    name: str
    kind: str
    fn: Callable[[EstimationProblem, int, int, int], float]

    def __call__(self, problem: EstimationProblem, theta: int, theta_prime: int, n: int) -> float:
        if theta == theta_prime:
            return 0.0
        return self.fn(problem, theta, theta_prime, n)

    def normalizer(self, problem: EstimationProblem, theta: int, n: int, candidates: Iterable[int] | None = None) -> float | None:
        """sup over theta' of L(theta', theta, n).

        Taken over ``candidates`` when given (a finite surrogate), over the
        whole set for finite problems, and None when neither is available.
        """
        if self.name == "discrete":
            return 1.0 if problem.n_params != 1 else 0.0
        if candidates is None:
            if problem.n_params is None:
                return None
            candidates = range(problem.n_params)
        vals = [self(problem, c, theta, n) for c in candidates]
        return max(vals) if vals else 0.0


DISCRETE_LOSS = LossFunction("discrete", "parameter", lambda problem, a, b, n: 1.0)
KL_LOSS = LossFunction("kl", "distribution", lambda problem, a, b, n: kl_loss(problem, a, b, n))
_LOSSES = {"discrete": DISCRETE_LOSS, "kl": KL_LOSS}


def get_loss(name: str) -> LossFunction:
    try:
        return _LOSSES[name]
    except KeyError:
        raise InvalidInput(f"unknown loss {name!r}; valid: {sorted(_LOSSES)}") from None


# -- Bayes estimators -------------------------------------------------------


@dataclass(frozen=True)
class BayesEstimate:
    param: ParamId
    expected_loss: float
    expected_losses: tuple[float, ...]
    candidates: tuple[int, ...]
    tail_bound: float
    tail_verified: bool
    loss_upper_bound: float


def bayes_estimate(
    problem: EstimationProblem,
    post: PosteriorState,
    loss: LossFunction,
    candidates: Iterable[int] | None = None,
) -> BayesEstimate:
    """Candidate minimising posterior expected loss over the enumerated entries.

    The unenumerated posterior tail adds at most tail_bound * K, with K the
    loss normaliser at the candidate; when K is unknown the truncation is
    reported as unverified.
    """
    cands = tuple(sorted({int(c) for c in candidates})) if candidates is not None else tuple(p.index for p in post.params)
    if not cands:
        raise InvalidInput("candidate set is empty")
    probs = post.probabilities()
    n = post.horizon
    expected = []
    for c in cands:
        terms = []
        for p, w in zip(post.params, probs):
            if w == 0.0:
                continue
            v = loss(problem, p.index, c, n)
            if v == math.inf:
                terms = [math.inf]
                break
            terms.append(w * v)
        expected.append(math.inf if terms and terms[-1] == math.inf else math.fsum(terms))
    best = min(range(len(cands)), key=lambda j: (expected[j], cands[j]))
    if expected[best] == math.inf:
        raise LabError("every candidate has infinite expected loss")
    if loss.name == "discrete":
        k_norm = 1.0
    elif problem.n_params is not None and problem.n_params <= 64:
        k_norm = loss.normalizer(problem, cands[best], n)
    else:
        k_norm = None
    if k_norm == math.inf:
        k_norm = None
    if post.tail_bound == 0.0:
        verified, upper = True, expected[best]
    elif k_norm is not None:
        verified, upper = True, expected[best] + post.tail_bound * k_norm
    else:
        verified, upper = False, math.inf
    return BayesEstimate(
        param=problem.param(cands[best]),
        expected_loss=expected[best],
        expected_losses=tuple(expected),
        candidates=cands,
        tail_bound=post.tail_bound,
        tail_verified=verified,
        loss_upper_bound=upper,
    )


# -- discerning statistic ---------------------------------------------------


@dataclass(frozen=True)
class DiscerningResult:
    value: float
    flag: str | None = None


def discerning_statistic(
    problem: EstimationProblem,
    loss: LossFunction,
    theta: int,
    nbhd: Neighborhood,
    candidates: Iterable[int],
    n: int,
) -> DiscerningResult:
    """inf over candidates outside the ball of L(theta, c)/K at one horizon."""
    cands = list(candidates)
    k_norm = loss.normalizer(problem, theta, n, cands)
    if k_norm is None or k_norm == math.inf:
        return DiscerningResult(0.0, "normalizer-infinite")
    outside = [c for c in cands if not nbhd.contains(problem.param(c).embed)]
    if not outside:
        return DiscerningResult(math.inf, "vacuous")
    if k_norm == 0.0:
        return DiscerningResult(0.0, "normalizer-zero")
    return DiscerningResult(min(loss(problem, theta, c, n) for c in outside) / k_norm)


# -- named estimators -------------------------------------------------------


@dataclass(frozen=True)
class EstimatorFn:
    name: str
    evaluate: Callable[[EstimationProblem, object], object]
    tie_break: str = "smallest-index"

    def __call__(self, problem: EstimationProblem, x):
        return self.evaluate(problem, x)


def _bayes_by_name(loss: LossFunction) -> Callable:
    def evaluate(problem: EstimationProblem, x):
        post = posterior(problem, x, DEFAULT_TAIL_EPS)
        return bayes_estimate(problem, post, loss).param

    return evaluate


def get_estimator(name: str) -> EstimatorFn:
    if name == "map":
        return EstimatorFn("map", lambda problem, x: map_estimator(problem, x))
    if name == "ml":
        return EstimatorFn("ml", lambda problem, x: ml_estimate(problem, x))
    if name == "aml":
        return EstimatorFn("aml", lambda problem, x: aml_estimate(problem, x))
    if name == "minekl":
        return EstimatorFn("minekl", _bayes_by_name(KL_LOSS))
    if name.startswith("bayes:"):
        return EstimatorFn(name, _bayes_by_name(get_loss(name.split(":", 1)[1])))
    raise InvalidInput(f"unknown estimator {name!r}; valid: ['aml', 'bayes:discrete', 'bayes:kl', 'map', 'minekl', 'ml']")


ESTIMATOR_NAMES = ("map", "ml", "aml", "minekl", "bayes:discrete", "bayes:kl")
