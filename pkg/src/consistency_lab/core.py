"""Discrete estimation problems and exact log-space probability calculus.

A problem is a countable parameter set with a strictly positive prior and a
sequential observation kernel. Parameters are addressed by their index in a
fixed enumeration (non-increasing prior mass, ties by embedding). Infinite
parameter sets are handled by certified truncation: every enumeration carries
an upper bound on the joint mass of what has not been visited yet.
"""

from __future__ import annotations

import abc
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

NEG_INF = -math.inf
LOG2 = math.log(2.0)
PROB_ATOL = 1e-12
DEFAULT_TAIL_EPS = 1e-12
DEFAULT_BUDGET = 200_000


class LabError(Exception):
    """Base class for errors raised by this package."""

    code = "lab-error"


class InvalidInput(LabError, ValueError):
    code = "invalid-input"


class UnreachableObservation(LabError):
    """The observation has probability zero under every parameter."""

    code = "unreachable-observation"


class UncertifiedError(LabError):
    """A certificate could not be produced within the resource budget."""

    code = "uncertified"


# -- log-space helpers -------------------------------------------------------


def logsumexp(values: Iterable[float]) -> float:
    arr = np.fromiter(values, dtype=float) if not isinstance(values, np.ndarray) else values
    if arr.size == 0:
        return NEG_INF
    m = float(np.max(arr))
    if m == NEG_INF:
        return NEG_INF
    if m == math.inf:
        return math.inf
    return m + math.log(float(np.sum(np.exp(arr - m))))


def safe_log(p: float) -> float:
    return math.log(p) if p > 0.0 else NEG_INF


class NoMaximizer:
    """Sentinel: the likelihood supremum is not attained on the parameter set."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NoMaximizer"

    def __reduce__(self):
        return (NoMaximizer, ())


NO_MAXIMIZER = NoMaximizer()


# -- value types -------------------------------------------------------------


@dataclass(frozen=True)
class ParamId:
    index: int
    embed: tuple[float, ...]
    label: str = ""

    def __str__(self) -> str:
        return self.label or str(self.index)

    def to_dict(self) -> dict:
        return {"index": self.index, "embed": list(self.embed), "label": str(self)}


@dataclass(frozen=True)
class DiscreteDistribution:
    """Distribution over one coordinate alphabet, stored as log-probabilities."""

    support: tuple[int, ...]
    logp: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.logp):
            raise InvalidInput("support and logp differ in length")
        if len(set(self.support)) != len(self.support):
            raise InvalidInput("repeated symbol in support")
        if any(v > 0.0 or math.isnan(v) for v in self.logp):
            raise InvalidInput("log-probabilities must be <= 0")
        total = math.fsum(math.exp(v) for v in self.logp)
        if abs(total - 1.0) > PROB_ATOL:
            raise InvalidInput(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_probs(cls, support: Sequence[int], probs: Sequence[float]) -> "DiscreteDistribution":
        return cls(tuple(support), tuple(safe_log(float(p)) for p in probs))

    def logprob(self, symbol: int) -> float:
        try:
            return self.logp[self.support.index(symbol)]
        except ValueError:
            raise InvalidInput(f"symbol {symbol!r} outside alphabet {self.support}") from None

    def prob(self, symbol: int) -> float:
        return math.exp(self.logprob(symbol))

    @property
    def probs(self) -> tuple[float, ...]:
        return tuple(math.exp(v) for v in self.logp)


@dataclass(frozen=True)
class Trajectory:
    """An observation prefix x_1..x_n.

    ``seed`` and ``theta`` are set when the prefix was sampled; both are None
    for hand-built prefixes.
    """

    symbols: tuple[int, ...]
    seed: tuple[int, ...] | None = None
    theta: int | None = None

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def prefix(self, n: int) -> "Trajectory":
        return Trajectory(self.symbols[:n], self.seed, self.theta)

    @property
    def origin(self) -> str:
        return "sampled" if self.seed is not None else "constructed"

    def to_json(self) -> str:
        return json.dumps(list(self.symbols))

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        data = json.loads(text)
        if not isinstance(data, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in data):
            raise InvalidInput("trajectory JSON must be an array of integers")
        return cls(tuple(data))


def as_symbols(x) -> tuple[int, ...]:
    if isinstance(x, Trajectory):
        return x.symbols
    return tuple(int(v) for v in x)


@dataclass(frozen=True)
class Neighborhood:
    """Open Euclidean ball around ``center``."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidInput("radius must be positive")

    def contains(self, embed: Sequence[float]) -> bool:
        return math.dist(self.center, embed) < self.radius


@dataclass(frozen=True)
class PosteriorState:
    """Truncated posterior.

    Entries are normalised over the enumerated parameters with positive mass;
    ``tail_bound`` bounds the posterior mass of everything not enumerated.
    """

    horizon: int
    params: tuple[ParamId, ...]
    log_entries: tuple[float, ...]
    tail_bound: float
    enumerated: int
    log_evidence: float = field(default=NEG_INF, compare=False)

    def __post_init__(self):
        if len(self.params) != len(self.log_entries):
            raise InvalidInput("params and entries differ in length")

    @property
    def entries(self) -> dict[ParamId, float]:
        return dict(zip(self.params, self.log_entries))

    def mass(self, index: int) -> float:
        for p, v in zip(self.params, self.log_entries):
            if p.index == index:
                return math.exp(v)
        return 0.0

    def probabilities(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_entries, dtype=float))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "entries": [
                {**p.to_dict(), "log_mass": v, "mass": math.exp(v)} for p, v in zip(self.params, self.log_entries)
            ],
            "tail_bound": self.tail_bound,
            "enumerated": self.enumerated,
        }


# -- problems ---------------------------------------------------------------


class EstimationProblem(abc.ABC):
    """Countable parameter set, positive prior, sequential observation kernel.

    Subclasses implement the five abstract methods. The remaining hooks have
    correct but slow defaults and are overridden where a problem knows more.
    """

    name: str = "problem"
    n_params: int | None = None
    independent_coordinates: bool = False

    @abc.abstractmethod
    def param(self, k: int) -> ParamId: ...

    @abc.abstractmethod
    def log_prior(self, k: int) -> float: ...

    @abc.abstractmethod
    def log_prior_tail(self, k: int) -> float:
        """Log of an upper bound on the prior mass of indices >= k."""

    @abc.abstractmethod
    def alphabet(self, n: int) -> tuple[int, ...]:
        """Symbols allowed at coordinate n (1-based)."""

    @abc.abstractmethod
    def kernel(self, k: int, history: tuple[int, ...], n: int) -> DiscreteDistribution:
        """Law of x_n given the parameter and x_1..x_{n-1}."""

    def config(self) -> dict:
        return {"problem": self.name, "params": {}}

    def prior_tail(self, k: int) -> float:
        return math.exp(self.log_prior_tail(k))

    def indices(self) -> Iterator[int]:
        return iter(range(self.n_params)) if self.n_params is not None else itertools.count()

    def check_index(self, k: int) -> None:
        if k < 0 or (self.n_params is not None and k >= self.n_params):
            raise InvalidInput(f"parameter index {k} outside the enumeration")

    def validate(self, x) -> tuple[int, ...]:
        xs = as_symbols(x)
        for i, s in enumerate(xs, start=1):
            if s not in self.alphabet(i):
                raise InvalidInput(f"symbol {s!r} at coordinate {i} outside alphabet {self.alphabet(i)}")
        return xs

    def log_likelihood(self, k: int, x) -> float:
        xs = self.validate(x)
        total = 0.0
        for i in range(len(xs)):
            total += self.kernel(k, xs[:i], i + 1).logprob(xs[i])
            if total == NEG_INF:
                return NEG_INF
        return total

    def log_likelihoods(self, ks: Sequence[int], x) -> np.ndarray:
        return np.array([self.log_likelihood(k, x) for k in ks], dtype=float)

    def sup_log_likelihood(self, x, k: int) -> float | None:
        """Upper bound on the log-likelihood of every index >= k, or None."""
        return None

    sup_is_exact = False

    def candidates(self, x) -> Iterator[tuple[int, float]]:
        """Indices that may have positive likelihood, in enumeration order.

        Each yielded pair carries the log of an upper bound on the joint mass
        prior*likelihood of all indices after it.
        """
        xs = as_symbols(x)
        for k in self.indices():
            if self.n_params is not None and k == self.n_params - 1:
                yield k, NEG_INF
                return
            bound = self.sup_log_likelihood(xs, k + 1)
            yield k, self.log_prior_tail(k + 1) + (0.0 if bound is None else min(bound, 0.0))

    def horizon_class(self, k: int, n: int):
        """Key shared by exactly the indices whose n-step laws coincide."""
        return k

    def horizon_class_log_prior(self, k: int, n: int) -> float:
        """Log prior mass of the whole horizon class of k."""
        if self.n_params is None:
            return self.log_prior(k)
        key = self.horizon_class(k, n)
        return logsumexp([self.log_prior(j) for j in range(self.n_params) if self.horizon_class(j, n) == key])

    def quotient_candidates(self, x) -> list[int] | None:
        """Smallest index of every horizon class with positive likelihood.

        None means the problem cannot list them finitely.
        """
        if self.n_params is None:
            return None
        xs = as_symbols(x)
        seen, out = set(), []
        ks = list(range(self.n_params))
        for k, ll in zip(ks, self.log_likelihoods(ks, xs)):
            key = self.horizon_class(k, len(xs))
            if ll > NEG_INF and key not in seen:
                seen.add(key)
                out.append(k)
        return out

    def distance(self, a: int, b: int) -> float:
        return math.dist(self.param(a).embed, self.param(b).embed)

    def ml_oracle(self, x):
        """Analytic argmax of the likelihood when the problem knows it.

        Returns an index, the NO_MAXIMIZER sentinel, or None for no opinion.
        """
        return None


# -- RNG --------------------------------------------------------------------


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Counter-based generator for stream ``stream`` under master ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        seed, stream = seed[0], tuple(seed[1:]) + tuple(stream)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _seed_tuple(seed, stream=()) -> tuple[int, ...] | None:
    if isinstance(seed, np.random.Generator):
        return None
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed) + tuple(stream)
    return (int(seed),) + tuple(stream)


def _draw(dist: DiscreteDistribution, u: float) -> int:
    cum = 0.0
    last = None
    for s, lp in zip(dist.support, dist.logp):
        if lp == NEG_INF:
            continue
        last = s
        cum += math.exp(lp)
        if u < cum:
            return s
    return last


def sample_trajectory(problem: EstimationProblem, k: int, n: int, seed) -> Trajectory:
    if n < 1:
        raise InvalidInput("n must be at least 1")
    problem.check_index(k)
    rng = make_rng(seed)
    xs: list[int] = []
    for i in range(1, n + 1):
        xs.append(_draw(problem.kernel(k, tuple(xs), i), float(rng.random())))
    return Trajectory(tuple(xs), _seed_tuple(seed) or (), k)


def sample_prior(problem: EstimationProblem, rng: np.random.Generator, budget: int = DEFAULT_BUDGET) -> int:
    u = float(rng.random())
    cum = 0.0
    for k in problem.indices():
        cum += math.exp(problem.log_prior(k))
        if u < cum or problem.log_prior_tail(k + 1) == NEG_INF or k >= budget:
            return k
    return k


def sample_joint(problem: EstimationProblem, n: int, seed) -> tuple[ParamId, Trajectory]:
    rng = make_rng(seed)
    k = sample_prior(problem, rng)
    traj = sample_trajectory(problem, k, n, rng)
    return problem.param(k), Trajectory(traj.symbols, _seed_tuple(seed) or (), k)


# -- posterior and marginals ------------------------------------------------


@dataclass
class _Enumeration:
    indices: list[int]
    log_joint: np.ndarray
    log_tail: float
    log_z: float


def enumerate_joint(problem: EstimationProblem, x, stop, budget: int = DEFAULT_BUDGET) -> _Enumeration:
    """Pull candidates until ``stop(log_z, log_tail)`` or the stream ends."""
    xs = problem.validate(x)
    stream = problem.candidates(xs)
    idx: list[int] = []
    parts: list[np.ndarray] = []
    log_tail = 0.0
    log_z = NEG_INF
    chunk = 16
    exhausted = False
    while True:
        batch = []
        for k, t in stream:
            batch.append(k)
            log_tail = t
            if len(batch) >= chunk:
                break
        else:
            exhausted = True
            log_tail = NEG_INF
        if batch:
            lj = np.array([problem.log_prior(k) for k in batch]) + problem.log_likelihoods(batch, xs)
            idx.extend(batch)
            parts.append(lj)
            log_z = float(np.logaddexp(log_z, logsumexp(lj)))
        if exhausted or log_tail == NEG_INF or stop(log_z, log_tail):
            break
        if len(idx) >= budget:
            if log_z == NEG_INF:
                raise UnreachableObservation(f"no positive mass among {len(idx)} enumerated parameters")
            raise UncertifiedError(f"tail not certified after {len(idx)} parameters")
        chunk = min(chunk * 2, 4096)
    if log_z == NEG_INF:
        raise UnreachableObservation("observation has probability zero under every parameter")
    lj = np.concatenate(parts) if parts else np.array([], dtype=float)
    return _Enumeration(idx, lj, log_tail, log_z)


def posterior(problem: EstimationProblem, x, tail_eps: float = DEFAULT_TAIL_EPS, budget: int = DEFAULT_BUDGET) -> PosteriorState:
    if not tail_eps > 0:
        raise InvalidInput("tail_eps must be positive")
    log_eps = math.log(tail_eps)
    e = enumerate_joint(problem, x, lambda z, t: t - z <= log_eps, budget)
    keep = e.log_joint > NEG_INF
    ks = [k for k, m in zip(e.indices, keep) if m]
    log_entries = e.log_joint[keep] - e.log_z
    tail = math.exp(e.log_tail - e.log_z) if e.log_tail > NEG_INF else 0.0
    return PosteriorState(
        horizon=len(as_symbols(x)),
        params=tuple(problem.param(k) for k in ks),
        log_entries=tuple(float(v) for v in log_entries),
        tail_bound=tail,
        enumerated=len(e.indices),
        log_evidence=e.log_z,
    )


def marginal_log_likelihood(problem: EstimationProblem, x, tail_eps: float = DEFAULT_TAIL_EPS, budget: int = DEFAULT_BUDGET) -> float:
    """Log of an upper bound on the marginal probability of ``x``.

    The enumerated mass Z and the certified tail T satisfy T <= tail_eps and
    Z <= marginal <= Z + T; the value returned is log(Z + T).
    """
    if not tail_eps > 0:
        raise InvalidInput("tail_eps must be positive")
    log_eps = math.log(tail_eps)
    e = enumerate_joint(problem, x, lambda z, t: t <= log_eps, budget)
    return float(np.logaddexp(e.log_z, e.log_tail))


def log_evidence(problem: EstimationProblem, x, rel_eps: float = 1e-13, budget: int = DEFAULT_BUDGET) -> float:
    """log(Z + T) with the certified tail T at most ``rel_eps`` times Z.

    Unlike :func:`marginal_log_likelihood` the precision is relative, which
    is what entropy and message-length sums over many small atoms need.
    """
    log_eps = math.log(rel_eps)
    e = enumerate_joint(problem, x, lambda z, t: t - z <= log_eps, budget)
    return float(np.logaddexp(e.log_z, e.log_tail))


def likelihood_ratio_profile(problem: EstimationProblem, k_true: int, x, k: int) -> list[tuple[ParamId, float]]:
    xs = problem.validate(x)
    base = problem.log_likelihood(k_true, xs)
    if base == NEG_INF:
        raise InvalidInput("the reference parameter has zero likelihood")
    others = list(itertools.islice((j for j in problem.indices() if j != k_true), k))
    lls = problem.log_likelihoods(others, xs)
    return [(problem.param(j), float(ll - base)) for j, ll in zip(others, lls)]
