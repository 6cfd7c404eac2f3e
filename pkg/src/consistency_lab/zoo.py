"""Concrete estimation problems.

Every problem here is addressable by name through :func:`make_problem` and
round-trips through its JSON config ``{"problem": name, "params": {...}}``.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .core import (
    LOG2,
    NEG_INF,
    NO_MAXIMIZER,
    PROB_ATOL,
    DiscreteDistribution,
    EstimationProblem,
    InvalidInput,
    ParamId,
    UnreachableObservation,
    as_symbols,
    safe_log,
)

LOG16 = math.log(16.0)
LOG8 = math.log(8.0)
LOG7 = math.log(7.0)
BINARY = (0, 1)
TERNARY = (0, 1, 2)


class _Cache(dict):
    """Plain dict that forgets everything once it grows past ``cap`` entries."""

    def __init__(self, cap: int = 4096):
        super().__init__()
        self.cap = cap

    def put(self, key, value):
        if len(self) >= self.cap:
            self.clear()
        self[key] = value
        return value


def _fold(rows: Sequence[Sequence[float]], xs: Sequence[int]) -> float:
    # same left fold as EstimationProblem.log_likelihood, so results agree bit for bit
    total = 0.0
    for row, s in zip(rows, xs):
        total += row[s]
        if total == NEG_INF:
            return NEG_INF
    return total


def _explicit_then_class(problem: EstimationProblem, explicit: list[tuple[int, float]], start: int, class_ll: float):
    """Stream: a few explicit indices, then every index >= start.

    All indices >= start share the log-likelihood ``class_ll``. Tail bounds
    are exact, not just upper bounds.
    """
    joint = [problem.log_prior(k) + ll for k, ll in explicit]
    class_tail = problem.log_prior_tail(start) + class_ll if class_ll > NEG_INF else NEG_INF
    for j, (k, _) in enumerate(explicit):
        rest = [class_tail] + joint[j + 1 :]
        yield k, float(np.logaddexp.reduce(rest))
    if class_ll == NEG_INF:
        return
    for k in itertools.count(start):
        yield k, problem.log_prior_tail(k + 1) + class_ll


# -- binomial ---------------------------------------------------------------


class _BernoulliFamily(EstimationProblem):
    """Shared machinery for i.i.d. Bernoulli problems indexed by a rate table."""

    independent_coordinates = True

    def alphabet(self, n: int) -> tuple[int, ...]:
        return BINARY

    def _rates(self, ks) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def rate(self, k: int) -> float:
        raise NotImplementedError

    def kernel(self, k: int, history, n: int) -> DiscreteDistribution:
        self.check_index(k)
        lo, l1 = self._rates([k])
        return DiscreteDistribution(BINARY, (float(lo[0]), float(l1[0])))

    def log_likelihood(self, k: int, x) -> float:
        xs = self.validate(x)
        self.check_index(k)
        lo, l1 = self._rates([k])
        row = (float(lo[0]), float(l1[0]))
        return _fold([row] * len(xs), xs)

    def log_likelihoods(self, ks, x) -> np.ndarray:
        xs = self.validate(x)
        ks = list(ks)
        lo, l1 = self._rates(ks)
        acc = np.zeros(len(ks))
        for s in xs:
            acc = acc + (l1 if s == 1 else lo)
        return acc


class BinomialProblem(_BernoulliFamily):
    name = "binomial"

    def __init__(self, p: Sequence[float], prior: Sequence[float] | None = None, labels: Sequence[str] | None = None):
        p = [float(v) for v in p]
        if not p:
            raise InvalidInput("binomial problem needs at least one rate")
        if len(set(p)) != len(p):
            raise InvalidInput("duplicate rates: the likelihood family must be injective")
        if any(not 0.0 <= v <= 1.0 for v in p):
            raise InvalidInput("rates must lie in [0, 1]")
        if prior is None:
            prior = [1.0 / len(p)] * len(p)
        prior = [float(v) for v in prior]
        if len(prior) != len(p) or any(v <= 0 for v in prior):
            raise InvalidInput("prior must be strictly positive, one mass per rate")
        if abs(math.fsum(prior) - 1.0) > PROB_ATOL:
            raise InvalidInput("prior must sum to 1")
        labels = list(labels) if labels is not None else [repr(v) for v in p]
        order = sorted(range(len(p)), key=lambda i: (-prior[i], p[i]))
        self._p = [p[i] for i in order]
        self._prior = [prior[i] for i in order]
        self._labels = [labels[i] for i in order]
        self._cfg = {"p": p, "prior": prior}
        self.n_params = len(p)
        self._lo = np.array([safe_log(1.0 - v) for v in self._p])
        self._l1 = np.array([safe_log(v) for v in self._p])
        self._log_prior = [math.log(v) for v in self._prior]
        # suffix sums of prior mass, for tail bounds
        self._tails = [math.fsum(self._prior[k:]) for k in range(self.n_params)] + [0.0]

    def config(self) -> dict:
        return {"problem": self.name, "params": dict(self._cfg)}

    def rate(self, k: int) -> float:
        return self._p[k]

    def _rates(self, ks):
        idx = np.asarray(ks, dtype=int)
        return self._lo[idx], self._l1[idx]

    def param(self, k: int) -> ParamId:
        self.check_index(k)
        return ParamId(k, (self._p[k],), self._labels[k])

    def log_prior(self, k: int) -> float:
        return self._log_prior[k]

    def log_prior_tail(self, k: int) -> float:
        return safe_log(self._tails[min(k, self.n_params)])

    def index_of(self, p: float) -> int:
        return self._p.index(float(p))


def farey_offsets() -> Iterator[Fraction]:
    """Rationals q with 0 < pi + q < 1, by increasing denominator, then value."""
    for d in itertools.count(1):
        lo = math.floor(-math.pi * d) + 1
        hi = math.floor((1.0 - math.pi) * d)
        for a in range(lo, hi + 1):
            if math.gcd(a, d) == 1:
                yield Fraction(a, d)


class RationalOffsetBinomial(_BernoulliFamily):
    """Bernoulli rates pi + q for rational q: dense in (0, 1), contains no rational."""

    name = "binomial"
    sup_is_exact = True

    def __init__(self):
        self._gen = farey_offsets()
        self._q: list[Fraction] = []
        self._p = np.empty(0)
        self._lo = np.empty(0)
        self._l1 = np.empty(0)

    def config(self) -> dict:
        return {"problem": self.name, "params": {"grid": "rational-offset"}}

    def _ensure(self, k: int) -> None:
        if k < len(self._q):
            return
        target = max(k + 1, 2 * len(self._q), 64)
        while len(self._q) < target:
            self._q.append(next(self._gen))
        p = [math.pi + float(q) for q in self._q]
        self._p = np.array(p)
        self._lo = np.array([math.log(1.0 - v) for v in p])
        self._l1 = np.array([math.log(v) for v in p])

    def offset(self, k: int) -> Fraction:
        self.check_index(k)
        self._ensure(k)
        return self._q[k]

    def rate(self, k: int) -> float:
        self._ensure(k)
        return float(self._p[k])

    def _rates(self, ks):
        idx = np.asarray(ks, dtype=int)
        if idx.size:
            self._ensure(int(idx.max()))
        return self._lo[idx], self._l1[idx]

    def param(self, k: int) -> ParamId:
        q = self.offset(k)
        return ParamId(k, (self.rate(k),), f"pi{'+' if q >= 0 else '-'}{abs(q)}")

    def log_prior(self, k: int) -> float:
        return -(k + 1) * LOG2

    def log_prior_tail(self, k: int) -> float:
        return -k * LOG2

    def sup_log_likelihood(self, x, k: int) -> float:
        xs = as_symbols(x)
        n, ones = len(xs), sum(xs)
        if n == 0:
            return 0.0
        rho = ones / n
        out = 0.0
        if ones:
            out += ones * math.log(rho)
        if n - ones:
            out += (n - ones) * math.log(1.0 - rho)
        return out

    def ml_oracle(self, x):
        # the only turning point is the ones-fraction, which is rational and so
        # never in the set; at the boundary fractions the sup sits at 0 or 1
        return 0 if len(as_symbols(x)) == 0 else NO_MAXIMIZER


def make_binomial(p: Sequence[float] | None = None, prior: Sequence[float] | None = None, grid: str | None = None):
    if grid is not None:
        if grid != "rational-offset":
            raise InvalidInput(f"unknown binomial grid {grid!r}; valid: ['rational-offset']")
        if p is not None:
            raise InvalidInput("give either a rate list or a grid, not both")
        return RationalOffsetBinomial()
    if p is None:
        raise InvalidInput("binomial problem needs 'p' or 'grid'")
    return BinomialProblem(p, prior)


# -- ones then zeros --------------------------------------------------------


class OnesThenZeros(EstimationProblem):
    """theta ones followed by zeros forever; theta = 0 means ones forever."""

    name = "ones-then-zeros"
    independent_coordinates = True
    _rows = {1: (NEG_INF, 0.0), 0: (0.0, NEG_INF)}

    def param(self, k: int) -> ParamId:
        self.check_index(k)
        return ParamId(k, (float(k),), str(k))

    def log_prior(self, k: int) -> float:
        return -(k + 1) * LOG2

    def log_prior_tail(self, k: int) -> float:
        return -k * LOG2

    def alphabet(self, n: int):
        return BINARY

    def _symbol(self, k: int, n: int) -> int:
        return 1 if k == 0 or n <= k else 0

    def kernel(self, k: int, history, n: int) -> DiscreteDistribution:
        return DiscreteDistribution(BINARY, self._rows[self._symbol(k, n)])

    def log_likelihood(self, k: int, x) -> float:
        xs = self.validate(x)
        self.check_index(k)
        return 0.0 if all(s == self._symbol(k, i) for i, s in enumerate(xs, 1)) else NEG_INF

    def log_likelihoods(self, ks, x) -> np.ndarray:
        return np.array([self.log_likelihood(k, x) for k in ks], dtype=float)

    def sup_log_likelihood(self, x, k: int) -> float:
        return 0.0

    def _ones(self, xs) -> int | None:
        """m when xs = 1^m 0^(n-m), else None."""
        m = 0
        while m < len(xs) and xs[m] == 1:
            m += 1
        return m if all(s == 0 for s in xs[m:]) else None

    def candidates(self, x):
        xs = self.validate(x)
        n = len(xs)
        if n == 0:
            return super().candidates(xs)
        m = self._ones(xs)
        if m is None:
            return iter(())
        if m < n:
            return iter([(m, NEG_INF)])
        return _explicit_then_class(self, [(0, 0.0)], n, 0.0)

    def horizon_class(self, k: int, n: int):
        return "ones" if k == 0 or k >= n else k

    def horizon_class_log_prior(self, k: int, n: int) -> float:
        if self.horizon_class(k, n) == "ones":
            return float(np.logaddexp(-LOG2, -n * LOG2)) if n > 0 else 0.0
        return self.log_prior(k)

    def quotient_candidates(self, x):
        xs = self.validate(x)
        m = self._ones(xs)
        if m is None:
            return []
        return [0] if m == len(xs) else [m]


# -- base-3 ML trap ---------------------------------------------------------


def base3_level(k: int) -> tuple[int, int]:
    """(s, m): digit count and position within level s of index k."""
    s = (k + 2).bit_length() - 1
    return s, k + 2 - (1 << s)


def base3_index(digits: str) -> int:
    if not digits or set(digits) - {"0", "2"}:
        raise InvalidInput("base-3 digits must be a non-empty string over {0, 2}")
    s = len(digits)
    return (1 << s) - 2 + int(digits.replace("2", "1"), 2)


class Base3MLTrap(EstimationProblem):
    """Parameters are finite {0,2}-digit strings followed by an infinite run of 1s.

    The first s coordinates reveal the digits deterministically; later ones
    are Bernoulli with the parameter's own value as the rate.
    """

    name = "base3-ml-trap"
    independent_coordinates = True

    def __init__(self):
        self._rows = _Cache()

    def digits(self, k: int) -> str:
        self.check_index(k)
        s, m = base3_level(k)
        return format(m, f"0{s}b").replace("1", "2")

    def exact_value(self, k: int) -> Fraction:
        d = self.digits(k)
        s = len(d)
        v = sum(Fraction(int(c), 3**i) for i, c in enumerate(d, 1))
        return v + Fraction(1, 2 * 3**s)

    def param(self, k: int) -> ParamId:
        return ParamId(k, (float(self.exact_value(k)),), self.digits(k))

    def index_of(self, digits: str) -> int:
        return base3_index(digits)

    def distance(self, a: int, b: int) -> float:
        return float(abs(self.exact_value(a) - self.exact_value(b)))

    def log_prior(self, k: int) -> float:
        return LOG7 - base3_level(k)[0] * LOG16

    def log_prior_tail(self, k: int) -> float:
        if k <= 0:
            return 0.0
        s, m = base3_level(k)
        # (2^s - m) params left at level s, then 8^-s for all deeper levels
        return -s * LOG8 + math.log1p(7.0 * (1.0 - m / (1 << s)))

    def alphabet(self, n: int):
        return BINARY

    def _row_table(self, k: int):
        rows = self._rows.get(k)
        if rows is None:
            d = self.digits(k)
            theta = float(self.exact_value(k))
            det = [(0.0, NEG_INF) if c == "0" else (NEG_INF, 0.0) for c in d]
            rows = self._rows.put(k, (det, (math.log(1.0 - theta), math.log(theta))))
        return rows

    def kernel(self, k: int, history, n: int) -> DiscreteDistribution:
        det, tail = self._row_table(k)
        return DiscreteDistribution(BINARY, det[n - 1] if n <= len(det) else tail)

    def log_likelihood(self, k: int, x) -> float:
        xs = self.validate(x)
        det, tail = self._row_table(k)
        rows = det[: len(xs)] + [tail] * max(0, len(xs) - len(det))
        return _fold(rows, xs)

    def log_likelihoods(self, ks, x) -> np.ndarray:
        return np.array([self.log_likelihood(k, x) for k in ks], dtype=float)

    def sup_log_likelihood(self, x, k: int) -> float:
        return 0.0

    def candidates(self, x):
        xs = self.validate(x)
        n = len(xs)
        if n == 0:
            yield from super().candidates(xs)
            return
        deep = math.log(8.0) - n * LOG16  # mass of all levels >= n
        for s in range(1, n):
            k = base3_index("".join("2" if v else "0" for v in xs[:s]))
            if s + 1 <= n - 1:
                # levels s+1..n-1, at most one match each, likelihood <= 1
                a, b = s + 1, n - 1
                shallow = math.log(112.0 / 15.0) - a * LOG16 + math.log1p(-(16.0 ** -(b - a + 1)))
                yield k, float(np.logaddexp(shallow, deep))
            else:
                yield k, deep
        prefix = int("".join(str(v) for v in xs), 2)
        for s in itertools.count(n):
            width = 1 << (s - n)
            first = (1 << s) - 2 + prefix * width
            below = -n * LOG2 - s * LOG8  # matching params at levels > s
            for j in range(width):
                left = width - 1 - j
                t = below if left == 0 else float(np.logaddexp(math.log(left) + LOG7 - s * LOG16, below))
                yield first + j, t

    def horizon_class(self, k: int, n: int):
        s, _ = base3_level(k)
        return k if s < n else ("det", self.digits(k)[:n])

    def horizon_class_log_prior(self, k: int, n: int) -> float:
        s, _ = base3_level(k)
        return self.log_prior(k) if s < n else LOG8 - n * LOG16

    def quotient_candidates(self, x):
        xs = self.validate(x)
        n = len(xs)
        out = [base3_index("".join("2" if v else "0" for v in xs[:s])) for s in range(1, n + 1)]
        return out if n else [0]


# -- approximate ML without distinctive likelihoods -------------------------


class AmlNoDl(EstimationProblem):
    """Three-symbol problem whose likelihoods are not distinctive at theta = 0.

    The prior is 2^(-1-theta).
    """

    name = "aml-no-dl"
    independent_coordinates = True

    def __init__(self):
        self._an = _Cache(64)

    def param(self, k: int) -> ParamId:
        self.check_index(k)
        return ParamId(k, (float(k),), str(k))

    def log_prior(self, k: int) -> float:
        return -(k + 1) * LOG2

    def log_prior_tail(self, k: int) -> float:
        return -k * LOG2

    def alphabet(self, n: int):
        return TERNARY

    @staticmethod
    def _probs(k: int, n: int) -> tuple[float, float, float]:
        if k == 0:
            return ((n - 1) / n, 1.0 / n, 0.0)
        if n == 1 or n == k:
            return (0.0, 1.0, 0.0)
        if n < k:
            return (((n - 1) / n) ** 2, (n - 1) / n**2, 1.0 / n)
        return (0.0, 0.0, 1.0)

    _row_cache: dict = {}

    def _row(self, k: int, n: int) -> tuple[float, ...]:
        # rows depend on k only through which branch applies
        key = (0 if k == 0 else 1 if (n == 1 or n == k) else 2 if n < k else 3, n)
        row = self._row_cache.get(key)
        if row is None:
            row = tuple(safe_log(p) for p in self._probs(k, n))
            self._row_cache[key] = row
        return row

    def kernel(self, k: int, history, n: int) -> DiscreteDistribution:
        return DiscreteDistribution(TERNARY, self._row(k, n))

    def log_likelihood(self, k: int, x) -> float:
        xs = self.validate(x)
        self.check_index(k)
        return _fold([self._row(k, i) for i in range(1, len(xs) + 1)], xs)

    def _analyze(self, xs):
        hit = self._an.get(xs)
        if hit is not None:
            return hit
        n = len(xs)
        explicit = []
        ll0 = self.log_likelihood(0, xs)
        if ll0 > NEG_INF:
            explicit.append((0, ll0))
        j = max((i for i, s in enumerate(xs, 1) if s != 2), default=0)
        if j >= 1:
            llj = self.log_likelihood(j, xs)
            if llj > NEG_INF:
                explicit.append((j, llj))
        tail_ll = self.log_likelihood(n + 1, xs)
        return self._an.put(xs, (explicit, n + 1, tail_ll))

    def log_likelihoods(self, ks, x) -> np.ndarray:
        xs = self.validate(x)
        explicit, start, tail_ll = self._analyze(xs)
        known = dict(explicit)
        out = []
        for k in ks:
            if k >= start:
                out.append(tail_ll)
            else:
                out.append(known.get(k, NEG_INF))
        return np.array(out, dtype=float)

    def sup_log_likelihood(self, x, k: int) -> float:
        explicit, start, tail_ll = self._analyze(self.validate(x))
        return max([ll for j, ll in explicit if j >= k] + [tail_ll])

    sup_is_exact = True

    def candidates(self, x):
        xs = self.validate(x)
        if not xs:
            return super().candidates(xs)
        explicit, start, tail_ll = self._analyze(xs)
        return _explicit_then_class(self, explicit, start, tail_ll)

    def horizon_class(self, k: int, n: int):
        return k if k <= n else "tail"

    def horizon_class_log_prior(self, k: int, n: int) -> float:
        return self.log_prior(k) if k <= n else self.log_prior_tail(n + 1)

    def quotient_candidates(self, x):
        xs = self.validate(x)
        explicit, start, tail_ll = self._analyze(xs)
        return [k for k, _ in explicit] + ([start] if tail_ll > NEG_INF else [])


# -- SMML counterexample ----------------------------------------------------


class SmmlCounterexample(EstimationProblem):
    """Index k stands for theta = k + 1; the prior is 2^-theta.

    Before coordinate theta the kernel copies the predictive law of x_n given
    theta <= n, so every theta > n reproduces the marginal of x_1..x_n.
    """

    name = "smml-counterexample"

    def __init__(self):
        self._states = _Cache(1 << 15)
        self._bern: dict[int, tuple[float, float, float]] = {}

    def param(self, k: int) -> ParamId:
        self.check_index(k)
        return ParamId(k, (float(k + 1),), str(k + 1))

    def index_of(self, theta: int) -> int:
        return theta - 1

    def log_prior(self, k: int) -> float:
        return -(k + 1) * LOG2

    def log_prior_tail(self, k: int) -> float:
        return -k * LOG2

    def alphabet(self, n: int):
        return TERNARY

    def _explicit(self, theta: int, n: int) -> tuple[float, float, float]:
        # n >= theta
        c = 2 * ((theta + 1) // 2)
        if n == theta or n == c:
            return (NEG_INF, NEG_INF, 0.0)
        row = self._bern.get(theta)
        if row is None:
            row = (safe_log((theta - 1) / theta), math.log(1.0 / theta), NEG_INF)
            self._bern[theta] = row
        return row

    def _state(self, prefix: tuple[int, ...]):
        """(cum, mixcum, mix) for a prefix of length m.

        cum[t-1] is log P_t(prefix) for t = 1..m+1, mixcum the log-probability
        of the prefix under the mixture branch, mix the predictive law of
        coordinate m+1 (None if the prefix is unreachable).
        """
        st = self._states.get(prefix)
        if st is not None:
            return st
        m = len(prefix)
        # walk back to the longest cached prefix, then forward
        j = m
        while j > 0 and prefix[:j] not in self._states:
            j -= 1
        if j == 0 and () not in self._states:
            self._states.put((), self._extend_state(np.array([0.0]), 0.0, 0))
        st = self._states[prefix[:j]]
        for i in range(j, m):
            cum, mixcum, mix = st
            s = prefix[i]
            if mix is None:
                st = (np.full(i + 2, NEG_INF), NEG_INF, None)
            else:
                n = i + 1
                cum = cum + np.array([self._explicit(t, n)[s] for t in range(1, n + 1)])
                mixcum = mixcum + mix[s]
                st = self._extend_state(np.append(cum, mixcum), mixcum, n)
            self._states.put(prefix[: i + 1], st)
        return st

    def _extend_state(self, cum: np.ndarray, mixcum: float, m: int):
        if mixcum == NEG_INF:
            return (cum, mixcum, None)
        n = m + 1
        thetas = np.arange(1, n + 1)
        logw = -thetas * LOG2 + cum
        rows = np.array([self._explicit(t, n) for t in range(1, n + 1)])
        den = np.logaddexp.reduce(logw)
        with np.errstate(invalid="ignore"):
            num = np.logaddexp.reduce(logw[:, None] + rows, axis=0)
        mix = tuple(float(v - den) for v in num)
        return (cum, mixcum, mix)

    def predictive(self, history: tuple[int, ...]) -> tuple[float, float, float]:
        """Law of the next coordinate given theta <= len(history) + 1."""
        _, _, mix = self._state(tuple(history))
        if mix is None:
            raise UnreachableObservation(f"history {history} has probability zero")
        return mix

    def kernel(self, k: int, history, n: int) -> DiscreteDistribution:
        theta = k + 1
        if n >= theta:
            return DiscreteDistribution(TERNARY, self._explicit(theta, n))
        return DiscreteDistribution(TERNARY, self.predictive(tuple(history[: n - 1])))

    def _final(self, xs):
        cum, mixcum, _ = self._state(xs)
        return cum, mixcum

    def log_likelihood(self, k: int, x) -> float:
        xs = self.validate(x)
        self.check_index(k)
        return float(self.log_likelihoods([k], xs)[0])

    def log_likelihoods(self, ks, x) -> np.ndarray:
        xs = self.validate(x)
        cum, mixcum = self._final(xs)
        ks = np.asarray(list(ks), dtype=int)
        out = np.full(ks.shape, mixcum, dtype=float)
        inside = ks < len(cum)
        out[inside] = cum[ks[inside]]
        return out

    def _explicit_positive(self, xs):
        cum, mixcum = self._final(xs)
        n = len(xs)
        return [(k, float(cum[k])) for k in range(n) if cum[k] > NEG_INF], n, mixcum

    def sup_log_likelihood(self, x, k: int) -> float:
        explicit, start, tail_ll = self._explicit_positive(self.validate(x))
        return max([ll for j, ll in explicit if j >= k] + [tail_ll])

    sup_is_exact = True

    def candidates(self, x):
        xs = self.validate(x)
        explicit, start, tail_ll = self._explicit_positive(xs)
        return _explicit_then_class(self, explicit, start, tail_ll)

    def horizon_class(self, k: int, n: int):
        return k if k < n else "tail"

    def horizon_class_log_prior(self, k: int, n: int) -> float:
        return self.log_prior(k) if k < n else self.log_prior_tail(n)

    def quotient_candidates(self, x):
        explicit, start, tail_ll = self._explicit_positive(self.validate(x))
        return [k for k, _ in explicit] + ([start] if tail_ll > NEG_INF else [])


# -- generic finite problems ------------------------------------------------


class FiniteProblem(EstimationProblem):
    """Finite parameter set with tabulated kernels.

    ``kernel_fn(k, history, n)`` returns a probability vector over
    ``range(alphabet_size)``. Inputs are re-sorted into enumeration order.
    """

    name = "finite"

    def __init__(
        self,
        prior: Sequence[float],
        kernel_fn: Callable[[int, tuple, int], Sequence[float]],
        alphabet_size: int = 2,
        embeds: Sequence[Sequence[float]] | None = None,
        independent: bool = False,
    ):
        prior = [float(v) for v in prior]
        if not prior or any(v <= 0 for v in prior) or abs(math.fsum(prior) - 1.0) > PROB_ATOL:
            raise InvalidInput("prior must be strictly positive and sum to 1")
        k0 = len(prior)
        embeds = [tuple(float(c) for c in e) for e in embeds] if embeds is not None else [(float(i),) for i in range(k0)]
        if len(set(embeds)) != k0:
            raise InvalidInput("embeddings must be distinct")
        self._order = sorted(range(k0), key=lambda i: (-prior[i], embeds[i]))
        self._prior = [prior[i] for i in self._order]
        self._embeds = [embeds[i] for i in self._order]
        self._fn = kernel_fn
        self._alpha = tuple(range(alphabet_size))
        self.n_params = k0
        self.independent_coordinates = independent
        self._tails = [math.fsum(self._prior[k:]) for k in range(k0)] + [0.0]
        self._kcache = _Cache(1 << 16)

    def original_index(self, k: int) -> int:
        return self._order[k]

    def param(self, k: int) -> ParamId:
        self.check_index(k)
        return ParamId(k, self._embeds[k], str(k))

    def log_prior(self, k: int) -> float:
        return math.log(self._prior[k])

    def log_prior_tail(self, k: int) -> float:
        return safe_log(self._tails[min(k, self.n_params)])

    def alphabet(self, n: int):
        return self._alpha

    def kernel(self, k: int, history, n: int) -> DiscreteDistribution:
        key = (k, n) if self.independent_coordinates else (k, tuple(history))
        d = self._kcache.get(key)
        if d is None:
            d = self._kcache.put(key, DiscreteDistribution.from_probs(self._alpha, self._fn(self._order[k], tuple(history), n)))
        return d


def random_finite_problem(
    rng: np.random.Generator,
    max_params: int = 6,
    alphabet_size: int | None = None,
    sparsity: float = 0.3,
    independent: bool | None = None,
) -> FiniteProblem:
    """Random small problem for property tests.

    Kernels are drawn lazily but deterministically from ``rng`` on first use,
    so the problem must not be shared across threads before it is warmed up.
    A quarter of the draws give every parameter its own disjoint block of
    symbols at coordinate 1, which makes zero-excess codebooks reachable.
    """
    k0 = int(rng.integers(1, max_params + 1))
    a = int(alphabet_size or rng.integers(2, 4))
    prior = rng.dirichlet(np.ones(k0))
    prior = np.maximum(prior, 1e-3)
    prior = list(prior / prior.sum())
    prior[-1] = 1.0 - math.fsum(prior[:-1])
    indep = bool(rng.random() < 0.5) if independent is None else independent
    disjoint = bool(rng.random() < 0.25) and k0 <= a
    table: dict = {}
    seed = int(rng.integers(2**63))

    def fn(k, history, n):
        key = (k, n) if indep else (k, history)
        if key not in table:
            sub = np.random.default_rng([seed, k, n, *history])
            if disjoint and n == 1:
                p = np.zeros(a)
                p[k] = 1.0
            else:
                p = sub.dirichlet(np.ones(a))
                drop = sub.random(a) < sparsity
                if drop.all():
                    drop[int(sub.integers(a))] = False
                p[drop] = 0.0
                p = p / p.sum()
            table[key] = p
        return table[key]

    return FiniteProblem(prior, fn, a, independent=indep)


# -- registry ---------------------------------------------------------------

ZOO = {
    "binomial": "i.i.d. Bernoulli coordinates; params {'p': [...], 'prior': [...]} or {'grid': 'rational-offset'}",
    "ones-then-zeros": "theta ones then zeros forever (theta = 0: ones forever); prior 2^(-1-theta)",
    "base3-ml-trap": "base-3 digit strings over {0,2} with 1s after; ML is never consistent",
    "aml-no-dl": "three-symbol problem without distinctive likelihoods; prior 2^(-1-theta)",
    "smml-counterexample": "problem on which every SMML estimator is inconsistent; prior 2^-theta",
}


def make_problem(name: str, params: dict | None = None) -> EstimationProblem:
    params = dict(params or {})
    if name == "binomial":
        allowed = {"p", "prior", "grid"}
        if set(params) - allowed:
            raise InvalidInput(f"unknown binomial params {sorted(set(params) - allowed)}")
        return make_binomial(**params)
    makers = {
        "ones-then-zeros": OnesThenZeros,
        "base3-ml-trap": Base3MLTrap,
        "aml-no-dl": AmlNoDl,
        "smml-counterexample": SmmlCounterexample,
    }
    if name not in makers:
        raise InvalidInput(f"unknown problem {name!r}; valid: {sorted(ZOO)}")
    if params:
        raise InvalidInput(f"problem {name!r} takes no params")
    return makers[name]()


def problem_from_config(cfg: dict) -> EstimationProblem:
    if not isinstance(cfg, dict) or "problem" not in cfg:
        raise InvalidInput("problem config must be an object with a 'problem' key")
    return make_problem(cfg["problem"], cfg.get("params") or {})


make_ones_then_zeros = OnesThenZeros
make_base3_ml_trap = Base3MLTrap
make_aml_no_dl = AmlNoDl
make_smml_counterexample = SmmlCounterexample
