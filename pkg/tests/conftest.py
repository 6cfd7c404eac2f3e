import itertools
import math

import pytest

from consistency_lab.zoo import (
    AmlNoDl,
    Base3MLTrap,
    OnesThenZeros,
    RationalOffsetBinomial,
    SmmlCounterexample,
    make_binomial,
)

# (factory, indices worth checking exhaustively)
ZOO_CASES = {
    "binomial": (lambda: make_binomial([0.1, 0.25, 0.5, 0.9]), range(4)),
    "rational-offset": (RationalOffsetBinomial, range(6)),
    "ones-then-zeros": (OnesThenZeros, range(8)),
    "base3-ml-trap": (Base3MLTrap, range(14)),
    "aml-no-dl": (AmlNoDl, range(8)),
    "smml-counterexample": (SmmlCounterexample, range(8)),
}


@pytest.fixture(params=sorted(ZOO_CASES))
def zoo_case(request):
    factory, ks = ZOO_CASES[request.param]
    return request.param, factory(), list(ks)


def all_prefixes(problem, n):
    return itertools.product(*(problem.alphabet(i) for i in range(1, n + 1)))


def brute_posterior(problem, x, ks):
    """Normalised prior times likelihood over an explicit index list."""
    logs = [problem.log_prior(k) + problem.log_likelihood(k, x) for k in ks]
    top = max(logs)
    z = math.fsum(math.exp(v - top) for v in logs if v > -math.inf)
    return {k: math.exp(v - top) / z for k, v in zip(ks, logs) if v > -math.inf}


def random_codebook(problem, table, rng):
    """Codebook of one of three shapes: free, feasible-only, or support partition."""
    from consistency_lab.smml import CodebookAssignment

    ks = list(range(problem.n_params))
    mode = rng.integers(3)
    out = {}
    for x in table.points:
        pos = [k for k in ks if problem.log_likelihood(k, x) > -math.inf]
        if mode == 0:
            out[x] = int(rng.choice(ks))
        elif mode == 1:
            out[x] = int(rng.choice(pos))
        else:
            out[x] = pos[0]
    return CodebookAssignment.from_mapping(table.horizon, out)


# acceptance lines, printed at the end of the run whatever the capture mode
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
