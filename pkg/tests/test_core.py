import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from consistency_lab.core import (
    DiscreteDistribution,
    InvalidInput,
    Neighborhood,
    PosteriorState,
    Trajectory,
    UnreachableObservation,
    enumerate_joint,
    likelihood_ratio_profile,
    logsumexp,
    make_rng,
    marginal_log_likelihood,
    posterior,
    sample_joint,
    sample_trajectory,
)
from consistency_lab.zoo import FiniteProblem, OnesThenZeros, make_binomial, random_finite_problem

from conftest import all_prefixes, brute_posterior


# -- value types --------------------------------------------------------------


def test_logsumexp_basic():
    assert logsumexp([]) == -math.inf
    assert logsumexp([-math.inf, -math.inf]) == -math.inf
    assert logsumexp([math.log(0.25)] * 4) == pytest.approx(0.0, abs=1e-15)
    assert logsumexp([-1000.0, -1000.0]) == pytest.approx(-1000.0 + math.log(2))


def test_distribution_checks():
    d = DiscreteDistribution.from_probs((0, 1, 2), (0.5, 0.5, 0.0))
    assert d.prob(2) == 0.0 and d.logprob(2) == -math.inf
    with pytest.raises(InvalidInput):
        d.logprob(3)
    with pytest.raises(InvalidInput):
        DiscreteDistribution.from_probs((0, 0), (0.5, 0.5))
    with pytest.raises(InvalidInput):
        DiscreteDistribution.from_probs((0, 1), (0.5, 0.4))


def test_neighborhood_radius():
    with pytest.raises(InvalidInput):
        Neighborhood((0.0,), 0.0)
    u = Neighborhood((0.5,), 0.1)
    assert u.contains((0.55,)) and not u.contains((0.65,))


def test_trajectory_json_roundtrip():
    t = Trajectory((1, 0, 2))
    assert Trajectory.from_json(t.to_json()) == t
    assert t.origin == "constructed"
    with pytest.raises(InvalidInput):
        Trajectory.from_json('[1, "a"]')


# -- worked examples ----------------------------------------------------------


def test_loglik_fair_coin():
    b = make_binomial([0.5])
    assert b.log_likelihood(0, (1, 0, 1)) == pytest.approx(math.log(1 / 8))


def test_loglik_ones_then_zeros():
    otz = OnesThenZeros()
    assert otz.log_likelihood(3, (1, 1, 1, 0)) == 0.0
    assert otz.log_likelihood(3, (1, 1, 1, 1)) == -math.inf


def test_symbol_outside_alphabet():
    with pytest.raises(InvalidInput):
        make_binomial([0.5]).log_likelihood(0, (0, 2))


def test_sampling_examples():
    otz = OnesThenZeros()
    for seed in range(5):
        assert sample_trajectory(otz, 2, 5, seed).symbols == (1, 1, 0, 0, 0)
    assert sample_trajectory(make_binomial([1.0]), 0, 4, 9).symbols == (1, 1, 1, 1)
    b = make_binomial([0.2, 0.6])
    assert sample_trajectory(b, 1, 50, 11) == sample_trajectory(b, 1, 50, 11)
    with pytest.raises(InvalidInput):
        sample_trajectory(b, 0, 0, 1)


def test_sample_joint_prior_frequency():
    otz = OnesThenZeros()
    rng = make_rng(2024)
    from consistency_lab.core import sample_prior

    draws = np.array([sample_prior(otz, rng) for _ in range(100_000)])
    assert abs(np.mean(draws == 0) - 0.5) < 0.01
    theta, traj = sample_joint(otz, 6, 3)
    assert otz.log_likelihood(theta.index, traj) > -math.inf
    point = make_binomial([0.4])
    assert all(sample_joint(point, 3, s)[0].index == 0 for s in range(10))


def test_posterior_examples():
    post = posterior(OnesThenZeros(), (1, 0))
    assert [p.index for p in post.params] == [1]
    assert post.mass(1) == 1.0 and post.tail_bound == 0.0
    b = make_binomial([0.3, 0.7])
    post = posterior(b, (1,))
    assert post.mass(b.index_of(0.3)) == pytest.approx(0.3, abs=1e-12)
    assert post.mass(b.index_of(0.7)) == pytest.approx(0.7, abs=1e-12)
    assert marginal_log_likelihood(b, (1,)) == pytest.approx(math.log(0.5), abs=1e-12)


def test_posterior_at_n0_is_prior():
    otz = OnesThenZeros()
    post = posterior(otz, ())
    for p, v in zip(post.params, post.log_entries):
        assert v == pytest.approx(otz.log_prior(p.index), abs=1e-12)


def test_unreachable_observation():
    with pytest.raises(UnreachableObservation):
        posterior(make_binomial([0.0, 1.0]), (0, 1))


def test_point_mass_prior_marginal():
    b = make_binomial([0.35])
    x = (1, 1, 0)
    assert marginal_log_likelihood(b, x) == pytest.approx(b.log_likelihood(0, x), abs=1e-12)


def test_ratio_profile_examples():
    b = make_binomial([0.5, 0.25])
    prof = dict((p.index, v) for p, v in likelihood_ratio_profile(b, b.index_of(0.5), (1, 1), 5))
    assert b.index_of(0.5) not in prof
    assert prof[b.index_of(0.25)] == pytest.approx(math.log(1 / 4))
    otz = OnesThenZeros()
    prof = dict((p.index, v) for p, v in likelihood_ratio_profile(otz, 0, (1, 1), 4))
    assert 0 not in prof and prof[2] == 0.0
    with pytest.raises(InvalidInput):
        likelihood_ratio_profile(otz, 3, (0,), 2)


# -- invariants on every zoo problem --------------------------------------------


def test_prior_positive_and_tail(zoo_case):
    _, problem, ks = zoo_case
    total = 0.0
    prev = 1.0
    for k in ks:
        lp = problem.log_prior(k)
        assert lp > -math.inf
        total += math.exp(lp)
        tail = math.exp(problem.log_prior_tail(k + 1))
        assert tail <= prev + 1e-15
        prev = tail
        assert total + tail == pytest.approx(1.0, abs=1e-12)


def test_chain_rule_exact(zoo_case):
    _, problem, ks = zoo_case
    rng = np.random.default_rng(5)
    for k in ks:
        for _ in range(6):
            xs = sample_trajectory(problem, k, 8, rng).symbols
            for n in range(1, 9):
                head = problem.log_likelihood(k, xs[: n - 1])
                step = problem.kernel(k, xs[: n - 1], n).logprob(xs[n - 1])
                assert problem.log_likelihood(k, xs[:n]) == head + step


def test_vectorised_loglik_matches(zoo_case):
    _, problem, ks = zoo_case
    for k in ks[:4]:
        xs = sample_trajectory(problem, k, 7, 17).symbols
        for n in (0, 1, 3, 7):
            vec = problem.log_likelihoods(ks, xs[:n])
            assert list(vec) == [problem.log_likelihood(j, xs[:n]) for j in ks]


def test_kernel_normalised(zoo_case):
    _, problem, ks = zoo_case
    for k in ks:
        xs = sample_trajectory(problem, k, 6, 3).symbols
        for n in range(1, 7):
            d = problem.kernel(k, xs[: n - 1], n)
            assert math.fsum(d.probs) == pytest.approx(1.0, abs=1e-12)


def test_normalisation_bruteforce(zoo_case):
    name, problem, ks = zoo_case
    prefixes = list(all_prefixes(problem, 6))
    for k in ks[:6]:
        total = math.fsum(math.exp(problem.log_likelihood(k, x)) for x in prefixes)
        assert total == pytest.approx(1.0, abs=1e-9), (name, k)


def test_posterior_vs_bruteforce(zoo_case):
    name, problem, ks = zoo_case
    rng = np.random.default_rng(8)
    for k in ks[:4]:
        xs = sample_trajectory(problem, k, 6, rng).symbols
        post = posterior(problem, xs)
        assert math.fsum(post.probabilities()) + post.tail_bound == pytest.approx(1.0, abs=1e-9)
        cover = list(range(max(p.index for p in post.params) + 1))
        ref = brute_posterior(problem, xs, cover)
        for p, v in zip(post.params, post.log_entries):
            assert math.exp(v) == pytest.approx(ref[p.index], abs=1e-9 + post.tail_bound), (name, p)


def test_marginal_bracket(zoo_case):
    _, problem, ks = zoo_case
    eps = 1e-10
    for k in ks[:3]:
        xs = sample_trajectory(problem, k, 5, 4).symbols
        m = math.exp(marginal_log_likelihood(problem, xs, eps))
        e = enumerate_joint(problem, xs, lambda z, t: t <= math.log(eps))
        s = math.fsum(math.exp(problem.log_prior(j) + problem.log_likelihood(j, xs)) for j in e.indices)
        assert m - eps - 1e-15 <= s <= m + 1e-15


def test_sampling_law(zoo_case):
    """Empirical prefix frequencies within 4 sigma of the likelihood."""
    _, problem, ks = zoo_case
    rng = make_rng(77, 1)
    k = ks[min(3, len(ks) - 1)]
    reps = 100_000
    counts: dict = {}
    for _ in range(reps):
        xs = sample_trajectory(problem, k, 3, rng).symbols
        counts[xs] = counts.get(xs, 0) + 1
    for x in all_prefixes(problem, 3):
        p = math.exp(problem.log_likelihood(k, x))
        c = counts.get(x, 0)
        if p == 0.0:
            assert c == 0
        else:
            sd = math.sqrt(reps * p * (1 - p))
            assert abs(c - reps * p) <= 4 * sd + 1e-9


# -- property tests on random finite problems ----------------------------------


@st.composite
def finite_problems(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_finite_problem(np.random.default_rng(seed)), seed


@settings(max_examples=60, deadline=None)
@given(finite_problems(), st.integers(0, 5), st.integers(0, 2**16))
def test_posterior_incremental_equals_batch(pb, n, s):
    problem, _ = pb
    k = int(np.random.default_rng(s).integers(problem.n_params))
    xs = sample_trajectory(problem, k, max(n, 1), s).symbols[:n]
    batch = posterior(problem, xs)
    # update the prior one coordinate at a time
    w = {j: problem.log_prior(j) for j in range(problem.n_params)}
    for i in range(n):
        w = {j: v + problem.kernel(j, xs[:i], i + 1).logprob(xs[i]) for j, v in w.items()}
    z = logsumexp(w.values())
    for p, v in zip(batch.params, batch.log_entries):
        assert math.exp(v) == pytest.approx(math.exp(w[p.index] - z), abs=1e-9)
    assert batch.tail_bound == 0.0


@settings(max_examples=60, deadline=None)
@given(finite_problems(), st.integers(1, 4))
def test_random_problem_normalised(pb, n):
    problem, _ = pb
    for k in range(problem.n_params):
        total = math.fsum(math.exp(problem.log_likelihood(k, x)) for x in all_prefixes(problem, n))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_posterior_state_length_check():
    with pytest.raises(InvalidInput):
        PosteriorState(1, (), (0.0,), 0.0, 0)


def test_finite_problem_order():
    fp = FiniteProblem([0.2, 0.5, 0.3], lambda k, h, n: [0.5, 0.5])
    assert [fp.original_index(k) for k in range(3)] == [1, 2, 0]
    with pytest.raises(InvalidInput):
        FiniteProblem([0.5, 0.6], lambda k, h, n: [1.0, 0.0])
