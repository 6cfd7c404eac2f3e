"""AML picks the truth although the likelihood ratio never drops below one."""

import math

from consistency_lab import make_problem, make_rng, sample_trajectory
from consistency_lab.estimators import aml_estimate, log_sup_likelihood

problem = make_problem("aml-no-dl")
xs = sample_trajectory(problem, 0, 30, make_rng(314159, 2)).symbols
for n in (1, 2, 5, 10, 30):
    x = xs[:n]
    gap = problem.log_likelihood(0, x) - log_sup_likelihood(problem, x)
    print(f"n={n:>2}  AML={aml_estimate(problem, x)}  P_truth / sup = {math.exp(gap):.4f}")
