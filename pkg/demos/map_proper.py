"""MAP on a finite binomial grid: the posterior piles onto the true rate."""

from consistency_lab import make_problem, make_rng, posterior, sample_trajectory
from consistency_lab.estimators import map_estimator

grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
problem = make_problem("binomial", {"p": grid})
truth = grid.index(0.3)
xs = sample_trajectory(problem, truth, 500, make_rng(314159, 0)).symbols

print(f"{'n':>4}  {'MAP':>5}  {'mass at truth':>14}")
for n in (10, 50, 100, 200, 500):
    post = posterior(problem, xs[:n])
    est = map_estimator(problem, xs[:n])
    print(f"{n:>4}  {problem.param(est.index).embed[0]:>5.1f}  {post.mass(truth):>14.6f}")
