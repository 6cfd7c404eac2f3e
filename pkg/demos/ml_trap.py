"""Maximum likelihood keeps chasing ever-finer base-3 parameters; MAP does not."""

from consistency_lab import make_problem, make_rng, sample_trajectory
from consistency_lab.estimators import map_estimator, ml_estimate
from consistency_lab.zoo import base3_index

problem = make_problem("base3-ml-trap")
truth = base3_index("02")
value = problem.param(truth).embed[0]
xs = sample_trajectory(problem, truth, 40, make_rng(314159, 1)).symbols

print(f"truth {problem.param(truth)} (value {value:.5f})")
print(f"{'n':>3}  {'ML':>12} {'|ML - truth|':>13}  {'MAP':>6} {'|MAP - truth|':>14}")
for n in (3, 5, 10, 20, 40):
    ml = ml_estimate(problem, xs[:n])
    mp = map_estimator(problem, xs[:n])
    d_ml = abs(ml.embed[0] - value)
    d_map = abs(mp.embed[0] - value)
    print(f"{n:>3}  {str(ml):>12} {d_ml:>13.5f}  {str(mp):>6} {d_map:>14.5f}")
