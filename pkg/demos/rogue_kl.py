"""Zero posterior KL loss does not mean being close: the rogue estimate drifts off."""

from consistency_lab import make_problem, make_rng, posterior, sample_trajectory
from consistency_lab.estimators import KL_LOSS, bayes_estimate, map_estimator

otz = make_problem("ones-then-zeros")
xs = sample_trajectory(otz, 0, 50, make_rng(314159, 3)).symbols
for n in (1, 5, 20, 50):
    post = posterior(otz, xs[:n])
    rogue = bayes_estimate(otz, post, KL_LOSS, candidates=[n])
    print(f"n={n:>2}  rogue={rogue.param}  expected KL={rogue.expected_loss}  "
          f"distance={otz.distance(n, 0)}  MAP={map_estimator(otz, xs[:n])}")
