"""
Updating the forecast as data arrive
====================================

Observations of the target stream are folded into the score posterior batch
by batch.  The result does not depend on how the data were split, and the
predictive band narrows with every batch.
"""

import numpy as np

from fpcagp import bayes, fpca, score_gp, synthgen
from fpcagp.signal import Signal, WorkingGrid, restrict

hist, test = synthgen.generate(synthgen.SynthConfig(heterogeneity=90, seed=4))
model = fpca.fit([u.streams[synthgen.TARGET] for u in hist], WorkingGrid.over(0, 10, 101))
prior = score_gp.build_priors(model, [u.streams for u in hist], test.streams, [synthgen.COVARIATE], 2.5)

target = restrict(test.streams[synthgen.TARGET], 7.5)
cuts = [0, 10, 20, 30, len(target)]
batches = [Signal(target.times[a:b], target.values[a:b]) for a, b in zip(cuts, cuts[1:])]

ahead = np.linspace(7.5, 10, 50)
truth = test.truth_at(synthgen.TARGET, ahead)
post = bayes.PosteriorScores.from_prior(prior)
for i, batch in enumerate(batches, 1):
    post = bayes.update_scores(model, post, batch)
    mean, var = bayes.predict(model, post, ahead)
    print(f"after batch {i} (up to t={batch.times[-1]:.2f}): MAE {np.mean(np.abs(mean - truth)):.3f}, "
          f"mean predictive sd {np.sqrt(var).mean():.3f}")

once = bayes.update_scores(model, prior, target)
print("batched equals one-shot:", np.allclose(once.mean, post.mean, atol=1e-10))
