"""
A score prior borrowed from similar units
=========================================

The in-service unit's covariate stream, seen only up to ``t*``, places it
among the historical units.  A Gaussian process over those similarities
turns the historical scores into a prior for the new unit's scores.
"""

import numpy as np

from fpcagp import fpca, score_gp, synthgen
from fpcagp.baselines import fpca_b_prior
from fpcagp.signal import WorkingGrid

hist, test = synthgen.generate(synthgen.SynthConfig(heterogeneity=90, seed=3))
model = fpca.fit([u.streams[synthgen.TARGET] for u in hist], WorkingGrid.over(0, 10, 101))
truth_scores, _ = fpca.estimate_scores(model, test.streams[synthgen.TARGET])

t_star = 2.5
prior, gps, basis = score_gp.build_priors(
    model, [u.streams for u in hist], test.streams, [synthgen.COVARIATE], t_star,
    seed=0, return_models=True,
)
population = fpca_b_prior(model)

print("component  truth    GP mean (sd)        population mean (sd)")
for k in range(model.K):
    print(f"{k:>9}  {truth_scores[k]:7.3f}  {prior.mean[k]:7.3f} ({np.sqrt(prior.variance[k]):6.3f})"
          f"   {population.mean[k]:7.3f} ({np.sqrt(population.variance[k]):6.3f})")

h = gps[0].hyper
print(f"\nfirst component kernel: alpha {h.alpha:.3g}, beta {h.beta[0]:.3g}, sigma {h.sigma:.3g}")
