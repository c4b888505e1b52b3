"""
Scores from dense and sparse observations
=========================================

A densely sampled curve gets its scores by quadrature.  A handful of points
falls back to the conditional expectation, which shrinks towards zero when
the data are weak.
"""

import numpy as np

from fpcagp import fpca, synthgen
from fpcagp.signal import Signal, WorkingGrid

hist, test = synthgen.generate(synthgen.SynthConfig(heterogeneity=0, seed=2))
model = fpca.fit([u.streams[synthgen.TARGET] for u in hist], WorkingGrid.over(0, 10, 101))

full = test.streams[synthgen.TARGET]
dense, how = fpca.estimate_scores(model, full)
print(f"{how:<10}", np.round(dense, 3))

pick = np.sort(np.random.default_rng(0).choice(len(full), 6, replace=False))
sparse_sig = Signal(full.times[pick], full.values[pick])
sparse, how = fpca.estimate_scores(model, sparse_sig)
print(f"{how:<10}", np.round(sparse, 3))

# reconstruction from either score vector, against the noiseless truth
t = np.linspace(0, 10, 200)
truth = test.truth_at(synthgen.TARGET, t)
for label, s in (("dense", dense), ("sparse", sparse)):
    curve, _ = fpca.reconstruct(model, s, t)
    print(f"{label:<7} reconstruction MAE {np.mean(np.abs(curve - truth)):.4f}")
