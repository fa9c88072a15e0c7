"""
From loads to infectivity.

Fit p(y|x) to a synthetic age/load sample, then push a probit response
curve through it: I(x) = sum_j I(y_j) p(y_j|x) dy.  The band follows
from the posterior samples.  Shifting the curve by a decade either way
shows how much the age dependence hinges on where the curve sits.

Run:  python3 demos/infectivity_profile.py
"""

from __future__ import annotations

import numpy as np

from causal_density import (Direction, Grid2D, InferenceConfig, default_curve, fit_model, make_grid, make_truth,
                            project_infectivity, synthesize_counts)

# Ages 0..90 in 5-year bins, log10 loads from 3.8 in 0.32-decade bins
grid = Grid2D(make_grid(18, 0.0, 5.0), make_grid(16, 3.8, 0.32))
truth = make_truth(Direction.X_TO_Y, grid, n_expected=3000, coupling=0.3, seed=2)
data = synthesize_counts(truth, grid, seed=2, jitter=True, label="ages-loads")

fit = fit_model(data, grid, "XtoY", inference=InferenceConfig(n_samples=8, n_global_iterations=6,
                                                              optimizer_steps=6, cg_tolerance=1e-4, seed=2))
curve = default_curve()
print(f"probit curve: mu={curve.mu:.3f}, I(5.4)={curve(5.4):.3f}")

for shift in (0.0, -1.0, 1.0):
    prof = project_infectivity(fit.posterior, fit.model, curve.shifted(shift))
    rel = prof.sample_relative_differences
    print(f"shift {shift:+.0f}: I ranges {prof.mean.min():.3f}..{prof.mean.max():.3f}, "
          f"max/min - 1 = {prof.max_relative_difference:.3f} (samples {rel.min():.3f}..{rel.max():.3f})")

prof = project_infectivity(fit.posterior, fit.model, curve)
lo, hi = prof.band2
for age, m, a, b in zip(prof.ages[::3], prof.mean[::3], lo[::3], hi[::3]):
    print(f"  age {age:5.1f}: {m:.3f}  [{a:.3f}, {b:.3f}]")
