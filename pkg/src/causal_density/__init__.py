"""
Causal-direction discovery with Gaussian-process density models.

Paired observations ``(x, y)`` are modelled as a smooth density under three
hypotheses (``x -> y``, ``y -> x``, ``x ⊥ y``), each fitted to binned counts
by metric Gaussian variational inference and compared through evidence
lower bounds.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .grid import (Field, Grid1D, Grid2D, ModeSet, harmonic_analyze, harmonic_synthesize, integrate, make_grid,
                   mode_set)
from .matern import (MKDE_AXIS_PRIOR, AxisPrior, HyperPrior, LogNormal, MaternParams, Normal, SpectralField,
                     Uniform, amplitude, outer_amplitude, power_spectrum, sample_hyper)
from .model import (CausalModel, DensityRealization, Direction, ModelConfig, build_density, conditional_pdf,
                    joint_density, realize_field)
from .likelihood import (CountGrid, ExpectedCounts, LatentProblem, PoissonLikelihood, apply_fisher_metric, bin_data,
                         expected_counts, log_likelihood, poisson_problem)
from .inference import (ConvergenceError, InferenceConfig, PosteriorApprox, draw_metric_samples, minimize_kl,
                        posterior_moments, run_mgvi)
from .dataio import (DataError, Dataset, Record, SyntheticTruth, apply_threshold, load_dataset, make_truth,
                     permute_y, save_dataset, synthesize_counts)
from .evidence import (DeltaEvidence, ElboEstimate, EvidenceConfig, FitResult, NullTestResult, compare_directions,
                       delta_evidence, estimate_elbo, fit_model, randomization_null_test, stochastic_logdet)
from .infectivity import (InfectivityProfile, ProbitCurve, TabulatedCurve, default_curve, infectivity_of_load,
                          project_infectivity)
from .mkde import MkdeModel, mkde_density, mkde_fit, mkde_marginal
