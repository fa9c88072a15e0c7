"""
Infectivity response curves and their projection through a fitted
conditional ``p(y|x)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .inference import PosteriorApprox
from .model import CausalModel, Direction

#: Load at which the default curve reaches its anchor response.
ANCHOR_LOAD = 5.4
ANCHOR_RESPONSE = 0.05


@dataclass(frozen=True)
class ProbitCurve:
    """``I(y) = Phi((y - shift - mu) / sigma)``."""

    mu: float
    sigma: float = 1.0
    shift: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def anchored(cls, load: float = ANCHOR_LOAD, response: float = ANCHOR_RESPONSE, sigma: float = 1.0,
                 shift: float = 0.0) -> "ProbitCurve":
        """Curve of width ``sigma`` that passes through ``(load, response)``."""
        if not 0 < response < 1:
            raise ValueError("anchor response must lie in (0, 1)")
        return cls(load - sigma * float(ndtri(response)), sigma, shift)

    def shifted(self, decades: float) -> "ProbitCurve":
        return ProbitCurve(self.mu, self.sigma, self.shift + decades)

    def __call__(self, y):
        return infectivity_of_load(y, self)


@dataclass(frozen=True)
class TabulatedCurve:
    """Piecewise-linear response through ``(load, value)`` nodes, flat beyond the ends."""

    loads: np.ndarray
    values: np.ndarray
    shift: float = 0.0

    def __post_init__(self) -> None:
        loads = np.asarray(self.loads, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if loads.ndim != 1 or loads.shape != values.shape or loads.size < 2:
            raise ValueError("need at least two (load, value) nodes")
        if np.any(np.diff(loads) <= 0):
            raise ValueError("loads must be strictly increasing")
        if np.any(values <= 0) or np.any(values >= 1):
            raise ValueError("curve values must lie in (0, 1)")
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "values", values)

    def shifted(self, decades: float) -> "TabulatedCurve":
        return TabulatedCurve(self.loads, self.values, self.shift + decades)

    def __call__(self, y):
        return np.interp(np.asarray(y, dtype=float) - self.shift, self.loads, self.values)


def default_curve() -> ProbitCurve:
    """Unit-width probit with 5% response at load 5.4."""
    return ProbitCurve.anchored()


def load_curve(path) -> TabulatedCurve:
    """Read a CSV with header ``log10_load,infectivity``."""
    loads, values = [], []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = (r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#"))
        header = next(rows, None)
        if header is None or [c.strip() for c in header] != ["log10_load", "infectivity"]:
            raise ValueError(f"{path}: expected header 'log10_load,infectivity'")
        for row in rows:
            loads.append(float(row[0]))
            values.append(float(row[1]))
    return TabulatedCurve(np.array(loads), np.array(values))


def infectivity_of_load(y, curve: ProbitCurve):
    y = np.asarray(y, dtype=float)
    out = ndtr((y - curve.shift - curve.mu) / curve.sigma)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InfectivityProfile:
    """Posterior summary of ``I(x) = sum_j I(y_j) p(y_j|x) dy``."""

    ages: np.ndarray
    mean: np.ndarray
    sigma: np.ndarray
    samples: np.ndarray

    @property
    def band1(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean - self.sigma, self.mean + self.sigma

    @property
    def band2(self) -> tuple[np.ndarray, np.ndarray]:
        return self.mean - 2 * self.sigma, self.mean + 2 * self.sigma

    @property
    def max_relative_difference(self) -> float:
        """``max_x I / min_x I - 1`` of the posterior mean."""
        return float(self.mean.max() / self.mean.min() - 1.0)

    @property
    def sample_relative_differences(self) -> np.ndarray:
        return self.samples.max(axis=1) / self.samples.min(axis=1) - 1.0


def project_infectivity(posterior: PosteriorApprox, model: CausalModel, curve) -> InfectivityProfile:
    """Project a response curve through ``p(y|x)`` for every posterior sample.

    Only models whose conditional runs from age to load qualify: ``x -> y``
    and the independent model in its default orientation.
    """
    if model.transposed or model.direction is Direction.Y_TO_X:
        raise ValueError("projection needs p(y|x); the model conditions x on y")
    grid = model.grid
    weights = np.asarray(curve(grid.gy.centers), dtype=float) * grid.gy.step

    def per_age(xi):
        cond = model.realize(xi).cond.values
        return cond @ weights

    if posterior.n_samples < 2:
        raise ValueError("at least two posterior samples are needed for bands")
    samples = np.array([per_age(s) for s in posterior.samples])
    mean, sigma = samples.mean(axis=0), samples.std(axis=0, ddof=1)
    return InfectivityProfile(grid.gx.centers, mean, sigma, samples)
