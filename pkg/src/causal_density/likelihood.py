"""
Binning, Poisson likelihood and the Fisher metric in latent coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from scipy.special import gammaln

from .grid import Grid2D, GridLike, axes_of, grid_shape, pixel_volume


@dataclass(frozen=True)
class CountGrid:
    """Histogram of events on a grid; ``discarded`` counts out-of-range events."""

    grid: GridLike
    counts: np.ndarray
    discarded: int = 0

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.shape != grid_shape(self.grid):
            raise ValueError("counts do not match grid shape")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ExpectedCounts:
    grid: GridLike
    lam: np.ndarray


def bin_data(data, grid: GridLike) -> CountGrid:
    """Histogram events into half-open pixels ``[start + i*step, start + (i+1)*step)``.

    ``data`` is a :class:`~causal_density.dataio.Dataset` (for 2-D grids) or an
    array of shape ``(N, ndim)``.
    """
    axes = axes_of(grid)
    if hasattr(data, "x") and hasattr(data, "y"):
        coords = [np.asarray(data.x, dtype=float), np.asarray(data.y, dtype=float)]
    else:
        arr = np.asarray(data, dtype=float).reshape(-1, len(axes))
        coords = [arr[:, i] for i in range(len(axes))]
    if len(coords) != len(axes):
        raise ValueError("data dimension does not match grid")
    n_total = coords[0].size
    idx, inside = [], np.ones(n_total, dtype=bool)
    for c, g in zip(coords, axes):
        i = np.floor((c - g.start) / g.step).astype(np.int64)
        inside &= (i >= 0) & (i < g.n_pixels) & np.isfinite(c)
        idx.append(i)
    shape = tuple(g.n_pixels for g in axes)
    flat = np.ravel_multi_index(tuple(i[inside] for i in idx), shape) if n_total else np.zeros(0, int)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return CountGrid(grid, counts, discarded=int(n_total - inside.sum()))


def expected_counts(joint, grid: GridLike) -> ExpectedCounts:
    """Midpoint rule ``lambda_ij = dx dy rho(x_i, y_j)``."""
    values = np.asarray(getattr(joint, "values", joint), dtype=float)
    return ExpectedCounts(grid, pixel_volume(grid) * values)


def log_likelihood(lam, counts) -> float:
    """Poisson log-likelihood ``sum n ln(lambda) - lambda - ln(n!)``."""
    lam = np.asarray(getattr(lam, "lam", lam), dtype=float)
    n = np.asarray(getattr(counts, "counts", counts))
    if lam.shape != n.shape:
        raise ValueError("shape mismatch between expected and observed counts")
    if np.any(lam <= 0):
        raise ArithmeticError("expected counts must be strictly positive")
    return float(np.sum(n * np.log(lam) - lam - gammaln(n + 1.0)))


# -- likelihood energies ----------------------------------------------------


class PoissonLikelihood:
    """Negative Poisson log-likelihood of ``counts`` as a function of ``lambda``."""

    def __init__(self, counts: np.ndarray):
        self.counts = np.ascontiguousarray(counts, dtype=float)
        self._const = float(np.sum(gammaln(self.counts + 1.0)))

    def energy(self, lam: np.ndarray) -> float:
        if np.any(lam <= 0):
            raise ArithmeticError("expected counts must be strictly positive")
        return float(np.sum(lam - self.counts * np.log(lam))) + self._const

    def gradient(self, lam: np.ndarray) -> np.ndarray:
        return 1.0 - self.counts / lam

    def fisher(self, lam: np.ndarray) -> np.ndarray:
        return 1.0 / lam


class GaussianLikelihood:
    """Negative Gaussian log-likelihood with diagonal noise variance."""

    def __init__(self, data: np.ndarray, noise_var):
        self.data = np.asarray(data, dtype=float)
        self.noise_var = np.broadcast_to(np.asarray(noise_var, dtype=float), self.data.shape)
        self._const = 0.5 * float(np.sum(np.log(2 * np.pi * self.noise_var)))

    def energy(self, resp: np.ndarray) -> float:
        r = self.data - resp
        return 0.5 * float(np.sum(r * r / self.noise_var)) + self._const

    def gradient(self, resp: np.ndarray) -> np.ndarray:
        return (resp - self.data) / self.noise_var

    def fisher(self, resp: np.ndarray) -> np.ndarray:
        return 1.0 / self.noise_var


class Response(Protocol):
    dim: int

    def linearize(self, xi) -> tuple[np.ndarray, Callable, Callable]: ...


class LinearResponse:
    """Dense linear response ``R @ xi``; mostly for conjugate test problems."""

    def __init__(self, matrix):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.dim = self.matrix.shape[1]

    def linearize(self, xi):
        R = self.matrix
        return R @ xi, (lambda v: R @ v), (lambda u: R.T @ u)


@dataclass
class LocalApprox:
    """Likelihood energy, gradient and Fisher metric at one latent point."""

    energy: float
    gradient: np.ndarray
    metric: Callable[[np.ndarray], np.ndarray]
    metric_sample: Callable[[np.random.Generator], np.ndarray]
    response: np.ndarray
    jvp: Callable
    vjp: Callable
    fisher: np.ndarray


class LatentProblem:
    """Couples a response with a likelihood; the prior on ``xi`` is standard normal."""

    def __init__(self, response: Response, likelihood):
        self.response = response
        self.likelihood = likelihood

    @property
    def dim(self) -> int:
        return self.response.dim

    def energy(self, xi) -> float:
        """Negative log-likelihood at ``xi`` (prior not included)."""
        resp, _, _ = self.response.linearize(xi)
        return self.likelihood.energy(resp)

    def at(self, xi) -> LocalApprox:
        resp, jvp, vjp = self.response.linearize(xi)
        lh = self.likelihood
        w = lh.fisher(resp)
        sqrt_w = np.sqrt(w)

        def metric(v):
            return vjp(w * jvp(v))

        def metric_sample(rng):
            return vjp(sqrt_w * rng.standard_normal(resp.shape))

        return LocalApprox(lh.energy(resp), vjp(lh.gradient(resp)), metric, metric_sample, resp, jvp, vjp, w)


def poisson_problem(model, counts: CountGrid | np.ndarray) -> LatentProblem:
    """Latent problem for a :class:`~causal_density.model.CausalModel` and data counts."""
    n = np.asarray(getattr(counts, "counts", counts))
    if hasattr(model, "to_canonical"):
        n = model.to_canonical(n)
    if n.shape != tuple(model.shape):
        raise ValueError(f"counts shape {n.shape} does not match model {tuple(model.shape)}")
    return LatentProblem(model, PoissonLikelihood(n))


def apply_fisher_metric(problem: LatentProblem, xi_bar, v) -> np.ndarray:
    """``(J^T W J + 1) v`` at ``xi_bar``; ``W`` is the Fisher weight of the likelihood."""
    xi_bar = np.asarray(xi_bar, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != xi_bar.shape or v.shape != (problem.dim,):
        raise ValueError("dimension mismatch")
    return problem.at(xi_bar).metric(v) + v
