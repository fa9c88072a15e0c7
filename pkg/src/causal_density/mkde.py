"""
Matérn-kernel density estimation on n-dimensional regular grids.

The density is log-normal, ``rho = exp(s0 + s)``, with ``s`` a Gaussian
process whose amplitude spectrum is an outer product of per-axis Matérn
amplitudes sharing a single zero mode.  ``s0 = ln(N / V)`` centres the
prior on a flat density holding the observed number of events.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import Grid1D, pixel_volume
from .inference import InferenceConfig, PosteriorApprox, posterior_moments, run_mgvi
from .likelihood import CountGrid, LatentProblem, PoissonLikelihood
from .matern import MKDE_AXIS_PRIOR, AxisPrior, SpectralField, Uniform


@dataclass(frozen=True)
class MkdeModel:
    grids: tuple
    priors: tuple = ()
    zero_mode: Uniform = field(default_factory=lambda: Uniform(1e-15, 5.0))

    def __post_init__(self) -> None:
        grids = tuple(self.grids)
        if not grids:
            raise ValueError("need at least one axis")
        priors = tuple(self.priors) or (MKDE_AXIS_PRIOR,) * len(grids)
        if len(priors) != len(grids):
            raise ValueError("need one prior per axis")
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "priors", priors)

    @property
    def ndim(self) -> int:
        return len(self.grids)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.n_pixels for g in self.grids)

    @property
    def volume(self) -> float:
        return float(np.prod([g.extent for g in self.grids]))


class MkdeResponse:
    """Expected counts ``lambda(xi)`` of an :class:`MkdeModel` for ``n_total`` events."""

    def __init__(self, model: MkdeModel, n_total: float):
        self.model = model
        self.op = SpectralField(model.grids, model.priors, model.zero_mode if model.ndim > 1 else None)
        self.offset = math.log(max(n_total, 1) / model.volume)
        self.log_dv = math.log(pixel_volume(list(model.grids)))
        self.n_field = self.op.size
        self.dim = self.n_field + self.op.n_hyper
        self.shape = model.shape

    def _split(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim,):
            raise ValueError(f"latent vector must have shape ({self.dim},), got {xi.shape}")
        return xi[: self.n_field], xi[self.n_field:]

    def signal(self, xi) -> np.ndarray:
        """Log-density ``s0 + s`` at the pixel centres."""
        return self.offset + self.op(*self._split(xi))

    def density(self, xi) -> np.ndarray:
        return np.exp(self.signal(xi))

    def linearize(self, xi):
        x, hyper = self._split(xi)
        s, s_jvp, s_vjp = self.op.linearize(x, hyper)
        lam = np.exp(self.offset + self.log_dv + s)

        def jvp(v):
            v = np.asarray(v, dtype=float)
            return lam * s_jvp(v[: self.n_field], v[self.n_field:])

        def vjp(u):
            dx, dh = s_vjp(np.asarray(u, dtype=float) * lam)
            return np.concatenate([np.ravel(dx), dh])

        return lam, jvp, vjp


def mkde_problem(counts: CountGrid | np.ndarray, model: MkdeModel) -> LatentProblem:
    n = np.asarray(getattr(counts, "counts", counts))
    if n.shape != model.shape:
        raise ValueError(f"counts shape {n.shape} does not match model grid {model.shape}")
    return LatentProblem(MkdeResponse(model, float(n.sum())), PoissonLikelihood(n))


def mkde_fit(counts: CountGrid | np.ndarray, model: MkdeModel,
             inf_config: InferenceConfig = InferenceConfig()) -> PosteriorApprox:
    """MGVI posterior over the log-density of ``model`` given pixel counts."""
    return run_mgvi(mkde_problem(counts, model), inf_config)


def mkde_density(posterior: PosteriorApprox):
    """Posterior mean and standard deviation of ``rho`` per pixel."""
    resp = posterior.problem.response
    return posterior_moments(posterior, resp.density)


def mkde_marginal(posterior: PosteriorApprox, axes: Sequence[int]):
    """Integrate the density over ``axes``; returns ``(mean, sigma)`` of the remainder.

    Integrating over every axis gives the total mass as a 0-d array.
    """
    resp = posterior.problem.response
    axes = tuple(sorted({int(a) for a in axes}))
    if not axes:
        raise ValueError("axes must be non-empty")
    if axes[0] < 0 or axes[-1] >= resp.model.ndim:
        raise ValueError("axis out of range")
    dv = float(np.prod([resp.model.grids[a].step for a in axes]))

    def marginal(xi):
        return resp.density(xi).sum(axis=axes) * dv

    return posterior_moments(posterior, marginal)


def load_counts_nd(path, grids: Sequence[Grid1D]) -> CountGrid:
    """Read n-D counts from a CSV of index tuples: header ``i0,...,i{n-1},count``."""
    shape = tuple(g.n_pixels for g in grids)
    counts = np.zeros(shape, dtype=np.int64)
    expect = [f"i{k}" for k in range(len(shape))] + ["count"]
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = (r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#"))
        header = next(rows, None)
        if header is None or [c.strip() for c in header] != expect:
            raise ValueError(f"{path}: expected header {','.join(expect)}")
        for lineno, row in enumerate(rows, start=2):
            idx = tuple(int(c) for c in row[:-1])
            n = int(row[-1])
            if len(idx) != len(shape) or n < 0 or any(not 0 <= i < s for i, s in zip(idx, shape)):
                raise ValueError(f"{path}: invalid count row {lineno}")
            counts[idx] += n
    return CountGrid(list(grids), counts)


def save_counts_nd(counts: CountGrid, path) -> None:
    n = np.asarray(counts.counts)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"i{k}" for k in range(n.ndim)] + ["count"])
        for idx in zip(*np.nonzero(n)):
            w.writerow([int(i) for i in idx] + [int(n[idx])])
