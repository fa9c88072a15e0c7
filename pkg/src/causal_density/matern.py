"""
Matérn-type spectra, hyper-parameter priors and the amplitude-weighted
Gaussian-process fields built from them.

Convention: ``P(k) = a**2 * (1 + (k/k0)**2) ** (gamma/2)``, so a negative
spectral index gives a decaying spectrum.  Field coefficients on the padded
harmonic grid are ``sqrt(P(k) * dk) * xi`` with ``dk = 1/L_padded`` per axis,
which keeps ``a``, ``k0`` and ``gamma`` independent of the grid volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .grid import Grid1D, harmonic_k, padded_shape, synthesize, synthesize_adjoint


@dataclass(frozen=True)
class MaternParams:
    a: float
    k0: float
    gamma: float

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not self.k0 > 0:
            raise ValueError("k0 must be positive")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self) -> None:
        if not self.std > 0:
            raise ValueError("std must be positive")

    def transform(self, xi):
        return self.mean + self.std * np.asarray(xi, dtype=float)

    def derivative(self, xi):
        return np.full_like(np.asarray(xi, dtype=float), self.std)

    def cdf(self, v):
        return special.ndtr((np.asarray(v) - self.mean) / self.std)


@dataclass(frozen=True)
class LogNormal:
    """Log-normal prior stated by its linear-space mean and standard deviation."""

    mean: float
    std: float

    def __post_init__(self) -> None:
        if not (self.mean > 0 and self.std > 0):
            raise ValueError("log-normal mean and std must be positive")

    @property
    def log_std(self) -> float:
        return math.sqrt(math.log1p((self.std / self.mean) ** 2))

    @property
    def log_mean(self) -> float:
        return math.log(self.mean) - 0.5 * self.log_std**2

    def transform(self, xi):
        return np.exp(self.log_mean + self.log_std * np.asarray(xi, dtype=float))

    def derivative(self, xi):
        return self.log_std * self.transform(xi)

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(v) - self.log_mean) / self.log_std
        return special.ndtr(z)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (self.lo < self.hi):
            raise ValueError("uniform prior needs lo < hi")

    def transform(self, xi):
        return self.lo + (self.hi - self.lo) * special.ndtr(np.asarray(xi, dtype=float))

    def derivative(self, xi):
        xi = np.asarray(xi, dtype=float)
        return (self.hi - self.lo) * np.exp(-0.5 * xi**2) / math.sqrt(2 * math.pi)

    def cdf(self, v):
        return np.clip((np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)


Marginal = Normal | LogNormal | Uniform


@dataclass(frozen=True)
class AxisPrior:
    """Priors on the Matérn parameters of one axis."""

    a: LogNormal = field(default_factory=lambda: LogNormal(0.3, 0.1))
    k0: LogNormal = field(default_factory=lambda: LogNormal(5.0, 3.0))
    gamma: Normal = field(default_factory=lambda: Normal(-3.0, 2.12))

    def params(self, xi_a: float, xi_k0: float, xi_gamma: float) -> MaternParams:
        return MaternParams(
            float(sample_hyper(xi_a, self.a)),
            float(sample_hyper(xi_k0, self.k0)),
            float(sample_hyper(xi_gamma, self.gamma)),
        )


@dataclass(frozen=True)
class HyperPrior:
    """Prior table of the causal model: marginal ``f``, conditional ``g`` and coupling ``h``."""

    f: AxisPrior = field(default_factory=AxisPrior)
    g: AxisPrior = field(default_factory=AxisPrior)
    h_x: AxisPrior = field(default_factory=AxisPrior)
    h_y: AxisPrior = field(default_factory=AxisPrior)
    zero_mode: Uniform = field(default_factory=lambda: Uniform(1e-15, 5.0))

    def swapped(self) -> "HyperPrior":
        """Priors with the roles of the two axes exchanged."""
        return HyperPrior(f=self.g, g=self.f, h_x=self.h_y, h_y=self.h_x, zero_mode=self.zero_mode)


#: Default axis prior of the stand-alone density estimator.
MKDE_AXIS_PRIOR = AxisPrior(a=LogNormal(0.3, 0.2), k0=LogNormal(4.0, 3.0), gamma=Normal(-6.0, 3.0))


def sample_hyper(latent, prior: Marginal):
    """Map a standard-normal latent to a draw from ``prior`` (quantile matching)."""
    return prior.transform(latent)


def power_spectrum(k, params: MaternParams):
    k = np.asarray(k, dtype=float)
    return params.a**2 * (1.0 + (k / params.k0) ** 2) ** (params.gamma / 2)


def amplitude(k, params: MaternParams):
    """Square root of the Matérn power spectrum, ``a * (1 + (k/k0)^2)^(gamma/4)``."""
    k = np.asarray(k, dtype=float)
    return params.a * (1.0 + (k / params.k0) ** 2) ** (params.gamma / 4)


def outer_amplitude(kx, ky, px: MaternParams, py: MaternParams, zero_mode: float):
    """Separable 2-D amplitude with a shared zero mode.

    Each axis contributes its own amplitude except at its DC frequency, where
    it contributes 1; the joint DC entry is ``zero_mode`` alone.
    """
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    ax = np.where(kx == 0, 1.0, amplitude(kx, px))
    ay = np.where(ky == 0, 1.0, amplitude(ky, py))
    out = ax * ay
    return np.where((kx == 0) & (ky == 0), zero_mode, out)


class SpectralField:
    """Gaussian-process field ``s = crop(H^-1 (A(p) * xi))`` with learned spectrum.

    Parameters
    ----------
    axes : sequence of Grid1D
        One grid per dimension.
    priors : sequence of AxisPrior
        Matérn hyper-priors per axis.
    zero_mode : Uniform, optional
        Prior on the shared zero-mode amplitude; required for more than one axis.

    The latent input is ``(xi, hyper)`` where ``xi`` has the padded grid
    shape and ``hyper`` holds three standard-normal latents per axis
    (``a``, ``k0``, ``gamma``) followed by the zero-mode latent when ``ndim > 1``.
    """

    def __init__(self, axes: Sequence[Grid1D], priors: Sequence[AxisPrior], zero_mode: Uniform | None = None):
        self.axes = tuple(axes)
        self.priors = tuple(priors)
        if len(self.axes) != len(self.priors):
            raise ValueError("need one prior per axis")
        if self.ndim > 1 and zero_mode is None:
            raise ValueError("multi-axis fields need a zero-mode prior")
        self.zero_mode = zero_mode
        self.shape = padded_shape(self.axes)
        self.ks = [harmonic_k(g) for g in self.axes]
        self.volume = float(np.prod([1.0 / g.padded_extent for g in self.axes]))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def n_hyper(self) -> int:
        return 3 * self.ndim + (1 if self.ndim > 1 else 0)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def params(self, hyper) -> list[MaternParams]:
        return [p.params(*hyper[3 * i: 3 * i + 3]) for i, p in enumerate(self.priors)]

    def _axis_terms(self, hyper):
        # per axis: amplitude vector and d log(amplitude) / d hyper-latent (3 vectors)
        amps, dlogs = [], []
        multi = self.ndim > 1
        for i, (prior, k) in enumerate(zip(self.priors, self.ks)):
            xa, xk, xg = hyper[3 * i: 3 * i + 3]
            a, k0, gam = float(prior.a.transform(xa)), float(prior.k0.transform(xk)), float(prior.gamma.transform(xg))
            q = 1.0 + (k / k0) ** 2
            amp = a * q ** (gam / 4)
            dlog_a = np.full_like(k, float(prior.a.derivative(xa)) / a)
            dlog_k0 = (gam / 4) * (-2.0 * k**2 / k0**3) / q * float(prior.k0.derivative(xk))
            dlog_gam = 0.25 * np.log(q) * float(prior.gamma.derivative(xg))
            if multi:
                dc = k == 0
                amp = np.where(dc, 1.0, amp)
                dlog_a = np.where(dc, 0.0, dlog_a)
                dlog_k0 = np.where(dc, 0.0, dlog_k0)
                dlog_gam = np.where(dc, 0.0, dlog_gam)
            amps.append(amp)
            dlogs.append((dlog_a, dlog_k0, dlog_gam))
        return amps, dlogs

    def amplitudes(self, hyper) -> np.ndarray:
        """Full amplitude array ``sqrt(P * dk)`` on the padded harmonic grid."""
        return self._amplitudes(hyper)[0]

    def _amplitudes(self, hyper):
        hyper = np.asarray(hyper, dtype=float)
        amps, dlogs = self._axis_terms(hyper)
        amp = amps[0]
        for extra in amps[1:]:
            amp = np.multiply.outer(amp, extra)
        amp = amp * math.sqrt(self.volume)
        dzero = 0.0
        if self.ndim > 1:
            xz = hyper[-1]
            amp[(0,) * self.ndim] = float(self.zero_mode.transform(xz)) * math.sqrt(self.volume)
            dzero = float(self.zero_mode.derivative(xz)) * math.sqrt(self.volume)
        return amp, dlogs, dzero

    def _bcast(self, vec, axis):
        shape = [1] * self.ndim
        shape[axis] = -1
        return vec.reshape(shape)

    def __call__(self, xi, hyper) -> np.ndarray:
        return synthesize(self.amplitudes(hyper) * np.reshape(xi, self.shape), self.axes)

    def linearize(self, xi, hyper):
        """Return ``(value, jvp, vjp)`` at ``(xi, hyper)``.

        ``jvp(dxi, dhyper)`` maps latent tangents to a field tangent and
        ``vjp(u)`` maps a field cotangent to ``(dxi, dhyper)``.
        """
        xi = np.reshape(np.asarray(xi, dtype=float), self.shape)
        hyper = np.asarray(hyper, dtype=float)
        amp, dlogs, dzero = self._amplitudes(hyper)
        coeff = amp * xi
        value = synthesize(coeff, self.axes)
        origin = (0,) * self.ndim

        def jvp(dxi, dhyper):
            dxi = np.reshape(dxi, self.shape)
            dlog = np.zeros(self.shape)
            for i, terms in enumerate(dlogs):
                vec = sum(t * dhyper[3 * i + j] for j, t in enumerate(terms))
                dlog = dlog + self._bcast(vec, i)
            dc = coeff * dlog + amp * dxi
            if self.ndim > 1:
                dc[origin] = dzero * dhyper[-1] * xi[origin] + amp[origin] * dxi[origin]
            return synthesize(dc, self.axes)

        def vjp(u):
            uc = synthesize_adjoint(u, self.axes)
            dxi = amp * uc
            w = coeff * uc
            dhyper = np.zeros(self.n_hyper)
            for i, terms in enumerate(dlogs):
                other = tuple(ax for ax in range(self.ndim) if ax != i)
                # per-axis DC terms are zero, so the joint DC entry drops out here
                wi = w.sum(axis=other) if other else w
                for j, t in enumerate(terms):
                    dhyper[3 * i + j] = float(np.dot(wi, t))
            if self.ndim > 1:
                dhyper[-1] = dzero * xi[origin] * uc[origin]
            return dxi, dhyper

        return value, jvp, vjp
