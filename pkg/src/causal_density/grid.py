"""
Regular grids, real harmonic (Hartley) synthesis and midpoint quadrature.

Every field in the package lives on a product of :class:`Grid1D` axes.  The
stationary priors are represented on a periodic embedding of each axis that
is ``pad_factor`` times longer than the physical axis; synthesized fields are
cropped back to the physical pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence, Union

import numpy as np
from scipy import fft as sp_fft


@dataclass(frozen=True)
class Grid1D:
    """Regularly sampled axis.

    Pixel ``i`` covers ``[start + i*step, start + (i+1)*step)`` and has its
    center at ``start + (i + 1/2)*step``.
    """

    n_pixels: int
    start: float
    step: float
    pad_factor: float = 2.0
    n_padded: int = dc_field(default=0, compare=True)

    def __post_init__(self) -> None:
        if int(self.n_pixels) != self.n_pixels or self.n_pixels < 2:
            raise ValueError(f"n_pixels must be an integer >= 2, got {self.n_pixels}")
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if not math.isfinite(self.start):
            raise ValueError("start must be finite")
        if not self.pad_factor >= 1:
            raise ValueError(f"pad_factor must be >= 1, got {self.pad_factor}")
        if self.n_padded == 0:
            n_min = int(math.ceil(self.n_pixels * self.pad_factor - 1e-9))
            object.__setattr__(self, "n_padded", max(sp_fft.next_fast_len(n_min), self.n_pixels))
        elif self.n_padded < self.n_pixels:
            raise ValueError("n_padded must be >= n_pixels")

    @property
    def centers(self) -> np.ndarray:
        return self.start + (np.arange(self.n_pixels) + 0.5) * self.step

    @property
    def edges(self) -> np.ndarray:
        return self.start + np.arange(self.n_pixels + 1) * self.step

    @property
    def stop(self) -> float:
        return self.start + self.n_pixels * self.step

    @property
    def extent(self) -> float:
        return self.n_pixels * self.step

    @property
    def padded_extent(self) -> float:
        return self.n_padded * self.step


@dataclass(frozen=True)
class Grid2D:
    """Product of an x axis and a y axis; arrays are indexed ``[ix, iy]``."""

    gx: Grid1D
    gy: Grid1D

    @property
    def axes(self) -> tuple[Grid1D, Grid1D]:
        return (self.gx, self.gy)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gx.n_pixels, self.gy.n_pixels)

    @property
    def size(self) -> int:
        return self.gx.n_pixels * self.gy.n_pixels

    @property
    def pixel_volume(self) -> float:
        return self.gx.step * self.gy.step

    def transposed(self) -> "Grid2D":
        return Grid2D(self.gy, self.gx)


GridLike = Union[Grid1D, Grid2D, Sequence[Grid1D]]


def axes_of(grid: GridLike) -> tuple[Grid1D, ...]:
    if isinstance(grid, Grid1D):
        return (grid,)
    if isinstance(grid, Grid2D):
        return grid.axes
    return tuple(grid)


def grid_shape(grid: GridLike) -> tuple[int, ...]:
    return tuple(g.n_pixels for g in axes_of(grid))


def padded_shape(grid: GridLike) -> tuple[int, ...]:
    return tuple(g.n_padded for g in axes_of(grid))


def pixel_volume(grid: GridLike) -> float:
    return float(np.prod([g.step for g in axes_of(grid)]))


@dataclass(frozen=True)
class Field:
    """Scalar values sampled on the pixels of a grid."""

    grid: GridLike
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        shape = grid_shape(self.grid)
        if values.shape != shape:
            raise ValueError(f"values have shape {values.shape}, grid expects {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class ModeSet:
    """Non-negative harmonic frequencies of a padded axis (real-field convention)."""

    k: np.ndarray
    volume_factor: float


def make_grid(n_pixels: int, start: float, step: float, pad_factor: float = 2.0) -> Grid1D:
    """Build a :class:`Grid1D`; the padded length is rounded up to a fast FFT size."""
    return Grid1D(int(n_pixels), float(start), float(step), float(pad_factor))


def mode_set(grid: Grid1D) -> ModeSet:
    """Frequencies ``j / L_padded`` for ``j = 0 .. Nyquist`` and the mode volume ``1/L_padded``."""
    k = sp_fft.rfftfreq(grid.n_padded, d=grid.step)
    return ModeSet(k=k, volume_factor=1.0 / grid.padded_extent)


def harmonic_k(grid: Grid1D) -> np.ndarray:
    """|k| for every harmonic coefficient of the padded axis, in FFT order."""
    return np.abs(sp_fft.fftfreq(grid.n_padded, d=grid.step))


def hartley(values: np.ndarray) -> np.ndarray:
    """Unnormalized n-D Hartley transform, ``sum_k c_k cas(2 pi k.x / N)``.

    The transform is real, symmetric and satisfies ``hartley(hartley(c)) = N c``.
    """
    spec = sp_fft.fftn(values)
    return spec.real - spec.imag


def _crop(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return values[tuple(slice(0, n) for n in shape)]


def _zero_pad(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape)
    out[tuple(slice(0, n) for n in values.shape)] = values
    return out


def synthesize(coeffs: np.ndarray, grid: GridLike) -> np.ndarray:
    """Array version of :func:`harmonic_synthesize`."""
    pshape = padded_shape(grid)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != pshape:
        raise ValueError(f"expected {pshape} harmonic coefficients, got {coeffs.shape}")
    return _crop(hartley(coeffs), grid_shape(grid))


def synthesize_adjoint(values: np.ndarray, grid: GridLike) -> np.ndarray:
    """Adjoint of :func:`synthesize` (zero-pad, then Hartley)."""
    return hartley(_zero_pad(np.asarray(values, dtype=float), padded_shape(grid)))


def harmonic_synthesize(coeffs: np.ndarray, grid: GridLike) -> Field:
    """Real field from coefficients in the real Hartley basis of the padded grid.

    A lone DC coefficient ``c`` yields the constant field ``c``.  The result is
    cropped to the physical (unpadded) pixels.
    """
    return Field(grid, synthesize(coeffs, grid))


def harmonic_analyze(field: Field) -> np.ndarray:
    """Inverse of :func:`harmonic_synthesize`; only defined for unpadded grids."""
    if padded_shape(field.grid) != grid_shape(field.grid):
        raise ValueError("analysis is only invertible on grids without padding")
    return hartley(field.values) / field.values.size


def integrate(field: Field) -> float:
    """Midpoint-rule integral: sum of values times pixel volume."""
    return float(np.sum(field.values) * pixel_volume(field.grid))
