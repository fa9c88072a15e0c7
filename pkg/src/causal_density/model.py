"""
Generative density models for the three causal hypotheses.

For the ``x -> y`` model the joint density is

    rho(x, y) = rho0 * exp(f(x)) * p(y|x),
    p(y|x)   ∝ exp(g(y) + h(x, y)) / ∫ exp(h(x', y)) dx',

normalized over ``y`` for every ``x``.  ``y -> x`` is the same construction
with the axes exchanged, and the independent model drops ``h``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .grid import Field, Grid1D, Grid2D, GridLike, axes_of
from .matern import AxisPrior, HyperPrior, SpectralField


class Direction(str, enum.Enum):
    X_TO_Y = "XtoY"
    Y_TO_X = "YtoX"
    INDEPENDENT = "Independent"

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, Direction):
            return value
        key = str(value).replace("-", "").replace("_", "").replace(">", "").lower()
        aliases = {"xtoy": cls.X_TO_Y, "xy": cls.X_TO_Y, "ytox": cls.Y_TO_X, "yx": cls.Y_TO_X,
                   "independent": cls.INDEPENDENT, "indep": cls.INDEPENDENT}
        if key not in aliases:
            raise ValueError(f"unknown direction {value!r}")
        return aliases[key]


class LatentLayout:
    """Named blocks of the flat standardized latent vector."""

    def __init__(self, blocks: list[tuple[str, tuple[int, ...]]]):
        self.blocks = {}
        offset = 0
        for name, shape in blocks:
            size = int(np.prod(shape)) if shape else 1
            self.blocks[name] = (slice(offset, offset + size), tuple(shape))
            offset += size
        self.size = offset

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    def get(self, vec: np.ndarray, name: str) -> np.ndarray:
        sl, shape = self.blocks[name]
        return vec[sl].reshape(shape)

    def split(self, vec: np.ndarray) -> dict[str, np.ndarray]:
        if vec.shape != (self.size,):
            raise ValueError(f"latent vector has shape {vec.shape}, expected ({self.size},)")
        return {name: self.get(vec, name) for name in self.blocks}

    def join(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        out = np.zeros(self.size)
        for name, value in parts.items():
            sl, _ = self.blocks[name]
            out[sl] = np.ravel(value)
        return out

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)


@dataclass(frozen=True)
class ModelConfig:
    """Configuration of one causal density model.

    ``rho0`` defaults to ``N / L`` with ``L`` the extent of the cause axis;
    on a 100-year age axis this is the familiar ``N/100``.
    ``independent_variant`` selects how ``x ⊥ y`` is realized: ``"remove"``
    drops ``h`` from the latent space, ``"tight"`` keeps it but scales it by
    ``tight_scale`` (a very narrow zero-centred prior).
    """

    direction: Direction
    grid: Grid2D
    priors: HyperPrior = field(default_factory=HyperPrior)
    rho0: float | None = None
    independent_variant: str = "remove"
    tight_scale: float = 1e-6
    transposed: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        if self.rho0 is not None and not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if self.independent_variant not in ("remove", "tight"):
            raise ValueError("independent_variant must be 'remove' or 'tight'")

    def with_rho0(self, n_data: int) -> "ModelConfig":
        if self.rho0 is not None:
            return self
        cause = self.grid.gy if self.canonical()[1] else self.grid.gx
        return replace(self, rho0=max(n_data, 1) / cause.extent)

    def canonical(self) -> tuple["ModelConfig", bool]:
        """The equivalent ``x -> y`` (or independent) configuration and whether axes are swapped."""
        swap = self.direction is Direction.Y_TO_X or (self.direction is Direction.INDEPENDENT and self.transposed)
        if not swap:
            return self, False
        direction = Direction.INDEPENDENT if self.direction is Direction.INDEPENDENT else Direction.X_TO_Y
        return replace(self, direction=direction, grid=self.grid.transposed(),
                       priors=self.priors.swapped(), transposed=False), True

    def swapped(self) -> "ModelConfig":
        """Configuration for axis-swapped data describing the mirrored hypothesis."""
        mirror = {Direction.X_TO_Y: Direction.Y_TO_X, Direction.Y_TO_X: Direction.X_TO_Y,
                  Direction.INDEPENDENT: Direction.INDEPENDENT}
        return replace(self, direction=mirror[self.direction], grid=self.grid.transposed(),
                       priors=self.priors.swapped(),
                       transposed=(not self.transposed) if self.direction is Direction.INDEPENDENT else False)


@dataclass(frozen=True)
class DensityRealization:
    """Fields of one model realization, in the data orientation ``[ix, iy]``.

    ``cond`` holds ``p(effect | cause)``: ``p(y|x)`` unless the model is
    ``y -> x`` (or a transposed independent model), where it is ``p(x|y)``.
    """

    f: Field
    g: Field
    h: Field
    cond: Field
    joint: Field
    transposed: bool = False


# -- pure building blocks ---------------------------------------------------


def _log_conditional(g: np.ndarray, h: np.ndarray | None, dx: float, dy: float):
    """Log of the normalized conditional and the two softmax weight arrays."""
    if h is None:
        u = np.broadcast_to(g, (1, g.size))
        wx = None
    else:
        log_z = logsumexp(h, axis=0) + np.log(dx)
        wx = np.exp(h - log_z) * dx
        u = g[None, :] + h - log_z[None, :]
    log_n = logsumexp(u, axis=1, keepdims=True) + np.log(dy)
    log_p = u - log_n
    wy = np.exp(log_p) * dy
    return log_p, wx, wy


def conditional_pdf(g: Field | np.ndarray, h: Field | np.ndarray, grid: Grid2D) -> Field:
    """Normalized conditional density ``p(y|x)`` on ``grid``.

    Each x-column integrates to one over y.  ``h`` may be identically zero.
    """
    gv = np.asarray(g.values if isinstance(g, Field) else g, dtype=float)
    hv = np.asarray(h.values if isinstance(h, Field) else h, dtype=float)
    if gv.shape != (grid.gy.n_pixels,) or hv.shape != grid.shape:
        raise ValueError("g must live on the y axis and h on the 2-D grid")
    log_p, _, _ = _log_conditional(gv, hv, grid.gx.step, grid.gy.step)
    return Field(grid, np.exp(log_p))


def joint_density(f: Field | np.ndarray, cond: Field | np.ndarray, rho0: float) -> Field | np.ndarray:
    """``rho(x, y) = rho0 * exp(f(x)) * p(y|x)``."""
    fv = np.asarray(f.values if isinstance(f, Field) else f, dtype=float)
    if isinstance(cond, Field):
        return Field(cond.grid, rho0 * np.exp(fv)[:, None] * cond.values)
    return rho0 * np.exp(fv)[:, None] * np.asarray(cond)


def realize_field(xi, hyper, grid: GridLike, prior: AxisPrior | HyperPrior | list) -> Field:
    """Draw a prior field realization from standardized latents.

    For a 1-D grid ``prior`` is an :class:`AxisPrior`; for a 2-D grid pass
    the :class:`HyperPrior` (its ``h_x``, ``h_y`` and zero-mode entries are
    used) or a list ``[AxisPrior, AxisPrior, Uniform]``.
    """
    axes = axes_of(grid)
    if len(axes) == 1:
        op = SpectralField(axes, [prior])
    elif isinstance(prior, HyperPrior):
        op = SpectralField(axes, [prior.h_x, prior.h_y], prior.zero_mode)
    else:
        op = SpectralField(axes, list(prior[:-1]), prior[-1])
    xi = np.asarray(xi, dtype=float)
    if xi.size != op.size or np.size(hyper) != op.n_hyper:
        raise ValueError(f"latent sizes {xi.size}/{np.size(hyper)} do not match {op.size}/{op.n_hyper}")
    return Field(grid if not isinstance(grid, (list, tuple)) else axes, op(xi, np.asarray(hyper, dtype=float)))


# -- the differentiable model -----------------------------------------------


class CausalModel:
    """Expected Poisson counts ``lambda(xi)`` of one causal hypothesis.

    Internally every model is evaluated in the canonical cause-first
    orientation; arrays passed in and returned by :meth:`expected_counts`
    and :meth:`linearize` use that orientation (see :attr:`transposed`).
    """

    def __init__(self, config: ModelConfig):
        if config.rho0 is None:
            raise ValueError("rho0 unresolved; call ModelConfig.with_rho0(N) first")
        self.config = config
        canon, self.transposed = config.canonical()
        self.canonical_config = canon
        self.grid = canon.grid
        pri = canon.priors
        gx, gy = self.grid.gx, self.grid.gy
        self.f_op = SpectralField([gx], [pri.f])
        self.g_op = SpectralField([gy], [pri.g])
        self.has_h = canon.direction is Direction.X_TO_Y or config.independent_variant == "tight"
        self.h_scale = 1.0
        if canon.direction is Direction.INDEPENDENT and self.has_h:
            self.h_scale = config.tight_scale
        blocks = [("f", self.f_op.shape), ("g", self.g_op.shape)]
        if self.has_h:
            self.h_op = SpectralField([gx, gy], [pri.h_x, pri.h_y], pri.zero_mode)
            blocks.append(("h", self.h_op.shape))
        blocks += [("f_hyper", (3,)), ("g_hyper", (3,))]
        if self.has_h:
            blocks.append(("h_hyper", (self.h_op.n_hyper,)))
        self.layout = LatentLayout(blocks)
        self.log_norm = np.log(self.grid.pixel_volume * config.rho0)

    @property
    def direction(self) -> Direction:
        return self.config.direction

    @property
    def dim(self) -> int:
        return self.layout.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def _check(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim,):
            raise ValueError(f"latent vector must have shape ({self.dim},), got {xi.shape}")
        return xi

    def fields(self, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        xi = self._check(xi)
        L = self.layout
        f = self.f_op(L.get(xi, "f"), L.get(xi, "f_hyper"))
        g = self.g_op(L.get(xi, "g"), L.get(xi, "g_hyper"))
        h = self.h_scale * self.h_op(L.get(xi, "h"), L.get(xi, "h_hyper")) if self.has_h else None
        return f, g, h

    def log_expected_counts(self, xi) -> np.ndarray:
        f, g, h = self.fields(xi)
        log_p, _, _ = _log_conditional(g, h, self.grid.gx.step, self.grid.gy.step)
        return self.log_norm + f[:, None] + log_p

    def expected_counts(self, xi) -> np.ndarray:
        """``lambda_ij = dx dy rho(x_i, y_j)`` in canonical orientation."""
        lam = np.exp(self.log_expected_counts(xi))
        return np.broadcast_to(lam, self.shape).copy() if lam.shape != self.shape else lam

    def linearize(self, xi) -> tuple[np.ndarray, Callable, Callable]:
        """``(lambda, jvp, vjp)`` of the expected counts at ``xi``."""
        xi = self._check(xi)
        L = self.layout
        f, f_jvp, f_vjp = self.f_op.linearize(L.get(xi, "f"), L.get(xi, "f_hyper"))
        g, g_jvp, g_vjp = self.g_op.linearize(L.get(xi, "g"), L.get(xi, "g_hyper"))
        if self.has_h:
            h, h_jvp, h_vjp = self.h_op.linearize(L.get(xi, "h"), L.get(xi, "h_hyper"))
            h = self.h_scale * h
        else:
            h = None
        log_p, wx, wy = _log_conditional(g, h, self.grid.gx.step, self.grid.gy.step)
        lam = np.exp(self.log_norm + f[:, None] + log_p)
        if lam.shape != self.shape:
            lam = np.broadcast_to(lam, self.shape).copy()
        s = self.h_scale

        def jvp(v):
            v = self._check(v)
            df = f_jvp(L.get(v, "f"), L.get(v, "f_hyper"))
            dg = g_jvp(L.get(v, "g"), L.get(v, "g_hyper"))
            if h is not None:
                dh = s * h_jvp(L.get(v, "h"), L.get(v, "h_hyper"))
                du = dg[None, :] + dh - np.sum(wx * dh, axis=0)[None, :]
            else:
                du = np.broadcast_to(dg[None, :], self.shape)
            dlogp = du - np.sum(wy * du, axis=1, keepdims=True)
            return lam * (df[:, None] + dlogp)

        def vjp(u):
            ell = np.asarray(u, dtype=float) * lam
            parts = {}
            parts["f"], parts["f_hyper"] = f_vjp(ell.sum(axis=1))
            ubar = ell - wy * ell.sum(axis=1, keepdims=True)
            parts["g"], parts["g_hyper"] = g_vjp(ubar.sum(axis=0))
            if h is not None:
                hbar = s * (ubar - wx * ubar.sum(axis=0, keepdims=True))
                parts["h"], parts["h_hyper"] = h_vjp(hbar)
            return L.join(parts)

        return lam, jvp, vjp

    def realize(self, xi) -> DensityRealization:
        """All model fields at ``xi``, returned in data orientation."""
        f, g, h = self.fields(xi)
        grid = self.grid
        log_p, _, _ = _log_conditional(g, h, grid.gx.step, grid.gy.step)
        cond = np.broadcast_to(np.exp(log_p), grid.shape).copy()
        joint = joint_density(f, cond, self.config.rho0)
        hv = np.zeros(grid.shape) if h is None else h
        if self.transposed:
            cond, joint, hv = cond.T.copy(), joint.T.copy(), hv.T.copy()
            data_grid = grid.transposed()
            # f lives on the cause axis, which is the data y axis here
            return DensityRealization(Field(grid.gx, f), Field(grid.gy, g), Field(data_grid, hv),
                                      Field(data_grid, cond), Field(data_grid, joint), transposed=True)
        return DensityRealization(Field(grid.gx, f), Field(grid.gy, g), Field(grid, hv),
                                  Field(grid, cond), Field(grid, joint))

    def to_canonical(self, arr: np.ndarray) -> np.ndarray:
        """Convert a data-oriented ``[ix, iy]`` array to the model orientation."""
        return np.ascontiguousarray(arr.T) if self.transposed else np.ascontiguousarray(arr)

    def from_canonical(self, arr: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(arr.T) if self.transposed else arr


def build_density(model: ModelConfig | CausalModel, xi) -> DensityRealization:
    """Map a latent vector to the fields and densities of ``model``."""
    if isinstance(model, ModelConfig):
        model = CausalModel(model)
    return model.realize(xi)
