"""
Observation pairs: CSV input/output, thresholds, permutations and synthetic
ground-truth datasets.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import Grid2D
from .matern import HyperPrior
from .model import CausalModel, Direction, ModelConfig

HEADER = ("age", "log10_load")


class DataError(ValueError):
    """Malformed or unusable input data."""

    def __init__(self, message: str, lines: list[int] | None = None):
        super().__init__(message)
        self.lines = list(lines or [])


@dataclass(frozen=True)
class Record:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("record values must be finite")
        if self.x < 0:
            raise ValueError("age must be non-negative")


@dataclass(frozen=True)
class SyntheticTruth:
    """Latent vector and model that generated a synthetic dataset."""

    config: ModelConfig
    xi: np.ndarray
    lam: np.ndarray
    coupling: float = 0.0

    def save(self, path) -> None:
        cfg = self.config
        np.savez(path, xi=self.xi, lam=self.lam, coupling=self.coupling, rho0=cfg.rho0,
                 direction=str(cfg.direction.value),
                 grid=np.array([cfg.grid.gx.n_pixels, cfg.grid.gx.start, cfg.grid.gx.step, cfg.grid.gx.pad_factor,
                                cfg.grid.gy.n_pixels, cfg.grid.gy.start, cfg.grid.gy.step, cfg.grid.gy.pad_factor]))


@dataclass(frozen=True)
class Dataset:
    """Paired observations ``(x_i, y_i)`` stored column-wise.

    ``provenance`` is free text; thresholds and permutations append to it.
    """

    x: np.ndarray
    y: np.ndarray
    label: str = "data"
    provenance: str = ""
    truth: SyntheticTruth | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError("x and y must have the same length")
        if not self.label:
            raise ValueError("dataset label must be non-empty")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite")
        if np.any(x < 0):
            raise ValueError("ages must be non-negative")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_records(cls, records, label: str = "data", provenance: str = "") -> "Dataset":
        records = list(records)
        return cls(np.array([r.x for r in records], dtype=float), np.array([r.y for r in records], dtype=float),
                   label, provenance)

    @property
    def records(self) -> list[Record]:
        return [Record(float(a), float(b)) for a, b in zip(self.x, self.y)]

    @property
    def size(self) -> int:
        return int(self.x.size)

    def __len__(self) -> int:
        return self.size

    def swapped(self) -> "Dataset":
        """Exchange the roles of the two columns (no age constraint on the new ``x``)."""
        out = object.__new__(Dataset)
        for name, value in (("x", self.y), ("y", self.x), ("label", self.label),
                            ("provenance", _annotate(self.provenance, "axes swapped")), ("truth", None)):
            object.__setattr__(out, name, value)
        return out


def _annotate(provenance: str, note: str) -> str:
    return f"{provenance}; {note}" if provenance else note


def load_dataset(path, label: str | None = None, strict: bool = False) -> Dataset:
    """Read a CSV with header ``age,log10_load``.

    Lines starting with ``#`` and blank lines are skipped.  Malformed rows are
    dropped and their line numbers kept in ``provenance``; with ``strict`` they
    raise :class:`DataError` instead.  A missing file raises ``FileNotFoundError``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    xs, ys, bad = [], [], []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = next(csv.reader([stripped]))
        if not header_seen:
            if tuple(c.strip() for c in cells) != HEADER:
                raise DataError(f"{path}: line {lineno}: expected header 'age,log10_load'", [lineno])
            header_seen = True
            continue
        try:
            if len(cells) != 2:
                raise ValueError
            rec = Record(float(cells[0]), float(cells[1]))
        except ValueError:
            bad.append(lineno)
            continue
        xs.append(rec.x)
        ys.append(rec.y)
    if not header_seen:
        raise DataError(f"{path}: missing header 'age,log10_load'", [])
    if bad and strict:
        raise DataError(f"{path}: malformed rows at line(s) {','.join(map(str, bad))}", bad)
    prov = f"loaded from {path.name}"
    if bad:
        prov += f"; skipped malformed line(s) {','.join(map(str, bad))}"
    return Dataset(np.array(xs), np.array(ys), label or path.stem, prov)


def save_dataset(data: Dataset, path) -> None:
    """Write ``data`` as CSV; values use ``repr`` so a reload is exact."""
    buf = io.StringIO()
    buf.write(f"# label: {data.label}\n")
    if data.provenance:
        buf.write(f"# provenance: {data.provenance}\n")
    buf.write(",".join(HEADER) + "\n")
    for a, b in zip(data.x, data.y):
        buf.write(f"{float(a)!r},{float(b)!r}\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def apply_threshold(data: Dataset, y_min: float) -> Dataset:
    """Keep records with ``y >= y_min``."""
    keep = data.y >= y_min
    return Dataset(data.x[keep], data.y[keep], data.label,
                   _annotate(data.provenance, f"threshold y>={y_min:g} kept {int(keep.sum())}/{data.size}"),
                   data.truth)


def permute_y(data: Dataset, seed, permutation: np.ndarray | None = None, stream: int = 0) -> Dataset:
    """Pair every ``x_i`` with ``y_r(i)`` for a uniformly random permutation ``r``.

    ``stream`` selects an independent permutation for the same ``seed``;
    ``permutation`` overrides the random draw (used to force e.g. the identity).
    """
    if data.size < 2:
        raise ValueError("permutation needs at least two records")
    if permutation is None:
        permutation = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(31, int(stream)))).permutation(data.size)
    permutation = np.asarray(permutation)
    if np.sort(permutation).tolist() != list(range(data.size)):
        raise ValueError("not a permutation of the record indices")
    return Dataset(data.x, data.y[permutation], data.label, _annotate(data.provenance, f"y permuted (seed {seed} stream {stream})"))


def make_truth(direction, grid: Grid2D, n_expected: float, coupling: float = 0.5, seed: int = 0,
               priors: HyperPrior = HyperPrior()) -> SyntheticTruth:
    """Draw a ground-truth latent for synthetic studies.

    Field excitations are standard normal and hyper-latents sit at their
    prior medians.  For causal truths the ``h`` excitations are rescaled so
    that the pixel standard deviation of ``h`` equals ``coupling``.  ``rho0``
    is set so that the expected total count is ``n_expected``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(17,)))
    probe = CausalModel(ModelConfig(Direction.parse(direction), grid, priors, rho0=1.0))
    L = probe.layout
    parts = {name: rng.standard_normal(shape) for name, (_, shape) in L.blocks.items() if not name.endswith("hyper")}
    xi = L.join(parts)
    if probe.has_h:
        _, _, h = probe.fields(xi)
        std = float(np.std(h))
        sl = L.blocks["h"][0]
        xi[sl] *= (coupling / std) if std > 0 else 0.0
    mass = float(probe.expected_counts(xi).sum())
    config = replace(probe.config, rho0=n_expected / mass)
    model = CausalModel(config)
    lam = model.from_canonical(model.expected_counts(xi))
    return SyntheticTruth(config, xi, np.ascontiguousarray(lam), coupling if probe.has_h else 0.0)


def synthesize_counts(truth, grid: Grid2D, seed: int = 0, jitter: bool = False, label: str = "synthetic") -> Dataset:
    """Poisson counts ``n_ij ~ Poisson(lambda_ij)`` emitted as one record per event.

    ``truth`` is a :class:`SyntheticTruth`, a
    :class:`~causal_density.model.DensityRealization` or an array of
    expected counts in data orientation.  Events sit at pixel centres unless
    ``jitter`` spreads them uniformly within their pixel.
    """
    if isinstance(truth, SyntheticTruth):
        lam = truth.lam
    elif hasattr(truth, "joint"):
        lam = grid.pixel_volume * truth.joint.values
    else:
        lam = np.asarray(truth, dtype=float)
    if lam.shape != grid.shape:
        raise ValueError("truth does not match grid shape")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("expected counts must be finite and non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(23,)))
    counts = rng.poisson(lam)
    ix, iy = np.nonzero(counts)
    reps = counts[ix, iy]
    ix, iy = np.repeat(ix, reps), np.repeat(iy, reps)
    gx, gy = grid.gx, grid.gy
    ox = rng.uniform(0, 1, ix.size) if jitter else np.full(ix.size, 0.5)
    oy = rng.uniform(0, 1, iy.size) if jitter else np.full(iy.size, 0.5)
    x = gx.start + (ix + ox) * gx.step
    y = gy.start + (iy + oy) * gy.step
    prov = f"synthetic Poisson draw seed={seed} jitter={'on' if jitter else 'off'}"
    return Dataset(x, y, label, prov, truth if isinstance(truth, SyntheticTruth) else None)
