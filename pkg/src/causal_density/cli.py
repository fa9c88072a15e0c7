"""
Command-line entry point.

Subcommands: ``fit``, ``compare``, ``nulltest``, ``simulate`` and
``project``.  Every run writes ``manifest.json`` (config echo, versions,
seed, wall time) and a ``results.json`` without timestamps, so two runs
with the same inputs produce byte-identical results.

Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 numerical failure.  Errors
are reported as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy
import tomli

from . import __version__
from .dataio import DataError, Dataset, apply_threshold, load_dataset, make_truth, save_dataset, synthesize_counts
from .evidence import EvidenceConfig, compare_directions, fit_model, randomization_null_test
from .grid import Grid1D, Grid2D, make_grid
from .inference import ConvergenceError, InferenceConfig, PosteriorApprox
from .infectivity import ProbitCurve, load_curve, project_infectivity
from .likelihood import CountGrid, poisson_problem
from .matern import AxisPrior, HyperPrior, LogNormal, Normal, Uniform
from .model import CausalModel, Direction, ModelConfig

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4, 5
SEED_ENV = "CAUSAL_DENSITY_SEED"

log = logging.getLogger("causal_density")


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class AxisSpec:
    n: int
    start: float | None
    step: float


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    label: str | None = None
    threshold: float = 3.8
    x: AxisSpec = AxisSpec(90, 0.0, 1.0)
    y: AxisSpec = AxisSpec(128, None, 0.04)
    pad_factor: float = 2.0
    priors: HyperPrior = field(default_factory=HyperPrior)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    evidence: EvidenceConfig = field(default_factory=EvidenceConfig)
    permutations: int = 10
    independent_variant: str = "remove"
    rho0: float | None = None
    curve: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    seed_source: str = "default"

    def grid(self) -> Grid2D:
        y_start = self.threshold if self.y.start is None else self.y.start
        return Grid2D(make_grid(self.x.n, self.x.start, self.x.step, self.pad_factor),
                      make_grid(self.y.n, y_start, self.y.step, self.pad_factor))

    def echo(self) -> dict:
        out = asdict(self)
        out["grid_resolved"] = {name: {"n_pixels": g.n_pixels, "start": g.start, "step": g.step,
                                       "n_padded": g.n_padded} for name, g in zip("xy", self.grid().axes)}
        return out


def _marginal(spec, kind, where):
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be a table")
    try:
        if kind is Uniform:
            return Uniform(float(spec["lo"]), float(spec["hi"]))
        return kind(float(spec["mean"]), float(spec["std"]))
    except KeyError as exc:
        raise ConfigError(f"{where} is missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _axis_prior(spec, base: AxisPrior, where) -> AxisPrior:
    spec = spec or {}
    unknown = set(spec) - {"a", "k0", "gamma"}
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return AxisPrior(
        a=_marginal(spec["a"], LogNormal, f"{where}.a") if "a" in spec else base.a,
        k0=_marginal(spec["k0"], LogNormal, f"{where}.k0") if "k0" in spec else base.k0,
        gamma=_marginal(spec["gamma"], Normal, f"{where}.gamma") if "gamma" in spec else base.gamma,
    )


def priors_from_dict(spec: dict | None, base: HyperPrior = HyperPrior()) -> HyperPrior:
    """Prior table from ``prior.f``, ``prior.g``, ``prior.h.x``, ``prior.h.y``, ``prior.zero_mode``."""
    spec = spec or {}
    unknown = set(spec) - {"f", "g", "h", "zero_mode"}
    if unknown:
        raise ConfigError(f"unknown key(s) in prior: {sorted(unknown)}")
    h = spec.get("h", {})
    return HyperPrior(
        f=_axis_prior(spec.get("f"), base.f, "prior.f"),
        g=_axis_prior(spec.get("g"), base.g, "prior.g"),
        h_x=_axis_prior(h.get("x"), base.h_x, "prior.h.x"),
        h_y=_axis_prior(h.get("y"), base.h_y, "prior.h.y"),
        zero_mode=_marginal(spec["zero_mode"], Uniform, "prior.zero_mode") if "zero_mode" in spec else base.zero_mode,
    )


def priors_to_dict(p: HyperPrior) -> dict:
    ax = lambda a: {"a": asdict(a.a), "k0": asdict(a.k0), "gamma": asdict(a.gamma)}  # noqa: E731
    return {"f": ax(p.f), "g": ax(p.g), "h": {"x": ax(p.h_x), "y": ax(p.h_y)}, "zero_mode": asdict(p.zero_mode)}


def _section(doc, name, allowed):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    return sec


def _axis_spec(sec, base: AxisSpec, where) -> AxisSpec:
    if not isinstance(sec, dict):
        raise ConfigError(f"{where} must be a table")
    unknown = set(sec) - {"n", "start", "step"}
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")
    return AxisSpec(int(sec.get("n", base.n)), sec.get("start", base.start), float(sec.get("step", base.step)))


def build_config(args, environ=os.environ) -> RunConfig:
    """Merge defaults, the TOML file, the environment and command-line flags."""
    doc = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = tomli.loads(path.read_text(encoding="utf-8"))
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    top = set(doc) - {"seed", "data", "grid", "prior", "inference", "evidence", "model", "infectivity", "output"}
    if top:
        raise ConfigError(f"unknown config section(s): {sorted(top)}")
    cfg = RunConfig()
    try:
        data = _section(doc, "data", ["path", "label", "threshold"])
        grid = _section(doc, "grid", ["x", "y", "pad_factor"])
        inf = _section(doc, "inference", ["n_samples", "n_global_iterations", "cg_tolerance", "cg_max_iter",
                                           "optimizer_steps"])
        ev = _section(doc, "evidence", ["probes", "lanczos_order", "method", "permutations"])
        mod = _section(doc, "model", ["independent_variant", "rho0"])
        curve = _section(doc, "infectivity", ["mu", "sigma", "shift", "anchor_load", "anchor_response", "curve"])
        outsec = _section(doc, "output", ["dir"])
        cfg = replace(
            cfg,
            data=data.get("path"), label=data.get("label"), threshold=float(data.get("threshold", cfg.threshold)),
            x=_axis_spec(grid.get("x", {}), cfg.x, "grid.x"), y=_axis_spec(grid.get("y", {}), cfg.y, "grid.y"),
            pad_factor=float(grid.get("pad_factor", cfg.pad_factor)),
            priors=priors_from_dict(doc.get("prior")),
            permutations=int(ev.get("permutations", cfg.permutations)),
            independent_variant=str(mod.get("independent_variant", cfg.independent_variant)),
            rho0=None if mod.get("rho0") is None else float(mod["rho0"]),
            curve=dict(curve), out=str(outsec.get("dir", cfg.out)),
        )
        seed, source = int(doc.get("seed", 0)), "config" if "seed" in doc else "default"
        if environ.get(SEED_ENV):
            seed, source = int(environ[SEED_ENV]), "env"
        if getattr(args, "seed", None) is not None:
            seed, source = int(args.seed), "flag"
        if getattr(args, "data", None):
            cfg = replace(cfg, data=args.data)
        if getattr(args, "threshold", None) is not None:
            cfg = replace(cfg, threshold=args.threshold)
        if getattr(args, "out", None):
            cfg = replace(cfg, out=args.out)
        if getattr(args, "permutations", None) is not None:
            cfg = replace(cfg, permutations=args.permutations)
        evidence = EvidenceConfig(probes=int(ev.get("probes", 8)), lanczos_order=int(ev.get("lanczos_order", 50)),
                                  method=str(ev.get("method", "auto")), seed=seed)
        if getattr(args, "probes", None) is not None:
            evidence = replace(evidence, probes=args.probes)
        inference = InferenceConfig(**{k: (float(v) if k == "cg_tolerance" else int(v)) for k, v in inf.items()},
                                    seed=seed)
        cfg = replace(cfg, inference=inference, evidence=evidence, seed=seed, seed_source=source)
        cfg.grid()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.permutations < 1:
        raise ConfigError("permutations must be at least 1")
    if cfg.evidence.probes < 1 or cfg.evidence.method not in ("auto", "dense", "slq"):
        raise ConfigError("evidence.probes must be positive and evidence.method one of auto, dense, slq")
    if cfg.independent_variant not in ("remove", "tight"):
        raise ConfigError("model.independent_variant must be 'remove' or 'tight'")
    return cfg


# -- output helpers -------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_grid_csv(path: Path, values: np.ndarray, grid: Grid2D, name: str) -> None:
    """Matrix CSV (rows along x, columns along y) with a four-line ``#`` header."""
    gx, gy = grid.gx, grid.gy
    lines = [f"# {name}",
             f"# x: start={_fmt(gx.start)} step={_fmt(gx.step)} n={gx.n_pixels}",
             f"# y: start={_fmt(gy.start)} step={_fmt(gy.step)} n={gy.n_pixels}",
             "# rows index x pixels, columns index y pixels"]
    lines += [",".join(_fmt(v) for v in row) for row in np.asarray(values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serializable: {type(o).__name__}")


def _elbo_record(e) -> dict:
    return {"value": e.value, "stderr": e.stderr, "expected_log_joint": e.expected_log_joint, "entropy": e.entropy,
            "logdet": e.logdet, "logdet_stderr": e.logdet_stderr, "sample_correction": e.sample_correction,
            "probes": e.probes, "dim": e.dim}


def _grid_record(grid: Grid2D) -> dict:
    return {n: {"n": g.n_pixels, "start": g.start, "step": g.step, "pad_factor": g.pad_factor}
            for n, g in zip("xy", grid.axes)}


def save_fit(path: Path, fit, cfg: RunConfig) -> None:
    c = fit.config
    meta = {"direction": c.direction.value, "transposed": c.transposed, "rho0": c.rho0,
            "independent_variant": c.independent_variant, "grid": _grid_record(c.grid),
            "priors": priors_to_dict(c.priors), "seed": cfg.seed}
    np.savez(path, xi_bar=fit.posterior.xi_bar, residuals=fit.posterior.residuals,
             counts=fit.counts.counts, meta=json.dumps(meta, sort_keys=True))


def load_fit(path) -> tuple[CausalModel, PosteriorApprox]:
    try:
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            xi_bar, residuals, counts = z["xi_bar"], z["residuals"], z["counts"]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read fit file {path}: {exc}") from None
    g = meta["grid"]
    grid = Grid2D(*(make_grid(g[a]["n"], g[a]["start"], g[a]["step"], g[a]["pad_factor"]) for a in "xy"))
    config = ModelConfig(meta["direction"], grid, priors_from_dict(meta["priors"]), rho0=meta["rho0"],
                         independent_variant=meta["independent_variant"], transposed=meta["transposed"])
    model = CausalModel(config)
    problem = poisson_problem(model, CountGrid(grid, counts))
    return model, PosteriorApprox(xi_bar, residuals, problem)


def _load_data(cfg: RunConfig, strict: bool) -> Dataset:
    if not cfg.data:
        raise UsageError("--data is required (or data.path in the config)")
    path = Path(cfg.data)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    data = load_dataset(path, label=cfg.label, strict=strict)
    data = apply_threshold(data, cfg.threshold)
    if data.size == 0:
        raise DataError(f"no records at or above threshold {cfg.threshold:g}")
    return data


# -- subcommands ------------------------------------------------------------------


def cmd_fit(args, cfg: RunConfig, out: Path) -> dict:
    data = _load_data(cfg, args.strict_parse)
    grid = cfg.grid()
    direction = Direction.parse(args.direction or "XtoY")
    fit = fit_model(data, grid, direction, cfg.priors, cfg.inference, cfg.evidence,
                    independent_variant=cfg.independent_variant, rho0=cfg.rho0)
    post, model = fit.posterior, fit.model
    joint = np.array([model.realize(s).joint.values for s in post.samples])
    cond = np.array([model.realize(s).cond.values for s in post.samples])
    for name, arr in (("density", joint), ("conditional", cond)):
        write_grid_csv(out / f"{name}_mean.csv", arr.mean(axis=0), grid, f"{name} posterior mean")
        write_grid_csv(out / f"{name}_sigma.csv", arr.std(axis=0, ddof=1), grid, f"{name} posterior sigma")
    save_fit(out / "fit.npz", fit, cfg)
    if args.plots:
        _plot_grid(out / "conditional_mean.svg", cond.mean(axis=0), grid, "p(y|x) posterior mean")
    return {"dataset_label": data.label, "direction": direction.value, "n_data": fit.counts.total,
            "discarded": fit.counts.discarded, "elbo": _elbo_record(fit.elbo),
            "n_samples": post.n_samples, "probes": cfg.evidence.probes, "seed": cfg.seed}


def cmd_compare(args, cfg: RunConfig, out: Path) -> dict:
    data = _load_data(cfg, args.strict_parse)
    grid = cfg.grid()
    directions = ("XtoY", "YtoX") if not args.direction else (Direction.parse(args.direction).value,)
    cmp = compare_directions(data, grid, cfg.priors, cfg.inference, cfg.evidence, directions=directions)
    rows = cmp.rows(n_samples=cfg.inference.n_samples, probes=cfg.evidence.probes, seed=cfg.seed)
    for row, d in zip(rows, cmp.deltas.values()):
        row["odds"] = d.odds
    elbos = {k: _elbo_record(f.elbo) for k, f in cmp.fits.items()}
    lines = ["direction,delta,stderr,elbo_causal,elbo_causal_stderr,elbo_indep,elbo_indep_stderr"]
    lines += [",".join([r["direction"]] + [_fmt(r[k]) for k in ("delta", "stderr", "elbo_causal", "elbo_causal_stderr",
                                                                   "elbo_indep", "elbo_indep_stderr")]) for r in rows]
    (out / "delta_evidence.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"dataset_label": data.label, "comparisons": rows, "elbos": elbos, "n_data": int(bin_total(cmp))}


def bin_total(cmp) -> int:
    return next(iter(cmp.fits.values())).counts.total


def cmd_nulltest(args, cfg: RunConfig, out: Path) -> dict:
    data = _load_data(cfg, args.strict_parse)
    direction = Direction.parse(args.direction or "XtoY")
    res = randomization_null_test(data, cfg.grid(), cfg.priors, cfg.permutations, cfg.seed, cfg.inference,
                                  cfg.evidence, direction=direction)
    rows = []
    for i, d in enumerate(res.deltas):
        row = {"permutation": i, "status": "ok" if d is not None else "failed"}
        if d is not None:
            row.update(d.record(n_samples=cfg.inference.n_samples, probes=cfg.evidence.probes, seed=cfg.seed))
        rows.append(row)
    n_ok = int(res.values.size)
    summary = {"mean": res.mean, "spread": res.spread, "n_ok": n_ok,
               "stderr_of_mean": res.spread / np.sqrt(n_ok) if n_ok > 1 else None}
    if n_ok == 0:
        raise ArithmeticError("every permutation failed: " + "; ".join(m for _, m in res.failures))
    return {"dataset_label": data.label, "direction": direction.value, "permutations": rows,
            "summary": summary, "failures": [{"permutation": i, "error": m} for i, m in res.failures]}


PRESETS = {"independent": Direction.INDEPENDENT, "xtoy": Direction.X_TO_Y, "ytox": Direction.Y_TO_X}


def cmd_simulate(args, cfg: RunConfig, out: Path) -> dict:
    grid = cfg.grid()
    direction = PRESETS[args.preset]
    truth = make_truth(direction, grid, args.n, coupling=args.coupling, seed=cfg.seed, priors=cfg.priors)
    data = synthesize_counts(truth, grid, seed=cfg.seed, jitter=args.jitter, label=args.label or f"sim-{args.preset}")
    save_dataset(data, out / "data.csv")
    truth.save(out / "truth.npz")
    write_grid_csv(out / "truth_expected_counts.csv", truth.lam, grid, "ground-truth expected counts")
    return {"preset": args.preset, "direction": direction.value, "n_expected": args.n, "n_drawn": data.size,
            "coupling": truth.coupling, "rho0": truth.config.rho0, "seed": cfg.seed, "jitter": args.jitter}


def _curve(cfg: RunConfig):
    c = cfg.curve
    if "curve" in c:
        return load_curve(c["curve"]), {"kind": "tabulated", "path": c["curve"]}
    sigma = float(c.get("sigma", 1.0))
    if "mu" in c:
        curve = ProbitCurve(float(c["mu"]), sigma)
        meta = {"kind": "probit", "mu": curve.mu, "sigma": sigma, "calibration": "user"}
    else:
        curve = ProbitCurve.anchored(float(c.get("anchor_load", 5.4)), float(c.get("anchor_response", 0.05)), sigma)
        meta = {"kind": "probit", "mu": curve.mu, "sigma": sigma,
                "calibration": "default anchor, not fitted to culture data"}
    return curve, meta


def cmd_project(args, cfg: RunConfig, out: Path) -> dict:
    model, post = load_fit(args.fit)
    try:
        base, meta = _curve(cfg)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"infectivity curve: {exc}") from None
    shifts = [0.0] + [float(s) for s in cfg.curve.get("shift", [-1.0, 1.0])]
    profiles, lines = {}, ["shift,age,mean,sigma"]
    for s in shifts:
        prof = project_infectivity(post, model, base.shifted(s))
        profiles[_fmt(s)] = {"max_relative_difference": prof.max_relative_difference,
                             "sample_relative_difference_mean": float(prof.sample_relative_differences.mean()),
                             "sample_relative_difference_sigma": float(prof.sample_relative_differences.std(ddof=1)),
                             "mean_infectivity": float(prof.mean.mean())}
        lines += [f"{_fmt(s)},{_fmt(a)},{_fmt(m)},{_fmt(sd)}" for a, m, sd in zip(prof.ages, prof.mean, prof.sigma)]
        if args.plots and s == 0.0:
            _plot_line(out / "infectivity.svg", prof)
    (out / "infectivity.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {"fit": str(args.fit), "curve": meta, "profiles": profiles, "direction": model.direction.value}


# -- plots --------------------------------------------------------------------------


def _plot_grid(path, values, grid, title):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "causal-density"
    fig, ax = plt.subplots(figsize=(6, 4))
    ext = [grid.gx.start, grid.gx.stop, grid.gy.start, grid.gy.stop]
    im = ax.imshow(np.asarray(values).T, origin="lower", aspect="auto", extent=ext)
    fig.colorbar(im, ax=ax)
    ax.set(xlabel="x", ylabel="y", title=title)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_line(path, prof):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "causal-density"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(prof.ages, *prof.band2, alpha=0.2, lw=0)
    ax.fill_between(prof.ages, *prof.band1, alpha=0.35, lw=0)
    ax.plot(prof.ages, prof.mean)
    ax.set(xlabel="age", ylabel="I(x)")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# -- driver ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help=f"master seed (overrides config and ${SEED_ENV})")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="cap on BLAS/worker threads")
    common.add_argument("--plots", action="store_true", help="also write SVG figures")
    common.add_argument("--probes", type=int, help="Rademacher probes for the log-determinant")
    common.add_argument("-v", "--verbose", action="count", default=0)
    data = _Parser(add_help=False)
    data.add_argument("--data", help="CSV with header age,log10_load")
    data.add_argument("--threshold", type=float, help="keep records with y >= threshold")
    data.add_argument("--strict-parse", action="store_true", help="fail on malformed rows")
    data.add_argument("--direction", help="XtoY, YtoX or Independent")

    p = _Parser(prog="causal-density", description="Causal-direction density models for paired data.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("fit", parents=[common, data], help="fit one model and write density grids")
    sub.add_parser("compare", parents=[common, data], help="evidence ratios of both causal directions")
    nt = sub.add_parser("nulltest", parents=[common, data], help="permutation null test")
    nt.add_argument("--permutations", type=int)
    sim = sub.add_parser("simulate", parents=[common], help="synthesize a dataset from a random truth")
    sim.add_argument("--preset", choices=sorted(PRESETS), default="independent")
    sim.add_argument("--n", type=int, default=2000, help="expected number of events")
    sim.add_argument("--coupling", type=float, default=0.5, help="pixel std of h for causal presets")
    sim.add_argument("--jitter", action="store_true")
    sim.add_argument("--label")
    sim.add_argument("--threshold", type=float, help="start of the y grid")
    pr = sub.add_parser("project", parents=[common], help="infectivity profile from a saved fit")
    pr.add_argument("--fit", required=True, help="fit.npz written by 'fit'")
    return p


COMMANDS = {"fit": cmd_fit, "compare": cmd_compare, "nulltest": cmd_nulltest, "simulate": cmd_simulate,
            "project": cmd_project}


def _fail(kind: str, code: int, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": " ".join(str(message).split())}) + "\n")
    return code


def run(argv=None, environ=os.environ) -> int:
    t0 = time.time()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be positive")
        if getattr(args, "n", 1) < 1:
            raise UsageError("--n must be positive")
        if getattr(args, "direction", None):
            try:
                Direction.parse(args.direction)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        cfg = build_config(args, environ)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except ValueError as exc:
        return _fail("config", EXIT_CONFIG, exc)

    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s %(message)s")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail("config", EXIT_CONFIG, f"cannot create output directory: {exc}")

    try:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(limits=args.threads):
            result = COMMANDS[args.command](args, cfg, out)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except (ArithmeticError, ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}")
    except (DataError, OSError, UnicodeDecodeError, ValueError) as exc:
        return _fail("data", EXIT_DATA, exc)

    result = {"command": args.command, "seed": cfg.seed, **result}
    write_json(out / "results.json", result)
    manifest = {"command": args.command, "argv": list(argv) if argv is not None else sys.argv[1:],
                "config": cfg.echo(), "seed": cfg.seed, "seed_source": cfg.seed_source,
                "versions": {"causal_density": __version__, "python": platform.python_version(),
                             "numpy": np.__version__, "scipy": scipy.__version__},
                "threads": args.threads, "wall_time_s": time.time() - t0,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    write_json(out / "manifest.json", manifest)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
