"""
Metric Gaussian variational inference (MGVI).

The posterior over the standardized latents is approximated by a Gaussian
centred on ``xi_bar`` whose covariance is the inverse of the metric
``M = J^T W J + 1`` at ``xi_bar``.  Inference alternates between drawing
antithetic residual samples from that Gaussian and moving ``xi_bar`` to
minimize the sample-averaged negative log-joint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .likelihood import LatentProblem

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Conjugate gradient did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class InferenceConfig:
    n_samples: int = 6
    n_global_iterations: int = 15
    cg_tolerance: float = 1e-6
    cg_max_iter: int = 500
    optimizer_steps: int = 25
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_samples", "n_global_iterations", "cg_max_iter", "optimizer_steps"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.n_samples % 2:
            raise ValueError("n_samples must be even (antithetic pairs)")
        if not self.cg_tolerance > 0:
            raise ValueError("cg_tolerance must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class PosteriorApprox:
    """Gaussian approximation ``G(xi - xi_bar, M^-1)`` with stored residual samples."""

    xi_bar: np.ndarray
    residuals: np.ndarray
    problem: LatentProblem
    history: list = field(default_factory=list)

    @property
    def samples(self) -> np.ndarray:
        return self.xi_bar[None, :] + self.residuals

    @property
    def n_samples(self) -> int:
        return self.residuals.shape[0]

    def metric(self, v: np.ndarray) -> np.ndarray:
        """Apply the metric (inverse posterior covariance) at ``xi_bar``."""
        return self.problem.at(self.xi_bar).metric(v) + v


def conjugate_gradient(apply: Callable, b: np.ndarray, tol: float, maxiter: int,
                       x0: np.ndarray | None = None, strict: bool = True):
    """Solve ``A x = b`` for SPD ``A`` given as a callable.

    Returns ``(x, iterations, relative_residual)``.  With ``strict`` a
    :class:`ConvergenceError` is raised when ``maxiter`` is exhausted.
    """
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    op = LinearOperator((n, n), matvec=apply, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = cg(op, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
    res = float(np.linalg.norm(b - apply(x))) / bnorm
    if info != 0 and strict:
        raise ConvergenceError("conjugate gradient did not converge", res, count[0])
    return x, count[0], res


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def draw_metric_samples(problem: LatentProblem, xi_bar: np.ndarray, n: int, seed: int,
                        config: InferenceConfig = InferenceConfig(), stream: int = 0) -> np.ndarray:
    """Antithetic residuals ``r ~ G(0, M^-1)`` at ``xi_bar``; rows ``2i`` and ``2i+1`` are ``±r``.

    ``w ~ G(0, M)`` is drawn as a prior draw plus a likelihood-metric draw
    and mapped to ``r = M^-1 w`` by conjugate gradient.  Each pair uses its
    own random stream derived from ``(seed, stream, pair index)``.
    """
    if n % 2 or n < 2:
        raise ValueError("number of samples must be a positive even number")
    local = problem.at(xi_bar)

    def metric(v):
        return local.metric(v) + v

    out = np.empty((n, problem.dim))
    for i in range(n // 2):
        rng = _rng(seed, stream, i)
        w = rng.standard_normal(problem.dim) + local.metric_sample(rng)
        r, iters, res = conjugate_gradient(metric, w, config.cg_tolerance, config.cg_max_iter)
        log.debug("sample stream=%d pair=%d cg_iterations=%d residual=%.3e", stream, i, iters, res)
        out[2 * i] = r
        out[2 * i + 1] = -r
    return out


def sampled_kl_energy(problem: LatentProblem, xi: np.ndarray, residuals: np.ndarray) -> float:
    """``mean_s [-log P(d, xi + r_s)]`` up to the constant prior normalization."""
    total = 0.0
    for r in residuals:
        s = xi + r
        try:
            total += problem.energy(s) + 0.5 * float(s @ s)
        except (ArithmeticError, FloatingPointError):
            return np.inf
    return total / len(residuals)


def minimize_kl(problem: LatentProblem, xi_bar: np.ndarray, residuals: np.ndarray, steps: int,
                config: InferenceConfig = InferenceConfig()):
    """Newton-CG descent of the sampled KL with residuals held fixed.

    Returns ``(xi_bar, energies)`` where ``energies`` lists the objective after
    every accepted step (non-increasing).
    """
    xi = np.array(xi_bar, dtype=float)
    ns = len(residuals)
    r_mean = residuals.mean(axis=0)
    with np.errstate(over="raise", invalid="raise"):
        energy = sampled_kl_energy(problem, xi, residuals)
    energies = [energy]
    for step in range(steps):
        locals_ = [problem.at(xi + r) for r in residuals]
        grad = sum(lc.gradient for lc in locals_) / ns + xi + r_mean

        def metric(v, locals_=locals_):
            return sum(lc.metric(v) for lc in locals_) / ns + v

        gnorm = float(np.linalg.norm(grad))
        if gnorm < 1e-12:
            break
        eta = max(config.cg_tolerance, min(0.1, np.sqrt(gnorm / (1.0 + abs(energy)))))
        delta, iters, _ = conjugate_gradient(metric, -grad, eta, config.cg_max_iter, strict=False)
        slope = float(grad @ delta)
        if slope >= 0:
            delta, slope = -grad, -gnorm**2
        t = 1.0
        accepted = False
        for _ in range(30):
            with np.errstate(over="ignore", invalid="ignore"):
                trial = sampled_kl_energy(problem, xi + t * delta, residuals)
            if np.isfinite(trial) and trial <= energy + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            log.warning("kl line_search=failed step=%d energy=%.6f", step, energy)
            break
        xi = xi + t * delta
        decrease = energy - trial
        energy = trial
        energies.append(energy)
        log.debug("kl step=%d energy=%.6f step_size=%.3g cg_iterations=%d", step, energy, t, iters)
        if decrease <= 1e-10 * (1.0 + abs(energy)) and t * float(np.linalg.norm(delta)) < 1e-8 * (1.0 + float(np.linalg.norm(xi))):
            break
    return xi, energies


def run_mgvi(problem: LatentProblem, config: InferenceConfig = InferenceConfig(),
             xi_init: np.ndarray | None = None) -> PosteriorApprox:
    """Alternate sampling and KL minimization; deterministic given ``config.seed``."""
    xi = np.zeros(problem.dim) if xi_init is None else np.array(xi_init, dtype=float)
    history = []
    for it in range(config.n_global_iterations):
        residuals = draw_metric_samples(problem, xi, config.n_samples, config.seed, config, stream=it)
        xi, energies = minimize_kl(problem, xi, residuals, config.optimizer_steps, config)
        history.append(energies)
        log.info("mgvi iteration=%d sampled_kl=%.6f kl_steps=%d", it, energies[-1], len(energies) - 1)
    # the final residuals are the ones the mean was optimized against
    return PosteriorApprox(xi, residuals, problem, history)


def posterior_moments(posterior: PosteriorApprox, q: Callable[[np.ndarray], np.ndarray]):
    """Sample mean and (unbiased) standard deviation of ``q`` over posterior samples."""
    if posterior.n_samples < 2:
        raise ValueError("at least two samples are needed for a standard deviation")
    values = np.array([np.asarray(q(s), dtype=float) for s in posterior.samples])
    return values.mean(axis=0), values.std(axis=0, ddof=1)
