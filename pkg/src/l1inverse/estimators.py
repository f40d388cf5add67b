"""l1-penalized estimators in the diagonal (SVD) coordinates of the operator.

Both estimators take the spectral coefficients ``w_j = <y, phi_j>_n`` of the
observations, not raw grid samples; use :func:`l1inverse.svd_operator.analyze`
to convert.

Operator-adapted loss::

    sum_j (w_j / lambda_j - x_j)**2 + sum_j mu_j |x_j|

Least-squares loss::

    sum_j (w_j - lambda_j x_j)**2 + sum_j mu_j |x_j|   (+ out-of-span residual)

Both objectives separate across coordinates, so the minimizers are
coordinatewise soft-thresholds of ``w_j / lambda_j`` with thresholds
``mu_j / 2`` and ``mu_j / (2 lambda_j**2)`` respectively.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Any

import numpy as np

from .svd_operator import OperatorError, SpectralOperator, require_full_rank

__all__ = [
    "ConvergenceWarning",
    "ThresholdSchedule",
    "EstimationResult",
    "threshold_schedule",
    "soft_threshold",
    "adapted_l1_estimate",
    "lse_l1_closed_form",
    "lse_l1_ista",
    "pseudo_inverse_estimate",
    "hard_threshold_oracle",
    "l1_penalty",
    "objective_adapted",
    "objective_lse",
]


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class ThresholdSchedule:
    """Smoothing sequence ``mu_j = 2 (c / lambda_j) sqrt(log n / n)``."""

    c: float
    n: int
    mu: np.ndarray

    @property
    def noise_level(self) -> float:
        """``c sqrt(log n / n)``, the bound defining the high-probability event."""
        return self.c * math.sqrt(math.log(self.n) / self.n)


@dataclass(frozen=True, eq=False)
class EstimationResult:
    estimate: np.ndarray
    objective_value: float
    iterations: int = 1
    converged: bool = True

    @property
    def active_set(self) -> np.ndarray:
        """Zero-based indices ``j - 1`` with a nonzero estimate."""
        return np.flatnonzero(self.estimate)

    def to_record(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate.tolist(),
            "active_set": (self.active_set + 1).tolist(),
            "objective": self.objective_value,
            "iterations": self.iterations,
        }


def threshold_schedule(op: SpectralOperator, c: float) -> ThresholdSchedule:
    if not c > 0:
        raise ValueError(f"noise-scale constant c must be positive, got {c!r}")
    if op.n < 2:
        raise ValueError("threshold schedule needs n >= 2 (log n must be positive)")
    mu = 2.0 * (c / op.eigenvalues) * math.sqrt(math.log(op.n) / op.n)
    mu.setflags(write=False)
    return ThresholdSchedule(c=float(c), n=op.n, mu=mu)


def soft_threshold(z, tau):
    """``sign(z) * max(|z| - tau, 0)``, elementwise.

    Solves ``min_x (z - x)**2 + 2 tau |x|``.  Returns a float for scalar input.
    """
    z = np.asarray(z, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("threshold must be non-negative")
    out = np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)
    # avoid -0.0 so active sets and serialized output stay clean
    out = out + 0.0
    return float(out) if out.ndim == 0 else out


def _check_problem(op: SpectralOperator, w, sched: ThresholdSchedule) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size != op.n:
        raise OperatorError(f"spectral coefficients must have length {op.n}, got shape {w.shape}")
    if sched.mu.size != op.n:
        raise OperatorError(f"schedule length {sched.mu.size} does not match operator size {op.n}")
    require_full_rank(op)
    return w


def l1_penalty(x, sched: ThresholdSchedule) -> float:
    return float(np.sum(np.abs(sched.mu * np.asarray(x, dtype=float))))


def objective_adapted(op: SpectralOperator, w, x, sched: ThresholdSchedule) -> float:
    w = _check_problem(op, w, sched)
    x = np.asarray(x, dtype=float)
    if x.shape != w.shape:
        raise OperatorError("candidate length does not match the operator")
    return float(np.sum((w / op.eigenvalues - x) ** 2)) + l1_penalty(x, sched)


def objective_lse(op: SpectralOperator, w, x, sched: ThresholdSchedule, residual_sq: float = 0.0) -> float:
    """Penalized empirical least squares.

    ``residual_sq`` is the part of ``||y||_n**2`` outside the span of the
    ``phi_j``; it is zero for the complete bases used here.
    """
    w = _check_problem(op, w, sched)
    x = np.asarray(x, dtype=float)
    if x.shape != w.shape:
        raise OperatorError("candidate length does not match the operator")
    return float(np.sum((w - op.eigenvalues * x) ** 2)) + residual_sq + l1_penalty(x, sched)


def adapted_l1_estimate(op: SpectralOperator, w, sched: ThresholdSchedule) -> EstimationResult:
    w = _check_problem(op, w, sched)
    est = soft_threshold(w / op.eigenvalues, sched.mu / 2.0)
    return EstimationResult(est, objective_adapted(op, w, est, sched))


def lse_l1_closed_form(op: SpectralOperator, w, sched: ThresholdSchedule) -> EstimationResult:
    w = _check_problem(op, w, sched)
    lam = op.eigenvalues
    est = soft_threshold(w / lam, sched.mu / (2.0 * lam**2))
    return EstimationResult(est, objective_lse(op, w, est, sched))


def lse_l1_ista(
    op: SpectralOperator,
    w,
    sched: ThresholdSchedule,
    step: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> EstimationResult:
    """Iterative soft-thresholding for the penalized least-squares problem.

    Iterates ``x <- soft(x + step * lambda * (w - lambda x), step * mu / 2)``
    from zero.  Stops once every coordinate moves by less than ``tol`` *and*
    the per-coordinate a-posteriori bound ``q_j / (1 - q_j) * |dx_j|`` (with
    contraction factor ``q_j = 1 - step * lambda_j**2``) is below ``tol``, so the
    returned point is within ``tol`` of the exact minimizer.

    If ``max_iter`` is reached first the last iterate is returned with
    ``converged=False`` and a :class:`ConvergenceWarning` is emitted.
    """
    w = _check_problem(op, w, sched)
    lam = op.eigenvalues
    lam_max_sq = float(lam.max()) ** 2
    if step is None:
        step = 0.99 / lam_max_sq
    if not 0 < step <= 1.0 / lam_max_sq:
        raise ValueError(f"step must lie in (0, 1/lambda_max**2 = {1.0 / lam_max_sq:g}], got {step!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if int(max_iter) != max_iter or max_iter < 1:
        raise ValueError("max_iter must be a positive integer")

    q = 1.0 - step * lam**2
    with np.errstate(divide="ignore"):
        amplify = np.where(q < 1.0, q / (1.0 - q), np.inf)
    thresh = step * sched.mu / 2.0

    x = np.zeros_like(w)
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        x_new = soft_threshold(x + step * lam * (w - lam * x), thresh)
        dx = np.abs(x_new - x)
        x = x_new
        with np.errstate(invalid="ignore"):
            bound = np.where(dx == 0.0, 0.0, amplify * dx)
        if dx.max() < tol and bound.max() < tol:
            converged = True
            break

    if not converged:
        warnings.warn(f"ISTA did not converge within {max_iter} iterations", ConvergenceWarning, stacklevel=2)
    return EstimationResult(x, objective_lse(op, w, x, sched), iterations=it, converged=converged)


def pseudo_inverse_estimate(op: SpectralOperator, w, sched: ThresholdSchedule | None = None) -> EstimationResult:
    """Unregularized reconstruction ``w_j / lambda_j``; objective is the adapted loss (zero)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size != op.n:
        raise OperatorError(f"spectral coefficients must have length {op.n}, got shape {w.shape}")
    require_full_rank(op)
    est = w / op.eigenvalues
    return EstimationResult(est, float(np.sum((w / op.eigenvalues - est) ** 2)))


def hard_threshold_oracle(x0, sched: ThresholdSchedule) -> np.ndarray:
    """Keep ``x0_j`` where ``|x0_j| > mu_j`` (strictly), zero elsewhere."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != sched.mu.shape:
        raise OperatorError(f"signal length {x0.size} does not match schedule length {sched.mu.size}")
    return np.where(np.abs(x0) > sched.mu, x0, 0.0)
