"""Empirical checks of the oracle inequality, tail event and convergence rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import ThresholdSchedule, hard_threshold_oracle
from .simulation import NoiseModel, calibrated_p, generate_observations, replication_rng
from .svd_operator import SpectralOperator, build_polynomial_operator

__all__ = [
    "VIOLATION_TOL",
    "RateFitResult",
    "OracleCheckReport",
    "BnFailureCurve",
    "besov_seminorm",
    "rho_sparsity",
    "calibrated_p",
    "exponent_adapted",
    "exponent_lse",
    "oracle_bound",
    "verify_oracle_inequality",
    "fit_rate",
    "bn_failure_curve",
    "bn_tail_bound",
    "median_errors",
]

VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class RateFitResult:
    slope: float
    intercept: float
    theoretical_exponent: float
    max_abs_residual: float
    n_grid: tuple[int, ...]

    @property
    def slope_error(self) -> float:
        """Distance between the fitted slope and ``-theoretical_exponent``."""
        return abs(self.slope + self.theoretical_exponent)


@dataclass(frozen=True)
class OracleCheckReport:
    replications_checked: int = 0
    bn_count: int = 0
    violations: int = 0
    worst_slack: float = math.inf

    @property
    def bn_fraction(self) -> float:
        return self.bn_count / self.replications_checked if self.replications_checked else 0.0


@dataclass(frozen=True)
class BnFailureCurve:
    n_grid: tuple[int, ...]
    failure_prob: tuple[float, ...]
    reps: int
    tail_bound: tuple[float, ...] = field(default=())

    @property
    def max_increase(self) -> float:
        """Largest rise between consecutive grid points (``<= 0`` means non-increasing)."""
        if len(self.failure_prob) < 2:
            return 0.0
        return float(np.max(np.diff(self.failure_prob)))

    @property
    def non_increasing(self) -> bool:
        return self.max_increase <= 0.0

    def rows(self):
        return list(zip(self.n_grid, self.failure_prob))


def besov_seminorm(x, s: float, p: float) -> float:
    """``sum_j j**(p(s + 1/2 - 1/p)) |x_j|**p``; the unit body is ``<= 1``."""
    if not 0 < p < 2:
        raise ValueError(f"p must lie in (0, 2), got {p!r}")
    if not s > 0:
        raise ValueError(f"s must be positive, got {s!r}")
    x = np.abs(np.asarray(x, dtype=float))
    j = np.arange(1, x.size + 1, dtype=float)
    return float(np.sum(j ** (p * (s + 0.5 - 1.0 / p)) * x**p))


def rho_sparsity(x, rho: float) -> float:
    if not 0 < rho < 2:
        raise ValueError(f"rho must lie in (0, 2), got {rho!r}")
    return float(np.sum(np.abs(np.asarray(x, dtype=float)) ** rho))


def exponent_adapted(s: float, t: float) -> float:
    """Rate exponent ``2s / (2s + 2t + 1)`` of the operator-adapted estimator."""
    if not s > 0:
        raise ValueError(f"s must be positive, got {s!r}")
    return 2.0 * s / (2.0 * s + 2.0 * t + 1.0)


def exponent_lse(rho: float, t: float) -> tuple[float, bool]:
    """Rate exponent ``1 - rho/2 - 2t`` of penalized least squares and whether it is positive."""
    if not 0 < rho < 2:
        raise ValueError(f"rho must lie in (0, 2), got {rho!r}")
    e = 1.0 - rho / 2.0 - 2.0 * t
    return e, e > 0


def oracle_bound(estimate, x0, eigenvalues, sched: ThresholdSchedule) -> tuple[float, float]:
    """Both sides of the oracle inequality for one estimate.

    Returns ``(lhs, rhs)`` with ``lhs = ||xhat - x0||**2`` and
    ``rhs = ||x_* - x0||**2 + 4 c sqrt(log n / n) sum_{j in J} |xhat_j - x0_j| / lambda_j``,
    ``J = {j : |x0_j| > mu_j}``.
    """
    estimate = np.asarray(estimate, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    lhs = float(np.sum((estimate - x0) ** 2))
    oracle = hard_threshold_oracle(x0, sched)
    J = np.abs(x0) > sched.mu
    tail = np.sum(np.abs(estimate[J] - x0[J]) / eigenvalues[J])
    rhs = float(np.sum((oracle - x0) ** 2) + 4.0 * sched.noise_level * tail)
    return lhs, rhs


def verify_oracle_inequality(records, x0, op: SpectralOperator, sched: ThresholdSchedule, c: float) -> OracleCheckReport:
    """Evaluate the oracle inequality on every replication where the event holds.

    ``records`` must come from the adapted estimator with ``keep_estimates=True``.
    Replications outside the event are counted but not checked.
    """
    records = list(records)
    if not math.isclose(sched.c, c, rel_tol=1e-12) or sched.n != op.n:
        raise ValueError("schedule does not match the requested c / operator")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (op.n,):
        raise ValueError(f"x0 must have length {op.n}")

    bn = violations = 0
    worst = math.inf
    level = sched.noise_level
    for rec in records:
        if rec.estimator_tag != "adapted":
            raise ValueError(f"oracle inequality applies to the adapted estimator, got {rec.estimator_tag!r}")
        if rec.estimate is None or rec.estimate.shape != (op.n,):
            raise ValueError("records must carry estimates of the operator's length (keep_estimates=True)")
        if bool(rec.max_abs_V <= level) != rec.bn_holds:
            raise ValueError("record event flag was computed with a different c")
        if not rec.bn_holds:
            continue
        bn += 1
        lhs, rhs = oracle_bound(rec.estimate, x0, op.eigenvalues, sched)
        slack = rhs - lhs
        worst = min(worst, slack)
        if slack < -VIOLATION_TOL:
            violations += 1
    return OracleCheckReport(len(records), bn, violations, worst)


def fit_rate(n_grid, median_errors_sq, theoretical_exponent: float) -> RateFitResult:
    """Least-squares line of ``log e`` against ``log(n / log n)``."""
    n = np.asarray(n_grid, dtype=float)
    e = np.asarray(median_errors_sq, dtype=float)
    if n.ndim != 1 or n.size < 3:
        raise ValueError("rate fit needs at least three grid points")
    if e.shape != n.shape:
        raise ValueError("one error per grid point is required")
    if np.any(np.diff(n) <= 0) or np.any(n < 2):
        raise ValueError("n_grid must be strictly increasing with n >= 2")
    if np.any(~(e > 0)):
        raise ValueError("errors must be strictly positive")
    xs = np.log(n / np.log(n))
    ys = np.log(e)
    A = np.column_stack([xs, np.ones_like(xs)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - (slope * xs + intercept)
    return RateFitResult(
        slope=float(slope),
        intercept=float(intercept),
        theoretical_exponent=float(theoretical_exponent),
        max_abs_residual=float(np.max(np.abs(resid))),
        n_grid=tuple(int(v) for v in n_grid),
    )


def bn_tail_bound(n: int, c: float) -> float:
    """Right-hand side ``c exp(-log n / c**2)`` of the tail bound."""
    return c * math.exp(-math.log(n) / c**2)


def bn_failure_curve(
    n_grid,
    noise: NoiseModel,
    c: float,
    reps: int = 1000,
    seed: int = 0,
    model: str = "sequence",
    t: float = 0.0,
) -> BnFailureCurve:
    """Empirical probability that ``max_j |V_j| > c sqrt(log n / n)`` for each ``n``.

    Only the noise enters, so the signal is zero; ``t`` only matters through
    the operator used to build grid-model data.
    """
    if reps < 100:
        raise ValueError("bn_failure_curve needs at least 100 replications per n")
    if not c > 0:
        raise ValueError("c must be positive")
    probs = []
    for n in n_grid:
        op = build_polynomial_operator(t, n)
        level = c * math.sqrt(math.log(n) / n)
        zero = np.zeros(n)
        fails = 0
        for i in range(reps):
            rng = replication_rng(seed, n, i)
            obs = generate_observations(op, zero, noise, model, rng=rng)
            fails += obs.max_abs_noise > level
        probs.append(fails / reps)
    return BnFailureCurve(
        n_grid=tuple(int(n) for n in n_grid),
        failure_prob=tuple(probs),
        reps=reps,
        tail_bound=tuple(bn_tail_bound(n, c) for n in n_grid),
    )


def median_errors(records, estimator_tag: str) -> float:
    errs = [r.error_sq for r in records if r.estimator_tag == estimator_tag]
    if not errs:
        raise ValueError(f"no records for estimator {estimator_tag!r}")
    return float(np.median(errs))
