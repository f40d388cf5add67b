"""Ground-truth signals, noisy observations and seeded replication batches.

Randomness comes only from ``numpy.random.Generator(PCG64)`` streams derived
from a single integer seed through ``SeedSequence``; replication ``i`` of a
batch uses the stream seeded with ``(seed, i)`` so batches are reproducible
and individual replications can be regenerated on their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import optimize, special

from . import estimators as est
from .svd_operator import (
    OperatorError,
    SpectralOperator,
    analyze,
    build_polynomial_operator,
    empirical_norm_sq,
    forward,
)

__all__ = [
    "RNG_NAME",
    "ESTIMATOR_TAGS",
    "NoiseModel",
    "ObservationSet",
    "ReplicationRecord",
    "replication_rng",
    "calibrated_p",
    "rho_sparse_member",
    "target_sine",
    "besov_member",
    "sigma_from_snr",
    "generate_observations",
    "replication_seed",
    "run_estimator",
    "run_replications",
    "read_coefficients",
    "write_coefficients",
]

RNG_NAME = "numpy.random.PCG64"
ESTIMATOR_TAGS = ("adapted", "lse_closed", "lse_ista", "pseudo_inverse")
NOISE_KINDS = ("gaussian", "bounded_uniform")
OBSERVATION_MODELS = ("sequence", "grid")


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. observation noise with standard deviation ``sigma``.

    ``bounded_uniform`` is uniform on ``[-sigma sqrt(3), sigma sqrt(3)]``.
    """

    kind: str = "gaussian"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and non-negative, got {self.sigma!r}")

    def standard_draws(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Unit-variance draws of this noise family."""
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)

    def orlicz_moment(self, K: float) -> float:
        """``E exp(eps**2 / K**2)`` for one error (``inf`` when it diverges)."""
        s = float(self.sigma)
        if s == 0:
            return 1.0
        if self.kind == "gaussian":
            r = 2.0 * s**2 / K**2
            return math.inf if r >= 1 else 1.0 / math.sqrt(1.0 - r)
        a = s * math.sqrt(3.0)
        # (1/a) int_0^a exp(u^2/K^2) du
        return float(K * math.sqrt(math.pi) / (2.0 * a) * special.erfi(a / K))

    @cached_property
    def subgaussian_constant(self) -> float:
        """Smallest ``K`` with ``E exp(eps**2 / K**2) <= K``."""
        if self.sigma == 0:
            return 1.0

        def gap(K):
            return self.orlicz_moment(K) - K

        lo = max(1.0, math.sqrt(2.0) * self.sigma) if self.kind == "gaussian" else 1.0
        lo *= 1.0 + 1e-12
        if gap(lo) <= 0:
            return lo
        hi = 2.0 * lo
        while gap(hi) > 0:
            hi *= 2.0
        return float(optimize.brentq(gap, lo, hi, xtol=1e-12, rtol=1e-12))


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Noisy data for one draw.

    ``coefficients`` are the spectral data ``w_j``; ``noise_coefficients`` the
    noise part ``V_j`` alone.  ``samples`` holds ``y(t_i)`` in the grid model
    and is ``None`` in the sequence model.
    """

    model: str
    coefficients: np.ndarray
    noise_coefficients: np.ndarray
    sigma: float
    seed: int | tuple
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def max_abs_noise(self) -> float:
        return float(np.max(np.abs(self.noise_coefficients)))


@dataclass(frozen=True, eq=False)
class ReplicationRecord:
    replication: int
    estimator_tag: str
    error_sq: float
    oracle_error_sq: float
    bn_holds: bool
    max_abs_V: float
    active_set_size: int
    converged: bool = True
    estimate: np.ndarray | None = field(default=None, repr=False)

    def to_row(self) -> dict:
        return {
            "replication": self.replication,
            "estimator": self.estimator_tag,
            "error_sq": self.error_sq,
            "oracle_error_sq": self.oracle_error_sq,
            "bn_holds": int(self.bn_holds),
            "max_abs_V": self.max_abs_V,
            "active_set_size": self.active_set_size,
        }


def sine_samples(points) -> np.ndarray:
    return np.sin(1.0 / (0.1 + np.asarray(points, dtype=float)))


def target_sine(n: int, op: SpectralOperator | None = None) -> np.ndarray:
    """Coefficients of ``t -> sin(1 / (0.1 + t))`` sampled on the midpoint grid."""
    op = build_polynomial_operator(0.0, n) if op is None else op
    if op.n != n:
        raise OperatorError(f"operator size {op.n} does not match n={n}")
    samples = sine_samples(op.grid.points)
    if op.kind != "cosine":
        return op.psi.T @ samples / n
    return analyze(op, samples)


def calibrated_p(s: float, t: float) -> float:
    """Moment parameter with ``1/p = 1/2 + s/(2t + 1)``."""
    if not s > 0:
        raise ValueError(f"smoothness s must be positive, got {s!r}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    return 1.0 / (0.5 + s / (2.0 * t + 1.0))


def besov_member(s: float, t: float, n: int, n_ref: int | None = None) -> np.ndarray:
    """Power-law member ``x_j = A j**-(s + 1/2)`` of the unit Besov body.

    ``A`` is the largest scale keeping ``sum_j j**(p(s + 1/2 - 1/p)) |x_j|**p <= 1``
    over ``j <= n_ref`` (default ``n``), with ``p`` from :func:`calibrated_p`.
    Passing ``n_ref > n`` returns the first ``n`` coefficients of one fixed
    sequence, which is what a convergence-rate study across ``n`` needs.
    """
    p = calibrated_p(s, t)
    n_ref = n if n_ref is None else n_ref
    if n_ref < n:
        raise ValueError("n_ref must be >= n")
    j = np.arange(1, n_ref + 1, dtype=float)
    shape = j ** (-(s + 0.5))
    weight = j ** (p * (s + 0.5 - 1.0 / p))
    total = float(np.sum(weight * shape**p))
    return total ** (-1.0 / p) * shape[:n]


def rho_sparse_member(rho: float, n: int, n_ref: int | None = None) -> np.ndarray:
    """Boundary element ``x_j = A j**(-1/rho)`` of the unit ``l^rho`` ball.

    Normalized so that ``sum_{j <= n_ref} |x_j|**rho == 1``.
    """
    if not 0 < rho < 2:
        raise ValueError(f"rho must lie in (0, 2), got {rho!r}")
    n_ref = n if n_ref is None else n_ref
    if n_ref < n:
        raise ValueError("n_ref must be >= n")
    j = np.arange(1, n_ref + 1, dtype=float)
    shape = j ** (-1.0 / rho)
    return float(np.sum(shape**rho)) ** (-1.0 / rho) * shape[:n]


def sigma_from_snr(op: SpectralOperator, x0, snr: float) -> float:
    """Noise level with ``||F x0||_n / sigma == snr``."""
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr!r}")
    signal = math.sqrt(empirical_norm_sq(forward(op, x0)))
    if signal == 0:
        raise ValueError("snr is undefined for a zero signal")
    return signal / snr


def replication_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    """Seed sequence for the stream labelled ``(seed, *keys)``."""
    return np.random.SeedSequence((int(seed),) + tuple(int(k) for k in keys))


def replication_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(replication_seed(seed, *keys)))


def generate_observations(
    op: SpectralOperator,
    x0,
    noise: NoiseModel,
    model: str = "sequence",
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> ObservationSet:
    """Draw one noisy observation of ``F x0``.

    Sequence model: ``w_j = lambda_j x0_j + sigma / sqrt(n) * xi_j``.
    Grid model: ``y_i = (F x0)(t_i) + eps_i`` and ``w = analyze(y)``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (op.n,):
        raise OperatorError(f"signal must have length {op.n}, got shape {x0.shape}")
    if model not in OBSERVATION_MODELS:
        raise ValueError(f"unknown observation model {model!r}")
    rng = replication_rng(seed) if rng is None else rng
    draws = noise.standard_draws(rng, op.n)
    clean = op.eigenvalues * x0
    if model == "sequence":
        v = noise.sigma / math.sqrt(op.n) * draws
        return ObservationSet(model, clean + v, v, noise.sigma, seed)
    eps = noise.sigma * draws
    y = forward(op, x0) + eps
    v = analyze(op, eps)
    return ObservationSet(model, analyze(op, y), v, noise.sigma, seed, samples=y)


def run_estimator(tag: str, op, w, sched, ista_options) -> est.EstimationResult:
    if tag == "adapted":
        return est.adapted_l1_estimate(op, w, sched)
    if tag == "lse_closed":
        return est.lse_l1_closed_form(op, w, sched)
    if tag == "lse_ista":
        return est.lse_l1_ista(op, w, sched, **(ista_options or {}))
    if tag == "pseudo_inverse":
        return est.pseudo_inverse_estimate(op, w)
    raise ValueError(f"unknown estimator tag {tag!r}; expected one of {ESTIMATOR_TAGS}")


def run_replications(
    op: SpectralOperator,
    x0,
    noise: NoiseModel,
    estimators,
    c: float,
    reps: int,
    seed: int = 0,
    model: str = "sequence",
    keep_estimates: bool = False,
    ista_options: dict | None = None,
) -> list[ReplicationRecord]:
    """Run ``reps`` independent replications for each requested estimator.

    Records are ordered by replication, then by the order of ``estimators``.
    Errors are squared empirical norms computed from coefficients (Parseval).
    """
    estimators = list(estimators)
    unknown = [tag for tag in estimators if tag not in ESTIMATOR_TAGS]
    if unknown:
        raise ValueError(f"unknown estimator tag(s) {unknown}; expected from {ESTIMATOR_TAGS}")
    if int(reps) != reps or reps < 1:
        raise ValueError(f"reps must be a positive integer, got {reps!r}")
    x0 = np.asarray(x0, dtype=float)
    sched = est.threshold_schedule(op, c)
    oracle_err = float(np.sum((est.hard_threshold_oracle(x0, sched) - x0) ** 2))
    level = sched.noise_level

    records = []
    for i in range(reps):
        obs = generate_observations(op, x0, noise, model, rng=replication_rng(seed, i), seed=(seed, i))
        max_v = obs.max_abs_noise
        for tag in estimators:
            res = run_estimator(tag, op, obs.coefficients, sched, ista_options)
            records.append(
                ReplicationRecord(
                    replication=i,
                    estimator_tag=tag,
                    error_sq=float(np.sum((res.estimate - x0) ** 2)),
                    oracle_error_sq=oracle_err,
                    bn_holds=bool(max_v <= level),
                    max_abs_V=max_v,
                    active_set_size=int(res.active_set.size),
                    converged=res.converged,
                    estimate=res.estimate if keep_estimates else None,
                )
            )
    return records


def read_coefficients(path) -> np.ndarray:
    """Read a two-column ``index,value`` file (``#`` comments, optional header).

    Indices must be ``1..n`` in order.
    """
    idx, vals = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.replace(",", " ").split()]
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns (index, value)")
            try:
                j, v = int(parts[0]), float(parts[1])
            except ValueError:
                if not idx:  # header row
                    continue
                raise ValueError(f"{path}:{lineno}: could not parse {line!r}") from None
            idx.append(j)
            vals.append(v)
    if not idx:
        raise ValueError(f"{path}: no coefficients found")
    if idx != list(range(1, len(idx) + 1)):
        raise ValueError(f"{path}: indices must run 1..n in order")
    return np.asarray(vals, dtype=float)


def write_coefficients(path, x, header_lines=()) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("index,value\n")
        for j, v in enumerate(np.asarray(x, dtype=float), 1):
            fh.write(f"{j},{float(v)!r}\n")
