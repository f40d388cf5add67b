"""Linear operators represented through their singular system on a fixed design.

An operator ``F`` is stored as the triple ``(lambda_j; phi_j, psi_j)`` for
``j = 1..n`` where ``n`` is the number of design points.  Signals in the data
space (``GridSignal``) are plain length-``n`` arrays of samples on the design;
signals in the parameter space (``CoefficientVector``) are length-``n`` arrays
of coordinates in the ``psi`` basis.

The built-in operator uses the discrete cosine system on the midpoint grid,
which is exactly orthonormal for the empirical inner product, so analysis and
synthesis reduce to an orthonormal DCT-II / DCT-III pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import fft

__all__ = [
    "RANK_TOLERANCE",
    "OperatorError",
    "RankDeficiencyError",
    "DesignGrid",
    "SpectralOperator",
    "build_polynomial_operator",
    "build_table_operator",
    "cosine_basis_matrix",
    "empirical_inner",
    "empirical_norm_sq",
    "analyze",
    "synthesize",
    "synthesize_psi",
    "forward",
    "adjoint",
    "pseudo_inverse",
    "operator_from_record",
    "require_full_rank",
]

RANK_TOLERANCE = 1e-300
ORTHONORMALITY_TOL = 1e-12


class OperatorError(ValueError):
    """Invalid operator construction or a signal that does not fit the operator."""


class RankDeficiencyError(OperatorError):
    """An eigenvalue is below the rank tolerance, so inversion is refused."""


@dataclass(frozen=True)
class DesignGrid:
    """Midpoint design ``t_i = (2i - 1) / (2n)``, ``i = 1..n``."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise OperatorError(f"grid size must be a positive integer, got {self.n!r}")

    @property
    def points(self) -> np.ndarray:
        return (2.0 * np.arange(1, self.n + 1) - 1.0) / (2.0 * self.n)


def cosine_basis_matrix(n: int) -> np.ndarray:
    """Explicit ``n x n`` matrix whose column ``j-1`` holds ``phi_j`` on the grid.

    ``phi_1 = 1`` and ``phi_j(u) = sqrt(2) cos(pi (j-1) u)``.  Only meant for
    small ``n`` (tests, explicit tables); the operator itself uses the DCT.
    """
    t = DesignGrid(n).points
    k = np.arange(n)
    basis = np.sqrt(2.0) * np.cos(np.pi * np.outer(t, k))
    basis[:, 0] = 1.0
    return basis


def _as_vector(values, n: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise OperatorError(f"{what} must have length {n}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Singular system of a linear operator truncated at the design size.

    Parameters
    ----------
    eigenvalues : ndarray
        Singular values ``lambda_j > 0``, non-increasing.
    kind : {"cosine", "explicit_table"}
        Basis realization.  ``cosine`` is self-adjoint (``phi = psi``).
    illposedness_index : float or None
        ``t`` for the polynomial family ``lambda_j = j**-t``; ``None`` for tables.
    phi, psi : ndarray or None
        Basis values on the grid, shape ``(n, n)``, one column per index.  Only
        used for ``explicit_table``; ``psi`` defaults to ``phi``.
    """

    eigenvalues: np.ndarray
    kind: str = "cosine"
    illposedness_index: float | None = None
    phi: np.ndarray | None = field(default=None, repr=False)
    psi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise OperatorError("eigenvalues must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise OperatorError("eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lam) > 0):
            raise OperatorError("eigenvalues must be non-increasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

        if self.kind == "cosine":
            if self.phi is not None or self.psi is not None:
                raise OperatorError("cosine operators do not take basis tables")
        elif self.kind == "explicit_table":
            n = lam.size
            phi = _check_table(self.phi, n, "phi")
            psi = phi if self.psi is None else _check_table(self.psi, n, "psi")
            object.__setattr__(self, "phi", phi)
            object.__setattr__(self, "psi", psi)
        else:
            raise OperatorError(f"unknown basis kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def grid(self) -> DesignGrid:
        return DesignGrid(self.n)

    def to_record(self) -> dict[str, Any]:
        """Structured record ``{kind, t, n}`` for experiment manifests."""
        return {"kind": self.kind, "t": self.illposedness_index, "n": self.n}

    def phi_matrix(self) -> np.ndarray:
        if self.kind == "cosine":
            return cosine_basis_matrix(self.n)
        return self.phi

    def __eq__(self, other):
        if not isinstance(other, SpectralOperator):
            return NotImplemented
        if self.kind != other.kind or self.illposedness_index != other.illposedness_index:
            return False
        if self.n != other.n or not np.array_equal(self.eigenvalues, other.eigenvalues):
            return False
        if self.kind == "explicit_table":
            return np.array_equal(self.phi, other.phi) and np.array_equal(self.psi, other.psi)
        return True

    __hash__ = None


def _check_table(table, n: int, name: str) -> np.ndarray:
    if table is None:
        raise OperatorError(f"explicit_table operators need a {name} table")
    arr = np.array(table, dtype=float)
    if arr.shape != (n, n):
        raise OperatorError(f"{name} table must have shape {(n, n)}, got {arr.shape}")
    gram = arr.T @ arr / n
    err = np.max(np.abs(gram - np.eye(n)))
    if err > ORTHONORMALITY_TOL:
        raise OperatorError(
            f"{name} columns are not orthonormal for the empirical inner product "
            f"(max deviation {err:.3e})"
        )
    arr.setflags(write=False)
    return arr


def build_polynomial_operator(t: float, n: int) -> SpectralOperator:
    """Cosine-basis operator with ``lambda_j = j**(-t)``.

    >>> build_polynomial_operator(1.0, 3).eigenvalues
    array([1.        , 0.5       , 0.33333333])
    """
    if not np.isfinite(t) or t < 0:
        raise OperatorError(f"index of ill-posedness must be >= 0, got {t!r}")
    if int(n) != n or n < 1:
        raise OperatorError(f"n must be a positive integer, got {n!r}")
    j = np.arange(1, int(n) + 1, dtype=float)
    return SpectralOperator(eigenvalues=j ** (-float(t)), kind="cosine", illposedness_index=float(t))


def build_table_operator(eigenvalues, phi, psi=None) -> SpectralOperator:
    return SpectralOperator(eigenvalues=eigenvalues, kind="explicit_table", phi=phi, psi=psi)


def operator_from_record(record: dict[str, Any]) -> SpectralOperator:
    if record.get("kind") != "cosine":
        raise OperatorError("only cosine operators can be rebuilt from a {kind, t, n} record")
    return build_polynomial_operator(record["t"], record["n"])


def empirical_inner(a, b) -> float:
    """``<a, b>_n = (1/n) sum_i a(t_i) b(t_i)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise OperatorError(f"signals must be 1-D with equal length, got {a.shape} and {b.shape}")
    return float(np.dot(a, b) / a.size)


def empirical_norm_sq(a) -> float:
    return empirical_inner(a, a)


def analyze(op: SpectralOperator, y) -> np.ndarray:
    """Spectral coefficients ``w_j = <y, phi_j>_n`` of a grid signal."""
    y = _as_vector(y, op.n, "grid signal")
    if op.kind == "cosine":
        return fft.dct(y, type=2, norm="ortho") / np.sqrt(op.n)
    return op.phi.T @ y / op.n


def synthesize(op: SpectralOperator, w) -> np.ndarray:
    """Grid signal ``sum_j w_j phi_j``; inverse of :func:`analyze`."""
    w = _as_vector(w, op.n, "spectral coefficients")
    if op.kind == "cosine":
        return fft.idct(w, type=2, norm="ortho") * np.sqrt(op.n)
    return op.phi @ w


def synthesize_psi(op: SpectralOperator, x) -> np.ndarray:
    """Evaluate ``sum_j x_j psi_j`` on the grid (parameter-space signal)."""
    x = _as_vector(x, op.n, "coefficient vector")
    if op.kind == "cosine":
        return synthesize(op, x)
    return op.psi @ x


def forward(op: SpectralOperator, x) -> np.ndarray:
    """``F x = sum_j lambda_j x_j phi_j`` sampled on the grid."""
    x = _as_vector(x, op.n, "coefficient vector")
    return synthesize(op, op.eigenvalues * x)


def adjoint(op: SpectralOperator, y) -> np.ndarray:
    """Coefficients of ``F* y``: ``lambda_j <y, phi_j>_n``."""
    return op.eigenvalues * analyze(op, y)


def pseudo_inverse(op: SpectralOperator, y) -> np.ndarray:
    """Moore-Penrose reconstruction ``x_j = <y, phi_j>_n / lambda_j``.

    Raises
    ------
    RankDeficiencyError
        If any eigenvalue is below ``RANK_TOLERANCE``.
    """
    require_full_rank(op)
    return analyze(op, y) / op.eigenvalues


def require_full_rank(op: SpectralOperator) -> None:
    small = np.flatnonzero(op.eigenvalues < RANK_TOLERANCE)
    if small.size:
        raise RankDeficiencyError(
            f"eigenvalue lambda_{small[0] + 1} = {op.eigenvalues[small[0]]:.3e} is below "
            f"the rank tolerance {RANK_TOLERANCE:g}"
        )
