"""Dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` complex arrays.  Vectorization is row-major,
``|X>> = sum_ij x_ij |ij>>``, so that the superoperator ``A (.) B`` is the
matrix ``kron(A, B.T)`` and ``<<Y|X>> = Tr(Y^dag X)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    NearDefectiveError,
    NotHermitianError,
    NotSquareError,
    OverflowRiskError,
)


@dataclass
class Tolerances:
    hermitian: float = 1e-10
    defective_condition: float = 1e8


TOL = Tolerances()


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues with right vectors (columns) and biorthonormal left vectors.

    ``left[:, i].conj() @ right[:, j] == delta_ij``.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.eigenvalues) @ self.left.conj().T


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise NotSquareError(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def _require_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSquareError(f"expected a square matrix, got shape {m.shape}")


def _require_finite(m: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise OverflowRiskError(f"{what} produced non-finite entries")
    return m


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def dagger(a) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a: np.ndarray) -> np.ndarray:
    """Symmetrized copy; removes round-off anti-Hermitian parts."""
    return 0.5 * (a + dagger(a))


def vectorize(rho) -> np.ndarray:
    m = np.asarray(rho, dtype=complex)
    _require_square(m)
    return m.reshape(-1).copy()


def devectorize(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise NotSquareError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(d, d).copy()


def hs_inner(y, x) -> complex:
    """Hilbert-Schmidt inner product ``<<Y|X>> = Tr(Y^dag X)``."""
    return complex(np.vdot(np.asarray(y).reshape(-1), np.asarray(x).reshape(-1)))


def is_hermitian(h: np.ndarray, tol: float | None = None) -> bool:
    tol = TOL.hermitian if tol is None else tol
    scale = max(np.linalg.norm(h, 2), 1.0)
    return bool(np.linalg.norm(h - h.conj().T, 2) <= tol * scale)


def eig_hermitian(h, tol: float | None = None) -> EigenDecomposition:
    """Ascending real eigenvalues and an orthonormal eigenbasis."""
    m = as_matrix(h)
    _require_square(m)
    if not is_hermitian(m, tol):
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    try:
        w, v = np.linalg.eigh(hermitize(m))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(str(exc)) from exc
    return EigenDecomposition(w.astype(float), v, v)


def eig_general(m, condition_cap: float | None = None) -> EigenDecomposition:
    """Diagonalize a general square matrix.

    LAPACK ``geev`` performs the Hessenberg reduction and shifted QR sweeps.
    Left vectors are the rows of ``R^{-1}`` (conjugated), which makes the pair
    biorthonormal by construction.  A matrix whose eigenvector basis has a
    condition number above ``condition_cap`` is rejected as near-defective.
    """
    a = as_matrix(m)
    _require_square(a)
    cap = TOL.defective_condition if condition_cap is None else condition_cap
    if a.shape[0] == 0:
        empty = np.zeros((0, 0), complex)
        return EigenDecomposition(np.zeros(0, complex), empty, empty)
    try:
        w, r = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(str(exc)) from exc
    r = r / np.linalg.norm(r, axis=0)
    cond = np.linalg.cond(r)
    if not np.isfinite(cond) or cond > cap:
        raise NearDefectiveError(f"eigenvector condition number {cond:.3g} exceeds {cap:.3g}")
    left = np.linalg.inv(r).conj().T
    return EigenDecomposition(w, r, left)


def expm_hermitian_propagator(h, t: float) -> np.ndarray:
    """``exp(-i h t)`` from the spectral decomposition of Hermitian ``h``."""
    dec = eig_hermitian(h)
    phases = np.exp(-1j * dec.eigenvalues * t)
    return (dec.right * phases) @ dec.right.conj().T


def expm_general(m) -> np.ndarray:
    """Matrix exponential (degree-13 Pade with scaling and squaring)."""
    a = as_matrix(m)
    _require_square(a)
    _require_finite(a, "input")
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(a)
    return _require_finite(out, "expm_general")
