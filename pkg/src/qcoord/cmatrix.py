"""Dense complex-matrix kernel for small Hermitian problems.

Everything here operates on plain ``numpy`` arrays of dtype complex128.
Functions accept stacks of matrices (leading batch axes) wherever the
underlying numpy primitive supports it; the contracts below are stated
per matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-12
PD_FLOOR = 1e-12
EXP_SATURATION = 700.0


class IllConditionedError(ValueError):
    """Inverse square root requested for a matrix that is numerically singular."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(
            f"matrix is not positive definite within tolerance "
            f"(min eigenvalue {min_eigenvalue:.3e} <= {PD_FLOOR:.0e})"
        )
        self.min_eigenvalue = min_eigenvalue


class SaturationError(FloatingPointError):
    """Matrix exponential would overflow double precision."""

    def __init__(self, max_eigenvalue: float):
        super().__init__(
            f"expm saturated: max eigenvalue {max_eigenvalue:.3e} > {EXP_SATURATION:.0f}"
        )
        self.max_eigenvalue = max_eigenvalue


@dataclass(frozen=True)
class HermEig:
    """Eigendecomposition of a Hermitian matrix: ascending ``eigenvalues``,
    unitary ``eigenvectors`` (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues[..., None, :]) @ u.conj().swapaxes(-1, -2)


def _as_square(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.ndim < 2 or z.shape[-1] != z.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {z.shape}")
    if not np.all(np.isfinite(z.view(np.float64))):
        raise ValueError("matrix entries must be finite")
    return z


def hermitian_part(z: np.ndarray) -> np.ndarray:
    """Return (Z + Z^H) / 2."""
    z = _as_square(z)
    return (z + z.conj().swapaxes(-1, -2)) / 2


def eig_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> HermEig:
    """Eigendecompose a Hermitian matrix (ascending eigenvalues).

    Rejects inputs whose anti-Hermitian part exceeds ``tol`` relative to the
    matrix scale; symmetrize with :func:`hermitian_part` first if needed.
    """
    a = _as_square(a)
    scale = max(float(np.max(np.abs(a))), 1.0)
    skew = np.max(np.abs(a - a.conj().swapaxes(-1, -2)))
    if skew > 2 * tol * scale:
        raise ValueError(f"matrix is not Hermitian within tolerance ({skew:.3e})")
    w, u = np.linalg.eigh(a)
    return HermEig(eigenvalues=w, eigenvectors=u)


def _apply_spectral(a: np.ndarray, fn) -> np.ndarray:
    e = eig_hermitian(a)
    fw = fn(e.eigenvalues)
    u = e.eigenvectors
    out = (u * fw[..., None, :]) @ u.conj().swapaxes(-1, -2)
    return hermitian_part(out)


def expm_hermitian(a: np.ndarray) -> np.ndarray:
    """exp(A) for Hermitian A via eigendecomposition; result is Hermitian PD."""
    a = _as_square(a)
    e = eig_hermitian(a)
    wmax = float(np.max(e.eigenvalues))
    if wmax > EXP_SATURATION:
        raise SaturationError(wmax)
    return _apply_spectral(a, np.exp)


def inv_sqrt_psd(a: np.ndarray) -> np.ndarray:
    """A^(-1/2) for Hermitian positive definite A.

    Raises :class:`IllConditionedError` when any eigenvalue falls at or below
    the positive-definiteness floor.
    """
    a = _as_square(a)
    e = eig_hermitian(a)
    wmin = float(np.min(e.eigenvalues))
    if wmin <= PD_FLOOR:
        raise IllConditionedError(wmin)
    return _apply_spectral(a, lambda w: 1.0 / np.sqrt(w))


def logm_pd(a: np.ndarray) -> np.ndarray:
    """log(A) for Hermitian positive definite A (inverse of expm_hermitian)."""
    a = _as_square(a)
    e = eig_hermitian(a)
    wmin = float(np.min(e.eigenvalues))
    if wmin <= PD_FLOOR:
        raise IllConditionedError(wmin)
    return _apply_spectral(a, np.log)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two square complex matrices."""
    return np.kron(_as_square(a), _as_square(b))


def kron_all(mats) -> np.ndarray:
    """Kronecker product of a sequence of square matrices, left to right."""
    mats = list(mats)
    if not mats:
        raise ValueError("need at least one matrix")
    out = _as_square(mats[0])
    for m in mats[1:]:
        out = np.kron(out, _as_square(m))
    return out


def trace_inner(a: np.ndarray, b: np.ndarray, imag_tol: float = 1e-12) -> float:
    """Re tr(A B) for a Hermitian PSD state/effect pair of equal dimension.

    The imaginary part of tr(A B) must vanish within ``imag_tol`` (relative to
    the trace magnitude); a larger residual indicates a broken invariant
    upstream.
    """
    a = _as_square(a)
    b = _as_square(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    t = np.trace(a @ b)
    scale = max(abs(t), 1.0)
    if abs(t.imag) > imag_tol * scale:
        raise ValueError(f"trace has non-negligible imaginary part {t.imag:.3e}")
    return float(t.real)
