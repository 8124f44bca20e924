"""Small dense linear-algebra helpers shared across the package."""

import numpy as np

# Safety factor on top of the eps-based singular-value cutoff.
RANK_SAFETY = 100.0


def numerical_rank(mat: np.ndarray, safety: float = RANK_SAFETY) -> int:
    """Rank via singular values, cutoff sigma_max * max(shape) * eps * safety."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0
    cutoff = s[0] * max(mat.shape) * np.finfo(float).eps * safety
    return int(np.count_nonzero(s > cutoff))


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def eigmax_sym(mat: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(mat))[-1])


def eigmin_sym(mat: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(mat))[0])


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (negative eigenvalues clipped)."""
    w, v = np.linalg.eigh(symmetrize(mat))
    w = np.clip(w, 0.0, None)
    return symmetrize(v @ np.diag(np.sqrt(w)) @ v.T)


def inv_pd(mat: np.ndarray, cond_limit: float = 1e10) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix.

    Raises ``np.linalg.LinAlgError`` when the matrix is not positive definite
    or its condition number exceeds ``cond_limit``.
    """
    w, v = np.linalg.eigh(symmetrize(mat))
    if w[0] <= 0.0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    cond = w[-1] / w[0]
    if cond > cond_limit:
        raise np.linalg.LinAlgError(
            f"condition number {cond:.3e} exceeds limit {cond_limit:.0e}")
    return symmetrize(v @ np.diag(1.0 / w) @ v.T)


def spectral_radius(mat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(mat, dtype=float)))))
