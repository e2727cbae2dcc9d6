"""Dense symmetric-matrix helpers used throughout the package."""

import numpy as np
import scipy.linalg as sla


def sym(a):
    """Symmetric part of a square matrix."""
    return 0.5 * (a + a.T)


def max_abs(a):
    """Largest absolute entry; 0 for empty input."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a)))


def spectral_radius(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def min_eig_sym(a):
    """Smallest eigenvalue of the symmetric part."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(sym(a))[0])


def psd_project(a, floor=0.0):
    """Nearest (in Frobenius norm) symmetric matrix with eigenvalues >= floor."""
    w, u = np.linalg.eigh(sym(np.asarray(a, dtype=float)))
    w = np.maximum(w, floor)
    return sym((u * w) @ u.T)


def psd_sqrt_factor(a):
    """A factor B with B @ B.T equal to the PSD input.

    Tiny negative eigenvalues (numerical ripple) are clipped to zero.
    """
    w, u = np.linalg.eigh(sym(np.asarray(a, dtype=float)))
    w = np.clip(w, 0.0, None)
    return u * np.sqrt(w)


def psd_pinv(a, rel_tol=1e-9, abs_tol=0.0):
    """Pseudoinverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues at or below max(rel_tol * lam_max, abs_tol) are treated as
    exact zeros.  Returns (pinv, rank).
    """
    a = sym(np.asarray(a, dtype=float))
    w, u = np.linalg.eigh(a)
    lam_max = float(np.max(w, initial=0.0))
    cut = max(rel_tol * lam_max, abs_tol)
    keep = w > cut
    winv = np.zeros_like(w)
    winv[keep] = 1.0 / w[keep]
    return sym((u * winv) @ u.T), int(np.count_nonzero(keep))


def solve_pd(a, b):
    """Solve a x = b for symmetric positive definite a."""
    c = sla.cho_factor(sym(np.asarray(a, dtype=float)), lower=True,
                       check_finite=False)
    return sla.cho_solve(c, b, check_finite=False)


def try_cholesky(a):
    """Lower Cholesky factor, or None if the matrix is not positive definite."""
    try:
        return sla.cholesky(a, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return None


def chol_logdet(chol_lower):
    """log det of the matrix whose lower Cholesky factor is given."""
    return 2.0 * float(np.sum(np.log(np.diag(chol_lower))))


def logdet_pd(a):
    """log det of a symmetric positive definite matrix; None if not PD."""
    c = try_cholesky(sym(np.asarray(a, dtype=float)))
    if c is None:
        return None
    return chol_logdet(c)


def frozen(a):
    """A float copy with the writeable flag cleared."""
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out
