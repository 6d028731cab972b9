"""Small dense linear-algebra helpers shared by the CV and DV code."""

import numpy as np

from .errors import UnphysicalStateError

CLAMP_TOL = 1e-10


def psd_eigh(mat, tol=CLAMP_TOL):
    """Eigendecomposition of a Hermitian PSD matrix with tiny negatives clamped.

    Eigenvalues between ``-tol`` and 0 are set to 0; anything more negative
    is an error.
    """
    mat = 0.5 * (mat + mat.conj().T)
    w, v = np.linalg.eigh(mat)
    if w.min() < -tol:
        raise UnphysicalStateError(f"matrix has eigenvalue {w.min():.3e} < -{tol}")
    return np.clip(w, 0.0, None), v


def psd_sqrt(mat, tol=CLAMP_TOL):
    w, v = psd_eigh(mat, tol)
    return (v * np.sqrt(w)) @ v.conj().T


def uhlmann_fidelity_matrix(rho1, rho2, tol=CLAMP_TOL):
    """Squared-trace Uhlmann fidelity of two density matrices of any dimension."""
    s1 = psd_sqrt(rho1, tol)
    inner = s1 @ rho2 @ s1
    # scale-aware clamp: inner inherits rounding from the product
    w, _ = psd_eigh(inner, tol=max(tol, 1e-12 * np.abs(inner).max()))
    f = float(np.sum(np.sqrt(w)) ** 2)
    return min(max(f, 0.0), 1.0)


def trace_distance(rho1, rho2):
    """Half the trace norm of the difference."""
    w = np.linalg.eigvalsh(0.5 * ((rho1 - rho2) + (rho1 - rho2).conj().T))
    return 0.5 * float(np.sum(np.abs(w)))


def von_neumann_entropy(rho):
    """Entropy in bits with the convention 0 log 0 = 0."""
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log2(w)))
