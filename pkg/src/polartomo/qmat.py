"""Small dense complex linear algebra for 2x2 and 4x4 Hermitian work.

Matrices are plain ``numpy`` complex128 arrays. The Hermitian eigensolver is a
cyclic complex Jacobi iteration, which is exact enough and fully deterministic
at these sizes.
"""

from typing import NamedTuple

import numpy as np

from .errors import BadDim, NotHermitian, NotPSD

HERMITIAN_TOL = 1e-9
PSD_CLAMP = 1e-10

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (I2, SX, SY, SZ)


class HermitianEigenDecomposition(NamedTuple):
    """Eigenvalues in descending order; ``eigenvectors[:, k]`` pairs with ``eigenvalues[k]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m):
    """Coerce ``m`` to a square, finite complex128 array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise BadDim(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def dag(m):
    return np.conj(np.transpose(m))


def hermiticity_error(m):
    return float(np.max(np.abs(m - dag(m))))


def frobenius(m):
    return float(np.linalg.norm(m))


def tensor(a, b):
    """Kronecker product with the first factor as the most significant index.

    For two qubits the basis order is HH, HV, VH, VV.
    """
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(*ms):
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def _jacobi_rotate(a, v, p, q):
    b = a[p, q]
    mag = abs(b)
    phase = b / mag
    theta = 0.5 * np.arctan2(2.0 * mag, (a[p, p] - a[q, q]).real)
    c, s = np.cos(theta), np.sin(theta)
    # G = diag(1, conj(phase)) @ [[c, -s], [s, c]]
    g = np.array([[c, -s], [s * np.conj(phase), c * np.conj(phase)]])
    idx = [p, q]
    a[:, idx] = a[:, idx] @ g
    a[idx, :] = dag(g) @ a[idx, :]
    a[p, q] = a[q, p] = 0.0
    v[:, idx] = v[:, idx] @ g


def _fix_phase(vec):
    mags = np.abs(vec)
    k = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    return vec * (np.conj(vec[k]) / mags[k])


def eig_hermitian(m, tol=HERMITIAN_TOL):
    """Full spectral decomposition of a Hermitian matrix.

    Eigenvalues come back in descending order. Each eigenvector is scaled so
    its largest-magnitude component (first one on ties) is real and positive.

    Raises
    ------
    NotHermitian
        If ``max |m - m^dagger| > tol``.
    """
    a = as_matrix(m)
    if hermiticity_error(a) > tol:
        raise NotHermitian(f"matrix deviates from Hermitian by {hermiticity_error(a):.3g}")
    n = a.shape[0]
    a = 0.5 * (a + dag(a))
    v = np.eye(n, dtype=complex)
    scale = max(frobenius(a), 1e-300)
    for _ in range(100):
        off = np.sqrt(np.sum(np.abs(a - np.diag(np.diag(a))) ** 2))
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > 1e-300:
                    _jacobi_rotate(a, v, p, q)
    w = np.diag(a).real.copy()
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]
    for k in range(n):
        v[:, k] = _fix_phase(v[:, k])
    return HermitianEigenDecomposition(w, v)


def eigvalsh(m, tol=HERMITIAN_TOL):
    return eig_hermitian(m, tol).eigenvalues


def mat_sqrt_psd(m, clamp=PSD_CLAMP):
    """Hermitian PSD square root; eigenvalues in ``[-clamp, 0)`` are treated as zero."""
    w, v = eig_hermitian(m)
    if w[-1] < -clamp:
        raise NotPSD(f"smallest eigenvalue {w[-1]:.3g} is below -{clamp:g}")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root) @ dag(v)


def psd_project(m):
    """Clamp negative eigenvalues of a Hermitian matrix to zero."""
    w, v = eig_hermitian(0.5 * (m + dag(m)), tol=np.inf)
    return (v * np.clip(w, 0.0, None)) @ dag(v)


def partial_trace(m, keep):
    """Reduce a 4x4 two-qubit operator to the kept qubit (0 = first, 1 = second)."""
    a = as_matrix(m)
    if a.shape != (4, 4):
        raise BadDim(f"partial_trace needs a 4x4 matrix, got {a.shape}")
    keep = {"first": 0, "second": 1}.get(keep, keep)
    if keep not in (0, 1):
        raise BadDim(f"keep must be first/second (0/1), got {keep!r}")
    t = a.reshape(2, 2, 2, 2)
    if keep == 0:
        return np.einsum("ajbj->ab", t)
    return np.einsum("jajb->ab", t)


def haar_unitary(rng, dim=2):
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
