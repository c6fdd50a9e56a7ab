"""Density matrices, named one- and two-qubit state families, and scalar metrics.

Conventions
-----------
* Computational basis ``|H> = (1, 0)``, ``|V> = (0, 1)``; two-qubit order HH, HV, VH, VV.
* ``|D> = (|H> + |V>)/sqrt2``, ``|A> = (|H> - |V>)/sqrt2``,
  ``|R> = (|H> + i|V>)/sqrt2``, ``|L> = (|H> - i|V>)/sqrt2``, so the Bloch
  (Poincare) axes are z = H/V, x = D/A, y = R/L.
* Fidelity is the squared-trace form ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``.
* Mixedness is the linear entropy normalised to [0, 1]; entanglement is the
  tangle (squared Wootters concurrence).
"""

from dataclasses import InitVar, dataclass
import json

import numpy as np

from . import qmat
from .errors import BadDim, DimMismatch, NotPhysical, OutOfRange, ParseError, ZeroVector

STATE_TOL = 1e-9
# eigenvalues below this (relative to the trace) are numerical zeros in fidelity
_RANK_TOL = 1e-13

KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "A": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "R": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "L": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}

_YY = np.kron(qmat.SY, qmat.SY)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite 2x2 or 4x4 matrix.

    Construction validates the invariants at ``STATE_TOL`` and stores a
    Hermitian-symmetrised read-only copy. ``require_psd=False`` skips only the
    positivity check; linear-inversion estimates use it.
    """

    matrix: np.ndarray
    require_psd: InitVar[bool] = True

    def __post_init__(self, require_psd):
        m = qmat.as_matrix(self.matrix)
        if m.shape[0] not in (2, 4):
            raise BadDim(f"density matrices are 2x2 or 4x4, got {m.shape}")
        herr = qmat.hermiticity_error(m)
        if herr > STATE_TOL:
            raise NotPhysical(f"not Hermitian (deviation {herr:.3g})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > STATE_TOL:
            raise NotPhysical(f"trace is {tr!r}, expected 1")
        m = 0.5 * (m + qmat.dag(m))
        if require_psd:
            lo = qmat.eigvalsh(m)[-1]
            if lo < -STATE_TOL:
                raise NotPhysical(f"negative eigenvalue {lo:.3g}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def qubits(self):
        return 1 if self.dim == 2 else 2

    @property
    def physical(self):
        return bool(qmat.eigvalsh(self.matrix)[-1] >= -STATE_TOL)

    def eigenvalues(self):
        return qmat.eigvalsh(self.matrix)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype)

    def allclose(self, other, atol=1e-9):
        return np.allclose(self.matrix, np.asarray(other), atol=atol, rtol=0)


def as_density(x):
    return x if isinstance(x, DensityMatrix) else DensityMatrix(np.asarray(x))


def normalized(m, require_psd=True):
    """Wrap a positive operator after dividing by its trace."""
    m = np.asarray(m, dtype=complex)
    return DensityMatrix(m / np.trace(m).real, require_psd=require_psd)


# -- constructors -----------------------------------------------------------


def pure_state(amplitudes):
    psi = np.asarray(amplitudes, dtype=complex).ravel()
    if psi.size not in (2, 4):
        raise BadDim(f"state vector must have 2 or 4 amplitudes, got {psi.size}")
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ZeroVector("cannot normalise the zero vector")
    psi = psi / norm
    return DensityMatrix(np.outer(psi, psi.conj()))


def ket(label):
    """State vector for a polarization label such as ``"D"`` or ``"HV"``."""
    try:
        vecs = [KETS[c] for c in label]
    except KeyError:
        raise BadDim(f"unknown polarization label {label!r}") from None
    out = vecs[0]
    for v in vecs[1:]:
        out = np.kron(out, v)
    return out


def basis_state(label):
    return pure_state(ket(label))


PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
PHI_MINUS = np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2)
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


def phi_plus():
    return pure_state(PHI_PLUS)


def maximally_mixed(qubits):
    d = 2**qubits
    return DensityMatrix(np.eye(d, dtype=complex) / d)


def nonmax_entangled(epsilon, phi=0.0):
    """Pure state proportional to ``|HH> + epsilon * exp(i phi) |VV>``."""
    if not np.isfinite(epsilon):
        raise OutOfRange("epsilon must be finite")
    return pure_state([1.0, 0.0, 0.0, epsilon * np.exp(1j * phi)])


def werner(p):
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"Werner weight must lie in [0, 1], got {p}")
    return DensityMatrix(p * np.outer(PHI_PLUS, PHI_PLUS.conj()) + (1 - p) * np.eye(4) / 4)


def mems(r):
    """Maximally entangled mixed state with concurrence ``r``.

    Two branches meet at r = 2/3: above it the HV population is ``1 - r``,
    below it the populations freeze at 1/3.
    """
    if not 0.0 <= r <= 1.0:
        raise OutOfRange(f"MEMS concurrence must lie in [0, 1], got {r}")
    g = r / 2 if r >= 2 / 3 else 1 / 3
    m = np.diag([g, 1 - 2 * g, 0.0, g]).astype(complex)
    m[0, 3] = m[3, 0] = r / 2
    return DensityMatrix(m)


def ginibre(rng, qubits, rank=None):
    """Random density matrix ``G G^dagger / Tr`` with complex Gaussian ``G``."""
    d = 2**qubits
    k = d if rank is None else rank
    g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    return normalized(g @ g.conj().T)


def random_pure(rng, qubits):
    d = 2**qubits
    return pure_state(rng.standard_normal(d) + 1j * rng.standard_normal(d))


# -- metrics ----------------------------------------------------------------


def _support(m):
    w, v = qmat.eig_hermitian(m, tol=np.inf)
    w = np.where(w > _RANK_TOL * max(w[0], 1e-300), w, 0.0)
    return w, v


def fidelity(a, b):
    """Squared-trace fidelity between two density matrices of equal dimension.

    Computed as the squared nuclear norm of ``sqrt(a) sqrt(b)`` using both
    spectral decompositions; sub-``1e-13`` eigenvalues count as exact zeros so
    that pure-state inputs reproduce ``<psi|b|psi>``.
    """
    a, b = as_density(a), as_density(b)
    if a.dim != b.dim:
        raise DimMismatch(f"fidelity between dim {a.dim} and dim {b.dim}")
    wa, va = _support(a.matrix)
    wb, vb = _support(b.matrix)
    z = np.sqrt(wa)[:, None] * (qmat.dag(va) @ vb) * np.sqrt(wb)[None, :]
    s = np.linalg.svd(z, compute_uv=False)
    return float(np.sum(s) ** 2)


def trace_distance(a, b):
    d = np.asarray(a) - np.asarray(b)
    return 0.5 * float(np.sum(np.abs(qmat.eigvalsh(d))))


def purity(rho):
    m = np.asarray(rho)
    return float(np.real(np.vdot(m, m)))


def linear_entropy(rho):
    d = np.asarray(rho).shape[0]
    return d / (d - 1) * (1.0 - purity(rho))


def vn_entropy(rho):
    w = qmat.eigvalsh(np.asarray(rho))
    w = w[w > 0]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def concurrence(rho):
    """Wootters concurrence of a two-qubit state.

    The square roots of the eigenvalues of ``rho * rho_tilde`` are obtained as
    the singular values of ``sqrt(W) S sqrt(W)`` with ``rho = V W V^dagger`` and
    ``S = V^dagger (sy x sy) V*``, which keeps them accurate for rank-deficient
    inputs.
    """
    rho = as_density(rho)
    if rho.qubits != 2:
        raise BadDim("concurrence is defined for two-qubit states only")
    w, v = qmat.eig_hermitian(rho.matrix, tol=np.inf)
    sw = np.sqrt(np.clip(w, 0.0, None))
    s = qmat.dag(v) @ _YY @ v.conj()
    lam = np.linalg.svd(sw[:, None] * s * sw[None, :], compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tangle(rho):
    return concurrence(rho) ** 2


def pure_concurrence(psi):
    """``|<psi| sy x sy |psi*>|`` for a normalised two-qubit ket."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return float(abs(psi.conj() @ _YY @ psi.conj()))


def bloch_vector(rho):
    m = np.asarray(rho)
    tr = np.trace(m).real
    return np.array([np.trace(m @ p).real for p in (qmat.SX, qmat.SY, qmat.SZ)]) / tr


# -- tangle / linear-entropy plane --------------------------------------------


@dataclass(frozen=True)
class PlanePoint:
    linear_entropy: float
    tangle: float
    label: str = ""


def mems_curve(r):
    """(linear entropy, tangle) of ``mems(r)``, evaluated in closed form."""
    r = np.asarray(r, dtype=float)
    s_high = 8.0 / 3.0 * r * (1.0 - r)
    s_low = 8.0 / 9.0 - 2.0 * r**2 / 3.0
    return np.where(r >= 2 / 3, s_high, s_low), r**2


def frontier_tangle(s_lin):
    """Largest tangle reachable at linear entropy ``s_lin`` (MEMS frontier)."""
    s = np.clip(np.asarray(s_lin, dtype=float), 0.0, 1.0)
    r_high = 0.5 * (1.0 + np.sqrt(np.clip(1.0 - 1.5 * s, 0.0, None)))
    r_low = np.sqrt(np.clip(1.5 * (8.0 / 9.0 - s), 0.0, None))
    r = np.where(s <= 16.0 / 27.0, r_high, r_low)
    out = r**2
    return float(out) if out.ndim == 0 else out


def sampled_frontier(n=10_000):
    """MEMS frontier sampled at ``n`` evenly spaced concurrences, r from 1 down to 0.

    Returns arrays ``(r, linear_entropy, tangle)`` in increasing entropy order.
    """
    r = np.linspace(1.0, 0.0, n)
    s, t = mems_curve(r)
    return r, s, t


def interpolated_frontier(samples):
    """Frontier tangle as a function of entropy, linearly interpolated from samples."""
    _, s, t = samples

    def f(x):
        return np.interp(x, s, t, right=0.0)

    return f


def plane_point(rho, label="", tol=1e-6):
    rho = as_density(rho)
    if rho.qubits != 2:
        raise BadDim("the tangle-entropy plane needs a two-qubit state")
    s = min(max(linear_entropy(rho), 0.0), 1.0)
    t = min(max(tangle(rho), 0.0), 1.0)
    if t > frontier_tangle(s) + tol:
        raise NotPhysical(f"point ({s:.6g}, {t:.6g}) lies above the MEMS frontier")
    return PlanePoint(s, t, label)


# -- serialization --------------------------------------------------------------


def matrix_to_json(m):
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def matrix_from_json(rows, field="matrix"):
    try:
        m = np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"expected nested [re, im] pairs ({exc})", field=field) from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParseError(f"matrix is not square: shape {m.shape}", field=field)
    return m


def state_to_document(rho):
    rho = as_density(rho)
    return {"qubits": rho.qubits, "matrix": matrix_to_json(rho.matrix)}


def state_from_document(doc):
    if not isinstance(doc, dict) or "matrix" not in doc:
        raise ParseError("state document needs a 'matrix' field")
    m = matrix_from_json(doc["matrix"])
    qubits = doc.get("qubits")
    if qubits is not None and 2**qubits != m.shape[0]:
        raise ParseError(f"qubits={qubits} does not match a {m.shape[0]}x{m.shape[0]} matrix", field="qubits")
    try:
        return DensityMatrix(m)
    except (NotPhysical, BadDim) as exc:
        raise ParseError(str(exc), field="matrix") from None


def dumps_state(rho):
    return json.dumps(state_to_document(rho), indent=1)


def loads_state(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return state_from_document(doc)
