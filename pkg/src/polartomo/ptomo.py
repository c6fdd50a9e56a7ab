"""Single-qubit process tomography.

Two routes to the same chi matrix over the operator basis ``(I, sx, sy, sz)``:

* standard: push the probes H, V, D, R through the process, reconstruct each
  output state and invert ``E(rho) = sum_mn chi_mn E_m rho E_n^dagger``;
* ancilla-assisted: send qubit 2 of ``|Phi+>`` through the process, reconstruct
  the two-qubit output once and change basis, using
  ``Choi = 2 (I x E)(|Phi+><Phi+|)``.

Output states keep their trace, so processes with state-dependent loss give
``Tr chi < 1``.
"""

from dataclasses import dataclass, field, replace
import io
import itertools
import json
import math

import numpy as np

from . import qmat
from .counts import exact_counts, simulate_counts, standard_set, sub_seed
from .errors import BadDim, ParseError
from .optics import axis_projectors, dephase, hwp_matrix, phase_plate_matrix, qwp_matrix, rotation
from .states import KETS, PHI_PLUS, matrix_from_json, matrix_to_json
from .tomo import MLEOptions, linear_inversion, mle

BASIS = qmat.PAULI
BASIS_NAMES = ("I", "X", "Y", "Z")
PROBES = ("H", "V", "D", "R")
CARDINAL = ("H", "V", "D", "A", "L", "R")
CARDINAL_NAMES = {"H": "H", "V": "V", "D": "+45", "A": "-45", "L": "L", "R": "R"}


@dataclass(frozen=True, eq=False)
class QuantumProcess:
    """A single-qubit operation: Unitary, Dephasing, AmplitudeScaling or Composite.

    ``params`` by kind: ``{"matrix"}``; ``{"angle", "strength"}``;
    ``{"fast", "slow", "angle"}`` amplitude factors on the axis basis;
    ``{"parts"}`` applied first to last.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def kraus(self):
        if self.kind == "Unitary":
            return [np.asarray(self.params["matrix"], dtype=complex)]
        if self.kind == "Dephasing":
            p = self.params["strength"]
            pp, qq = axis_projectors(self.params["angle"])
            return [math.sqrt(1 - p) * qmat.I2, math.sqrt(p) * pp, math.sqrt(p) * qq]
        if self.kind == "AmplitudeScaling":
            r = rotation(self.params.get("angle", 0.0))
            k = r @ np.diag([self.params["fast"], self.params["slow"]]) @ r.T
            return [k.astype(complex)]
        if self.kind == "Composite":
            ops = [qmat.I2]
            for part in self.params["parts"]:
                ops = [k @ o for o in ops for k in part.kraus()]
            return ops
        raise ValueError(f"unknown process kind {self.kind!r}")

    @property
    def trace_preserving(self):
        s = sum(qmat.dag(k) @ k for k in self.kraus())
        return bool(np.allclose(s, qmat.I2, atol=1e-12))

    def __call__(self, rho):
        return apply_process(self, rho)


def identity():
    return QuantumProcess("Unitary", {"matrix": qmat.I2})


def unitary(u):
    return QuantumProcess("Unitary", {"matrix": np.asarray(u, dtype=complex)})


def dephasing(angle, strength):
    return QuantumProcess("Dephasing", {"angle": angle, "strength": strength})


def amplitude_scaling(fast, slow, angle=0.0):
    if not (0 <= fast <= 1 and 0 <= slow <= 1):
        raise ValueError("amplitude factors must lie in [0, 1]")
    return QuantumProcess("AmplitudeScaling", {"fast": fast, "slow": slow, "angle": angle})


def composite(*parts):
    return QuantumProcess("Composite", {"parts": tuple(parts)})


def apply_process(p, rho):
    """Image of a one-qubit state under ``p``; the trace is the survival probability."""
    m = np.asarray(rho, dtype=complex)
    if m.shape != (2, 2):
        raise BadDim(f"process acts on one qubit, got a {m.shape} matrix")
    if p.kind == "Dephasing":
        return dephase(m, p.params["angle"], p.params["strength"])
    return sum(k @ m @ qmat.dag(k) for k in p.kraus())


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    chi: np.ndarray
    trace_preserving: bool = True

    def apply(self, rho):
        m = np.asarray(rho, dtype=complex)
        return sum(
            self.chi[a, b] * BASIS[a] @ m @ qmat.dag(BASIS[b])
            for a, b in itertools.product(range(4), repeat=2)
        )

    def completeness(self):
        """``sum_mn chi_mn E_n^dagger E_m``; the identity for trace-preserving maps."""
        return sum(
            self.chi[a, b] * qmat.dag(BASIS[b]) @ BASIS[a]
            for a, b in itertools.product(range(4), repeat=2)
        )


def chi_from_kraus(kraus):
    """Exact chi from Kraus operators (expansion coefficients in the Pauli basis)."""
    chi = np.zeros((4, 4), dtype=complex)
    for k in kraus:
        c = np.array([np.trace(qmat.dag(e) @ k) / 2 for e in BASIS])
        chi += np.outer(c, c.conj())
    return chi


def _project(chi, trace_preserving):
    chi = qmat.psd_project(chi)
    if trace_preserving:
        chi = chi / np.trace(chi).real
    return ProcessMatrix(chi, trace_preserving)


def chi_from_outputs(inputs, outputs):
    """Solve ``E(rho_k) = sum chi_mn E_m rho_k E_n^dagger`` for chi in least squares."""
    rows = []
    for rho in inputs:
        rows.append(np.array([
            (BASIS[a] @ rho @ qmat.dag(BASIS[b])).ravel()
            for a, b in itertools.product(range(4), repeat=2)
        ]).T)
    lhs = np.vstack(rows)
    rhs = np.concatenate([np.asarray(o).ravel() for o in outputs])
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    chi = sol.reshape(4, 4)
    return 0.5 * (chi + qmat.dag(chi))


def _tomograph(out, settings, flux, seed, noiseless, options):
    """Reconstruct an unnormalised output state, keeping its trace."""
    if noiseless:
        records = exact_counts(out, settings, flux)
    else:
        records = simulate_counts(out, settings, flux, seed)
    if sum(r.counts for r in records) == 0:
        return np.zeros_like(out)
    if noiseless:
        res = linear_inversion(records, settings)
    else:
        res = mle(records, settings, replace(options, free_scale=True))
    return res.trace_scale * np.asarray(res.estimate.matrix)


def standard_qpt(p, flux, seed=0, noiseless=False, options=None, trace_preserving=None):
    """Probe-state process tomography with probes H, V, D, R (six settings each)."""
    if not flux > 0:
        raise ValueError("flux must be positive")
    tp = p.trace_preserving if trace_preserving is None else trace_preserving
    opts = options or MLEOptions(seed=seed)
    settings = standard_set(1)
    inputs, outputs = [], []
    for k, label in enumerate(PROBES):
        rho_in = np.outer(KETS[label], KETS[label].conj())
        out = apply_process(p, rho_in)
        inputs.append(rho_in)
        outputs.append(_tomograph(out, settings, flux, sub_seed(seed, k), noiseless, opts))
    return _project(chi_from_outputs(inputs, outputs), tp)


def _bell_columns():
    return np.column_stack([np.kron(qmat.I2, e) @ PHI_PLUS for e in BASIS])


def ancilla_output(p):
    """``(I x E)(|Phi+><Phi+|)`` with the process on qubit 2."""
    phi = np.outer(PHI_PLUS, PHI_PLUS.conj())
    return sum(np.kron(qmat.I2, k) @ phi @ qmat.dag(np.kron(qmat.I2, k)) for k in p.kraus())


def choi_to_chi(choi):
    b = _bell_columns()
    return qmat.dag(b) @ (np.asarray(choi) / 2) @ b


def ancilla_qpt(p, flux, seed=0, noiseless=False, options=None, trace_preserving=None):
    """Ancilla-assisted tomography from the single fixed input ``|Phi+>``."""
    if not flux > 0:
        raise ValueError("flux must be positive")
    tp = p.trace_preserving if trace_preserving is None else trace_preserving
    opts = options or MLEOptions(seed=seed)
    out = ancilla_output(p)
    rho_out = _tomograph(out, standard_set(2), flux, seed, noiseless, opts)
    chi = choi_to_chi(2 * rho_out)
    return _project(0.5 * (chi + qmat.dag(chi)), tp)


# -- Poincare sphere pictures -----------------------------------------------------


@dataclass(frozen=True)
class PoincareRow:
    label: str
    input_bloch: tuple
    output_bloch: tuple
    purity: object  # None when nothing survives
    norm: float


def _bloch_of(m):
    tr = float(np.trace(m).real)
    if tr <= 1e-15:
        return (0.0, 0.0, 0.0), None, max(tr, 0.0)
    r = tuple(float(np.trace(m @ s).real / tr) for s in (qmat.SX, qmat.SY, qmat.SZ))
    n = m / tr
    return r, float(np.real(np.vdot(n, n))), tr


def poincare_table(p):
    rows = []
    for label in CARDINAL:
        rho = np.outer(KETS[label], KETS[label].conj())
        r_in, _, _ = _bloch_of(rho)
        r_out, pur, tr = _bloch_of(apply_process(p, rho))
        rows.append(PoincareRow(CARDINAL_NAMES[label], r_in, r_out, pur, tr))
    return rows


def sphere_mesh(p, n):
    """Image of an ``n`` latitude by ``n`` longitude mesh of pure states."""
    if n < 2:
        raise ValueError("mesh needs at least 2 latitudes")
    out = []
    for i in range(n):
        theta = math.pi * i / (n - 1)
        for j in range(n):
            phi = 2 * math.pi * j / n
            r = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
            rho = 0.5 * (qmat.I2 + r[0] * qmat.SX + r[1] * qmat.SY + r[2] * qmat.SZ)
            r_out, _, _ = _bloch_of(apply_process(p, rho))
            out.append((r, r_out))
    return out


# -- process specs and documents ------------------------------------------------------


def _num(text, spec):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{text!r} is not a number in process spec {spec!r}", field="process") from None


def _parse_one(spec):
    parts = spec.strip().split(":")
    head = parts[0].lower()
    if head == "identity" and len(parts) == 1:
        return identity()
    if head == "unitary" and len(parts) in (3, 4):
        plate = parts[1].lower()
        arg = math.radians(_num(parts[2], spec))
        if plate == "hwp" and len(parts) == 3:
            return unitary(hwp_matrix(arg))
        if plate == "qwp" and len(parts) == 3:
            return unitary(qwp_matrix(arg))
        if plate == "phase":
            axis = math.radians(_num(parts[3], spec)) if len(parts) == 4 else 0.0
            return unitary(phase_plate_matrix(arg, axis))
    if head == "dephase" and len(parts) == 3:
        p = _num(parts[2], spec)
        if not 0 <= p <= 1:
            raise ParseError(f"dephasing strength {p} outside [0, 1]", field="process")
        return dephasing(math.radians(_num(parts[1], spec)), p)
    if head == "loss" and len(parts) in (3, 4):
        angle = math.radians(_num(parts[3], spec)) if len(parts) == 4 else 0.0
        try:
            return amplitude_scaling(_num(parts[1], spec), _num(parts[2], spec), angle)
        except ValueError as exc:
            raise ParseError(str(exc), field="process") from None
    raise ParseError(f"cannot parse process spec {spec!r}", field="process")


def parse_process(spec):
    """Parse ``identity``, ``unitary:hwp:45``, ``unitary:qwp:45``, ``unitary:phase:90[:axis]``,
    ``dephase:<axis deg>:<p>``, ``loss:<fast>:<slow>[:<axis deg>]``, chained with ``+``."""
    pieces = [s for s in spec.split("+") if s.strip()]
    if not pieces:
        raise ParseError("empty process spec", field="process")
    procs = [_parse_one(s) for s in pieces]
    return procs[0] if len(procs) == 1 else composite(*procs)


def chi_to_document(pm):
    return {
        "basis": list(BASIS_NAMES),
        "chi": matrix_to_json(pm.chi),
        "trace_preserving": pm.trace_preserving,
    }


def chi_from_document(doc):
    try:
        chi = matrix_from_json(doc["chi"], field="chi")
    except (KeyError, TypeError):
        raise ParseError("chi document needs a 'chi' matrix") from None
    if chi.shape != (4, 4):
        raise ParseError(f"chi must be 4x4, got {chi.shape}", field="chi")
    return ProcessMatrix(chi, bool(doc.get("trace_preserving", True)))


def table_to_document(rows):
    return [
        {
            "state": r.label,
            "input_bloch": list(r.input_bloch),
            "output_bloch": list(r.output_bloch),
            "purity": r.purity,
            "norm": r.norm,
        }
        for r in rows
    ]


MESH_HEADER = ("in_x", "in_y", "in_z", "out_x", "out_y", "out_z")


def mesh_to_csv(mesh):
    buf = io.StringIO()
    buf.write(",".join(MESH_HEADER) + "\n")
    for r_in, r_out in mesh:
        buf.write(",".join(repr(float(x)) for x in (*r_in, *r_out)) + "\n")
    return buf.getvalue()


def dumps_chi(pm):
    return json.dumps(chi_to_document(pm), indent=1)
