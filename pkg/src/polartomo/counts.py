"""Polarization analysis settings, Born-rule rates, Poisson count simulation and
the ``label,counts,flux`` count-file format."""

import csv
from dataclasses import dataclass
import hashlib
import io
import itertools
import json
import math

import numpy as np

from . import qmat
from .errors import DimMismatch, ParseError, UnknownLabel
from .states import KETS, ket

HEADER = ("label", "counts", "flux")

SINGLE_QUBIT_LABELS = ("H", "V", "D", "A", "R", "L")
# the 16-setting two-photon set of James, Kwiat, Munro and White (2001)
TWO_QUBIT_LABELS = (
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
    "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
)  # fmt: skip


@dataclass(frozen=True, eq=False)
class MeasurementSetting:
    label: str
    projector: np.ndarray
    efficiency: float = 1.0

    def __post_init__(self):
        p = qmat.as_matrix(self.projector)
        if np.max(np.abs(p @ p - p)) > 1e-10 or abs(np.trace(p).real - 1) > 1e-10:
            raise ValueError(f"setting {self.label!r}: projector must be rank-1 and idempotent")
        if not self.efficiency > 0:
            raise ValueError(f"setting {self.label!r}: efficiency must be positive")
        p.setflags(write=False)
        object.__setattr__(self, "projector", p)

    @property
    def qubits(self):
        return 1 if self.projector.shape[0] == 2 else 2

    @classmethod
    def from_ket(cls, label, psi, efficiency=1.0):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(label, np.outer(psi, psi.conj()), efficiency)


@dataclass(frozen=True)
class CountRecord:
    setting_label: str
    counts: float
    total_flux: float

    def __post_init__(self):
        if not (self.counts >= 0 and math.isfinite(self.counts)):
            raise ValueError(f"counts must be finite and non-negative, got {self.counts!r}")
        if not (self.total_flux > 0 and math.isfinite(self.total_flux)):
            raise ValueError(f"flux must be finite and positive, got {self.total_flux!r}")


def setting(label, efficiency=1.0):
    """Setting for a polarization label, e.g. ``"D"`` or ``"DR"`` (= ``|D><D| x |R><R|``)."""
    if not label or len(label) > 2 or any(c not in KETS for c in label):
        raise UnknownLabel(f"unknown setting label {label!r}")
    return MeasurementSetting.from_ket(label, ket(label), efficiency)


def standard_set(qubits):
    if qubits == 1:
        return [setting(lbl) for lbl in SINGLE_QUBIT_LABELS]
    if qubits == 2:
        return [setting(lbl) for lbl in TWO_QUBIT_LABELS]
    raise ValueError(f"qubits must be 1 or 2, got {qubits}")


def pauli_basis(qubits):
    if qubits == 1:
        return list(qmat.PAULI)
    return [np.kron(a, b) for a, b in itertools.product(qmat.PAULI, repeat=2)]


def reconstruction_matrix(settings):
    """Rows ``Tr(P_nu sigma_k)`` over the Pauli(-product) basis; full column rank means complete."""
    qubits = settings[0].qubits
    basis = pauli_basis(qubits)
    return np.array([[np.trace(s.projector @ b).real for b in basis] for s in settings])


def gram_rank(settings):
    return int(np.linalg.matrix_rank(reconstruction_matrix(settings), tol=1e-9))


def condition_number(settings):
    return float(np.linalg.cond(reconstruction_matrix(settings)))


def expected_rate(rho, s, flux, dark_rate=0.0):
    m = np.asarray(rho)
    if m.shape != s.projector.shape:
        raise DimMismatch(f"state dim {m.shape[0]} vs setting {s.label!r} dim {s.projector.shape[0]}")
    if not flux > 0:
        raise ValueError("flux must be positive")
    lam = flux * s.efficiency * float(np.real(np.vdot(s.projector, m)))
    return max(lam, 0.0) + dark_rate


def _as_fluxes(flux, n):
    f = np.broadcast_to(np.asarray(flux, dtype=float), (n,))
    if np.any(~(f > 0)):
        raise ValueError("flux must be positive")
    return f


def sub_seed(seed, index):
    """64-bit sub-seed mixed from the master seed and a setting index."""
    h = hashlib.blake2b(f"{int(seed)}:{int(index)}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def simulate_counts(rho, settings, flux, seed, dark_rate=0.0):
    """Poisson counts for every setting; ``flux`` is a scalar or one value per setting."""
    fluxes = _as_fluxes(flux, len(settings))
    out = []
    for i, (s, f) in enumerate(zip(settings, fluxes)):
        lam = expected_rate(rho, s, f, dark_rate)
        rng = np.random.default_rng(sub_seed(seed, i))
        out.append(CountRecord(s.label, int(rng.poisson(lam)), float(f)))
    return out


def exact_counts(rho, settings, flux, dark_rate=0.0):
    """Noiseless records carrying the expected (real-valued) counts."""
    fluxes = _as_fluxes(flux, len(settings))
    return [
        CountRecord(s.label, expected_rate(rho, s, f, dark_rate), float(f))
        for s, f in zip(settings, fluxes)
    ]


# -- count files -------------------------------------------------------------------


def _fmt_number(x):
    if isinstance(x, (int, np.integer)) or float(x).is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(float(x))


def write_counts(records, stream=None):
    """Serialise records; returns the text when ``stream`` is None."""
    buf = io.StringIO() if stream is None else stream
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow([r.setting_label, _fmt_number(r.counts), _fmt_number(r.total_flux)])
    if stream is None:
        return buf.getvalue()
    return None


def _parse_number(text, lineno, name):
    try:
        value = int(text)
    except ValueError:
        try:
            value = float(text)
        except ValueError:
            raise ParseError(f"{text!r} is not a number", line=lineno, field=name) from None
    if not math.isfinite(value):
        raise ParseError(f"{text!r} is not finite", line=lineno, field=name)
    return value


def read_counts(source, known_labels=None):
    """Parse a count file from text, bytes or a file object.

    Duplicate labels are kept as separate records; tomography sums them.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("utf-8")
    rows = list(csv.reader(io.StringIO(source)))
    if not rows or tuple(c.strip() for c in rows[0]) != HEADER:
        raise ParseError(f"header must be {','.join(HEADER)}", line=1)
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        label = row[0].strip()
        if not label:
            raise ParseError("empty label", line=lineno, field="label")
        if known_labels is not None and label not in known_labels:
            raise UnknownLabel(f"line {lineno}: unknown setting label {label!r}")
        counts = _parse_number(row[1].strip(), lineno, "counts")
        flux = _parse_number(row[2].strip(), lineno, "flux")
        if counts < 0:
            raise ParseError(f"counts must be non-negative, got {row[1].strip()}", line=lineno, field="counts")
        if flux <= 0:
            raise ParseError(f"flux must be positive, got {row[2].strip()}", line=lineno, field="flux")
        records.append(CountRecord(label, counts, flux))
    return records


# -- custom setting sets (JSON) ------------------------------------------------------


def settings_to_document(settings):
    out = []
    for s in settings:
        w, v = qmat.eig_hermitian(s.projector)
        out.append({
            "label": s.label,
            "ket": [[float(z.real), float(z.imag)] for z in v[:, 0]],
            "efficiency": s.efficiency,
        })
    return out


def settings_from_document(doc):
    if not isinstance(doc, list):
        raise ParseError("settings document must be a list")
    out = []
    for i, item in enumerate(doc):
        try:
            if "ket" in item:
                psi = np.array([complex(re, im) for re, im in item["ket"]])
                out.append(MeasurementSetting.from_ket(item["label"], psi, item.get("efficiency", 1.0)))
            else:
                out.append(setting(item["label"], item.get("efficiency", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), field=f"[{i}]") from None
    return out


def loads_settings(text):
    try:
        return settings_from_document(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None


def resolve_settings(labels, custom=None):
    """Look up settings for ``labels``: custom definitions first, then the polarization grammar."""
    table = {s.label: s for s in custom or ()}
    out = {}
    for lbl in labels:
        if lbl in out:
            continue
        out[lbl] = table[lbl] if lbl in table else setting(lbl)
    return out
