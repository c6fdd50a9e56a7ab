"""Simulated polarization bench: waveplates, phase plates, decoherers and the
two-crystal pair source.

Jones conventions: ``R(theta)`` rotates the lab frame counter-clockwise,
a waveplate at fast-axis angle ``theta`` is ``R(theta) diag(1, e^{i delta}) R(-theta)``
with global phase dropped (the HWP is written in its real reflection form).
Angles are radians here; the JSON pipeline format stores degrees.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np

from . import qmat
from .errors import BadTarget, OutOfRange, ParseError
from .states import DensityMatrix, pure_state

COLLECTIVE = "collective"
KINDS = ("HWP", "QWP", "PhasePlate", "Decoherer")


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def hwp_matrix(theta):
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_matrix(theta):
    return rotation(theta) @ np.diag([1, 1j]) @ rotation(-theta)


def phase_plate_matrix(phase, theta=0.0):
    return rotation(theta) @ np.diag([1, np.exp(1j * phase)]) @ rotation(-theta)


def axis_projectors(theta):
    """Projectors onto linear polarization at ``theta`` and its orthogonal partner."""
    u = np.array([math.cos(theta), math.sin(theta)], dtype=complex)
    p = np.outer(u, u)
    return p, np.eye(2) - p


@dataclass(frozen=True)
class OpticalElement:
    kind: str
    angle: float = 0.0
    phase: float = 0.0
    strength: float = 0.0
    target: object = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optical element {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.strength <= 1.0:
            raise OutOfRange(f"decoherer strength must lie in [0, 1], got {self.strength}")
        if self.target == COLLECTIVE and self.kind != "Decoherer":
            raise BadTarget("only decoherers can act collectively")
        if self.target != COLLECTIVE and self.target not in (0, 1):
            raise BadTarget(f"target must be 0, 1 or {COLLECTIVE!r}, got {self.target!r}")

    def unitary(self):
        if self.kind == "HWP":
            return hwp_matrix(self.angle)
        if self.kind == "QWP":
            return qwp_matrix(self.angle)
        if self.kind == "PhasePlate":
            return phase_plate_matrix(self.phase, self.angle)
        raise TypeError("a decoherer is not unitary")


def HWP(angle, target=0):
    return OpticalElement("HWP", angle=angle, target=target)


def QWP(angle, target=0):
    return OpticalElement("QWP", angle=angle, target=target)


def PhasePlate(phase, target=0, angle=0.0):
    return OpticalElement("PhasePlate", angle=angle, phase=phase, target=target)


def Decoherer(angle, strength, target=0):
    return OpticalElement("Decoherer", angle=angle, strength=strength, target=target)


def embed(op, target, qubits):
    if qubits == 1:
        if target != 0:
            raise BadTarget(f"qubit {target} does not exist in a one-qubit state")
        return op
    return np.kron(op, qmat.I2) if target == 0 else np.kron(qmat.I2, op)


def dephase(m, theta, p, target=0, qubits=1):
    """``(1-p) m + p (P m P + Q m Q)`` for the axis basis at ``theta``."""
    pp, qq = axis_projectors(theta)
    if target == COLLECTIVE:
        # common-mode delay: only coherence between equal- and unequal-delay subspaces is lost
        blocks = (np.kron(pp, pp) + np.kron(qq, qq), np.kron(pp, qq) + np.kron(qq, pp))
    else:
        blocks = (embed(pp, target, qubits), embed(qq, target, qubits))
    return (1 - p) * m + p * sum(b @ m @ b for b in blocks)


def apply_element(rho, e):
    m = np.asarray(rho)
    qubits = 1 if m.shape[0] == 2 else 2
    if e.target == COLLECTIVE and qubits != 2:
        raise BadTarget("collective decoherence needs a two-qubit state")
    if e.kind == "Decoherer":
        out = dephase(m, e.angle, e.strength, e.target, qubits)
    else:
        u = embed(e.unitary(), e.target, qubits)
        out = u @ m @ qmat.dag(u)
    return DensityMatrix(out)


@dataclass(frozen=True)
class SourceConfig:
    """Two-crystal source: pump polarization angle sets the HH/VV weights, the phase plate sets phi."""

    pump_angle: float = math.pi / 4
    phase: float = 0.0

    @property
    def epsilon(self):
        return math.tan(self.pump_angle)


@dataclass(frozen=True)
class SingleQubitHerald:
    """One photon of a pair, heralded by its partner, prepared in ``|H>``."""


HERALD = SingleQubitHerald()


def source_state(cfg):
    a = math.cos(cfg.pump_angle)
    b = np.exp(1j * cfg.phase) * math.sin(cfg.pump_angle)
    return pure_state([a, 0.0, 0.0, b])


@dataclass(frozen=True)
class PrepPipeline:
    source: object = HERALD
    elements: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for e in self.elements:
            if self.qubits == 1 and e.target not in (0,):
                raise BadTarget(f"{e.kind} targets {e.target!r} but the herald source has one qubit")

    @property
    def qubits(self):
        return 1 if isinstance(self.source, SingleQubitHerald) else 2

    def initial_state(self):
        if isinstance(self.source, SingleQubitHerald):
            return pure_state([1.0, 0.0])
        return source_state(self.source)


def run_pipeline(p):
    rho = p.initial_state()
    for e in p.elements:
        rho = apply_element(rho, e)
    return rho


# -- JSON pipeline documents (degrees on the outside) ---------------------------


def element_to_document(e):
    doc = {"kind": e.kind, "target": e.target}
    if e.kind in ("HWP", "QWP", "Decoherer") or e.angle:
        doc["angle_deg"] = math.degrees(e.angle)
    if e.kind == "PhasePlate":
        doc["phase_deg"] = math.degrees(e.phase)
    if e.kind == "Decoherer":
        doc["strength"] = e.strength
    return doc


def element_from_document(doc, index=None):
    where = f"elements[{index}]" if index is not None else "element"
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ParseError("element needs a 'kind'", field=where)
    kind = {k.lower(): k for k in KINDS}.get(str(doc["kind"]).lower())
    if kind is None:
        raise ParseError(f"unknown element kind {doc['kind']!r}", field=f"{where}.kind")
    try:
        return OpticalElement(
            kind,
            angle=math.radians(float(doc.get("angle_deg", 0.0))),
            phase=math.radians(float(doc.get("phase_deg", 0.0))),
            strength=float(doc.get("strength", 0.0)),
            target=doc.get("target", 0),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), field=where) from None


def pipeline_to_document(p):
    if isinstance(p.source, SingleQubitHerald):
        src = {"type": "herald"}
    else:
        src = {
            "type": "pair",
            "pump_angle_deg": math.degrees(p.source.pump_angle),
            "phase_deg": math.degrees(p.source.phase),
        }
    return {"source": src, "elements": [element_to_document(e) for e in p.elements]}


def pipeline_from_document(doc):
    if not isinstance(doc, dict):
        raise ParseError("pipeline document must be an object")
    src = doc.get("source", {"type": "herald"})
    kind = src.get("type", "herald") if isinstance(src, dict) else None
    if kind == "herald":
        source = HERALD
    elif kind == "pair":
        try:
            source = SourceConfig(
                math.radians(float(src.get("pump_angle_deg", 45.0))),
                math.radians(float(src.get("phase_deg", 0.0))),
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(str(exc), field="source") from None
    else:
        raise ParseError(f"unknown source {src!r}", field="source.type")
    elements = [element_from_document(e, i) for i, e in enumerate(doc.get("elements", []))]
    try:
        return PrepPipeline(source, elements)
    except BadTarget as exc:
        raise ParseError(str(exc), field="elements") from None


def loads_pipeline(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return pipeline_from_document(doc)


def dumps_pipeline(p):
    return json.dumps(pipeline_to_document(p), indent=1)


def preparation_sweep(step_deg, strengths=(0.0,), dephasing_axis=0.0):
    """Bloch vectors of herald -> HWP(h) -> QWP(q) -> Decoherer(axis, p) over a grid.

    ``h`` and ``q`` run over ``[0, 180)`` degrees in ``step_deg`` steps and
    ``p`` over ``strengths``. Vectorised; returns an ``(N, 3)`` array.
    """
    angles = np.radians(np.arange(0.0, 180.0, step_deg))
    h, q = np.meshgrid(angles, angles, indexing="ij")
    h, q = h.ravel(), q.ravel()
    # HWP(h)|H> = (cos 2h, sin 2h); then QWP(q) = R(q) diag(1, i) R(-q)
    a, b = np.cos(2 * h), np.sin(2 * h)
    c, s = np.cos(q), np.sin(q)
    u = c * a + s * b
    v = (-s * a + c * b) * 1j
    psi0, psi1 = c * u - s * v, s * u + c * v
    r = np.stack([
        2 * (np.conj(psi0) * psi1).real,
        2 * (np.conj(psi0) * psi1).imag,
        np.abs(psi0) ** 2 - np.abs(psi1) ** 2,
    ], axis=1)
    # dephasing about a linear axis shrinks the Bloch component orthogonal to it
    axis = np.array([math.sin(2 * dephasing_axis), 0.0, math.cos(2 * dephasing_axis)])
    along = r @ axis
    out = [along[:, None] * axis + (1 - p) * (r - along[:, None] * axis) for p in strengths]
    return np.concatenate(out)


def count_distinct(bloch_vectors, resolution=1e-9):
    """Number of distinct states after snapping Bloch vectors to a ``resolution`` grid."""
    snapped = np.round(np.asarray(bloch_vectors) / resolution).astype(np.int64)
    return int(len(np.unique(snapped, axis=0)))
