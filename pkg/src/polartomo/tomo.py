"""State reconstruction from count records.

Linear inversion solves the Born-rule equations directly and may return an
unphysical matrix. Maximum likelihood minimises the Poisson negative
log-likelihood over ``rho(t) = T^dagger T / Tr(T^dagger T)`` with ``T`` lower
triangular, which is physical by construction. The adaptive routine spends a
fraction of the flux on the standard set, then measures in the eigenbasis of
that first estimate plus mutually unbiased complements.
"""

from dataclasses import dataclass, replace
import json
import math
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from . import qmat
from .counts import (
    MeasurementSetting,
    gram_rank,
    pauli_basis,
    simulate_counts,
    standard_set,
    sub_seed,
)
from .errors import BudgetTooSmall, NotPhysical, ParseError, RankDeficient, UnknownLabel
from .states import DensityMatrix, KETS, fidelity, matrix_from_json, matrix_to_json

LAMBDA_FLOOR = 1e-12
INIT_EIGEN_FLOOR = 1e-6
MAX_RESTARTS = 10

LINEAR_INVERSION = "LinearInversion"
MAX_LIKELIHOOD = "MaxLikelihood"


@dataclass(frozen=True)
class MLEOptions:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-8
    restarts: int = 3
    seed: int = 0
    perturbation: float = 0.1
    # profile out an unknown overall count scale (lossy channels)
    free_scale: bool = False


@dataclass(frozen=True, eq=False)
class TomographyResult:
    estimate: DensityMatrix
    method: str
    neg_log_likelihood: Optional[float] = None
    iterations: int = 0
    converged: bool = True
    fidelity_to_target: Optional[float] = None
    physical: bool = True
    # unnormalised trace of the linear solution; survival probability for lossy channels
    trace_scale: float = 1.0
    stage1: Optional["TomographyResult"] = None
    bootstrap: Optional[dict] = None

    def with_target(self, target):
        return replace(self, fidelity_to_target=fidelity(self.estimate, target))


# -- data preparation -------------------------------------------------------------


class _Data(NamedTuple):
    labels: tuple
    projectors: np.ndarray  # (n, d, d)
    counts: np.ndarray
    scale: np.ndarray  # flux * efficiency per aggregated setting


def _prepare(records, settings):
    """Aggregate duplicate labels (summed counts and fluxes) in settings order."""
    table = {}
    for s in settings:
        table.setdefault(s.label, s)
    counts, fluxes = {}, {}
    for r in records:
        if r.setting_label not in table:
            raise UnknownLabel(f"record label {r.setting_label!r} matches no measurement setting")
        counts.setdefault(r.setting_label, []).append(float(r.counts))
        fluxes.setdefault(r.setting_label, []).append(float(r.total_flux))
    labels = tuple(lbl for lbl in table if lbl in counts)
    if not labels:
        raise RankDeficient("no count records")
    used = [table[lbl] for lbl in labels]
    dims = {s.projector.shape[0] for s in used}
    if len(dims) != 1:
        raise RankDeficient("settings mix one- and two-qubit projectors")
    rank = gram_rank(used)
    d = dims.pop()
    if rank < d * d:
        raise RankDeficient(f"settings span rank {rank}, need {d * d}")
    return _Data(
        labels,
        np.array([s.projector for s in used]),
        np.array([math.fsum(counts[lbl]) for lbl in labels]),
        np.array([math.fsum(fluxes[lbl]) * table[lbl].efficiency for lbl in labels]),
    )


def _linear_solve(data):
    d = data.projectors.shape[1]
    qubits = 1 if d == 2 else 2
    basis = pauli_basis(qubits)
    a = np.array([[np.vdot(b, p).real for b in basis] for p in data.projectors]) / d
    coef, *_ = np.linalg.lstsq(a, data.counts / data.scale, rcond=None)
    return sum(c * b for c, b in zip(coef, basis)) / d


def linear_inversion(records, settings):
    data = _prepare(records, settings)
    m = _linear_solve(data)
    tr = np.trace(m).real
    if tr <= 0:
        raise NotPhysical("linear inversion produced a non-positive trace")
    est = DensityMatrix(m / tr, require_psd=False)
    return TomographyResult(est, LINEAR_INVERSION, physical=est.physical, trace_scale=tr)


# -- T^dagger T parameterisation -----------------------------------------------------


def _tril_indices(d):
    return [(i, j) for i in range(d) for j in range(i)]


@dataclass(frozen=True, eq=False)
class TParams:
    """Real parameter vector for a lower-triangular ``T``.

    Layout: the ``d`` real diagonal entries, then (re, im) pairs of the strictly
    lower entries in row-major order; 4 numbers for one qubit, 16 for two.
    """

    t: np.ndarray

    @property
    def dim(self):
        return int(round(math.sqrt(len(self.t))))

    @property
    def T(self):
        return t_to_matrix(self.t)

    @property
    def rho(self):
        tm = self.T
        a = qmat.dag(tm) @ tm
        return a / np.trace(a).real


def t_to_matrix(t):
    d = int(round(math.sqrt(len(t))))
    tm = np.zeros((d, d), dtype=complex)
    tm[np.diag_indices(d)] = t[:d]
    for k, (i, j) in enumerate(_tril_indices(d)):
        tm[i, j] = t[d + 2 * k] + 1j * t[d + 2 * k + 1]
    return tm


def matrix_to_t(tm):
    d = tm.shape[0]
    t = np.empty(d * d)
    t[:d] = tm[np.diag_indices(d)].real
    for k, (i, j) in enumerate(_tril_indices(d)):
        t[d + 2 * k] = tm[i, j].real
        t[d + 2 * k + 1] = tm[i, j].imag
    return t


def factorize(rho):
    """Lower-triangular ``T`` with ``T^dagger T = rho`` for positive definite ``rho``."""
    d = rho.shape[0]
    j = np.eye(d)[::-1]
    low = np.linalg.cholesky(j @ rho @ j)
    return qmat.dag(j @ low @ j)


def init_from_inversion(records, settings):
    data = _prepare(records, settings)
    return _init_params(_linear_solve(data))


def _init_params(m):
    m = 0.5 * (m + qmat.dag(m))
    m = m / np.trace(m).real
    w, v = qmat.eig_hermitian(m, tol=np.inf)
    w = np.maximum(w, INIT_EIGEN_FLOOR)
    rho = (v * w) @ qmat.dag(v)
    rho = 0.5 * (rho + qmat.dag(rho)) / np.sum(w)
    return TParams(matrix_to_t(factorize(rho)))


def neg_log_likelihood(t, data, with_grad=True, free_scale=False):
    """Poisson NLL ``sum(lam - n ln lam)`` and its gradient in ``t``.

    ``lam`` is floored at ``LAMBDA_FLOOR`` inside the logarithm only. With
    ``free_scale`` the overall count scale is maximised out analytically,
    leaving ``N ln(sum lam) - sum n ln lam``.
    """
    tm = t_to_matrix(t)
    a = qmat.dag(tm) @ tm
    tau = np.trace(a).real
    p = np.einsum("nij,ji->n", data.projectors, a).real / tau
    lam = data.scale * p
    floored = np.maximum(lam, LAMBDA_FLOOR)
    total = np.sum(lam)
    if free_scale:
        n_tot = np.sum(data.counts)
        value = float(n_tot * np.log(total) - np.dot(data.counts, np.log(floored)))
        c = n_tot / total
    else:
        value = float(total - np.dot(data.counts, np.log(floored)))
        c = 1.0
    if not with_grad:
        return value
    w = data.scale * (c - np.where(lam > LAMBDA_FLOOR, data.counts / floored, 0.0))
    g = (np.einsum("n,nij->ij", w, data.projectors) - np.dot(w, p) * np.eye(len(tm))) / tau
    gm = 2.0 * tm @ g
    return value, matrix_to_t(gm)


def _run_bfgs(t0, data, norm, opts):
    def fun(t):
        v, g = neg_log_likelihood(t, data, free_scale=opts.free_scale)
        return v / norm, g / norm

    # the objective is invariant under t -> c t, so BFGS may drift to large ||t||
    # where the gradient is small by 1/||t||; restart from the unit sphere until
    # the unit-norm gradient meets the tolerance or no progress is made
    t = t0 / np.linalg.norm(t0)
    value, grad = fun(t)
    nit = 0
    for _ in range(MAX_RESTARTS):
        res = minimize(
            fun,
            t,
            jac=True,
            method="BFGS",
            options={"maxiter": opts.max_iterations - nit, "gtol": opts.gradient_tolerance, "norm": np.inf},
        )
        nit += int(res.nit)
        t_new = res.x / np.linalg.norm(res.x)
        v_new, g_new = fun(t_new)
        if v_new > value:
            break
        improved = v_new < value
        t, value, grad = t_new, v_new, g_new
        if np.max(np.abs(grad)) < opts.gradient_tolerance or not improved or nit >= opts.max_iterations:
            break
    return t, value, nit, float(np.max(np.abs(grad)))


def mle(records, settings, options=None):
    """Maximum-likelihood state estimate.

    Multi-start BFGS: the inversion-seeded start plus ``restarts - 1`` random
    perturbations of it; the lowest likelihood wins, ties go to the lowest
    start index. The objective is the NLL divided by the total flux, and
    ``converged`` means its gradient max-norm (at unit ``||t||``) is below
    ``gradient_tolerance``.
    """
    opts = options or MLEOptions()
    data = _prepare(records, settings)
    t0 = _init_params(_linear_solve(data)).t
    t0 = t0 / np.linalg.norm(t0)
    norm = float(np.sum(data.scale))
    rng = np.random.default_rng(opts.seed)
    starts = [t0]
    for _ in range(max(opts.restarts, 1) - 1):
        starts.append(t0 + opts.perturbation * rng.standard_normal(t0.shape))
    best = None
    total_iter = 0
    for t_start in starts:
        t, value, nit, gmax = _run_bfgs(t_start, data, norm, opts)
        total_iter += nit
        if best is None or value < best[1]:
            best = (t, value, gmax)
    t, value, gmax = best
    est = DensityMatrix(TParams(t).rho)
    return TomographyResult(
        est,
        MAX_LIKELIHOOD,
        neg_log_likelihood=value * norm,
        iterations=total_iter,
        converged=bool(gmax < opts.gradient_tolerance),
        physical=True,
        trace_scale=_scale_estimate(est.matrix, data),
    )


def _scale_estimate(rho, data):
    """Poisson ML overall scale for a fixed state shape: sum(n) / sum(lam)."""
    lam = data.scale * np.einsum("nij,ji->n", data.projectors, rho).real
    return float(np.sum(data.counts) / np.sum(lam))


def reconstruct(records, settings, method="mle", options=None):
    if method in ("mle", MAX_LIKELIHOOD):
        return mle(records, settings, options)
    if method in ("inversion", "linear", LINEAR_INVERSION):
        return linear_inversion(records, settings)
    raise ValueError(f"unknown tomography method {method!r}")


# -- adaptive two-stage tomography -------------------------------------------------


def _joint_eigenbasis(ops):
    combo = sum((k + 1) * op for k, op in enumerate(ops))
    return qmat.eig_hermitian(combo).eigenvectors


def mub_bases(qubits):
    """Complete sets of mutually unbiased bases, computational basis first.

    Each basis is a ``d x d`` matrix whose columns are the basis kets.
    """
    if qubits == 1:
        return [np.column_stack([KETS[a], KETS[b]]) for a, b in ("HV", "DA", "RL")]
    x, y, z, i = qmat.SX, qmat.SY, qmat.SZ, qmat.I2
    k = np.kron
    triples = [
        (k(z, i), k(i, z)),
        (k(x, i), k(i, x)),
        (k(y, i), k(i, y)),
        (k(x, z), k(y, x), k(z, y)),
        (k(x, y), k(y, z), k(z, x)),
    ]
    bases = [np.eye(4, dtype=complex)]
    bases += [_joint_eigenbasis(t[:2]) for t in triples[1:3]]
    bases += [_joint_eigenbasis(t[:2]) for t in triples[3:]]
    return bases


class AdaptivePlan(NamedTuple):
    settings: list
    fluxes: np.ndarray  # per-setting flux, sums to the budget


def adaptive_plan(stage1, budget, eigen_fraction=0.5, degenerate_tol=1e-6):
    """Stage-two settings: the stage-one eigenbasis plus rotated MUB complements.

    The eigenbasis projectors share ``eigen_fraction`` of the budget and the
    remaining settings split the rest evenly. A fully degenerate estimate
    carries no orientation information and yields the standard set with
    uniform weights.
    """
    rho = stage1.estimate if not isinstance(stage1, DensityMatrix) else stage1
    if not rho.physical:
        raise NotPhysical("adaptive planning needs a physical stage-one estimate")
    d = rho.dim
    qubits = rho.qubits
    minimal = d * d
    if budget < minimal:
        raise BudgetTooSmall(f"budget {budget} is below the {minimal}-setting minimal complete set")
    w, v = qmat.eig_hermitian(rho.matrix)
    if w[0] - w[-1] < degenerate_tol:
        settings = standard_set(qubits)
        return AdaptivePlan(settings, np.full(len(settings), budget / len(settings)))
    bases = mub_bases(qubits)
    settings = [MeasurementSetting.from_ket(f"E{k}", v[:, k]) for k in range(d)]
    for b, basis in enumerate(bases[1:], start=1):
        rotated = v @ basis
        settings += [MeasurementSetting.from_ket(f"M{b}_{k}", rotated[:, k]) for k in range(d)]
    n_rest = len(settings) - d
    fluxes = np.concatenate([
        np.full(d, eigen_fraction * budget / d),
        np.full(n_rest, (1 - eigen_fraction) * budget / n_rest),
    ])
    return AdaptivePlan(settings, fluxes)


def standard_tomography(rho_true, flux_total, seed, options=None):
    """Simulate the standard set at ``flux_total`` spread evenly and run MLE."""
    rho_true = rho_true if isinstance(rho_true, DensityMatrix) else DensityMatrix(rho_true)
    settings = standard_set(rho_true.qubits)
    records = simulate_counts(rho_true, settings, flux_total / len(settings), seed)
    opts = replace(options or MLEOptions(), seed=seed)
    return mle(records, settings, opts).with_target(rho_true)


def adaptive_tomography(rho_true, flux_total, split=0.2, seed=0, options=None):
    """Two-stage adaptive tomography driver for simulated data.

    ``split`` is the fraction of the total flux spent on the standard-set
    first stage. With ``split == 1`` this is exactly ``standard_tomography``.
    The returned result carries the stage-one result in ``stage1``.
    """
    if not 0.0 < split <= 1.0:
        raise ValueError(f"split must lie in (0, 1], got {split}")
    rho_true = rho_true if isinstance(rho_true, DensityMatrix) else DensityMatrix(rho_true)
    first = standard_tomography(rho_true, split * flux_total, seed, options)
    if split == 1.0:
        return first
    std = standard_set(rho_true.qubits)
    records1 = simulate_counts(rho_true, std, split * flux_total / len(std), seed)
    plan = adaptive_plan(first, (1 - split) * flux_total)
    records2 = simulate_counts(rho_true, plan.settings, plan.fluxes, sub_seed(seed, -1))
    opts = replace(options or MLEOptions(), seed=seed)
    final = mle(records1 + records2, std + plan.settings, opts).with_target(rho_true)
    return replace(final, stage1=first)


# -- result documents --------------------------------------------------------------


def result_to_document(res):
    doc = {
        "method": res.method,
        "qubits": res.estimate.qubits,
        "estimate": matrix_to_json(res.estimate.matrix),
        "physical": res.physical,
        "neg_log_likelihood": res.neg_log_likelihood,
        "iterations": res.iterations,
        "converged": res.converged,
        "fidelity_to_target": res.fidelity_to_target,
        "bootstrap": res.bootstrap,
    }
    if res.stage1 is not None:
        doc["stage1"] = result_to_document(res.stage1)
    return doc


def result_from_document(doc):
    try:
        m = matrix_from_json(doc["estimate"], field="estimate")
        method = doc["method"]
        est = DensityMatrix(m, require_psd=method == MAX_LIKELIHOOD)
        return TomographyResult(
            est,
            method,
            neg_log_likelihood=doc.get("neg_log_likelihood"),
            iterations=int(doc.get("iterations", 0)),
            converged=bool(doc.get("converged", True)),
            fidelity_to_target=doc.get("fidelity_to_target"),
            physical=bool(doc.get("physical", True)),
            stage1=result_from_document(doc["stage1"]) if doc.get("stage1") else None,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad tomography result document ({exc})") from None


def dumps_result(res):
    return json.dumps(result_to_document(res), indent=1)


def loads_result(text):
    try:
        return result_from_document(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
