"""Acceptance criteria.

Each test prints exactly one ``PASS``/``FAIL`` line with its statistics, then
asserts. Run with ``pytest tests/test_acceptance.py -s`` to see the lines, or
``python tests/test_acceptance.py`` for a plain summary.
"""

import math
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from polartomo import counts as cnt, optics, ptomo, qmat, states, tomo

DEG = math.pi / 180


def report(number, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}", flush=True)
    assert ok, detail


def infidelity(est, target):
    return 1 - states.fidelity(est, target)


# 1 ---------------------------------------------------------------------------------


def test_noiseless_round_trip():
    start = time.perf_counter()
    rng = np.random.default_rng(1001)
    worst_li, worst_mle = 0.0, 0.0
    for qubits in (1, 2):
        settings = cnt.standard_set(qubits)
        for _ in range(200):
            rho = states.ginibre(rng, qubits)
            recs = cnt.exact_counts(rho, settings, 1e6)
            li = tomo.linear_inversion(recs, settings)
            worst_li = max(worst_li, float(np.max(np.abs(li.estimate.matrix - rho.matrix))))
            worst_mle = max(worst_mle, infidelity(tomo.mle(recs, settings).estimate, rho))
    elapsed = time.perf_counter() - start
    ok = worst_li < 1e-9 and worst_mle < 1e-6 and elapsed < 60
    report(1, ok, f"400 states, max LI error {worst_li:.2e} (<1e-9), "
                  f"max MLE infidelity {worst_mle:.2e} (<1e-6), {elapsed:.1f} s (<60 s)")


# 2 ---------------------------------------------------------------------------------


def test_single_qubit_fidelity_surrogate():
    start = time.perf_counter()
    settings = cnt.standard_set(1)
    fids = []
    # 40 HWP angles x 25 QWP angles; HWP(h) acts through 2h, so [0, 90) covers it
    for i, h in enumerate(np.arange(40) * 90 / 40):
        for j, q in enumerate(np.arange(25) * 180 / 25):
            pipe = optics.PrepPipeline(optics.HERALD, [optics.HWP(h * DEG), optics.QWP(q * DEG)])
            rho = optics.run_pipeline(pipe)
            seed = 25 * i + j
            recs = cnt.simulate_counts(rho, settings, 1e6, seed)
            res = tomo.mle(recs, settings, tomo.MLEOptions(seed=seed))
            fids.append(states.fidelity(res.estimate, rho))
    fids = np.array(fids)
    elapsed = time.perf_counter() - start
    med = float(np.median(fids))
    p95 = float(np.percentile(1 - fids, 95))
    ok = len(fids) == 1000 and med >= 0.998 and elapsed < 600
    report(2, ok, f"{len(fids)} states at flux 1e6, median fidelity {med:.7f} (>=0.998), "
                  f"95th-percentile infidelity {p95:.2e}, min fidelity {fids.min():.6f}, {elapsed:.1f} s (<600 s)")


# 3 ---------------------------------------------------------------------------------


def test_entangled_reconstruction():
    targets = {
        "Phi+": states.phi_plus(),
        "nonmax(0.5, pi/2)": states.nonmax_entangled(0.5, math.pi / 2),
        "mems(0.8)": states.mems(0.8),
        "werner(0.6)": states.werner(0.6),
    }
    settings = cnt.standard_set(2)
    ok = True
    parts = []
    for name, rho in targets.items():
        fids, tangles = [], []
        for seed in range(20):
            recs = cnt.simulate_counts(rho, settings, 1e4, seed)
            res = tomo.mle(recs, settings, tomo.MLEOptions(seed=seed))
            fids.append(states.fidelity(res.estimate, rho))
            tangles.append(states.tangle(res.estimate))
        target_t = states.tangle(rho)
        med_f = float(np.median(fids))
        dt = float(np.median(tangles)) - target_t
        worst = float(np.max(np.abs(np.array(tangles) - target_t)))
        ok &= med_f >= 0.99 and abs(dt) <= 0.03
        parts.append(f"{name}: F~{med_f:.4f} dT~{dt:+.4f} (max |dT| {worst:.3f})")
    report(3, ok, "median fidelity >=0.99 and median tangle within 0.03; " + "; ".join(parts))


# 4 ---------------------------------------------------------------------------------


def test_mems_frontier():
    r, s, t = states.sampled_frontier(10_000)
    bound = states.interpolated_frontier((r, s, t))
    rng = np.random.default_rng(4004)
    violations = 0
    for _ in range(1000):
        rho = states.ginibre(rng, 2)
        violations += states.tangle(rho) > bound(states.linear_entropy(rho)) + 1e-6
    top = states.mems(1.0)
    endpoint_ok = (r[0], s[0], t[0]) == (1.0, 0.0, 1.0)
    endpoint_ok &= abs(states.linear_entropy(top)) < 1e-9 and abs(states.tangle(top) - 1) < 1e-9
    conc_err = max(abs(states.concurrence(states.mems(x)) - x) for x in r)
    mid = states.mems(2 / 3)
    mid_err = max(abs(states.linear_entropy(mid) - 16 / 27), abs(states.tangle(mid) - 4 / 9))
    ok = violations == 0 and endpoint_ok and conc_err < 1e-9 and mid_err < 1e-9
    report(4, ok, f"{violations} violations in 1000 states, r=1 endpoint exact: {endpoint_ok}, "
                  f"max |C(mems(r)) - r| {conc_err:.1e} over {len(r)} r, r=2/3 error {mid_err:.1e}")


# 5 ---------------------------------------------------------------------------------


def test_wootters_vs_pure_oracle():
    rng = np.random.default_rng(5005)
    worst = 0.0
    for _ in range(200):
        psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        psi /= np.linalg.norm(psi)
        a, b, c, d = psi
        oracle = 2 * abs(a * d - b * c)
        worst = max(worst, abs(states.concurrence(states.pure_state(psi)) - oracle))
    report(5, worst < 1e-9, f"200 pure states, max |C_W - 2|ad-bc|| {worst:.1e} (<1e-9)")


# 6 ---------------------------------------------------------------------------------


def random_processes(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    strengths = (0.25, 0.5, 1.0)
    for k in range(n):
        kind = k % 3
        if kind == 0:
            out.append(ptomo.unitary(qmat.haar_unitary(rng, 2)))
        elif kind == 1:
            out.append(ptomo.dephasing(rng.uniform(0, math.pi), strengths[(k // 3) % 3]))
        else:
            out.append(ptomo.amplitude_scaling(1.0, rng.uniform(0.2, 0.9), rng.uniform(0, math.pi)))
    return out


def test_qpt_equivalence():
    procs = random_processes(20, 6006)
    noiseless, noisy = [], []
    for k, p in enumerate(procs):
        a = ptomo.standard_qpt(p, 1e5, noiseless=True)
        b = ptomo.ancilla_qpt(p, 1e5, noiseless=True)
        noiseless.append(qmat.frobenius(a.chi - b.chi))
        a = ptomo.standard_qpt(p, 1e5, seed=k)
        b = ptomo.ancilla_qpt(p, 1e5, seed=k)
        noisy.append(qmat.frobenius(a.chi - b.chi))
    ident = max(
        float(np.max(np.abs(fn(ptomo.identity(), 1e5, noiseless=True).chi - np.diag([1, 0, 0, 0]))))
        for fn in (ptomo.standard_qpt, ptomo.ancilla_qpt)
    )
    ok = max(noiseless) < 1e-8 and max(noisy) < 0.05 and ident < 1e-9
    report(6, ok, f"20 processes, noiseless max ||chi_std - chi_anc||_F {max(noiseless):.1e} (<1e-8), "
                  f"flux 1e5 max {max(noisy):.4f} median {np.median(noisy):.4f} (<0.05), identity error {ident:.1e}")


# 7 ---------------------------------------------------------------------------------


def test_poincare_contracts():
    rng = np.random.default_rng(7007)
    gram_err = 0.0
    for _ in range(20):
        rows = ptomo.poincare_table(ptomo.unitary(qmat.haar_unitary(rng, 2)))
        a = np.array([r.input_bloch for r in rows])
        b = np.array([r.output_bloch for r in rows])
        gram_err = max(gram_err, float(np.max(np.abs(a @ a.T - b @ b.T))))
    rows = {r.label: r for r in ptomo.poincare_table(ptomo.dephasing(0, 1))}
    collapsed = all(rows[x].output_bloch == (0.0, 0.0, 0.0) for x in ("+45", "-45", "L", "R"))
    fixed = rows["H"].output_bloch == (0.0, 0.0, 1.0) and rows["V"].output_bloch == (0.0, 0.0, -1.0)
    ok = gram_err < 1e-9 and collapsed and fixed
    report(7, ok, f"20 unitaries max Gram error {gram_err:.1e} (<1e-9), "
                  f"D/A/L/R at origin: {collapsed}, H/V fixed: {fixed}")


# 8 ---------------------------------------------------------------------------------


def near_pure(rng, qubits, mix=0.01):
    psi = states.random_pure(rng, qubits).matrix
    d = psi.shape[0]
    return states.DensityMatrix((1 - mix) * psi + mix * np.eye(d) / d)


def test_adaptive_tomography():
    parts = []
    ok = True
    for qubits, flux in ((1, 1e4), (2, 1e5)):
        rng = np.random.default_rng(8008 + qubits)
        std, ada = [], []
        for seed in range(100):
            rho = near_pure(rng, qubits)
            std.append(infidelity(tomo.standard_tomography(rho, flux, seed).estimate, rho))
            ada.append(infidelity(tomo.adaptive_tomography(rho, flux, 0.2, seed).estimate, rho))
        m_std, m_ada = float(np.median(std)), float(np.median(ada))
        ok &= m_ada <= m_std
        parts.append(f"{qubits}q flux {flux:.0e}: adaptive {m_ada:.2e} vs standard {m_std:.2e}")
    rho = near_pure(np.random.default_rng(88), 2)
    same = np.array_equal(
        tomo.adaptive_tomography(rho, 1e5, split=1.0, seed=3).estimate.matrix,
        tomo.mle(cnt.simulate_counts(rho, cnt.standard_set(2), 1e5 / 16, 3), cnt.standard_set(2),
                 tomo.MLEOptions(seed=3)).estimate.matrix,
    )
    ok &= same
    report(8, ok, "100 seeds each, median infidelity " + "; ".join(parts) + f"; split=1 bit-identical: {same}")


# 9 ---------------------------------------------------------------------------------


def test_likelihood_gradient():
    rng = np.random.default_rng(9009)
    h = 1e-6
    worst = 0.0
    for k in range(50):
        qubits = 1 + k % 2
        settings = cnt.standard_set(qubits)
        recs = cnt.simulate_counts(states.ginibre(rng, qubits), settings, rng.uniform(50, 5000), k)
        data = tomo._prepare(recs, settings)
        t = rng.standard_normal(4**qubits)
        _, g = tomo.neg_log_likelihood(t, data)
        num = np.empty_like(t)
        for i in range(t.size):
            e = np.zeros_like(t)
            e[i] = h
            num[i] = (tomo.neg_log_likelihood(t + e, data, False) - tomo.neg_log_likelihood(t - e, data, False)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - num) / np.linalg.norm(num)))
    report(9, worst < 1e-5, f"50 points, max relative gradient error {worst:.1e} (<1e-5)")


# 10 --------------------------------------------------------------------------------

CLI_RUNS = [
    ["simulate", "--source", "theta_p=30,phi=45", "--hwp", "10@1", "--decoherer", "0:0.2@collective", "--seed", "10"],
    ["simulate", "--herald", "--hwp", "22.5", "--qwp", "30", "--flux", "5000", "--seed", "10"],
    ["tomo", "counts.csv", "--seed", "10"],
    ["tomo", "counts.csv", "--method", "inversion", "--seed", "10"],
    ["plane", "--samples", "100", "--frontier-points", "1000", "--seed", "10"],
    ["qpt", "--process", "unitary:qwp:30+loss:1:0.7:20", "--flux", "1e4", "--mesh", "8", "--seed", "10"],
    ["qpt", "--process", "dephase:0:0.5", "--noiseless", "--seed", "10"],
]


def _cli(argv, cwd):
    env = dict(os.environ)
    env.pop("POLARTOMO_OUT", None)
    return subprocess.run([sys.executable, "-m", "polartomo.cli", *argv, "--out", "out"],
                          cwd=cwd, capture_output=True, env=env)


def test_cli_determinism():
    recs = cnt.simulate_counts(states.werner(0.8), cnt.standard_set(2), 2000, seed=10)
    text = cnt.write_counts(recs)
    mismatched = []
    files = 0
    with tempfile.TemporaryDirectory() as tmp:
        for k, argv in enumerate(CLI_RUNS):
            results = []
            for rep in ("a", "b"):
                d = Path(tmp) / f"{k}{rep}"
                d.mkdir()
                (d / "counts.csv").write_text(text)
                proc = _cli(argv, d)
                outputs = {p.name: p.read_bytes() for p in sorted((d / "out").iterdir())} if proc.returncode == 0 else None
                results.append((proc.returncode, proc.stdout, outputs))
            files += len(results[0][2] or ())
            if results[0] != results[1] or results[0][0] != 0:
                mismatched.append(argv[0])
    ok = not mismatched
    report(10, ok, f"{len(CLI_RUNS)} commands run twice, {files} output files per run compared, "
                   f"mismatches: {mismatched or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
