import json
import random

import numpy as np
import pytest

from polartomo import counts as cnt, states, tomo
from polartomo.errors import BudgetTooSmall, RankDeficient, UnknownLabel


def infidelity(res, target):
    return 1 - states.fidelity(res.estimate, target)


def test_inversion_exact_single_qubit():
    h = states.pure_state([1, 0])
    s = cnt.standard_set(1)
    res = tomo.linear_inversion(cnt.exact_counts(h, s, 1000), s)
    assert res.estimate.allclose(h, atol=1e-12)
    assert res.trace_scale == pytest.approx(1)


def test_inversion_exact_bell():
    s = cnt.standard_set(2)
    res = tomo.linear_inversion(cnt.exact_counts(states.phi_plus(), s, 1e4), s)
    assert res.estimate.allclose(states.phi_plus(), atol=1e-12)


def test_inversion_exact_random(rng):
    s = cnt.standard_set(2)
    for _ in range(200):
        rho = states.ginibre(rng, 2)
        res = tomo.linear_inversion(cnt.exact_counts(rho, s, 777.0), s)
        assert np.max(np.abs(res.estimate.matrix - rho.matrix)) < 1e-10


def test_inversion_can_be_unphysical():
    s = cnt.standard_set(2)
    unphysical = 0
    for seed in range(20):
        res = tomo.linear_inversion(cnt.simulate_counts(states.phi_plus(), s, 100, seed), s)
        unphysical += not res.physical
    assert unphysical > 0


def test_mle_noiseless_mems():
    target = states.mems(0.8)
    s = cnt.standard_set(2)
    res = tomo.mle(cnt.exact_counts(target, s, 1e6), s)
    assert res.converged
    assert infidelity(res, target) < 1e-5
    assert res.estimate.physical


def test_mle_bell_with_noise():
    s = cnt.standard_set(2)
    target = states.phi_plus()
    recs = cnt.simulate_counts(target, s, 1e4, seed=42)
    res = tomo.mle(recs, s).with_target(target)
    assert res.fidelity_to_target >= 0.99
    assert res.method == tomo.MAX_LIKELIHOOD


def test_mle_single_nonzero_count():
    s = cnt.standard_set(2)
    recs = [cnt.CountRecord(x.label, 1000 if x.label == "HH" else 0, 1000.0) for x in s]
    res = tomo.mle(recs, s)
    assert np.linalg.eigvalsh(res.estimate.matrix).min() >= -1e-10
    diag = np.diag(res.estimate.matrix).real
    assert np.argmax(diag) == 0
    # DH, HD, HR and RH also saw nothing, which |HH> cannot explain; the MLE beats it
    data = tomo._prepare(recs, s)
    hh = np.diag([1, 1e-9, 1e-9, 1e-9]) / (1 + 3e-9)
    nll_hh = tomo.neg_log_likelihood(tomo.matrix_to_t(tomo.factorize(hh)), data, False)
    assert res.neg_log_likelihood < nll_hh


def test_init_from_inversion_is_valid():
    s = cnt.standard_set(2)
    recs = cnt.simulate_counts(states.phi_plus(), s, 100, seed=3)
    p = tomo.init_from_inversion(recs, s)
    rho = p.rho
    assert np.allclose(rho, rho.conj().T)
    assert np.trace(rho).real == pytest.approx(1)
    assert np.min(np.linalg.eigvalsh(rho)) > 0
    tm = p.T
    assert np.allclose(np.triu(tm, 1), 0)


def test_parameter_round_trip(rng):
    for _ in range(20):
        rho = states.ginibre(rng, 2).matrix
        tm = tomo.factorize(rho)
        assert np.allclose(tm.conj().T @ tm, rho)
        assert np.allclose(tomo.t_to_matrix(tomo.matrix_to_t(tm)), tm)


@pytest.mark.parametrize("free_scale", [False, True])
def test_gradient_matches_finite_differences(rng, free_scale):
    s = cnt.standard_set(2)
    rho = states.ginibre(rng, 2)
    recs = cnt.simulate_counts(rho, s, 500, seed=1)
    data = tomo._prepare(recs, s)
    h = 1e-6
    worst = 0.0
    for _ in range(50 if not free_scale else 10):
        t = rng.standard_normal(16)
        _, g = tomo.neg_log_likelihood(t, data, free_scale=free_scale)
        num = np.empty_like(t)
        for k in range(t.size):
            e = np.zeros_like(t)
            e[k] = h
            num[k] = (
                tomo.neg_log_likelihood(t + e, data, False, free_scale)
                - tomo.neg_log_likelihood(t - e, data, False, free_scale)
            ) / (2 * h)
        worst = max(worst, np.linalg.norm(g - num) / np.linalg.norm(num))
    assert worst < 1e-5


def test_mle_always_physical(rng):
    s = cnt.standard_set(2)
    for seed in range(15):
        rho = states.ginibre(rng, 2, rank=1 + seed % 4)
        res = tomo.mle(cnt.simulate_counts(rho, s, 200, seed), s)
        w = np.linalg.eigvalsh(res.estimate.matrix)
        assert w.min() > -1e-9
        assert np.trace(res.estimate.matrix).real == pytest.approx(1)


@pytest.mark.slow
def test_mle_consistency_with_flux():
    target = states.werner(0.7)
    s = cnt.standard_set(2)
    opts = tomo.MLEOptions(restarts=1)
    medians = []
    for flux in (1e2, 1e3, 1e4):
        vals = [infidelity(tomo.mle(cnt.simulate_counts(target, s, flux, seed), s, opts), target)
                for seed in range(50)]
        medians.append(np.median(vals))
    assert medians[0] > medians[1] > medians[2]


def test_record_order_does_not_matter():
    s = cnt.standard_set(2)
    recs = cnt.simulate_counts(states.werner(0.5), s, 1000, seed=8)
    a = tomo.mle(recs, s)
    shuffled = list(recs)
    random.Random(4).shuffle(shuffled)
    b = tomo.mle(shuffled, s)
    assert np.array_equal(a.estimate.matrix, b.estimate.matrix)


def test_duplicates_aggregate():
    s = cnt.standard_set(1)
    recs = [cnt.CountRecord(x.label, c, 100.0) for x, c in zip(s, [90, 10, 50, 50, 40, 60])]
    split = []
    for r in recs:
        split += [cnt.CountRecord(r.setting_label, r.counts / 2, 50.0)] * 2
    a = tomo.linear_inversion(recs, s)
    b = tomo.linear_inversion(split, s)
    assert np.allclose(a.estimate.matrix, b.estimate.matrix, atol=1e-14)


def test_rank_deficient():
    s = [cnt.setting(x) for x in "HVD"]
    recs = [cnt.CountRecord(x.label, 10, 100.0) for x in s]
    with pytest.raises(RankDeficient):
        tomo.mle(recs, s)
    with pytest.raises(RankDeficient):
        tomo.linear_inversion([], cnt.standard_set(1))


def test_unknown_label():
    with pytest.raises(UnknownLabel):
        tomo.mle([cnt.CountRecord("HH", 1, 1.0)], cnt.standard_set(1))


def test_mub_bases_unbiased():
    for q in (1, 2):
        bases = tomo.mub_bases(q)
        d = 2**q
        assert len(bases) == d + 1
        for i, a in enumerate(bases):
            assert np.allclose(a.conj().T @ a, np.eye(d), atol=1e-12)
            for b in bases[i + 1:]:
                assert np.allclose(np.abs(a.conj().T @ b) ** 2, 1 / d, atol=1e-12)


def test_plan_for_mixed_state_is_standard():
    plan = tomo.adaptive_plan(states.maximally_mixed(2), 1e4)
    assert [s.label for s in plan.settings] == [s.label for s in cnt.standard_set(2)]
    assert np.allclose(plan.fluxes, 1e4 / 16)


def test_plan_for_h_weights_eigenbasis():
    plan = tomo.adaptive_plan(states.pure_state([1, 0]), 1000)
    hv = sum(f for s, f in zip(plan.settings, plan.fluxes)
             if np.allclose(s.projector, np.diag([1, 0])) or np.allclose(s.projector, np.diag([0, 1])))
    assert hv >= 500 - 1e-9
    assert plan.fluxes.sum() == pytest.approx(1000)
    assert cnt.gram_rank(plan.settings) == 4


def test_plan_for_two_qubits_is_complete(rng):
    plan = tomo.adaptive_plan(states.ginibre(rng, 2), 1e4)
    assert cnt.gram_rank(plan.settings) == 16
    assert len(plan.settings) == 20


def test_plan_budget_too_small():
    with pytest.raises(BudgetTooSmall):
        tomo.adaptive_plan(states.pure_state([1, 0]), 3)


def test_adaptive_full_split_is_standard():
    rho = states.pure_state([0.6, 0.8])
    a = tomo.adaptive_tomography(rho, 1e4, split=1.0, seed=5)
    b = tomo.standard_tomography(rho, 1e4, seed=5)
    assert np.array_equal(a.estimate.matrix, b.estimate.matrix)
    with pytest.raises(ValueError):
        tomo.adaptive_tomography(rho, 1e4, split=0.0)


@pytest.mark.xfail(strict=True, reason="seed 7 stage-one data is unusually balanced; see decisions ledger")
def test_adaptive_refines_stage_one():
    h = states.pure_state([1, 0])
    res = tomo.adaptive_tomography(h, 1e5, split=0.2, seed=7)
    assert res.stage1 is not None
    assert infidelity(res, h) <= infidelity(res.stage1, h)


@pytest.mark.slow
def test_adaptive_refines_stage_one_in_median():
    h = states.pure_state([1, 0])
    final, first = [], []
    for seed in range(30):
        res = tomo.adaptive_tomography(h, 1e5, split=0.2, seed=seed)
        final.append(infidelity(res, h))
        first.append(infidelity(res.stage1, h))
    assert np.median(final) < np.median(first)


def test_result_document_round_trip():
    s = cnt.standard_set(2)
    res = tomo.adaptive_tomography(states.phi_plus(), 1e4, seed=1)
    back = tomo.loads_result(tomo.dumps_result(res))
    assert np.array_equal(back.estimate.matrix, res.estimate.matrix)
    assert back.fidelity_to_target == res.fidelity_to_target
    assert back.stage1 is not None
    li = tomo.linear_inversion(cnt.simulate_counts(states.phi_plus(), s, 50, 0), s)
    doc = json.loads(tomo.dumps_result(li))
    assert tomo.result_from_document(doc).physical == li.physical


def test_reconstruct_dispatch():
    s = cnt.standard_set(1)
    recs = cnt.exact_counts(states.pure_state([1, 1]), s, 100)
    assert tomo.reconstruct(recs, s, "inversion").method == tomo.LINEAR_INVERSION
    with pytest.raises(ValueError):
        tomo.reconstruct(recs, s, "bayes")
