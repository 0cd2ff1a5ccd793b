import math

import numpy as np
import pytest

from polezoo.agent import N_PARAMS, devectorize, survival_time
from polezoo.errors import ContractViolation
from polezoo.repair import (CRITERIA, DamagedNet, degradation_sweep, degrade,
                            missing_criterion, patch, repair, whole_criterion)
from polezoo.rng import make_rng
from polezoo.vae import GenTrainConfig, train_gen
from polezoo.zoo import BudgetDistribution, build_zoo


@pytest.fixture(scope="module")
def zoo_and_model():
    z = build_zoo(12, budget=BudgetDistribution(buckets=((5, 20, 0.4), (150, 350, 0.6))),
                  seed=99, eval_episodes=40)
    model, _ = train_gen(z, GenTrainConfig(epochs=10, seed=7))
    return z, model


def hand_damaged(existing_positions, existing_values):
    """DamagedNet with the given positions kept, everything else masked."""
    w = np.zeros(N_PARAMS)
    mask = np.ones(N_PARAMS, dtype=bool)
    for pos, val in zip(existing_positions, existing_values):
        w[pos] = val
        mask[pos] = False
    return DamagedNet(weights=w, missing_mask=mask, original_survival=100.0)


def test_degrade_zero_fraction_is_identity():
    rng = make_rng(0)
    w = rng.normal(size=N_PARAMS)
    d = degrade(w, 0.0, make_rng(1), eval_episodes=20)
    assert not d.missing_mask.any()
    assert np.array_equal(d.weights, w)
    assert 1.0 <= d.original_survival <= 200.0


def test_degrade_full_fraction_zeroes_everything():
    w = make_rng(2).normal(size=N_PARAMS)
    d = degrade(w, 1.0, make_rng(3), eval_episodes=20)
    assert d.missing_mask.all()
    assert np.array_equal(d.weights, np.zeros(N_PARAMS))
    # the fully-zeroed policy is the constant-action baseline
    st = survival_time(devectorize(d.weights), make_rng(4), n_episodes=100)
    assert st == pytest.approx(9.0, abs=2.0)


def test_degrade_half_fraction_masks_exactly_106():
    w = make_rng(5).normal(size=N_PARAMS)
    d = degrade(w, 0.5, make_rng(6), eval_episodes=10)
    assert d.missing_mask.sum() == 106
    assert np.array_equal(d.weights[d.missing_mask], np.zeros(106))
    assert np.array_equal(d.weights[~d.missing_mask], w[~d.missing_mask])


def test_degrade_rejects_bad_fraction():
    with pytest.raises(ContractViolation):
        degrade(np.zeros(N_PARAMS), 1.5, make_rng(0))


def test_missing_criterion_hand_case():
    # existing weights (1, 2, 3) vs candidate (1, 0, 3) -> (2-0)^2 = 4
    d = hand_damaged([0, 1, 2], [1.0, 2.0, 3.0])
    candidate = np.zeros(N_PARAMS)
    candidate[0], candidate[1], candidate[2] = 1.0, 0.0, 3.0
    assert missing_criterion(d, candidate) == 4.0
    assert missing_criterion(d, d.weights) == 0.0


def test_missing_criterion_ignores_masked_positions():
    d = hand_damaged([0, 1, 2], [1.0, 2.0, 3.0])
    candidate = make_rng(7).normal(size=N_PARAMS)
    score = missing_criterion(d, candidate)
    noisy = candidate.copy()
    noisy[d.missing_mask] += make_rng(8).normal(size=int(d.missing_mask.sum())) * 100
    assert missing_criterion(d, noisy) == score


def test_whole_criterion_decomposition_identity():
    rng = make_rng(9)
    for _ in range(1000):
        w = rng.normal(size=N_PARAMS)
        d = degrade(w, rng.uniform(0, 1), np.random.Generator(np.random.PCG64(rng.integers(2**32))),
                    eval_episodes=1)
        c = rng.normal(size=N_PARAMS)
        masked_norm = float(np.sum(c[d.missing_mask] ** 2))
        assert abs(whole_criterion(d, c) - (missing_criterion(d, c) + masked_norm)) < 1e-10


def test_whole_prefers_small_masked_norm_between_equal_candidates():
    d = hand_damaged([0, 1], [1.0, -1.0])
    small = np.full(N_PARAMS, 0.01)
    big = np.full(N_PARAMS, 5.0)
    small[:2] = big[:2] = [1.0, -1.0]
    assert whole_criterion(d, small) < whole_criterion(d, big)
    assert missing_criterion(d, small) == missing_criterion(d, big) == 0.0


def test_patch_only_writes_masked_positions():
    rng = make_rng(10)
    w = rng.normal(size=N_PARAMS)
    d = degrade(w, 0.4, make_rng(11), eval_episodes=1)
    candidate = rng.normal(size=N_PARAMS)
    patched = patch(d, candidate)
    keep = ~d.missing_mask
    assert np.array_equal(patched[keep], d.weights[keep])  # bit-identical
    assert np.array_equal(patched[d.missing_mask], candidate[d.missing_mask])


def test_repair_zero_budget_fails_cleanly(zoo_and_model):
    z, model = zoo_and_model
    d = degrade(z.records[0].weights, 0.5, make_rng(12), eval_episodes=10)
    outcome = repair(d, model, make_rng(13), source=z, sample_budget=0)
    assert outcome.success is False
    assert outcome.samples_used == 0
    assert outcome.candidate is None
    assert math.isinf(outcome.st_error)


def test_repair_zero_degradation_succeeds_quickly(zoo_and_model):
    z, model = zoo_and_model
    d = degrade(z.records[0].weights, 0.0, make_rng(14), eval_episodes=100)
    outcome = repair(d, model, make_rng(15), source=z, sample_budget=20, k=5,
                     eval_episodes=100)
    # patching changes nothing, so the first candidate already matches within noise
    assert outcome.success is True
    assert outcome.samples_used == 1
    assert outcome.st_error < 5.0


def test_repair_outcome_invariant_success_iff_error_below_epsilon(zoo_and_model):
    z, model = zoo_and_model
    rng = make_rng(16)
    for idx in range(4):
        d = degrade(z.records[idx].weights, 0.6, rng, eval_episodes=20)
        outcome = repair(d, model, rng, source=z, sample_budget=20, k=3,
                         epsilon=5.0, eval_episodes=20)
        assert outcome.success == (outcome.st_error < 5.0)
        assert outcome.samples_used <= 3


def test_repair_deterministic_per_seed(zoo_and_model):
    z, model = zoo_and_model
    d = degrade(z.records[1].weights, 0.5, make_rng(17), eval_episodes=20)
    a = repair(d, model, make_rng(18), source=z, sample_budget=15, k=3, eval_episodes=20)
    b = repair(d, model, make_rng(18), source=z, sample_budget=15, k=3, eval_episodes=20)
    assert a.success == b.success
    assert a.st_error == b.st_error
    assert a.samples_used == b.samples_used


def test_repair_respects_criterion_choice(zoo_and_model):
    z, model = zoo_and_model
    d = degrade(z.records[2].weights, 0.3, make_rng(19), eval_episodes=10)
    for name, criterion in CRITERIA.items():
        outcome = repair(d, model, make_rng(20), source=z, sample_budget=10, k=2,
                         criterion=criterion, eval_episodes=10)
        assert outcome.samples_used >= 1


def test_degradation_sweep_covers_levels_and_criteria(zoo_and_model):
    z, model = zoo_and_model
    rows = degradation_sweep(z.records[0].weights, model, make_rng(21), source=z,
                             fractions=[0.2, 0.8], sample_budget=10, k=2,
                             eval_episodes=10)
    assert len(rows) == 4  # 2 levels x 2 criteria
    assert {r[1] for r in rows} == {"missing", "whole"}
    for fraction, criterion, success, st_error, samples_used in rows:
        assert fraction in (0.2, 0.8)
        assert isinstance(success, bool)
        assert st_error >= 0.0
        assert samples_used <= 2
