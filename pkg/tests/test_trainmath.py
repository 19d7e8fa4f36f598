import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copydesc.exceptions import ValidationError
from copydesc.trainmath import (
    ScheduleConfig,
    batch_hard_triplet,
    gem_pool,
    lr_ratio,
    schedule_rows,
    soft_cross_entropy,
)
from oracles import (
    entropy,
    oracle_batch_hard_triplet,
    oracle_gem,
    oracle_lr_ratio,
    oracle_soft_cross_entropy,
)


class TestGemPool:
    def test_p1_is_mean(self):
        assert gem_pool([[1.0, 2.0, 3.0]], p=1.0)[0] == 2.0

    def test_p2_frozen_value(self):
        # ((1 + 4 + 9) / 3) ** 0.5
        assert gem_pool([[1.0, 2.0, 3.0]], p=2.0)[0] == 2.1602468994692867

    def test_p64_frozen_value(self):
        # Well below the max of 3: (1/3)^(1/64) = 0.983 still bites at p=64.
        got = gem_pool([[1.0, 2.0, 3.0]], p=64.0)[0]
        assert got == pytest.approx(2.948942028610598, abs=1e-12)
        assert 3.0 - got > 5e-2

    def test_huge_p_approaches_max(self):
        got = gem_pool([[1.0, 2.0, 3.0]], p=4096.0)[0]
        assert 0.0 < 3.0 - got < 1e-3

    def test_matches_plain_oracle(self, rng):
        for _ in range(25):
            vals = rng.uniform(0.0, 4.0, size=int(rng.integers(1, 30)))
            p = float(rng.uniform(1.0, 8.0))
            assert gem_pool(vals[None, :], p=p)[0] == pytest.approx(
                oracle_gem(vals.tolist(), p), rel=1e-12
            )

    def test_monotone_in_p(self, rng):
        vals = rng.uniform(0.0, 2.0, size=20)[None, :]
        results = [gem_pool(vals, p=p)[0] for p in (1.0, 2.0, 4.0, 16.0, 128.0)]
        assert results == sorted(results)

    def test_bounded_by_mean_and_max(self, rng):
        vals = rng.uniform(0.0, 5.0, size=17)
        got = gem_pool(vals[None, :], p=3.0)[0]
        assert vals.mean() <= got + 1e-12
        assert got <= vals.max() + 1e-12

    def test_per_channel_exponents(self):
        acts = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        out = gem_pool(acts, p=[1.0, 2.0])
        assert out[0] == 2.0
        assert out[1] == 2.1602468994692867

    def test_spatial_input_flattened(self):
        grid = np.arange(1.0, 10.0).reshape(1, 3, 3)
        flat = np.arange(1.0, 10.0).reshape(1, 9)
        assert gem_pool(grid, p=3.0)[0] == gem_pool(flat, p=3.0)[0]

    def test_overflow_guard_at_large_magnitudes(self):
        # Unscaled powers of 1e30 at p=8 would overflow float64.
        got = gem_pool([[1e30, 1e30]], p=8.0)[0]
        assert got == pytest.approx(1e30, rel=1e-12)

    def test_zero_channel_stays_zero(self):
        out = gem_pool([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]], p=3.0)
        assert out[0] == 0.0
        assert out[1] > 0.0

    def test_validations(self):
        with pytest.raises(ValidationError):
            gem_pool([[1.0, 2.0]], p=0.5)
        with pytest.raises(ValidationError):
            gem_pool([[-0.1, 2.0]], p=3.0)
        with pytest.raises(ValidationError):
            gem_pool([[np.nan, 1.0]], p=3.0)
        with pytest.raises(ValidationError):
            gem_pool(np.ones((2, 2, 2, 2)), p=3.0)
        with pytest.raises(ValidationError):
            gem_pool(np.ones((2, 0)), p=3.0)
        with pytest.raises(ValidationError):
            gem_pool(np.ones((3, 4)), p=[1.0, 2.0])

    @settings(max_examples=50, deadline=None)
    @given(
        values=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=24),
        p=st.floats(1.0, 64.0),
    )
    def test_property_oracle_agreement(self, values, p):
        got = gem_pool(np.array(values)[None, :], p=p)[0]
        want = oracle_gem(values, p)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


class TestSchedule:
    def test_frozen_branch_values(self):
        assert lr_ratio(0.0) == 0.01
        assert lr_ratio(2.5) == 0.505
        assert lr_ratio(5.0) == 1.0
        assert lr_ratio(7.0) == 1.0
        assert lr_ratio(10.0) == 1.0
        assert lr_ratio(17.5) == 0.5

    def test_matches_oracle_on_grid(self):
        for epoch in np.linspace(0.0, 24.999, 200):
            assert lr_ratio(float(epoch)) == pytest.approx(
                oracle_lr_ratio(float(epoch)), abs=1e-15
            )

    def test_continuity_at_boundaries(self):
        eps = 1e-9
        for boundary in (5.0, 10.0):
            left = lr_ratio(boundary - eps)
            right = lr_ratio(boundary + eps)
            assert abs(left - right) < 1e-6

    def test_cosine_tail_decreases_toward_zero(self):
        tail = [lr_ratio(e) for e in np.linspace(10.0, 24.9999, 50)]
        assert all(a >= b for a, b in zip(tail, tail[1:]))
        assert tail[-1] < 1e-7

    def test_epoch_domain_is_half_open(self):
        with pytest.raises(ValidationError):
            lr_ratio(25.0)
        with pytest.raises(ValidationError):
            lr_ratio(-0.001)
        lr_ratio(24.999999)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            ScheduleConfig(warmup_epochs=0.0)
        with pytest.raises(ValidationError):
            ScheduleConfig(plateau_end=30.0)
        with pytest.raises(ValidationError):
            ScheduleConfig(warmup_epochs=12.0, plateau_end=10.0)
        with pytest.raises(ValidationError):
            ScheduleConfig(start_ratio=0.0)
        with pytest.raises(ValidationError):
            ScheduleConfig(base_lr=0.0)

    def test_schedule_rows_sampling(self):
        cfg = ScheduleConfig()
        rows = list(schedule_rows(cfg, iterations_per_epoch=4))
        assert len(rows) == 100
        it0 = rows[0]
        assert it0 == (0, 0.0, 0.01, 0.01 * cfg.base_lr)
        it10 = rows[10]
        assert it10[1] == 2.5
        assert it10[2] == 0.505
        with pytest.raises(ValidationError):
            list(schedule_rows(cfg, iterations_per_epoch=0))

    def test_custom_config_branches(self):
        cfg = ScheduleConfig(warmup_epochs=2.0, plateau_end=4.0, total_epochs=8.0,
                             start_ratio=0.5)
        assert lr_ratio(0.0, cfg) == 0.5
        assert lr_ratio(1.0, cfg) == 0.75
        assert lr_ratio(3.0, cfg) == 1.0
        assert lr_ratio(6.0, cfg) == 0.5


class TestBatchHardTriplet:
    def test_hand_case_frozen(self):
        # Two classes on a line: anchors 0/1 (class a) and 2/3 (class b).
        # Inner anchors 1 and 2 see pos=1, neg=1 -> hinge 0.3; the outer two
        # see neg=2 -> hinge 0. Mean = 0.15.
        feats = np.array([[0.0], [1.0], [2.0], [3.0]])
        labels = ["a", "a", "b", "b"]
        got = batch_hard_triplet(feats, labels, margin=0.3)
        assert got == pytest.approx(oracle_batch_hard_triplet(feats, labels, 0.3), rel=1e-12)
        assert got == pytest.approx(0.15, abs=1e-12)

    def test_selfcheck_hand_value(self):
        # Rectangle corners: every anchor has pos=2, neg=1, so each hinge is
        # 0.3 + 2 - 1 and the mean keeps that float exactly.
        feats = np.array([[0.0, 0.0], [0.0, 2.0], [1.0, 0.0], [1.0, 2.0]])
        got = batch_hard_triplet(feats, [0, 0, 1, 1], margin=0.3)
        assert got == 1.2999999999999998

    def test_matches_oracle(self, rng):
        for _ in range(20):
            n_classes = int(rng.integers(2, 5))
            per_class = int(rng.integers(2, 5))
            labels = np.repeat(np.arange(n_classes), per_class)
            feats = rng.standard_normal((len(labels), 8))
            got = batch_hard_triplet(feats, labels, margin=0.3)
            want = oracle_batch_hard_triplet(feats, labels, 0.3)
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)

    def test_zero_when_classes_far_apart(self):
        feats = np.array([[0.0], [0.1], [100.0], [100.1]])
        assert batch_hard_triplet(feats, [0, 0, 1, 1], margin=0.3) == 0.0

    def test_validations(self):
        ok = np.zeros((4, 2))
        with pytest.raises(ValidationError):
            batch_hard_triplet(ok, [0, 0, 0, 0], margin=0.3)
        with pytest.raises(ValidationError):
            batch_hard_triplet(ok, [0, 0, 1, 2], margin=0.3)
        with pytest.raises(ValidationError):
            batch_hard_triplet(ok, [0, 0, 1, 1], margin=-0.1)
        with pytest.raises(ValidationError):
            batch_hard_triplet(np.zeros((4, 2, 2)), [0, 0, 1, 1], margin=0.3)
        with pytest.raises(ValidationError):
            batch_hard_triplet(ok, [0, 0, 1], margin=0.3)
        bad = ok.copy()
        bad[0, 0] = np.inf
        with pytest.raises(ValidationError):
            batch_hard_triplet(bad, [0, 0, 1, 1], margin=0.3)


class TestSoftCrossEntropy:
    def test_uniform_two_class_is_ln2(self):
        got = soft_cross_entropy([0.0, 0.0], [0.5, 0.5])
        assert got == 0.6931471805599453
        assert got == pytest.approx(math.log(2.0), abs=1e-15)

    def test_one_hot_reduces_to_nll(self):
        logits = [2.0, -1.0, 0.5]
        got = soft_cross_entropy(logits, [0.0, 1.0, 0.0])
        z = np.array(logits)
        want = -(z[1] - np.log(np.exp(z).sum()))
        assert got == pytest.approx(want, rel=1e-12)

    def test_matches_oracle(self, rng):
        for _ in range(25):
            n = int(rng.integers(2, 12))
            logits = rng.standard_normal(n) * 3.0
            raw = rng.uniform(0.0, 1.0, size=n)
            target = raw / raw.sum()
            got = soft_cross_entropy(logits, target)
            want = oracle_soft_cross_entropy(logits.tolist(), target.tolist())
            assert got == pytest.approx(want, rel=1e-12)

    def test_gibbs_inequality(self, rng):
        # Cross-entropy >= target entropy, equality iff softmax(z) == target.
        for _ in range(10):
            n = int(rng.integers(2, 8))
            logits = rng.standard_normal(n)
            raw = rng.uniform(0.01, 1.0, size=n)
            target = raw / raw.sum()
            assert soft_cross_entropy(logits, target) >= entropy(target) - 1e-12
        matched = np.log(np.array([0.2, 0.3, 0.5]))
        assert soft_cross_entropy(matched, [0.2, 0.3, 0.5]) == pytest.approx(
            entropy([0.2, 0.3, 0.5]), rel=1e-12
        )

    def test_huge_logits_stable(self):
        got = soft_cross_entropy([1000.0, 0.0], [1.0, 0.0])
        assert got == pytest.approx(0.0, abs=1e-12)
        got = soft_cross_entropy([1000.0, 0.0], [0.0, 1.0])
        assert got == pytest.approx(1000.0, rel=1e-12)

    def test_validations(self):
        with pytest.raises(ValidationError):
            soft_cross_entropy([0.0, 0.0], [0.7, 0.7])
        with pytest.raises(ValidationError):
            soft_cross_entropy([0.0, 0.0], [-0.5, 1.5])
        with pytest.raises(ValidationError):
            soft_cross_entropy([0.0], [0.5, 0.5])
        with pytest.raises(ValidationError):
            soft_cross_entropy([np.nan, 0.0], [0.5, 0.5])
        with pytest.raises(ValidationError):
            soft_cross_entropy([[0.0, 0.0]], [[0.5, 0.5]])
