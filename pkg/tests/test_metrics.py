"""Neural-collapse statistics: values at exact collapse, invariances, oracles."""

import numpy as np
import pytest

from etfnc.batches import FeatureBatch
from etfnc.etf import generate_etf
from etfnc.metrics import (
    NC_FIELDS,
    class_and_global_means,
    cosine_panels,
    duality_gap,
    nc4_agreement,
    nc_report,
    self_duality,
    within_class_variability,
)


def collapsed_batch(d=6, K=4, per_class=2, seed=1, scale=1.0):
    """Features exactly at uniform-length ETF vertices, balanced.

    per_class stays a power of two so the class means reproduce the
    vertices bit-exactly (mean of 2^m identical doubles is exact).
    """
    frame = generate_etf(d, K, seed)
    feats = np.repeat(scale * frame.columns.T, per_class, axis=0)
    labels = np.repeat(np.arange(K), per_class)
    return FeatureBatch(feats, labels, K), frame


class TestMeans:
    def test_single_sample_per_class(self, rng):
        feats = rng.standard_normal((3, 4))
        batch = FeatureBatch(feats, np.arange(3), 3)
        means, h_g = class_and_global_means(batch)
        np.testing.assert_allclose(means, feats)
        np.testing.assert_allclose(h_g, feats.mean(axis=0))

    def test_duplication_invariance(self, rng):
        feats = rng.standard_normal((6, 3))
        labels = np.array([0, 0, 1, 1, 2, 2])
        batch = FeatureBatch(feats, labels, 3)
        doubled = FeatureBatch(np.vstack([feats, feats]), np.hstack([labels, labels]), 3)
        m1, g1 = class_and_global_means(batch)
        m2, g2 = class_and_global_means(doubled)
        np.testing.assert_allclose(m1, m2, atol=1e-15)
        np.testing.assert_allclose(g1, g2, atol=1e-15)

    def test_global_mean_is_sample_weighted(self):
        feats = np.array([[1.0], [1.0], [1.0], [5.0]])
        labels = np.array([0, 0, 0, 1])
        batch = FeatureBatch(feats, labels, 2)
        _, h_g = class_and_global_means(batch)
        np.testing.assert_allclose(h_g, [2.0])  # (3*1 + 5)/4, not (1+5)/2

    def test_empty_class_named(self):
        batch = FeatureBatch(np.ones((2, 3)), np.array([0, 2]), 3)
        with pytest.raises(ValueError, match="class 1"):
            class_and_global_means(batch)


class TestWithinClassVariability:
    def test_collapsed_is_zero(self):
        batch, _ = collapsed_batch()
        _, trace = within_class_variability(batch)
        assert trace == 0.0

    def test_hand_computed_outer_product(self):
        feats = np.array([[1.0, 0.0], [-1.0, 0.0]])
        batch = FeatureBatch(feats, np.array([0, 0]), 1)
        sigma, trace = within_class_variability(batch)
        np.testing.assert_allclose(sigma, [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)
        np.testing.assert_allclose(trace, 1.0)

    def test_trace_rotation_invariant(self, rng):
        feats = rng.standard_normal((12, 5))
        labels = rng.integers(3, size=12)
        batch = FeatureBatch(feats, labels, 3)
        _, t1 = within_class_variability(batch)
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        _, t2 = within_class_variability(FeatureBatch(feats @ q.T, labels, 3))
        np.testing.assert_allclose(t1, t2, atol=1e-10)


class TestCosinePanels:
    def test_collapsed_etf_values(self):
        batch, frame = collapsed_batch()
        W = frame.columns
        (ff_avg, ff_std), (fc_avg, fc_std) = cosine_panels(batch, W)
        np.testing.assert_allclose(ff_avg, -1 / 3, atol=1e-12)
        np.testing.assert_allclose(fc_avg, -1 / 3, atol=1e-12)
        assert ff_std < 1e-12 and fc_std < 1e-12

    def test_two_class_antipodal(self):
        feats = np.array([[1.0, 0.0], [-1.0, 0.0]])
        batch = FeatureBatch(feats, np.array([0, 1]), 2)
        (ff_avg, ff_std), _ = cosine_panels(batch, np.eye(2))
        np.testing.assert_allclose(ff_avg, -1.0, atol=1e-12)
        assert ff_std < 1e-12

    def test_class_permutation_invariance(self, rng):
        feats = rng.standard_normal((12, 4))
        labels = np.repeat(np.arange(4), 3)
        W = rng.standard_normal((4, 4))
        batch = FeatureBatch(feats, labels, 4)
        perm = np.array([2, 0, 3, 1])
        batch_p = FeatureBatch(feats, perm[labels], 4)
        W_p = np.empty_like(W)
        W_p[:, perm] = W
        a = cosine_panels(batch, W)
        b = cosine_panels(batch_p, W_p)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_degenerate_centered_mean_rejected(self):
        feats = np.zeros((4, 3))
        batch = FeatureBatch(feats, np.array([0, 0, 1, 1]), 2)
        with pytest.raises(ValueError):
            cosine_panels(batch, np.ones((3, 2)))


class TestSelfDuality:
    def test_perfect_alignment(self):
        batch, frame = collapsed_batch()
        np.testing.assert_allclose(self_duality(batch, frame.columns), 1.0, atol=1e-12)

    def test_permuted_classifier_below_one(self):
        batch, frame = collapsed_batch()
        W = frame.columns[:, [1, 2, 3, 0]]
        assert self_duality(batch, W) < 1.0

    def test_column_rescaling_invariance(self, rng):
        batch, frame = collapsed_batch()
        scales = rng.uniform(0.1, 10.0, size=4)
        np.testing.assert_allclose(
            self_duality(batch, frame.columns * scales),
            self_duality(batch, frame.columns),
            atol=1e-12,
        )


class TestDualityGap:
    def test_proportional_matrices_zero(self, rng):
        batch, frame = collapsed_batch(scale=3.7)
        np.testing.assert_allclose(duality_gap(batch, frame.columns), 0.0, atol=1e-12)

    def test_antipodal_is_four(self):
        batch, frame = collapsed_batch()
        np.testing.assert_allclose(duality_gap(batch, -frame.columns), 4.0, atol=1e-12)

    def test_range_zero_to_four(self, rng):
        for _ in range(25):
            feats = rng.standard_normal((12, 5))
            labels = np.repeat(np.arange(4), 3)
            batch = FeatureBatch(feats, labels, 4)
            gap = duality_gap(batch, rng.standard_normal((5, 4)))
            assert 0.0 <= gap <= 4.0

    def test_literal_variant_differs(self, rng):
        feats = rng.standard_normal((8, 4)) * 5
        batch = FeatureBatch(feats, np.repeat(np.arange(4), 2), 4)
        W = rng.standard_normal((4, 4)) * 2
        unit = duality_gap(batch, W, normalization="unit")
        literal = duality_gap(batch, W, normalization="literal")
        assert unit != literal


class TestNc4Agreement:
    def test_collapsed_agrees(self):
        batch, frame = collapsed_batch()
        np.testing.assert_allclose(nc4_agreement(batch, frame.columns), 1.0)

    def test_tie_break_lowest_index(self):
        # identical columns make every logit a tie; an equidistant feature
        # makes the nearest-center side a tie too -> both resolve to class 0
        W = np.array([[1.0, 1.0], [0.0, 0.0]])
        ref = FeatureBatch(np.array([[2.0, 1.0], [2.0, -1.0]]), np.array([0, 1]), 2)
        means, _ = class_and_global_means(ref)
        probe = FeatureBatch(np.array([[2.0, 0.0], [5.0, 0.0]]), np.array([0, 1]), 2)
        assert nc4_agreement(probe, W, means=means) == 1.0

    def test_brute_force_recount(self, rng):
        d, K, N = 4, 3, 30
        feats = rng.standard_normal((N, d))
        labels = rng.integers(K, size=N)
        batch = FeatureBatch(feats, labels, K)
        W = rng.standard_normal((d, K))
        means, _ = class_and_global_means(batch)
        agree = 0
        for i in range(N):
            best_logit, best_dist = 0, 0
            for k in range(1, K):
                if feats[i] @ W[:, k] > feats[i] @ W[:, best_logit]:
                    best_logit = k
                if np.linalg.norm(feats[i] - means[k]) < np.linalg.norm(feats[i] - means[best_dist]):
                    best_dist = k
            agree += best_logit == best_dist
        np.testing.assert_allclose(nc4_agreement(batch, W), agree / N)

    def test_external_means(self, rng):
        feats = rng.standard_normal((9, 4))
        batch = FeatureBatch(feats, np.repeat(np.arange(3), 3), 3)
        means = rng.standard_normal((3, 4))
        val = nc4_agreement(batch, np.eye(4)[:, :3], means=means)
        assert 0.0 <= val <= 1.0


class TestReportInvariances:
    def test_shared_rotation_invariance(self, rng):
        feats = rng.standard_normal((20, 6))
        labels = np.repeat(np.arange(4), 5)
        W = rng.standard_normal((6, 4))
        batch = FeatureBatch(feats, labels, 4)
        r1 = nc_report(batch, W)
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        r2 = nc_report(FeatureBatch(feats @ q.T, labels, 4), q @ W)
        for f in NC_FIELDS:
            np.testing.assert_allclose(getattr(r1, f), getattr(r2, f), atol=1e-9, err_msg=f)

    def test_duplication_invariance(self, rng):
        feats = rng.standard_normal((12, 5))
        labels = np.repeat(np.arange(4), 3)
        W = rng.standard_normal((5, 4))
        r1 = nc_report(FeatureBatch(feats, labels, 4), W)
        r2 = nc_report(
            FeatureBatch(np.vstack([feats, feats]), np.hstack([labels, labels]), 4), W
        )
        for f in NC_FIELDS:
            np.testing.assert_allclose(getattr(r1, f), getattr(r2, f), atol=1e-12, err_msg=f)

    def test_field_order_fixed(self):
        batch, frame = collapsed_batch()
        report = nc_report(batch, frame.columns)
        assert list(report.as_dict()) == list(NC_FIELDS)
        assert len(report.as_row()) == 8
