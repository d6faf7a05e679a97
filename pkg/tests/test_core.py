import math

import numpy as np
import pytest

from pitlab.core import MAX_DB, MetricError, metric_improvement, pairwise_loss_matrix, sdr, si_sdr


DELTA = 1e-8


def reference_si_sdr(est, tgt, guarded=False):
    # textbook definition; ``guarded`` adds the documented relative guard
    alpha = np.dot(est, tgt) / (np.dot(tgt, tgt) + (DELTA if guarded else 0.0))
    s = alpha * tgt
    e = est - s
    g = DELTA * np.dot(est, est) if guarded else 0.0
    return 10 * math.log10((np.dot(s, s) + g) / (np.dot(e, e) + g))


def reference_sdr(est, tgt, guarded=False):
    d = tgt - est
    g = DELTA * np.dot(tgt, tgt) if guarded else 0.0
    return 10 * math.log10((np.dot(tgt, tgt) + g) / (np.dot(d, d) + g))


class TestSiSdr:
    def test_hand_examples(self):
        assert si_sdr([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-7)
        assert si_sdr([1.0, 0.5], [1.0, 0.0]) == pytest.approx(10 * math.log10(4.0), abs=1e-6)
        assert si_sdr([1.0, 0.5], [1.0, 0.0]) == pytest.approx(6.0206, abs=1e-4)

    def test_perfect_reconstruction_hits_cap(self, rng):
        t = rng.standard_normal(64)
        assert si_sdr(t, t) == pytest.approx(MAX_DB, abs=1e-6)
        assert si_sdr(2 * t, t) == pytest.approx(si_sdr(t, t), abs=1e-9)
        assert 79.9 < MAX_DB < 80.1

    def test_matches_reference(self, rng):
        for _ in range(50):
            t = rng.standard_normal(200)
            e = t + rng.standard_normal(200)
            assert si_sdr(e, t) == pytest.approx(reference_si_sdr(e, t, guarded=True), abs=1e-9)
            # the guard only moves values by O(DELTA)
            assert si_sdr(e, t) == pytest.approx(reference_si_sdr(e, t), abs=1e-6)

    def test_scale_invariance(self, rng):
        for _ in range(200):
            t = rng.standard_normal(128)
            e = rng.standard_normal(128)
            a = rng.uniform(1e-3, 1e3)
            assert abs(si_sdr(a * e, t) - si_sdr(e, t)) < 1e-9

    def test_errors(self):
        with pytest.raises(MetricError):
            si_sdr([1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(MetricError):
            si_sdr([1.0, 2.0], [0.0, 0.0])

    def test_zero_estimate_is_finite(self):
        assert math.isfinite(si_sdr([0.0, 0.0], [1.0, 2.0]))

    def test_stacked(self, rng):
        t = rng.standard_normal((3, 50))
        e = rng.standard_normal((3, 50))
        np.testing.assert_allclose(si_sdr(e, t), [si_sdr(e[i], t[i]) for i in range(3)], rtol=1e-13)


class TestSdr:
    def test_hand_examples(self):
        assert sdr([1.0, 1.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-7)
        assert sdr([0.0, 0.0], [3.0, 4.0]) == 0.0

    def test_perfect_is_cap(self, rng):
        t = rng.standard_normal(32)
        assert sdr(t, t) == pytest.approx(MAX_DB, abs=1e-9)
        assert sdr(t, t) == pytest.approx(si_sdr(t, t), abs=1e-6)

    def test_not_scale_invariant(self, rng):
        t = rng.standard_normal(32)
        e = t + 0.1 * rng.standard_normal(32)
        assert abs(sdr(2 * e, t) - sdr(e, t)) > 1.0

    def test_matches_reference(self, rng):
        t = rng.standard_normal(100)
        e = t + rng.standard_normal(100)
        assert sdr(e, t) == pytest.approx(reference_sdr(e, t, guarded=True), abs=1e-9)
        assert sdr(e, t) == pytest.approx(reference_sdr(e, t), abs=1e-6)


class TestImprovement:
    def test_identity_is_zero(self, rng):
        t = rng.standard_normal(64)
        mix = t + rng.standard_normal(64)
        assert metric_improvement(mix, t, mix) == 0.0
        assert metric_improvement(mix, t, mix, "sdr") == 0.0

    def test_perfect_estimate(self, rng):
        t = rng.standard_normal(64)
        mix = t + rng.standard_normal(64)
        imp = metric_improvement(t, t, mix)
        assert imp == pytest.approx(MAX_DB - si_sdr(mix, t), abs=1e-6)
        assert imp > 0

    def test_two_sinusoids_with_frame_mask(self):
        n, frame = 2048, 64
        t = np.arange(n)
        s1 = np.sin(2 * np.pi * 0.013 * t) * (1 + 0.8 * np.sin(2 * np.pi * t / n))
        s2 = 0.7 * np.sin(2 * np.pi * 0.21 * t + 0.4) * (1 + 0.8 * np.cos(2 * np.pi * 1.5 * t / n))
        mix = s1 + s2
        # oracle frame mask from per-frame source energies
        est = np.empty(n)
        for start in range(0, n, frame):
            sl = slice(start, start + frame)
            e1, e2 = np.sum(s1[sl] ** 2), np.sum(s2[sl] ** 2)
            est[sl] = e1 / (e1 + e2) * mix[sl]
        expect_si = reference_si_sdr(est, s1, True) - reference_si_sdr(mix, s1, True)
        expect_sdr = reference_sdr(est, s1, True) - reference_sdr(mix, s1, True)
        assert metric_improvement(est, s1, mix, "si_sdr") == pytest.approx(expect_si, abs=1e-7)
        assert metric_improvement(est, s1, mix, "sdr") == pytest.approx(expect_sdr, abs=1e-7)
        assert expect_si > 0 and expect_sdr > 0

    def test_unknown_metric(self):
        with pytest.raises(MetricError):
            metric_improvement([1.0], [1.0], [1.0], "pesq")


class TestPairwise:
    def test_diagonal_minimum(self):
        t = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        m = pairwise_loss_matrix(t, t)
        assert m[0, 0] == pytest.approx(-MAX_DB, abs=1e-6)
        assert m[1, 1] == pytest.approx(-MAX_DB, abs=1e-6)
        assert m[0, 1] > m[0, 0] and m[1, 0] > m[1, 1]

    def test_single(self, rng):
        x = rng.standard_normal((1, 16))
        assert pairwise_loss_matrix(x, x).shape == (1, 1)

    def test_elementwise_oracle(self, rng):
        e = rng.standard_normal((3, 100))
        t = rng.standard_normal((3, 100))
        m = pairwise_loss_matrix(e, t)
        for i in range(3):
            for j in range(3):
                assert m[i, j] == pytest.approx(-si_sdr(e[i], t[j]), rel=1e-12, abs=1e-12)

    def test_custom_loss(self, rng):
        e = rng.standard_normal((2, 10))
        t = rng.standard_normal((2, 10))
        m = pairwise_loss_matrix(e, t, loss=lambda a, b: float(np.sum((a - b) ** 2)))
        assert m[0, 1] == pytest.approx(np.sum((e[0] - t[1]) ** 2))

    def test_mismatch(self, rng):
        with pytest.raises(MetricError):
            pairwise_loss_matrix(rng.standard_normal((2, 10)), rng.standard_normal((3, 10)))
        with pytest.raises(MetricError):
            pairwise_loss_matrix(rng.standard_normal((2, 10)), rng.standard_normal((2, 11)))
