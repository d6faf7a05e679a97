import numpy as np
import pytest

from pitlab.assignment import fixed_assignment_loss, pit_select
from pitlab.core import pairwise_loss_matrix
from pitlab.dsd import DecisionKind, DsdConfig, MemoryBank
from pitlab.lo import (
    default_weights,
    layerwise_from_matrices,
    layerwise_loss,
    lo_with_dsd,
    selection_weights,
    validate_weights,
)


def test_default_weights():
    np.testing.assert_array_equal(default_weights(6), [1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6, 1.0])
    np.testing.assert_array_equal(default_weights(1), [1.0])
    np.testing.assert_allclose(default_weights(3), [1 / 3, 2 / 3, 1.0], rtol=0, atol=0)
    with pytest.raises(ValueError):
        default_weights(0)


def test_validate_weights():
    with pytest.raises(ValueError):
        validate_weights([1.0, 0.0])
    with pytest.raises(ValueError):
        validate_weights([-1.0, 1.0])
    with pytest.raises(ValueError):
        validate_weights([1.0, 1.0], n_blocks=3)


@pytest.fixture
def sample(rng):
    targets = rng.standard_normal((2, 64))
    layers = [targets[::-1] + 0.3 * (i + 1) * rng.standard_normal((2, 64)) for i in range(6)]
    return layers, targets


def test_identical_layers(rng):
    targets = rng.standard_normal((2, 64))
    est = targets + 0.5 * rng.standard_normal((2, 64))
    p = pit_select(pairwise_loss_matrix(est, targets)).total_loss
    res = layerwise_loss([est] * 6, targets, default_weights(6))
    assert res.loss == 7 * p / 12


def test_single_layer(sample):
    layers, targets = sample
    res = layerwise_loss(layers[:1], targets, [1.0])
    assert res.loss == pit_select(pairwise_loss_matrix(layers[0], targets)).total_loss


def test_hand_two_layers():
    mats = np.array([[[4.0, 9.0], [9.0, 4.0]], [[9.0, 2.0], [2.0, 9.0]]])
    res = layerwise_from_matrices(mats, [0.5, 1.0])
    assert res.loss == 2.0
    assert res.per_layer_assignments == [(0, 1), (1, 0)]


def test_last_layer_only(sample):
    layers, targets = sample
    res = layerwise_loss(layers, targets, [0, 0, 0, 0, 0, 1])
    assert res.loss == res.per_layer_losses[-1] / 6


def test_linear_in_weights(sample):
    layers, targets = sample
    w = default_weights(6)
    assert layerwise_loss(layers, targets, 2 * w).loss == pytest.approx(2 * layerwise_loss(layers, targets, w).loss,
                                                                       rel=1e-14)


def test_per_layer_at_least_pit(sample):
    layers, targets = sample
    res = layerwise_loss(layers, targets, default_weights(6))
    for layer, loss in zip(layers, res.per_layer_losses):
        assert loss == pit_select(pairwise_loss_matrix(layer, targets)).total_loss
    tied = layerwise_loss(layers, targets, default_weights(6), tie_to_last=True)
    assert np.all(tied.per_layer_losses >= res.per_layer_losses)
    assert all(p == tied.per_layer_assignments[-1] for p in tied.per_layer_assignments)


def test_weight_count_mismatch(sample):
    layers, targets = sample
    with pytest.raises(ValueError):
        layerwise_loss(layers, targets, [1.0, 1.0])


class TestWithDsd:
    def test_keep_equals_layerwise(self, sample):
        layers, targets = sample
        bank = MemoryBank()
        cfg = DsdConfig(0.1)
        first = lo_with_dsd(layers, targets, default_weights(6), bank, cfg, 0, 1)
        again = lo_with_dsd(layers, targets, default_weights(6), bank, cfg, 0, 2)
        assert again.decision.kind is DecisionKind.SELECT_KEEP
        assert again.loss == layerwise_loss(layers, targets, default_weights(6)).loss == first.loss

    def test_dropout(self, sample):
        layers, targets = sample
        bank = MemoryBank()
        final = pit_select(pairwise_loss_matrix(layers[-1], targets)).permutation
        other = tuple(reversed(final))
        bank.record(0, 1e6, other, 1)
        res = lo_with_dsd(layers, targets, default_weights(6), bank, DsdConfig(0.0, "dropout"), 0, 2)
        assert res.decision.kind is DecisionKind.DROPOUT
        assert res.loss == 0.0 and res.per_layer_losses is None

    def test_reorder(self, sample):
        layers, targets = sample
        bank = MemoryBank()
        final = pit_select(pairwise_loss_matrix(layers[-1], targets)).permutation
        stored = tuple(reversed(final))
        bank.record(0, 1e6, stored, 1)
        res = lo_with_dsd(layers, targets, default_weights(6), bank, DsdConfig(0.0, "reorder"), 0, 2)
        assert res.decision.kind is DecisionKind.REORDER
        for layer, loss in zip(layers, res.per_layer_losses):
            assert loss == fixed_assignment_loss(pairwise_loss_matrix(layer, targets), stored).total_loss


def test_selection_weights_reproduce_loss(rng):
    mats = rng.standard_normal((3, 4, 2, 2))
    perms = np.stack([[pit_select(mats[l, b]).permutation for b in range(4)] for l in range(3)])
    lw = default_weights(3) / 3
    keep = np.array([True, False, True, True])
    w = selection_weights(perms, lw, keep)
    expect = sum(layerwise_from_matrices(mats[:, b], default_weights(3)).loss for b in range(4) if keep[b])
    assert np.sum(w * mats) == pytest.approx(expect, rel=1e-13)
