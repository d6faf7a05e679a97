import math

import numpy as np
import pytest

from pitlab import autodiff as ad
from pitlab.autodiff.gradcheck import max_relative_error

from gradcases import OPS, case_inputs

TOL = 1e-4



@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_matches_finite_differences(name):
    rng = np.random.default_rng(sorted(OPS).index(name))
    assert max_relative_error(OPS[name][0], case_inputs(name, rng)) < TOL


def test_matmul_hand_checked():
    a = ad.tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    b = ad.tensor([[7.0, 8.0], [9.0, 10.0], [11.0, 12.0]])
    np.testing.assert_array_equal(ad.matmul(a, b).data, [[58.0, 64.0], [139.0, 154.0]])


def test_sum_of_ones():
    assert ad.sum_(ad.tensor(np.ones(4))).item() == 4.0


def test_mean_square_gradient():
    x = ad.tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.mean(x * x))
    np.testing.assert_allclose(x.grad, [2 / 3, 4 / 3, 2.0], rtol=1e-12)
    assert max_relative_error(lambda t: ad.mean(t * t), [np.array([1.0, 2.0, 3.0])]) < TOL


def test_backward_on_parameter_itself():
    p = ad.tensor(3.0, requires_grad=True)
    ad.backward(p)
    assert p.grad == 1.0


def test_tanh_of_dot_matches_finite_differences(rng):
    fn = lambda w, x: ad.tanh(ad.dot(w, x))  # noqa: E731
    assert max_relative_error(fn, [rng.normal(size=4) * 0.4, rng.normal(size=4)]) < TOL


def test_disconnected_parameter_gets_zero_grad():
    p = ad.tensor([1.0, 2.0], requires_grad=True)
    q = ad.tensor([5.0], requires_grad=True)
    ad.zero_grad([p, q])
    ad.backward(ad.sum_(p * p))
    np.testing.assert_array_equal(q.grad, [0.0])
    np.testing.assert_array_equal(p.grad, [2.0, 4.0])


def test_backward_requires_scalar_root():
    x = ad.tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        ad.backward(x * 2.0)


def test_grads_accumulate_across_backward_calls():
    x = ad.tensor([1.0], requires_grad=True)
    ad.backward(ad.sum_(x * 3.0))
    ad.backward(ad.sum_(x * 3.0))
    np.testing.assert_array_equal(x.grad, [6.0])


def test_no_grad_builds_no_graph():
    x = ad.tensor([1.0], requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert ad.is_grad_enabled()


def test_broadcast_between_tensors_must_be_explicit():
    with pytest.raises(ValueError):
        ad.add(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones(3)))


def _with_grads(*grads):
    ps = []
    for g in grads:
        p = ad.tensor(np.zeros_like(np.asarray(g, dtype=float)), requires_grad=True)
        p.grad = np.asarray(g, dtype=float)
        ps.append(p)
    return ps


def test_clip_below_threshold_is_identity():
    ps = _with_grads([3.0])
    assert ad.clip_global_norm(ps, 5.0) == 1.0
    assert ps[0].grad[0] == 3.0


def test_clip_above_threshold():
    ps = _with_grads([6.0, 8.0])
    scale = ad.clip_global_norm(ps, 5.0)
    assert scale == pytest.approx(0.5)
    assert abs(ad.global_grad_norm(ps) - 5.0) < 1e-9


def test_clip_random_grads_and_idempotence(rng):
    for _ in range(200):
        ps = _with_grads(rng.normal(size=3) * rng.uniform(0, 6), rng.normal(size=(2, 2)) * rng.uniform(0, 6))
        g = math.sqrt(sum(float(np.sum(p.grad ** 2)) for p in ps))
        ad.clip_global_norm(ps, 5.0)
        after = math.sqrt(sum(float(np.sum(p.grad ** 2)) for p in ps))
        assert after == pytest.approx(min(g, 5.0), rel=1e-12)
        snapshot = [p.grad.copy() for p in ps]
        ad.clip_global_norm(ps, 5.0)
        for p, s in zip(ps, snapshot):
            np.testing.assert_allclose(p.grad, s, rtol=1e-12)


def test_adam_first_step_moves_by_lr():
    p = ad.tensor([1.0, -2.0], requires_grad=True)
    p.grad = np.array([0.5, -3.0])
    opt = ad.Adam([p], lr=0.01)
    opt.step()
    # bias-corrected first step is lr * g / (|g| + eps')
    np.testing.assert_allclose(p.data, [1.0 - 0.01, -2.0 + 0.01], atol=1e-7)


def test_adam_minimises_quadratic():
    p = ad.tensor([4.0, -3.0], requires_grad=True)
    opt = ad.Adam([p], lr=0.1)
    for _ in range(500):
        p.zero_grad()
        ad.backward(ad.sum_(p * p))
        opt.step()
    assert np.max(np.abs(p.data)) < 1e-2


def test_plateau_improving_metric_never_halves():
    lrs = ad.plateau_scheduler(np.arange(100.0), lr=1e-3)
    assert all(lr == 1e-3 for lr in lrs)


def test_plateau_flat_ten_epochs_halves_once():
    # one best epoch followed by ten without improvement
    lrs = ad.plateau_scheduler([1.0] * 11, lr=1e-3)
    assert lrs[-1] == 5e-4
    assert lrs[:-1] == [1e-3] * 10


def _reference_schedule(history, lr, early, late, switch):
    best, stall, out = None, 0, []
    for epoch, m in enumerate(history, start=1):
        if best is None or m > best:
            best, stall = m, 0
        else:
            stall += 1
        limit = early if epoch <= switch else late
        if stall >= limit:
            lr, stall = lr / 2, 0
        out.append(lr)
    return out


def test_plateau_matches_reference_across_switch_epoch():
    rng = np.random.default_rng(7)
    # improving until 60, flat until 100, then noisy
    hist = list(np.linspace(0, 10, 60)) + [10.0] * 40 + list(10 + rng.normal(size=40) * 0.01)
    got = ad.plateau_scheduler(hist, lr=1e-3)
    want = _reference_schedule(hist, 1e-3, 10, 5, 80)
    assert got == want
    halvings = [i + 1 for i in range(1, len(got)) if got[i] < got[i - 1]]
    assert halvings[:2] == [70, 80]
    assert 85 in halvings


def test_checkpoint_roundtrip(tmp_path, rng):
    arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5), "s": np.array(2.5)}
    ad.save_tensors(tmp_path / "ck", arrays)
    back = ad.load_tensors(tmp_path / "ck")
    assert list(back) == list(arrays)
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
        assert back[k].shape == arrays[k].shape


def test_checkpoint_rejects_foreign_manifest(tmp_path):
    ad.save_tensors(tmp_path, {"x": np.ones(2)})
    (tmp_path / "params.json").write_text('{"format": "other", "tensors": []}')
    with pytest.raises(ValueError):
        ad.load_tensors(tmp_path)


def test_backward_is_deterministic(rng):
    w = rng.normal(size=(4, 3))
    x = rng.normal(size=(5, 4))
    grads = []
    for _ in range(2):
        wt = ad.tensor(w.copy(), requires_grad=True)
        ad.backward(ad.sum_(ad.tanh(ad.matmul(ad.tensor(x), wt)) ** 2))
        grads.append(wt.grad.tobytes())
    assert grads[0] == grads[1]
