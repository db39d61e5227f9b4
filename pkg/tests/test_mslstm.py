import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anticip.losses import LossKind, loss_dispatch
from anticip.mslstm import (FUSION_VARIANTS, ForwardTrace, MsLstmModel, Variant, backward, forward, infer,
                            label_array, loss_and_grads, overall_loss, param_shapes, pooled_predictions,
                            predict_curve, train_step)
from anticip.numeric import SgdState, ShapeError, StateError, lstm_step
from oracles import central_difference, max_grad_violation

ALL_VARIANTS = list(Variant)


def tiny(variant, N=3, dc=4, da=3, H=5, seed=0):
    m = MsLstmModel.init(N, dc, da, H, variant, seed=seed)
    # bigger-than-init weights exercise the nonlinearities
    rng = np.random.default_rng(seed)
    for k in m.params:
        m.params[k] = m.params[k] + rng.normal(0, 0.3, size=m.params[k].shape)
    return m


def batch(rng, B, T, dc, da):
    return rng.normal(size=(B, T, dc)), rng.normal(size=(B, T, da))


def test_zero_params_single_frame_uniform():
    for v in FUSION_VARIANTS:
        m = MsLstmModel.init(4, 3, 2, 2, v)
        for k in m.params:
            m.params[k][:] = 0.0
        tr = forward(m, np.ones((1, 3)), np.ones((1, 2)))
        assert np.array_equal(tr.yhat_a, np.full((1, 4), 0.25))
        if v.two_stage:
            assert np.array_equal(tr.yhat_c, np.full((1, 4), 0.25))
        else:
            assert tr.yhat_c is None


def test_rows_on_simplex():
    rng = np.random.default_rng(0)
    for v in ALL_VARIANTS:
        m = tiny(v)
        tr = forward(m, *batch(rng, 3, 5, 4, 3))
        assert np.all(np.abs(tr.yhat_a.sum(-1) - 1) < 1e-9)
        assert np.all(np.abs(pooled_predictions(tr.yhat_a).sum(-1) - 1) < 1e-9)


def test_swapped_matches_multistage_on_exchanged_streams():
    rng = np.random.default_rng(1)
    ms = tiny(Variant.MULTI_STAGE, dc=4, da=4)
    sw = MsLstmModel(3, 4, 4, 5, Variant.SWAPPED, {k: v.copy() for k, v in ms.params.items()})
    ctx, act = batch(rng, 2, 4, 4, 4)
    a, b = forward(ms, ctx, act), forward(sw, act, ctx)
    assert np.array_equal(a.yhat_a, b.yhat_a) and np.array_equal(a.yhat_c, b.yhat_c)
    # identical streams, tied shapes: identical outputs
    assert np.array_equal(forward(ms, ctx, ctx).yhat_a, forward(sw, ctx, ctx).yhat_a)


def test_stage2_input_is_concatenation():
    rng = np.random.default_rng(2)
    m = tiny(Variant.MULTI_STAGE)
    ctx, act = rng.normal(size=(3, 4)), rng.normal(size=(3, 3))
    s1, s2 = m.lstm("stage1"), m.lstm("stage2")
    h1, c1 = np.zeros(5), np.zeros(5)
    h2, c2 = np.zeros(5), np.zeros(5)
    tr = forward(m, ctx, act)
    for t in range(3):
        h1, c1 = lstm_step(s1, ctx[t], h1, c1)
        h2, c2 = lstm_step(s2, np.concatenate([h1, act[t]]), h2, c2)
        z = m.params["fc2.W"] @ h2 + m.params["fc2.b"]
        p = np.exp(z - z.max())
        assert np.allclose(tr.yhat_a[t], p / p.sum(), rtol=0, atol=1e-12)


def test_single_stream_baselines_ignore_other_stream():
    rng = np.random.default_rng(3)
    ctx, act = batch(rng, 2, 4, 4, 3)
    act2 = act + rng.normal(size=act.shape)
    ctx2 = ctx + rng.normal(size=ctx.shape)
    c = tiny(Variant.CONTEXT_ONLY)
    a = tiny(Variant.ACTION_ONLY)
    assert np.array_equal(forward(c, ctx, act).yhat_a, forward(c, ctx, act2).yhat_a)
    assert np.array_equal(forward(a, ctx, act).yhat_a, forward(a, ctx2, act).yhat_a)


def test_forward_shape_errors():
    m = tiny(Variant.MULTI_STAGE)
    with pytest.raises(ShapeError):
        forward(m, np.zeros((3, 5)), np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        forward(m, np.zeros((3, 4)), np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        forward(m, np.zeros((0, 4)), np.zeros((0, 3)))


def test_model_validation():
    with pytest.raises(ValueError):
        MsLstmModel.init(1, 2, 2, 2)
    m = tiny(Variant.PARALLEL)
    bad = dict(m.params)
    bad["fc2.W"] = np.zeros((3, 5))
    with pytest.raises(ShapeError):
        MsLstmModel(3, 4, 3, 5, Variant.PARALLEL, bad)
    assert param_shapes(Variant.PARALLEL, 3, 4, 3, 5)["fc2.W"] == (3, 10)


# -- overall loss ------------------------------------------------------------

def test_overall_loss_single_sample_is_sum_of_terms():
    rng = np.random.default_rng(4)
    m = tiny(Variant.MULTI_STAGE)
    ctx, act = batch(rng, 1, 4, 4, 3)
    tr = forward(m, ctx, act)
    y = label_array([2], 3, 4)
    for kind in LossKind:
        lc, _ = loss_dispatch(kind, y[0], tr.yhat_c[0])
        la, _ = loss_dispatch(kind, y[0], tr.yhat_a[0])
        assert overall_loss(kind, tr, y) == pytest.approx(lc + la, rel=1e-15)


def test_overall_loss_duplicate_and_mean():
    rng = np.random.default_rng(5)
    m = tiny(Variant.MULTI_STAGE)
    ctx, act = batch(rng, 3, 4, 4, 3)
    labels = [0, 2, 1]
    one = overall_loss("anticipation", forward(m, ctx[:1], act[:1]), label_array(labels[:1], 3, 4))
    dup = overall_loss("anticipation", forward(m, ctx[[0, 0]], act[[0, 0]]), label_array([0, 0], 3, 4))
    assert dup == pytest.approx(one, rel=1e-15)
    per = [overall_loss("anticipation", forward(m, ctx[i:i + 1], act[i:i + 1]), label_array(labels[i:i + 1], 3, 4))
           for i in range(3)]
    total = overall_loss("anticipation", forward(m, ctx, act), label_array(labels, 3, 4))
    assert total == pytest.approx(sum(per) / 3, rel=1e-13)


def test_overall_loss_single_series_uses_final_only():
    rng = np.random.default_rng(6)
    m = tiny(Variant.CONCATENATION)
    ctx, act = batch(rng, 1, 3, 4, 3)
    tr = forward(m, ctx, act)
    y = label_array([1], 3, 3)
    assert overall_loss("ce", tr, y) == loss_dispatch("ce", y[0], tr.yhat_a[0])[0]


def test_overall_loss_empty_batch():
    m = tiny(Variant.MULTI_STAGE)
    tr = forward(m, np.zeros((1, 2, 4)), np.zeros((1, 2, 3)))
    with pytest.raises(ValueError):
        overall_loss("ce", tr, np.zeros((0, 2, 3)))


# -- gradients ---------------------------------------------------------------

@pytest.mark.parametrize("variant", ALL_VARIANTS)
@pytest.mark.parametrize("kind", list(LossKind))
def test_full_model_gradients_match_finite_differences(variant, kind):
    rng = np.random.default_rng(7)
    m = tiny(variant, N=3, dc=3, da=2, H=3, seed=1)
    ctx, act = batch(rng, 2, 4, 3, 2)
    labels = [1, 2]
    _, grads = loss_and_grads(m, kind, ctx, act, labels)
    fd = central_difference(lambda: loss_and_grads(m, kind, ctx, act, labels)[0], m.params)
    assert max_grad_violation(grads, fd) <= 1e-4


def test_backward_needs_batched_forward():
    m = tiny(Variant.MULTI_STAGE)
    with pytest.raises(StateError):
        backward(m, None, np.zeros((1, 2, 3)))
    tr = forward(m, np.zeros((2, 4)), np.zeros((2, 3)))
    with pytest.raises(StateError):
        backward(m, tr, np.zeros((2, 3)))
    with pytest.raises(StateError):
        backward(m, ForwardTrace(np.zeros((1, 2, 3)), None), np.zeros((1, 2, 3)))


# -- training ------------------------------------------------------------------

def test_zero_lr_leaves_params():
    rng = np.random.default_rng(8)
    m = tiny(Variant.MULTI_STAGE)
    before = m.copy()
    L = train_step(m, *batch(rng, 2, 3, 4, 3), [0, 1], "anticipation", SgdState(0.0, 0.9, 0.0))
    assert L > 0
    for k in m.params:
        assert np.array_equal(m.params[k], before.params[k])


@pytest.mark.parametrize("variant", FUSION_VARIANTS)
def test_small_step_decreases_singleton_loss(variant):
    rng = np.random.default_rng(9)
    m = tiny(variant)
    ctx, act = batch(rng, 1, 4, 4, 3)
    L0 = train_step(m, ctx, act, [2], "anticipation", SgdState(1e-3, 0.0, 0.0))
    L1 = loss_and_grads(m, "anticipation", ctx, act, [2])[0]
    assert L1 < L0


def test_training_is_deterministic():
    rng = np.random.default_rng(10)
    ctx, act = batch(rng, 4, 3, 4, 3)
    outs = []
    for _ in range(2):
        m = MsLstmModel.init(3, 4, 3, 5, seed=3)
        opt = SgdState(0.01, 0.9, 1e-4)
        for _ in range(3):
            train_step(m, ctx, act, [0, 1, 2, 0], "lgl", opt)
        outs.append(m)
    for k in outs[0].params:
        assert outs[0].params[k].tobytes() == outs[1].params[k].tobytes()


def test_checkpoint_round_trip(tmp_path):
    for v in ALL_VARIANTS:
        m = tiny(v)
        m.save(tmp_path / "m.txt")
        assert (tmp_path / "m.txt").read_text().splitlines()[0] == m.header()
        back = MsLstmModel.load(tmp_path / "m.txt")
        assert back.variant is v
        for k in m.params:
            assert back.params[k].tobytes() == m.params[k].tobytes()


# -- inference -----------------------------------------------------------------

def test_infer_hand_average():
    y = np.array([[0.6, 0.4], [0.2, 0.8]])
    k, vec = infer(y, 2, avg_pool=True)
    assert k == 1 and np.allclose(vec, [0.4, 0.6], atol=1e-15)
    assert infer(y, 2, avg_pool=False)[0] == 1
    assert infer(y, 1, True)[0] == infer(y, 1, False)[0] == 0
    assert np.array_equal(infer(y, 1, True)[1], y[0])


def test_infer_errors_and_ties():
    y = np.array([[0.5, 0.5], [0.3, 0.7]])
    assert infer(y, 1)[0] == 0
    with pytest.raises(ValueError):
        infer(y, 0)
    with pytest.raises(ValueError):
        infer(y, 3)


@given(st.integers(1, 8), st.integers(2, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_streaming_pool_equals_batch_recompute(T, N, seed):
    rng = np.random.default_rng(seed)
    y = rng.dirichlet(np.ones(N), size=T)
    curve = predict_curve(y[None], avg_pool=True)[0]
    for t in range(1, T + 1):
        k, vec = infer(y, t, avg_pool=True)
        ref = y[:t].sum(axis=0) / t
        assert np.allclose(vec, ref, rtol=0, atol=1e-15)
        assert k == curve[t - 1]
    const = np.tile(y[:1], (T, 1))
    assert np.allclose(infer(const, T, True)[1], const[0], atol=1e-15)


def test_infer_uses_trace():
    m = tiny(Variant.MULTI_STAGE)
    tr = forward(m, np.ones((3, 4)), np.ones((3, 3)))
    assert infer(tr, 3, False)[0] == int(np.argmax(tr.yhat_a[2]))


@pytest.mark.parametrize("kind", list(LossKind))
def test_reference_tiny_model_gradients(kind):
    # H=4, D=3, T=3, N=2
    rng = np.random.default_rng(12)
    m = MsLstmModel.init(2, 3, 3, 4, Variant.MULTI_STAGE, seed=5)
    ctx, act = batch(rng, 1, 3, 3, 3)
    _, grads = loss_and_grads(m, kind, ctx, act, [1])
    fd = central_difference(lambda: loss_and_grads(m, kind, ctx, act, [1])[0], m.params)
    assert max_grad_violation(grads, fd) <= 1e-4


def test_constant_loss_has_zero_gradients():
    m = tiny(Variant.MULTI_STAGE)
    tr = forward(m, np.zeros((1, 3, 4)), np.zeros((1, 3, 3)))
    grads = backward(m, tr, np.zeros((1, 3, 3)), np.zeros((1, 3, 3)))
    assert all(not g.any() for g in grads.values())
