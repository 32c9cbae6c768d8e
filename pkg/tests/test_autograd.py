"""Autograd engine: primitive forward values, gradients against central
finite differences, tape semantics, the parameter store, SGD, and the
gradient checker itself (including its fault injection hook)."""

import math

import numpy as np
import pytest

import reference as ref
from emochat import autograd as ag
from emochat.autograd import (GRUCellParams, Parameter, ParameterStore, Tape, Tensor,
                              finite_diff_check, gru_cell, sgd_step)


def f64_store(seed=0):
    return ParameterStore(seed=seed, dtype=np.float64)


def check_grads(loss_fn, params, threshold=1e-4):
    result = finite_diff_check(loss_fn, params)
    assert result.passed(threshold), (
        f"max rel error {result.max_rel_error:.3e} at {result.param_name}{result.index}")
    return result


# --- forward values -----------------------------------------------------------


def test_sigmoid_closed_form_points():
    x = Tensor(np.array([0.0, math.log(3.0)], dtype=np.float64))
    out = ag.sigmoid(x).data
    assert abs(out[0] - 0.5) < 1e-12
    assert abs(out[1] - 0.75) < 1e-12


def test_sigmoid_stable_for_large_magnitudes():
    x = Tensor(np.array([-1000.0, 1000.0], dtype=np.float64))
    out = ag.sigmoid(x).data
    assert np.all(np.isfinite(out))
    assert out[0] >= 0.0 and out[1] <= 1.0


def test_softmax_uniform_and_shift_invariance():
    assert np.allclose(ag.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.normal(size=5)
        a = ag.softmax(Tensor(x)).data
        b = ag.softmax(Tensor(x + 7.25)).data
        assert np.allclose(a, b, atol=1e-6)
        assert abs(a.sum() - 1.0) < 1e-5
        assert np.all(a >= 0)


def test_softmax_matches_reference_rows():
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.normal(size=rng.integers(1, 8))
        got = ag.softmax(Tensor(x.astype(np.float64))).data
        want = ref.softmax(list(x))
        assert np.allclose(got, want, atol=1e-9)


def test_masked_softmax_matches_unmasked_on_survivors():
    rng = np.random.default_rng(2)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        x = rng.normal(size=n)
        mask = rng.random(n) < 0.7
        if not mask.any():
            mask[int(rng.integers(n))] = True
        out = ag.masked_softmax(Tensor(x.astype(np.float64)), mask).data
        assert np.all(out[~mask] == 0.0), "masked entries must be exactly zero"
        sub = ref.softmax([v for v, m in zip(x, mask) if m])
        assert np.allclose(out[mask], sub, atol=1e-9)
        assert abs(out.sum() - 1.0) < 1e-5


def test_masked_softmax_rejects_all_masked():
    with pytest.raises(ValueError, match="every position is masked"):
        ag.masked_softmax(Tensor([1.0, 2.0]), np.array([False, False]))


def test_matmul_three_layouts_match_numpy():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(4, 3))
    v = rng.normal(size=3)
    u = rng.normal(size=4)
    n = rng.normal(size=(3, 5))
    assert np.allclose(ag.matmul(Tensor(m), Tensor(v)).data, m @ v, atol=1e-6)
    assert np.allclose(ag.matmul(Tensor(u), Tensor(m)).data, u @ m, atol=1e-6)
    assert np.allclose(ag.matmul(Tensor(m), Tensor(n)).data, m @ n, atol=1e-6)


def test_shape_errors_name_the_op_and_shapes():
    with pytest.raises(ValueError, match=r"matmul.*\(4, 3\).*\(4,\)"):
        ag.matmul(Tensor(np.zeros((4, 3))), Tensor(np.zeros(4)))
    with pytest.raises(ValueError, match="add"):
        ag.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(ValueError, match="concat"):
        ag.concat(Tensor(np.zeros((2, 2))), Tensor(np.zeros(2)))


def test_clamp_forward_and_boundary():
    x = Tensor(np.array([-2.0, 0.5, 3.0]))
    out = ag.clamp(x, 0.0, 1.0)
    assert np.allclose(out.data, [0.0, 0.5, 1.0])


def test_embed_row_and_pick_bounds():
    table = Tensor(np.arange(12.0).reshape(4, 3))
    assert np.allclose(ag.embed_row(table, 2).data, [6.0, 7.0, 8.0])
    with pytest.raises(ValueError, match="embed_row"):
        ag.embed_row(table, 4)
    with pytest.raises(ValueError, match="pick"):
        ag.pick(Tensor(np.zeros(3)), 3)


def test_vsum_rows_stack_add_rowvec_values():
    rows = [Tensor(np.array([1.0, 2.0])), Tensor(np.array([3.0, 4.0]))]
    stacked = ag.rows_stack(rows)
    assert stacked.shape == (2, 2)
    assert ag.vsum(stacked).item() == 10.0
    shifted = ag.add_rowvec(stacked, Tensor(np.array([10.0, 20.0])))
    assert np.allclose(shifted.data, [[11.0, 22.0], [13.0, 24.0]])


# --- backward closed forms ------------------------------------------------------


def test_product_rule_gradients():
    x = Parameter("x", np.array([2.0]), dtype=np.float64)
    y = Parameter("y", np.array([3.0]), dtype=np.float64)
    with Tape() as tape:
        loss = ag.vsum(ag.mul(x, y))
        tape.backward(loss)
    assert np.allclose(x.grad, [3.0])
    assert np.allclose(y.grad, [2.0])


def test_sigmoid_gradient_at_zero():
    x = Parameter("x", np.array([0.0]), dtype=np.float64)
    with Tape() as tape:
        tape.backward(ag.vsum(ag.sigmoid(x)))
    assert np.allclose(x.grad, [0.25])


def test_tanh_gradient_at_zero_is_ones():
    x = Parameter("x", np.zeros(5), dtype=np.float64)
    with Tape() as tape:
        tape.backward(ag.vsum(ag.tanh(x)))
    assert np.allclose(x.grad, np.ones(5))


def test_clamped_entries_get_zero_gradient():
    x = Parameter("x", np.array([-2.0, 0.5, 3.0]), dtype=np.float64)
    with Tape() as tape:
        tape.backward(ag.vsum(ag.clamp(x, 0.0, 1.0)))
    assert np.allclose(x.grad, [0.0, 1.0, 0.0])


def test_gradient_accumulates_over_repeated_use():
    p = Parameter("p", np.array([1.5, -0.5]), dtype=np.float64)
    with Tape() as tape:
        # p enters twice: d/dp sum(p*p) = 2p
        tape.backward(ag.vsum(ag.mul(p, p)))
    assert np.allclose(p.grad, 2.0 * p.data)


def test_grad_buffers_persist_across_tapes_until_zeroed():
    p = Parameter("p", np.array([1.0]), dtype=np.float64)
    for _ in range(2):
        with Tape() as tape:
            tape.backward(ag.vsum(ag.scale(p, 3.0)))
    assert np.allclose(p.grad, [6.0]), "two backward passes should accumulate"
    p.zero_grad()
    assert np.allclose(p.grad, [0.0])


def test_backward_is_linear_in_the_loss():
    rng = np.random.default_rng(4)
    p = Parameter("p", rng.normal(size=4), dtype=np.float64)

    def grad_of(fn):
        p.zero_grad()
        with Tape() as tape:
            tape.backward(fn())
        return p.grad.copy()

    f = lambda: ag.vsum(ag.tanh(p))
    g = lambda: ag.vsum(ag.mul(p, p))
    combo = lambda: ag.add(ag.scale(f(), 2.0), ag.scale(g(), -3.0))
    assert np.allclose(grad_of(combo), 2.0 * grad_of(f) - 3.0 * grad_of(g), atol=1e-12)


# --- tape semantics -------------------------------------------------------------


def test_tape_reuse_is_an_error():
    p = Parameter("p", np.array([1.0]))
    with Tape() as tape:
        loss = ag.vsum(p)
        tape.backward(loss)
        with pytest.raises(RuntimeError, match="already ran"):
            tape.backward(loss)


def test_backward_on_empty_tape_is_an_error():
    with Tape() as tape:
        with pytest.raises(RuntimeError, match="empty tape"):
            tape.backward(Tensor(np.array(1.0)))


def test_backward_rejects_non_scalar_loss():
    p = Parameter("p", np.ones(3))
    with Tape() as tape:
        out = ag.scale(p, 2.0)
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(out)


def test_ops_outside_a_tape_are_not_recorded():
    with Tape() as outer:
        pass  # recording only happens between enter and exit
    p = Parameter("p", np.ones(2))
    ag.vsum(ag.tanh(p))
    assert len(outer) == 0


# --- gradients of every primitive against finite differences --------------------


def test_primitive_gradients_randomized():
    rng = np.random.default_rng(5)
    store = f64_store()
    a = store.create("a", (3, 4))
    b = store.create("b", (4,))
    c = store.create("c", (3,))
    m = store.create("m", (3, 4))
    a.data, b.data, c.data, m.data = (rng.normal(size=s) for s in ((3, 4), (4,), (3,), (3, 4)))

    mask = np.array([True, False, True])
    cases = {
        "matmul_mv": lambda: ag.vsum(ag.tanh(ag.matmul(a, b))),
        "matmul_vm": lambda: ag.vsum(ag.matmul(c, a)),
        "matmul_mm": lambda: ag.vsum(ag.sigmoid(ag.matmul(a, ag.transpose(m)))),
        "add_mul": lambda: ag.vsum(ag.mul(ag.add(a, m), m)),
        "scale_shift": lambda: ag.vsum(ag.add_scalar(ag.scale(b, -1.7), 0.3)),
        "concat": lambda: ag.vsum(ag.tanh(ag.concat(b, c))),
        "softmax": lambda: ag.vsum(ag.mul(ag.softmax(b), ag.constant([1.0, -2.0, 3.0, 0.5], dtype=np.float64))),
        "masked_softmax": lambda: ag.pick(ag.masked_softmax(c, mask), 0),
        "log_clamp": lambda: ag.vsum(ag.log(ag.clamp(ag.sigmoid(b), 1e-7, 1 - 1e-7))),
        "log_softmax_pick": lambda: ag.scale(ag.pick(ag.log_softmax(b), 2), -1.0),
        "embed": lambda: ag.vsum(ag.tanh(ag.embed_row(a, 1))),
        "rows": lambda: ag.vsum(ag.add_rowvec(ag.rows_stack([b, b]), b)),
    }
    for name, fn in cases.items():
        result = check_grads(fn, store.parameters())
        assert result.entries == sum(p.data.size for p in store.parameters()), name


# --- GRU cell -------------------------------------------------------------------


def make_gru(store, prefix, input_dim, hidden, rng):
    p = GRUCellParams(
        w_z=store.create(f"{prefix}.w_z", (hidden, input_dim)),
        u_z=store.create(f"{prefix}.u_z", (hidden, hidden)),
        b_z=store.create(f"{prefix}.b_z", (hidden,)),
        w_r=store.create(f"{prefix}.w_r", (hidden, input_dim)),
        u_r=store.create(f"{prefix}.u_r", (hidden, hidden)),
        b_r=store.create(f"{prefix}.b_r", (hidden,)),
        w_h=store.create(f"{prefix}.w_h", (hidden, input_dim)),
        u_h=store.create(f"{prefix}.u_h", (hidden, hidden)),
        b_h=store.create(f"{prefix}.b_h", (hidden,)),
    )
    for param in p.all():
        param.data = rng.normal(scale=0.5, size=param.data.shape)
    return p


def test_gru_cell_all_zero_params_halves_previous_state():
    store = f64_store()
    rng = np.random.default_rng(6)
    p = make_gru(store, "g", 3, 4, rng)
    for param in p.all():
        param.data = np.zeros_like(param.data)
    h_prev = rng.normal(size=4)
    out = gru_cell(Tensor(rng.normal(size=3), dtype=np.float64),
                   Tensor(h_prev, dtype=np.float64), p)
    assert np.allclose(out.data, 0.5 * h_prev, atol=1e-12)

    zero = gru_cell(Tensor(np.zeros(3), dtype=np.float64),
                    Tensor(np.zeros(4), dtype=np.float64), p)
    assert np.allclose(zero.data, np.zeros(4))


def test_gru_cell_matches_scalar_reference():
    rng = np.random.default_rng(7)
    for case in range(100):
        input_dim = int(rng.integers(1, 5))
        hidden = int(rng.integers(1, 5))
        store = f64_store(seed=case)
        p = make_gru(store, "g", input_dim, hidden, rng)
        x = rng.normal(size=input_dim)
        h = rng.normal(size=hidden)
        got = gru_cell(Tensor(x, dtype=np.float64), Tensor(h, dtype=np.float64), p).data
        pref = {name: getattr(p, name).data.tolist()
                for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h")}
        want = ref.gru_cell(list(x), list(h), pref)
        assert np.allclose(got, want, atol=1e-6), f"case {case}"


def test_gru_cell_gradients():
    rng = np.random.default_rng(8)
    store = f64_store()
    p = make_gru(store, "g", 3, 4, rng)
    x = Tensor(rng.normal(size=3), dtype=np.float64)
    h = Tensor(rng.normal(size=4), dtype=np.float64)
    check_grads(lambda: ag.vsum(ag.tanh(gru_cell(x, h, p))), store.parameters())


# --- parameter store ------------------------------------------------------------


def test_store_rejects_duplicate_names():
    store = ParameterStore(seed=0)
    store.create("w", (2, 2))
    with pytest.raises(ValueError, match="duplicate parameter name"):
        store.create("w", (2, 2))


def test_store_preserves_creation_order_and_dtype():
    store = ParameterStore(seed=0, dtype=np.float32)
    for name in ("c", "a", "b"):
        store.create(name, (2,))
    assert store.names() == ["c", "a", "b"]
    assert all(p.data.dtype == np.float32 for p in store.parameters())


def test_store_init_is_uniform_in_range_and_seeded():
    s1 = ParameterStore(seed=9)
    s2 = ParameterStore(seed=9)
    p1 = s1.create("w", (50, 50))
    p2 = s2.create("w", (50, 50))
    assert np.array_equal(p1.data, p2.data)
    assert np.abs(p1.data).max() <= 0.08
    other = ParameterStore(seed=10).create("w", (50, 50))
    assert not np.array_equal(p1.data, other.data)


def test_float32_and_float64_stores_start_identical():
    a = ParameterStore(seed=11, dtype=np.float32).create("w", (20, 20))
    b = ParameterStore(seed=11, dtype=np.float64).create("w", (20, 20))
    assert np.array_equal(a.data, b.data.astype(np.float32))


# --- SGD ------------------------------------------------------------------------


def test_sgd_basic_update():
    p = Parameter("p", np.array([1.0]), dtype=np.float64)
    p.grad = np.array([0.5])
    norm = sgd_step([p], learning_rate=0.5)
    assert np.allclose(p.data, [0.75])
    assert abs(norm - 0.5) < 1e-12


def test_sgd_zero_gradient_leaves_value():
    p = Parameter("p", np.array([2.0, -1.0]))
    sgd_step([p], learning_rate=1.0, clip_norm=5.0)
    assert np.allclose(p.data, [2.0, -1.0])


def test_sgd_clip_rescales_and_reports_preclip_norm():
    p = Parameter("p", np.zeros(4), dtype=np.float64)
    p.grad = np.full(4, 5.0)  # norm 10
    norm = sgd_step([p], learning_rate=1.0, clip_norm=5.0)
    assert abs(norm - 10.0) < 1e-12
    # effective gradient halved
    assert np.allclose(p.data, np.full(4, -2.5))


def test_sgd_rejects_bad_hyperparameters():
    p = Parameter("p", np.array([1.0]))
    with pytest.raises(ValueError, match="learning_rate"):
        sgd_step([p], learning_rate=0.0)
    with pytest.raises(ValueError, match="clip_norm"):
        sgd_step([p], learning_rate=0.1, clip_norm=0.0)


# --- the gradient checker itself ---------------------------------------------


def test_finite_diff_check_linear_loss_is_near_exact():
    store = f64_store()
    p = store.create("p", (5,))
    coeff = ag.constant(np.arange(1.0, 6.0), dtype=np.float64)
    result = finite_diff_check(lambda: ag.vsum(ag.mul(p, coeff)), [p])
    assert result.max_rel_error < 1e-4
    assert result.entries == 5


def test_finite_diff_check_detects_nondeterministic_loss():
    store = f64_store()
    p = store.create("p", (2,))
    counter = [0]

    def jittery():
        counter[0] += 1
        return ag.add_scalar(ag.vsum(p), counter[0] * 1e-3)

    with pytest.raises(RuntimeError, match="not deterministic"):
        finite_diff_check(jittery, [p])


def test_finite_diff_check_fault_injection_is_caught():
    store = f64_store()
    rng = np.random.default_rng(12)
    p = store.create("p", (3,))
    p.data = rng.normal(size=3) + 2.0  # keep gradients well away from zero

    def corrupt(grads):
        grads["p"][1] *= 2.0

    result = finite_diff_check(lambda: ag.vsum(ag.mul(p, p)), [p], mutate_grads=corrupt)
    assert result.param_name == "p" and result.index == (1,)
    assert 0.5 < result.max_rel_error < 1.5, "doubling a gradient reads as rel error near 1"


def test_finite_diff_check_argument_validation():
    store = f64_store()
    p = store.create("p", (2,))
    with pytest.raises(ValueError, match="epsilon"):
        finite_diff_check(lambda: ag.vsum(p), [p], epsilon=0.0)
    with pytest.raises(ValueError, match="no parameters"):
        finite_diff_check(lambda: ag.vsum(p), [])


# --- misc tensor behavior -------------------------------------------------------


def test_tensor_casts_unsupported_dtypes_to_float32():
    t = Tensor(np.array([1, 2, 3]))
    assert t.data.dtype == np.float32


def test_item_requires_scalar():
    with pytest.raises(ValueError, match="non-scalar"):
        Tensor(np.zeros(3)).item()


def test_mean_tensors_requires_terms_and_averages():
    terms = [Tensor(np.array(float(v))) for v in (1.0, 2.0, 6.0)]
    assert abs(ag.mean_tensors(terms).item() - 3.0) < 1e-6
    with pytest.raises(ValueError, match="empty"):
        ag.mean_tensors([])
