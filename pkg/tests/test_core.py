import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mata_irl import core as C
from mata_irl.errors import ContractError, DimensionError


def _fd_check(build, arrays, rng=None):
    """Compare backward against central differences for every array in ``arrays``."""
    leaves = [C.Tensor(a, requires_grad=True) for a in arrays]

    def value():
        return float(build(*[C.Tensor(l.data) for l in leaves]).data)

    with C.Tape() as tape:
        loss = build(*leaves)
    C.backward(tape, loss)
    errs = []
    for leaf in leaves:
        num = C.numeric_grad(value, leaf.data)
        errs.append(C.relative_error(leaf.grad, num))
    return max(errs)


def test_matmul_identity_and_projector():
    b = C.Tensor([[1, 2], [3, 4]])
    assert np.array_equal(C.matmul(C.Tensor(np.eye(2)), b).data, b.data)
    p = C.Tensor([[1, 0], [0, 0]])
    out = C.matmul(p, C.Tensor([[5, 6], [7, 8]])).data
    assert np.array_equal(out, [[5, 6], [0, 0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        C.matmul(C.Tensor(np.zeros((2, 3))), C.Tensor(np.zeros((2, 3))))


def test_matmul_gradient_fd():
    rng = np.random.default_rng(0)
    err = _fd_check(lambda a, b: C.matmul(a, b).sum(), [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))])
    assert err < 1e-4


def test_softmax_closed_forms():
    out = C.softmax_rows(C.Tensor([[0.0, 0.0, 0.0]])).data
    assert np.allclose(out, 1 / 3, atol=1e-15)
    c = 123.4
    out = C.softmax_rows(C.Tensor([[c, c + math.log(3)]])).data
    assert np.allclose(out, [[0.25, 0.75]], atol=1e-12)


def test_softmax_jacobian_fd():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(2, 5))
    err = _fd_check(lambda x: (C.softmax_rows(x) * C.Tensor(w)).sum(), [rng.normal(size=(2, 5))])
    assert err < 1e-4


@settings(max_examples=50, deadline=None)
@given(
    rows=st.integers(1, 8), cols=st.integers(1, 8), shift=st.floats(-50, 50),
    seed=st.integers(0, 2**31),
)
def test_softmax_rows_normalized_and_shift_invariant(rows, cols, shift, seed):
    x = np.random.default_rng(seed).normal(size=(rows, cols)) * 5
    y = C.softmax_rows(C.Tensor(x)).data
    assert np.all(y >= 0)
    assert np.allclose(y.sum(axis=1), 1.0, atol=1e-9)
    y2 = C.softmax_rows(C.Tensor(x + shift)).data
    assert np.allclose(y, y2, atol=1e-9)


def test_backward_linear_and_quadratic():
    w = C.Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    with C.Tape() as tape:
        loss = w.sum()
    C.backward(tape, loss)
    assert np.array_equal(w.grad, np.ones((2, 2)))
    w.grad = None
    with C.Tape() as tape:
        loss = (w * w).sum() * 0.5
    C.backward(tape, loss)
    assert np.array_equal(w.grad, w.data)


def test_backward_rejects_non_scalar_and_cleared_tape():
    w = C.Tensor(np.ones((2, 2)), requires_grad=True)
    with C.Tape() as tape:
        out = w * 2.0
        loss = out.sum()
    with pytest.raises(ContractError):
        C.backward(tape, out)
    tape.clear()
    with pytest.raises(ContractError):
        C.backward(tape, loss)


def test_unreachable_params_get_zero():
    store = C.ParamStore({"a": np.ones(3), "b": np.ones(2)})
    with C.Tape() as tape:
        loss = store["a"].sum()
    C.backward(tape, loss)
    g = store.grads()
    assert np.array_equal(g["b"], np.zeros(2))
    assert np.array_equal(g["a"], np.ones(3))


def test_backward_additivity_over_independent_subgraphs():
    rng = np.random.default_rng(2)
    a0, b0 = rng.normal(size=(3, 3)), rng.normal(size=(3,))
    a, b = C.Tensor(a0, requires_grad=True), C.Tensor(b0, requires_grad=True)
    with C.Tape() as tape:
        loss = C.tanh(a).sum() + C.sigmoid(b).sum()
    C.backward(tape, loss)
    joint = a.grad.copy(), b.grad.copy()
    a.grad = b.grad = None
    with C.Tape() as t1:
        l1 = C.tanh(a).sum()
    C.backward(t1, l1)
    with C.Tape() as t2:
        l2 = C.sigmoid(b).sum()
    C.backward(t2, l2)
    assert np.allclose(joint[0], a.grad) and np.allclose(joint[1], b.grad)


UNARY = {
    "relu": C.relu,
    "leaky_relu": C.leaky_relu,
    "tanh": C.tanh,
    "sigmoid": C.sigmoid,
    "exp": C.exp,
    "log_softmax": C.log_softmax_rows,
    "softmax": C.softmax_rows,
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_fd(name):
    rng = np.random.default_rng(sorted(UNARY).index(name))
    for _ in range(5):
        x = rng.normal(size=(rng.integers(1, 8), rng.integers(1, 8)))
        w = rng.normal(size=x.shape)
        err = _fd_check(lambda t: (UNARY[name](t) * C.Tensor(w)).sum(), [x])
        assert err < 1e-4


def test_log_fd_and_clamp():
    rng = np.random.default_rng(3)
    x = rng.uniform(0.1, 2.0, size=(4, 3))
    assert _fd_check(lambda t: C.log(t).sum(), [x]) < 1e-4
    assert np.isfinite(C.log(C.Tensor([0.0])).data).all()
    assert C.log(C.Tensor([0.0])).data[0] == pytest.approx(math.log(1e-12))


def test_structural_ops_fd():
    rng = np.random.default_rng(4)
    w = rng.normal(size=(3, 7))
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 3))
    assert _fd_check(lambda x, y: (C.concat([x, y], axis=1) * C.Tensor(w)).sum(), [a, b]) < 1e-4
    assert _fd_check(lambda x: (C.mean(x, axis=0) * C.Tensor(w[0, :4])).sum(), [a]) < 1e-4
    assert _fd_check(lambda x: (x.T @ C.Tensor(w[:, :2])).sum(), [a]) < 1e-4
    assert _fd_check(lambda x, y: ((x + C.Tensor(w[:, :4])) * y[0:3, 0:1]).sum(), [a, b]) < 1e-4
    assert _fd_check(lambda x: (x[:, 1] * x[:, 2]).sum(), [a]) < 1e-4
    # bias-style broadcast
    bias = rng.normal(size=(4,))
    assert _fd_check(lambda x, bb: C.tanh(x + bb).sum(), [a, bias]) < 1e-4


def test_adam_first_step_closed_form():
    store = C.ParamStore({"w": np.array([1.0])})
    state = C.AdamState()
    C.adam_step(store, {"w": np.array([2.0])}, state, lr=0.1)
    assert store["w"].data[0] == pytest.approx(1.0 - 0.1 * 2 / (2 + 1e-8), abs=1e-15)
    assert state.t == 1


def test_adam_zero_gradient_keeps_params():
    store = C.ParamStore({"w": np.array([1.0, -3.0])})
    state = C.AdamState()
    C.adam_step(store, {"w": np.zeros(2)}, state, lr=0.1)
    assert np.array_equal(store["w"].data, [1.0, -3.0])
    assert state.t == 1


def test_adam_two_steps_match_hand_recurrence():
    g, lr, theta = 0.7, 0.05, 0.3
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = v = 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    store = C.ParamStore({"w": np.array([0.3])})
    state = C.AdamState()
    for _ in range(2):
        C.adam_step(store, {"w": np.array([g])}, state, lr)
    assert store["w"].data[0] == pytest.approx(theta, abs=1e-15)


def test_adam_missing_gradient_and_determinism():
    store = C.ParamStore({"a": np.ones(2), "b": np.ones(1)})
    with pytest.raises(ContractError):
        C.adam_step(store, {"a": np.ones(2)}, C.AdamState(), 0.1)
    s1, s2 = store.copy(), store.copy()
    st1, st2 = C.AdamState(), C.AdamState()
    grads = {"a": np.array([0.3, -1.0]), "b": np.array([2.0])}
    C.adam_step(s1, grads, st1, 0.01)
    C.adam_step(s2, grads, st2, 0.01)
    assert all(np.array_equal(s1[n].data, s2[n].data) for n in s1.names())


def test_param_store_sorted_and_unique():
    store = C.ParamStore({"z": [1.0], "a": [2.0]})
    assert store.names() == ["a", "z"]
    assert all(t.requires_grad for _, t in store.items())
    with pytest.raises(ContractError):
        store.add("a", [0.0])


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    store = C.ParamStore({"mhsa/w": rng.normal(size=(3, 2)), "head/b": rng.normal(size=(2,))})
    path = tmp_path / "ck.bin"
    C.save_checkpoint(path, store)
    head = path.read_bytes().split(b"\n", 1)[0]
    manifest = json.loads(head)
    assert manifest["format_version"] == 1
    assert [e["name"] for e in manifest["params"]] == ["head/b", "mhsa/w"]
    assert [e["offset"] for e in manifest["params"]] == [0, 8]
    loaded = C.load_checkpoint(path)
    for name in store.names():
        assert np.allclose(loaded[name].data, store[name].data.astype(np.float32))
