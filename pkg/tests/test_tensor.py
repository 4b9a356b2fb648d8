import threading

import numpy as np
import pytest

from imvalign import ops
from imvalign.layers import encoder_block, init_block, sinusoidal_at, sinusoidal_positions
from imvalign.params import ParameterStore
from imvalign.tensor import Parameter, Tape, Tensor, active_tape, no_grad


def test_integer_data_becomes_float():
    assert Tensor([1, 2]).dtype == np.float64
    assert Tensor(np.zeros(2, dtype=np.float32)).dtype == np.float32


def test_operator_sugar_matches_ops():
    a, b = Tensor(np.array([1.0, 2.0])), Tensor(np.array([3.0, 5.0]))
    np.testing.assert_array_equal((a + b).data, [4, 7])
    np.testing.assert_array_equal((a - b).data, [-2, -3])
    np.testing.assert_array_equal((2 * a).data, [2, 4])
    np.testing.assert_array_equal((a / b).data, [1 / 3, 0.4])
    np.testing.assert_array_equal((-a).data, [-1, -2])
    m = Tensor(np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(m.T.data, m.data.T)
    np.testing.assert_array_equal((m @ m.T).data, m.data @ m.data.T)
    np.testing.assert_array_equal(m[1].data, [3, 4, 5])


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ops.mul(x, 2.0)
    with pytest.raises(ValueError):
        tape.backward(y)
    tape.backward(y, seed=np.ones(3))
    np.testing.assert_array_equal(x.grad, 2.0)


def test_constants_are_not_recorded():
    with Tape() as tape:
        ops.add(Tensor(np.ones(2)), Tensor(np.ones(2)))
    assert len(tape) == 0


def test_tapes_nest_and_unwind():
    assert active_tape() is None
    with Tape() as outer:
        with Tape() as inner:
            assert active_tape() is inner
        assert active_tape() is outer
        with no_grad():
            assert active_tape() is None
    assert active_tape() is None


def test_tape_is_thread_local():
    seen = []
    with Tape():
        t = threading.Thread(target=lambda: seen.append(active_tape()))
        t.start()
        t.join()
    assert seen == [None]


def test_parameter_flags():
    p = Parameter(np.zeros(2), "w", trainable=False)
    assert not p.requires_grad and p.name == "w" and "w" in repr(p)


class TestStore:
    def test_duplicate_name(self):
        s = ParameterStore()
        s.add("a", np.zeros(1))
        with pytest.raises(KeyError):
            s.add("a", np.zeros(1))

    def test_dtype_and_cast(self):
        s = ParameterStore(dtype=np.float32)
        p = s.add("a", np.arange(3))
        assert p.dtype == np.float32
        p.grad = np.ones(3, dtype=np.float32)
        s.astype(np.float64)
        assert s["a"].dtype == np.float64 and s["a"].grad is None

    def test_trainable_filter(self):
        s = ParameterStore()
        s.add("a", np.zeros(1))
        s.add("b", np.zeros(1), trainable=False)
        assert [p.name for p in s.trainable()] == ["a"]

    def test_audit_records_reads_and_nests(self):
        s = ParameterStore()
        for n in "abc":
            s.add(n, np.zeros(1))
        s["c"]
        with s.audit() as outer:
            s["a"]
            with s.audit() as inner:
                s["b"]
        assert inner == {"b"} and outer == {"a", "b"}
        with s.audit() as after:
            pass
        assert after == set()

    def test_initialisers(self):
        s = ParameterStore(dtype=np.float64)
        s.dense("d", 4, 3, np.random.default_rng(0))
        s.norm("n", 3)
        assert s["d.w"].shape == (4, 3) and not s["d.b"].data.any()
        np.testing.assert_array_equal(s["n.g"].data, 1.0)


class TestLayers:
    def test_sinusoid_integer_positions(self):
        np.testing.assert_array_equal(sinusoidal_positions(5, 8), sinusoidal_at(np.arange(5), 8))
        pe = sinusoidal_at([0.0], 6, np.float64)[0]
        np.testing.assert_array_equal(pe, [0, 1, 0, 1, 0, 1])

    def test_sinusoid_fractional_position(self):
        pe = sinusoidal_at([2.5], 4, np.float64)[0]
        np.testing.assert_allclose(pe, [np.sin(2.5), np.cos(2.5), np.sin(0.025), np.cos(0.025)])

    def test_fresh_block_is_identity(self):
        s = ParameterStore(dtype=np.float64)
        init_block(s, "b", 8, 16, np.random.default_rng(0))
        x = Tensor(np.random.default_rng(1).normal(size=(5, 8)))
        np.testing.assert_array_equal(encoder_block(x, s, "b", 2).data, x.data)

    def test_block_mixes_frames_once_trained(self):
        rng = np.random.default_rng(2)
        s = ParameterStore(dtype=np.float64)
        init_block(s, "b", 8, 16, rng)
        for name in ("b.attn.o.w", "b.ffn.out.w"):
            s[name].data[...] = rng.normal(size=s[name].shape)
        x = rng.normal(size=(5, 8))
        y = x.copy()
        y[4] += rng.normal(size=8)
        a = encoder_block(Tensor(x), s, "b", 2).data
        b = encoder_block(Tensor(y), s, "b", 2).data
        assert not np.allclose(a[0], b[0])
