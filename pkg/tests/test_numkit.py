import math

import numpy as np
import pytest

from gradcheck_util import finite_difference_grads, max_relative_error
from highway_rl import numkit as nk
from highway_rl.errors import ConfigurationError, ContractViolation, FormatError, TrainingError


def P(values):
    return nk.Param(np.asarray(values, dtype=np.float64))


class TestAffine:
    def test_identity(self):
        y = nk.affine(None, np.array([3.0, -1.0]), P(np.eye(2)), P([0.0, 0.0]))
        assert np.array_equal(y.value, [3.0, -1.0])

    def test_hand_matrix(self):
        w = P([[1.0, 2.0], [0.0, 1.0]])
        b = P([1.0, 1.0])
        y = nk.affine(None, np.array([1.0, 1.0]), w, b)
        assert np.array_equal(y.value, [4.0, 2.0])

    def test_zero_weight(self):
        y = nk.affine(None, np.array([7.0, -3.0]), P(np.zeros((1, 2))), P([5.0]))
        assert np.array_equal(y.value, [5.0])

    def test_batch_matches_loop(self):
        rng = np.random.default_rng(0)
        w = P(rng.normal(size=(3, 4)))
        b = P(rng.normal(size=3))
        xs = rng.normal(size=(5, 4))
        batch = nk.affine(None, xs, w, b).value
        rows = [nk.affine(None, x, w, b).value for x in xs]
        assert np.allclose(batch, np.stack(rows), atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            nk.affine(None, np.zeros(3), P(np.eye(2)), P([0.0, 0.0]))
        with pytest.raises(ConfigurationError):
            nk.affine(None, np.zeros(2), P(np.eye(2)), P([0.0]))


class TestRecurrentStep:
    def test_all_zero(self):
        h = nk.recurrent_step(
            None, np.zeros(2), np.zeros(3), P(np.zeros((3, 2))), P(np.zeros((3, 3))), P(np.zeros(3))
        )
        assert np.array_equal(h.value, np.zeros(3))

    def test_identity_recurrence(self):
        h0 = np.array([0.2, -0.5, 1.3])
        h = nk.recurrent_step(
            None, np.zeros(2), h0, P(np.zeros((3, 2))), P(np.eye(3)), P(np.zeros(3))
        )
        assert np.allclose(h.value, np.tanh(h0), atol=0)

    def test_saturation(self):
        # float64 tanh rounds to exactly 1.0 past ~19, so probe at 10
        h = nk.recurrent_step(
            None, np.zeros(1), np.zeros(1), P(np.zeros((1, 1))), P(np.zeros((1, 1))), P([10.0])
        )
        assert 1.0 - 1e-6 < h.value[0] < 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            nk.recurrent_step(
                None, np.zeros(3), np.zeros(3), P(np.zeros((3, 2))), P(np.eye(3)), P(np.zeros(3))
            )


class TestSoftmax:
    def test_equal_logits(self):
        s = nk.softmax(None, np.zeros(3))
        assert np.allclose(s.value, [1 / 3] * 3, atol=1e-15)

    def test_hand_value(self):
        s = nk.softmax(None, np.array([math.log(2.0), 0.0]))
        assert np.allclose(s.value, [2 / 3, 1 / 3], atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            z = rng.normal(scale=5.0, size=rng.integers(1, 9))
            c = rng.normal(scale=100.0)
            a = nk.softmax(None, z).value
            b = nk.softmax(None, z + c).value
            assert np.argmax(a) == np.argmax(b)
            assert np.max(np.abs(a - b)) < 1e-9

    def test_simplex(self):
        rng = np.random.default_rng(2)
        z = rng.normal(scale=50.0, size=(500, 6))
        s = nk.softmax(None, z).value
        assert np.all(s > 0)
        assert np.max(np.abs(s.sum(axis=1) - 1.0)) < 1e-9


class TestLogSumExp:
    def test_singleton_exact(self):
        assert nk.log_sum_exp(None, np.array([1.7])).value == 1.7

    def test_two_zeros(self):
        assert abs(nk.log_sum_exp(None, np.zeros(2)).value - math.log(2.0)) < 1e-12

    def test_no_overflow(self):
        v = nk.log_sum_exp(None, np.array([1000.0, 1000.0])).value
        assert abs(v - (1000.0 + math.log(2.0))) < 1e-9

    def test_matches_naive_at_small_scale(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            t = rng.normal(scale=3.0, size=rng.integers(1, 8))
            naive = math.log(np.sum(np.exp(t)))
            assert abs(nk.log_sum_exp(None, t).value - naive) < 1e-12

    def test_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            t = rng.normal(scale=10.0, size=rng.integers(1, 10))
            v = float(nk.log_sum_exp(None, t).value)
            assert v >= t.max()
            assert v <= t.max() + math.log(len(t)) + 1e-12

    def test_neg_inf_terms(self):
        v = nk.log_sum_exp(None, np.array([-np.inf, 0.0])).value
        assert abs(v) < 1e-12
        assert nk.log_sum_exp(None, np.array([-np.inf, -np.inf])).value == -np.inf

    def test_empty_is_contract_violation(self):
        with pytest.raises(ContractViolation):
            nk.log_sum_exp(None, np.array([]))


class TestBackward:
    def test_linear_gradient(self):
        tape = nk.Tape()
        w = P([[1.0]])
        b = P([0.0])
        y = nk.affine(tape, np.array([3.0]), w, b)
        loss = nk.total(tape, y)
        tape.backward(loss)
        assert w.grad[0, 0] == 3.0
        assert b.grad[0] == 1.0

    def test_repeated_backward_accumulates(self):
        tape = nk.Tape()
        w = P([[1.0]])
        y = nk.affine(tape, np.array([3.0]), w, P([0.0]))
        loss = nk.total(tape, y)
        tape.backward(loss)
        tape.backward(loss)
        assert w.grad[0, 0] == 6.0

    def test_constant_only_graph(self):
        tape = nk.Tape()
        unused = P([1.0, 2.0])
        s = nk.softmax(tape, np.array([0.0, 1.0]))
        loss = nk.mean(tape, s)
        tape.backward(loss)
        assert np.array_equal(unused.grad, np.zeros(2))

    def test_backward_before_forward(self):
        with pytest.raises(ContractViolation):
            nk.Tape().backward(nk.Var(0.0))

    def test_chain_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        params = {
            "w1": P(nk.uniform_init(rng, 4, 3)),
            "b1": P(np.zeros(4)),
            "w2": P(nk.uniform_init(rng, 2, 4)),
            "b2": P(np.zeros(2)),
        }
        x = rng.normal(size=3)

        def forward():
            tape = nk.Tape()
            h = nk.relu(tape, nk.affine(tape, x, params["w1"], params["b1"]))
            y = nk.affine(tape, h, params["w2"], params["b2"])
            return tape, nk.mean(tape, nk.square(tape, y))

        tape, loss = forward()
        tape.backward(loss)
        analytic = {k: p.grad.copy() for k, p in params.items()}
        numeric = finite_difference_grads(lambda: float(forward()[1].value), params)
        assert max_relative_error(analytic, numeric) < 1e-4


class TestOptimizers:
    def test_sgd_hand_value(self):
        w = P([1.0])
        w.grad[:] = 0.5
        nk.SGD({"w": w}, lr=0.1).step()
        assert np.allclose(w.value, [0.95], atol=1e-15)
        assert np.array_equal(w.grad, [0.0])

    def test_zero_grad_is_noop(self):
        w = P([1.0, -2.0])
        before = w.value.copy()
        nk.SGD({"w": w}, lr=0.1).step()
        assert np.array_equal(w.value, before)
        w2 = P([1.0, -2.0])
        nk.Adam({"w": w2}, lr=0.1).step()
        assert np.array_equal(w2.value, before)

    def test_nonfinite_grad_raises(self):
        w = P([1.0])
        w.grad[:] = np.nan
        with pytest.raises(TrainingError, match="w"):
            nk.Adam({"w": w}, lr=0.1).step()

    def test_adam_determinism(self):
        def run():
            rng = np.random.default_rng(7)
            w = P(nk.uniform_init(rng, 3, 3))
            opt = nk.Adam({"w": w}, lr=1e-2)
            for _ in range(25):
                tape = nk.Tape()
                y = nk.affine(tape, rng.normal(size=3), w, P(np.zeros(3)))
                loss = nk.mean(tape, nk.square(tape, y))
                tape.backward(loss)
                opt.step()
            return w.value.copy()

        a, b = run(), run()
        assert np.array_equal(a, b)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        params = {
            "layer.w": P(rng.normal(size=(3, 5)) * 1e-7),
            "layer.b": P(rng.normal(size=3) * 1e3),
        }
        path = tmp_path / "weights.json"
        nk.save_params(params, path)
        loaded = nk.load_params(path)
        assert set(loaded) == set(params)
        for name in params:
            assert np.array_equal(loaded[name].value, params[name].value)

    def test_wrong_architecture_names_tensor(self, tmp_path):
        path = tmp_path / "weights.json"
        nk.save_params({"w": P(np.zeros((2, 2)))}, path)
        current = {"w": P(np.zeros((3, 2)))}
        with pytest.raises(FormatError, match="'w'"):
            nk.adopt_params(current, nk.load_params(path))
        current2 = {"other": P(np.zeros((2, 2)))}
        with pytest.raises(FormatError, match="other|w"):
            nk.adopt_params(current2, nk.load_params(path))

    def test_empty_set(self, tmp_path):
        path = tmp_path / "empty.json"
        nk.save_params({}, path)
        assert nk.load_params(path) == {}
