"""Tests for the tensor/tape core: forward values, adjoints, Adam, checker."""

import numpy as np
import pytest

from posefield import autodiff as ad
from posefield.autodiff import Adam, Tensor, adam_step, backward, check_gradients
from posefield.errors import ContractError, DeterminismError, OptimizerError, ShapeError


def finite_diff(loss_fn, arrays, eps=1e-6):
    """Central finite differences of loss_fn() w.r.t. every array element."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gf[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(b)))


class TestForward:
    def test_matmul_identity(self):
        v = Tensor([[2.0], [3.0]])
        out = ad.matmul(Tensor(np.eye(2)), v)
        np.testing.assert_array_equal(out.data, v.data)

    def test_matmul_analytic(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [0.0]])
        np.testing.assert_array_equal(ad.matmul(a, b).data, [[1.0], [3.0]])

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_add_zero(self):
        x = Tensor([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(ad.add(x, Tensor(np.zeros(3))).data, x.data)

    def test_leaky_relu_negative(self):
        out = ad.leaky_relu(Tensor([-2.0]), slope=0.1)
        np.testing.assert_allclose(out.data, [-0.2])

    def test_leaky_relu_derivative_at_zero_is_slope(self):
        x = Tensor([0.0], requires_grad=True)
        backward(ad.tensor_sum(ad.leaky_relu(x, slope=0.3)))
        np.testing.assert_allclose(x.grad, [0.3])

    def test_elementwise_shape_error(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
        with pytest.raises(ShapeError):
            ad.mul(Tensor(np.zeros((2, 2))), Tensor(np.zeros(4)))

    def test_mse_zero_when_equal(self):
        x = Tensor(np.linspace(0, 1, 7))
        assert ad.mse_loss(x, Tensor(x.data.copy())).item() == 0.0

    def test_mse_constant_difference(self):
        pred = Tensor(np.full(12, 0.6))
        target = Tensor(np.full(12, 0.5))
        np.testing.assert_allclose(ad.mse_loss(pred, target).item(), 0.01)

    def test_sigmoid_extremes_finite(self):
        out = ad.sigmoid(Tensor([-1e4, 0.0, 1e4]))
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data, [0.0, 0.5, 1.0], atol=1e-12)


class TestBackward:
    def test_sum_grad_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        backward(ad.tensor_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_linear_mse_grad_analytic(self):
        rng = np.random.default_rng(0)
        w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        v = Tensor(rng.standard_normal((4, 1)))
        t = Tensor(rng.standard_normal((3, 1)))
        backward(ad.mse_loss(ad.matmul(w, v), t))
        expected = (2.0 / 3.0) * (w.data @ v.data - t.data) @ v.data.T
        np.testing.assert_allclose(w.grad, expected, rtol=1e-12)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            backward(x)

    def test_fanout_sums_both_contributions(self):
        # loss = sum(x * x) + sum(2 x) has gradient 2 x + 2, hand expanded.
        x = Tensor([1.0, -2.0, 0.5], requires_grad=True)
        loss = ad.add(ad.tensor_sum(ad.mul(x, x)), ad.tensor_sum(ad.scale(x, 2.0)))
        backward(loss)
        np.testing.assert_allclose(x.grad, 2 * x.data + 2.0)

    def test_repeated_backward_accumulates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = ad.tensor_sum(ad.mul(x, x))
        backward(loss)
        backward(loss)
        np.testing.assert_allclose(x.grad, 2 * (2 * x.data))

    @pytest.mark.parametrize("seed", range(20))
    def test_matmul_grads_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        t = rng.standard_normal((5, 3))

        def loss_fn():
            return float(((a.data @ b.data - t) ** 2).mean())

        backward(ad.mse_loss(ad.matmul(a, b), Tensor(t)))
        fa, fb = finite_diff(loss_fn, [a.data, b.data])
        assert rel_err(a.grad, fa) < 1e-6
        assert rel_err(b.grad, fb) < 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_tanh_grad_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal(10), requires_grad=True)
        t = rng.standard_normal(10)
        backward(ad.mse_loss(ad.tanh(x), Tensor(t)))
        (fx,) = finite_diff(lambda: float(((np.tanh(x.data) - t) ** 2).mean()), [x.data])
        assert rel_err(x.grad, fx) < 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_mse_grad_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        p = Tensor(rng.standard_normal(10), requires_grad=True)
        t = rng.standard_normal(10)
        backward(ad.mse_loss(p, Tensor(t)))
        (fp,) = finite_diff(lambda: float(((p.data - t) ** 2).mean()), [p.data])
        assert rel_err(p.grad, fp) < 1e-6

    @pytest.mark.parametrize(
        "op",
        ["add", "sub", "mul", "scale", "leaky_relu", "tanh", "sigmoid", "add_col", "scale_columns", "gather", "concat"],
    )
    @pytest.mark.parametrize("seed", range(3))
    def test_every_op_against_checker(self, op, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.standard_normal((4, 5)), requires_grad=True, name="a")
        b = Tensor(rng.standard_normal((4, 5)), requires_grad=True, name="b")
        col = Tensor(rng.standard_normal(4), requires_grad=True, name="col")
        w = Tensor(rng.standard_normal(5), requires_grad=True, name="w")
        t = Tensor(rng.standard_normal((4, 5)))

        def build():
            if op == "add":
                out = ad.add(a, b)
            elif op == "sub":
                out = ad.sub(a, b)
            elif op == "mul":
                out = ad.mul(a, b)
            elif op == "scale":
                out = ad.scale(a, -1.7)
            elif op == "leaky_relu":
                out = ad.leaky_relu(a, 0.1)
            elif op == "tanh":
                out = ad.tanh(a)
            elif op == "sigmoid":
                out = ad.sigmoid(a)
            elif op == "add_col":
                out = ad.add_col(a, col)
            elif op == "scale_columns":
                out = ad.scale_columns(a, w)
            elif op == "gather":
                out = ad.gather_columns(a, [0, 2, 2, 4])
                return ad.tensor_sum(ad.mul(out, out))
            elif op == "concat":
                out = ad.concat_rows([a, b])
                return ad.tensor_sum(ad.mul(out, out))
            return ad.mse_loss(out, t)

        report = check_gradients(build, [a, b, col, w], eps=1e-5, threshold=1e-4)
        assert report.ok, str(report)

    def test_three_layer_mlp_grads(self):
        from posefield.nn import DenseStack

        rng = np.random.default_rng(7)
        net = DenseStack([4, 6, 5, 3], rng, output_activation="sigmoid")
        x = Tensor(rng.standard_normal((4, 2)))
        t = Tensor(rng.uniform(0.2, 0.8, size=(3, 2)))
        report = check_gradients(
            lambda: ad.mse_loss(net.forward(x), t), net.parameters(), eps=1e-5, threshold=1e-4
        )
        assert report.ok, str(report)


class TestDeterminism:
    def test_forward_deterministic(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((8, 8))
        b = rng.standard_normal((8, 8))
        r1 = ad.matmul(Tensor(a), ad.tanh(Tensor(b))).data
        r2 = ad.matmul(Tensor(a), ad.tanh(Tensor(b))).data
        assert np.array_equal(r1, r2)


class TestAdam:
    def test_zero_grad_is_noop(self):
        p = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        before = p.data.copy()
        opt = Adam([p], lr=0.5)
        opt.step()
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_is_signed_lr(self):
        p = Tensor([1.0, -1.0], requires_grad=True)
        p.grad[...] = [10.0, -0.5]
        opt = Adam([p], lr=0.1)
        opt.step()
        # First bias-corrected step is lr * g / (|g| + eps) ~ lr * sign(g).
        np.testing.assert_allclose(p.data, [1.0 - 0.1, -1.0 + 0.1], atol=1e-6)

    def test_quadratic_converges(self):
        # Oracle: the scalar Adam recurrence from w0=1.0 lands at |w-3|=0.0758
        # after 50 steps; assert both the bound and agreement with the oracle.
        def oracle(w0, steps, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
            w, m, v = w0, 0.0, 0.0
            for t in range(1, steps + 1):
                g = 2 * (w - 3.0)
                m = b1 * m + (1 - b1) * g
                v = b2 * v + (1 - b2) * g * g
                w -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            return w

        w = Tensor([1.0], requires_grad=True)
        opt = Adam([w], lr=0.1)
        for _ in range(50):
            w.zero_grad()
            w.grad[...] = 2 * (w.data - 3.0)
            opt.step()
        assert abs(w.data[0] - 3.0) < 0.1
        np.testing.assert_allclose(w.data[0], oracle(1.0, 50), rtol=1e-12)

    def test_step_count_increments(self):
        p = Tensor([1.0], requires_grad=True)
        opt = Adam([p])
        for expected in range(1, 5):
            opt.step()
            assert opt.step_count == expected

    def test_nonfinite_gradient_reports_parameter(self):
        p = Tensor([1.0], requires_grad=True, name="weights")
        q = Tensor([1.0], requires_grad=True, name="bad")
        q.grad[...] = np.nan
        opt = Adam([p, q])
        with pytest.raises(OptimizerError, match="parameter 1 .*bad"):
            opt.step()

    def test_adam_step_checks_param_identity(self):
        p = Tensor([1.0], requires_grad=True)
        opt = Adam([p])
        with pytest.raises(ContractError):
            adam_step([Tensor([1.0], requires_grad=True)], opt, 0.1)


class TestChecker:
    def test_linear_loss_near_exact(self):
        rng = np.random.default_rng(1)
        w = Tensor(rng.standard_normal(6), requires_grad=True, name="w")
        x = rng.standard_normal(6)
        report = check_gradients(lambda: ad.tensor_sum(ad.mul(w, Tensor(x))), [w])
        assert report.max_rel_err < 1e-7

    def test_nondeterministic_loss_raises(self):
        w = Tensor([1.0], requires_grad=True)
        state = {"n": 0}

        def build():
            state["n"] += 1
            return ad.scale(ad.tensor_sum(w), float(state["n"]))

        with pytest.raises(DeterminismError):
            check_gradients(build, [w])

    def test_flags_wrong_gradient(self):
        # An op with a deliberately broken adjoint must be flagged.
        w = Tensor([1.0, 2.0], requires_grad=True, name="w")

        def build():
            out = Tensor(
                w.data * 3.0,
                requires_grad=True,
                _parents=(w,),
                _backward=lambda g: (g * 2.0,),  # wrong: forward is *3
            )
            return ad.tensor_sum(out)

        report = check_gradients(build, [w])
        assert not report.ok
        assert "w" in report.flagged
