"""Tests for generator construction, exact exponentials, and Taylor rotation."""

import numpy as np
import pytest

from posefield.autodiff import Tensor, check_gradients, mse_loss, tensor_sum, mul, sub
from posefield.liegroup import (
    GeneratorMatrix,
    expm_skew,
    lie_exp,
    n_generator_params,
    taylor_apply,
    taylor_rotate,
)


def taylor_series_oracle(m: np.ndarray, terms: int = 30) -> np.ndarray:
    """Raw truncated series sum_k m^k / k!; independent of expm_skew."""
    out = np.eye(m.shape[0])
    acc = np.eye(m.shape[0])
    for k in range(1, terms + 1):
        acc = acc @ (m / k)
        out = out + acc
    return out


def random_generator(rng, dim=16, block=8, std=0.3):
    return GeneratorMatrix.random(dim, block, rng, std=std)


class TestMaterialize:
    def test_zero_params_zero_matrix(self):
        gen = GeneratorMatrix(4, 2, np.zeros(n_generator_params(4, 2)))
        np.testing.assert_array_equal(gen.matrix(), np.zeros((4, 4)))

    def test_sign_convention_2x2(self):
        gen = GeneratorMatrix(2, 2, np.array([1.0]))
        np.testing.assert_array_equal(gen.matrix(), [[0.0, 1.0], [-1.0, 0.0]])

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("dim,block", [(4, 2), (8, 4), (16, 8), (6, 3)])
    def test_skew_and_block_structure(self, seed, dim, block):
        rng = np.random.default_rng(seed)
        gen = random_generator(rng, dim, block)
        b = gen.matrix()
        np.testing.assert_array_equal(b + b.T, np.zeros((dim, dim)))
        mask = np.ones((dim, dim), dtype=bool)
        for lo in range(0, dim, block):
            mask[lo : lo + block, lo : lo + block] = False
        assert np.all(b[mask] == 0.0)

    def test_materialize_matches_matrix_bitwise(self):
        rng = np.random.default_rng(2)
        gen = random_generator(rng)
        np.testing.assert_array_equal(gen.materialize().data, gen.matrix())

    def test_materialize_differentiable(self):
        rng = np.random.default_rng(3)
        gen = random_generator(rng, dim=4, block=2)
        t = Tensor(rng.standard_normal((4, 4)))
        report = check_gradients(lambda: mse_loss(gen.materialize(), t), [gen.params])
        assert report.ok, str(report)

    def test_block_must_divide_dim(self):
        with pytest.raises(ValueError):
            GeneratorMatrix(6, 4, np.zeros(3))


class TestLieExp:
    def test_delta_zero_is_identity(self):
        rng = np.random.default_rng(0)
        gen = random_generator(rng)
        np.testing.assert_allclose(lie_exp(gen, 0.0), np.eye(16), atol=1e-15)

    def test_planar_rotation_quarter_turn(self):
        gen = GeneratorMatrix(2, 2, np.array([1.0]))
        got = lie_exp(gen, np.pi / 2)
        np.testing.assert_allclose(got, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-12)

    def test_against_raw_taylor_oracle(self):
        rng = np.random.default_rng(11)
        gen = random_generator(rng, dim=16, block=16, std=0.3)
        delta = 0.3
        oracle = taylor_series_oracle(gen.matrix() * delta, terms=30)
        assert np.max(np.abs(lie_exp(gen, delta) - oracle)) < 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_orthogonality(self, seed):
        rng = np.random.default_rng(seed)
        gen = random_generator(rng, std=0.5)
        for delta in rng.uniform(-1, 1, size=5):
            q = lie_exp(gen, float(delta))
            v = rng.standard_normal(16)
            assert abs(np.linalg.norm(q @ v) / np.linalg.norm(v) - 1.0) < 1e-9

    @pytest.mark.parametrize("seed", range(10))
    def test_group_law_and_inverse(self, seed):
        rng = np.random.default_rng(100 + seed)
        gen = random_generator(rng, std=0.5)
        d1, d2 = rng.uniform(-1, 1, size=2)
        q1, q2 = lie_exp(gen, float(d1)), lie_exp(gen, float(d2))
        q12 = lie_exp(gen, float(d1 + d2))
        assert np.max(np.abs(q1 @ q2 - q12)) < 1e-9
        assert np.max(np.abs(lie_exp(gen, -float(d1)) - q1.T)) < 1e-9

    def test_large_delta_still_orthogonal(self):
        rng = np.random.default_rng(5)
        gen = random_generator(rng, std=1.0)
        q = lie_exp(gen, 40.0)
        np.testing.assert_allclose(q @ q.T, np.eye(16), atol=1e-9)

    def test_expm_skew_zero(self):
        np.testing.assert_array_equal(expm_skew(np.zeros((3, 3))), np.eye(3))


class TestTaylorRotate:
    def test_delta_zero_returns_v(self):
        rng = np.random.default_rng(0)
        gen = random_generator(rng)
        v = rng.standard_normal(16)
        np.testing.assert_array_equal(taylor_rotate(gen, 0.0, v), v)

    def test_planar_matches_complex_expansion(self):
        # For B = [[0,1],[-1,0]] the expansion is 1 + i d - d^2/2 of e^{i d}.
        gen = GeneratorMatrix(2, 2, np.array([1.0]))
        d = 0.1
        got = taylor_rotate(gen, d, np.array([1.0, 0.0]))
        exact = np.array([np.cos(d), -np.sin(d)])
        assert np.max(np.abs(got - exact)) < 2e-4

    def test_third_order_error_shrinks_8x(self):
        rng = np.random.default_rng(42)
        gen = random_generator(rng, std=0.15)
        v = rng.standard_normal(16)
        v /= np.linalg.norm(v)
        errs = []
        for d in (0.1, 0.05, 0.025):
            errs.append(np.linalg.norm(taylor_rotate(gen, d, v) - lie_exp(gen, d) @ v))
        for a, b in zip(errs[:-1], errs[1:]):
            assert 6.0 < a / b < 10.0

    @pytest.mark.parametrize("seed", range(5))
    def test_taylor_apply_matches_scalar_path(self, seed):
        # Same formula, but BLAS matrix-matrix vs matrix-vector kernels may
        # round differently in the last bit; agreement is to ~1 ulp.
        rng = np.random.default_rng(seed)
        gen = random_generator(rng)
        deltas = rng.uniform(-0.2, 0.2, size=7)
        cols = rng.standard_normal((16, 7))
        batched = taylor_apply(gen.materialize(), deltas, Tensor(cols)).data
        for j in range(7):
            single = taylor_rotate(gen, deltas[j], cols[:, j])
            np.testing.assert_allclose(batched[:, j], single, rtol=1e-14, atol=1e-14)

    def test_taylor_apply_differentiable(self):
        rng = np.random.default_rng(9)
        gen = random_generator(rng, dim=4, block=2)
        v = Tensor(rng.standard_normal((4, 3)), requires_grad=True, name="v")
        deltas = rng.uniform(-0.3, 0.3, size=3)
        t = Tensor(rng.standard_normal((4, 3)))

        def build():
            out = taylor_apply(gen.materialize(), deltas, v)
            d = sub(out, t)
            return tensor_sum(mul(d, d))

        report = check_gradients(build, [gen.params, v])
        assert report.ok, str(report)
