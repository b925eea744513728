"""Tests for pose regression: heads, fairness, decoding, evaluation."""

import numpy as np
import pytest

from posefield.autodiff import Tensor, check_gradients, mse_loss
from posefield import autodiff as ad
from posefield.codec import RepresentationConfig, build_representation
from posefield.errors import ConfigError
from posefield.regression import (
    PoseRegressor,
    RegressionConfig,
    RegressionReport,
    angle_abs_error,
    eval_regression,
    infer_pose,
    load_regressor_checkpoint,
    regression_loss_value,
    save_regressor_checkpoint,
    train_regressor,
)
from posefield.scenes import DatasetConfig, build_dataset

TWO_PI = 2 * np.pi


def tiny_rep(kind="turntable", seed=0, dim=8):
    cfg = RepresentationConfig(dim=dim, block=4, angle_grids=8, phi_grids=4, position_grids=4, n_theta=6)
    return build_representation(kind, cfg, np.random.default_rng(seed))


def tiny_dataset(kind="turntable", scenes=1, views=20, size=8, seed=2):
    return build_dataset(
        DatasetConfig(kind=kind, n_scenes=scenes, views_per_scene=views, width=size, height=size, seed=seed)
    )


class TestHeads:
    @pytest.mark.parametrize("kind", ["turntable", "toyroom"])
    def test_head_dims(self, kind):
        rep = tiny_rep(kind)
        learned = PoseRegressor(kind, "learned", 8, 8, (16,), rep, seed=0)
        euler = PoseRegressor(kind, "euler", 8, 8, (16,), rep, seed=0)
        sincos = PoseRegressor(kind, "sincos", 8, 8, (16,), rep, seed=0)
        if kind == "turntable":
            assert dict(learned.head_specs) == {"theta": 8, "phi": 8}
            assert dict(euler.head_specs) == {"theta": 1, "phi": 1}
            assert dict(sincos.head_specs) == {"theta": 2, "phi": 1}  # phi is bounded, not periodic
        else:
            assert dict(learned.head_specs) == {"xy": 8, "alpha": 8}
            assert dict(euler.head_specs) == {"x": 1, "y": 1, "alpha": 1}
            assert dict(sincos.head_specs) == {"x": 1, "y": 1, "alpha": 2}

    @pytest.mark.parametrize("kind", ["turntable", "toyroom"])
    def test_parameter_fairness_within_5_percent(self, kind):
        rep = tiny_rep(kind)
        learned = PoseRegressor(kind, "learned", 8, 8, (32, 16), rep, seed=0)
        for target in ("euler", "sincos"):
            baseline = PoseRegressor(kind, target, 8, 8, (32, 16), rep, seed=0)
            a, b = learned.head_parameter_count(), baseline.head_parameter_count()
            assert abs(a - b) / a < 0.05, (target, a, b)

    def test_trunks_bitwise_identical_across_targets(self):
        rep = tiny_rep()
        regs = [
            PoseRegressor("turntable", t, 8, 8, (16, 12), rep, seed=42)
            for t in ("learned", "euler", "sincos")
        ]
        for layer in range(2):
            for other in regs[1:]:
                np.testing.assert_array_equal(
                    regs[0].trunk.weights[layer].data, other.trunk.weights[layer].data
                )

    def test_baselines_share_trunk_and_differ_in_heads_only(self):
        rep = tiny_rep()
        euler = PoseRegressor("turntable", "euler", 8, 8, (16,), rep, seed=1)
        sincos = PoseRegressor("turntable", "sincos", 8, 8, (16,), rep, seed=1)
        np.testing.assert_array_equal(euler.trunk.weights[0].data, sincos.trunk.weights[0].data)
        assert euler.trunk.sizes == sincos.trunk.sizes

    def test_learned_requires_representation(self):
        with pytest.raises(ConfigError):
            PoseRegressor("turntable", "learned", 8, 8, (16,), None, seed=0)


class TestDecoding:
    def test_sincos_head_decodes_exactly(self):
        reg = PoseRegressor("turntable", "sincos", 8, 8, (16,), None, seed=0)
        for angle in (0.3, 2.0, 5.5):
            outputs = {
                "theta": np.array([[np.sin(angle)], [np.cos(angle)]]),
                "phi": np.array([[0.5]]),
            }
            coords = reg.decode_heads(outputs)
            assert abs(coords[0] - angle) < 1e-9

    def test_learned_head_decodes_within_resolution(self):
        rep = tiny_rep(dim=8)
        reg = PoseRegressor("turntable", "learned", 8, 8, (16,), rep, seed=0)
        grid = rep.dof_system.grid("theta")
        from posefield.representation import encode_dof

        l_star = 1.234
        outputs = {
            "theta": encode_dof(grid, l_star)[:, None],
            "phi": encode_dof(rep.dof_system.grid("phi"), 0.2)[:, None],
        }
        coords = reg.decode_heads(outputs)
        d = abs(coords[0] - l_star) % TWO_PI
        assert min(d, TWO_PI - d) <= grid.spacing / 64 + 1e-9

    def test_euler_denormalizes_and_wraps(self):
        reg = PoseRegressor("turntable", "euler", 8, 8, (16,), None, seed=0)
        coords = reg.decode_heads({"theta": np.array([[1.1]]), "phi": np.array([[0.5]])})
        assert 0.0 <= coords[0] < TWO_PI  # wrapped back into range

    def test_infer_pose_shape_check(self):
        reg = PoseRegressor("turntable", "euler", 8, 8, (16,), None, seed=0)
        with pytest.raises(ConfigError):
            infer_pose(reg, np.zeros((9, 8, 3)))


class TestAngleError:
    def test_wrap_invariance(self):
        assert abs(angle_abs_error(0.1, TWO_PI - 0.1) - 0.2) < 1e-12
        assert abs(angle_abs_error(0.5 + TWO_PI, 0.5) - 0.0) < 1e-12
        assert abs(angle_abs_error(1.0, 2.0) - angle_abs_error(1.0 + TWO_PI, 2.0)) < 1e-12


class TestTraining:
    def test_memorizes_small_set(self):
        ds = tiny_dataset(views=20)
        rep = tiny_rep()
        cfg = RegressionConfig(iterations=800, batch_size=20, lr=2e-3, hidden=(64, 32), seed=0)
        reg = train_regressor(cfg, ds, rep, "learned")
        assert regression_loss_value(reg, ds, "train") < 1e-3

    def test_gradient_matches_finite_differences(self):
        ds = tiny_dataset(views=6, size=6)
        rep = tiny_rep()
        reg = PoseRegressor("turntable", "learned", 6, 6, (8,), rep, seed=0)
        items = ds.split_items("train")[:4]
        images = ds.image_columns(items)
        targets = {k: Tensor(v) for k, v in reg.targets(ds.pose_array(items)).items()}

        def build():
            outs = reg.forward(Tensor(images))
            loss = None
            for name, out in outs.items():
                term = mse_loss(out, targets[name])
                loss = term if loss is None else ad.add(loss, term)
            return loss

        report = check_gradients(build, reg.parameters(), eps=1e-5, threshold=1e-4)
        assert report.ok, str(report)

    def test_training_never_mutates_pose_system(self):
        ds = tiny_dataset(views=10)
        rep = tiny_rep()
        before = {k: v.copy() for k, v in rep.state_arrays().items()}
        cfg = RegressionConfig(iterations=30, batch_size=8, hidden=(16,), seed=0)
        train_regressor(cfg, ds, rep, "learned")
        for k, v in rep.state_arrays().items():
            np.testing.assert_array_equal(v, before[k], err_msg=k)

    def test_deterministic(self):
        ds = tiny_dataset(views=10)
        cfg = RegressionConfig(iterations=25, batch_size=8, hidden=(16,), seed=4)
        a = train_regressor(cfg, ds, None, "euler")
        b = train_regressor(cfg, ds, None, "euler")
        for k, v in a.state_arrays().items():
            np.testing.assert_array_equal(v, b.state_arrays()[k], err_msg=k)


class FakeRegressor:
    """Minimal infer_pose interface with a fixed image -> coords mapping."""

    def __init__(self, kind, width, height, mapping):
        self.kind = kind
        self.width = width
        self.height = height
        self.mapping = mapping
        self.target_kind = "fake"

    def forward_array(self, images):
        return {"coords": np.array([self.mapping[images[:, j].tobytes()] for j in range(images.shape[1])]).T}

    def decode_heads(self, outputs):
        return outputs["coords"][:, 0]


class TestEvalRegression:
    def test_perfect_predictor_zero_error(self):
        ds = tiny_dataset(views=12)
        mapping = {}
        for rec in ds.scenes:
            for vi, pose in enumerate(rec.poses):
                mapping[rec.images[vi].astype(np.float64).reshape(-1).tobytes()] = pose.coords()
        fake = FakeRegressor("turntable", ds.width, ds.height, mapping)
        report = eval_regression(fake, ds, "test")
        assert all(v == 0.0 for v in report.mean_abs_err.values())
        assert all(v == 0.0 for v in report.median_abs_err.values())

    def test_constant_predictor_mean_abs_deviation(self):
        # Uniform poses vs a constant midpoint prediction: the mean absolute
        # error per position axis converges to range / 4.
        ds = tiny_dataset(kind="toyroom", scenes=1, views=400, size=4, seed=11)
        mid = {"x": 1.0, "y": 1.0}
        mapping = {}
        for rec in ds.scenes:
            for vi, pose in enumerate(rec.poses):
                mapping[rec.images[vi].astype(np.float64).reshape(-1).tobytes()] = np.array(
                    [mid["x"], mid["y"], pose.alpha]
                )
        fake = FakeRegressor("toyroom", ds.width, ds.height, mapping)
        report = eval_regression(fake, ds, "test")
        expected = (1.9 - 0.1) / 4.0  # uniform MAD from the midpoint
        assert abs(report.mean_abs_err["x"] - expected) < 0.07
        assert abs(report.mean_abs_err["y"] - expected) < 0.07
        assert report.mean_abs_err["alpha"] == 0.0

    def test_report_units(self):
        ds = tiny_dataset(views=8)
        rep = tiny_rep()
        cfg = RegressionConfig(iterations=10, batch_size=4, hidden=(8,), seed=0)
        reg = train_regressor(cfg, ds, rep, "learned")
        report = eval_regression(reg, ds, "test")
        assert report.units == {"theta": "deg", "phi": "deg"}
        assert report.n_images == len(ds.split_items("test"))

    def test_report_csv_files(self, tmp_path):
        ds = tiny_dataset(views=8)
        cfg = RegressionConfig(iterations=10, batch_size=4, hidden=(8,), seed=0)
        reg = train_regressor(cfg, ds, None, "euler")
        report = eval_regression(reg, ds, "test")
        report.write_csv(tmp_path)
        summary = (tmp_path / "regression_report.csv").read_text().splitlines()
        assert summary[0] == "dof,mean_abs_err,median_abs_err,unit"
        assert (tmp_path / "predictions_theta.csv").read_text().splitlines()[0] == "view,true,pred"


class TestRegressorCheckpoint:
    def test_roundtrip_inference_identical(self, tmp_path):
        ds = tiny_dataset(views=8)
        rep = tiny_rep()
        cfg = RegressionConfig(iterations=15, batch_size=4, hidden=(12,), seed=0)
        reg = train_regressor(cfg, ds, rep, "learned")
        save_regressor_checkpoint(tmp_path / "r.pfck", reg, seed=0)
        _, reg2 = load_regressor_checkpoint(tmp_path / "r.pfck")
        img = ds.scenes[0].images[0].astype(np.float64)
        p1 = infer_pose(reg2, img)
        save_regressor_checkpoint(tmp_path / "r2.pfck", reg2, seed=0)
        _, reg3 = load_regressor_checkpoint(tmp_path / "r2.pfck")
        assert infer_pose(reg3, img) == p1
