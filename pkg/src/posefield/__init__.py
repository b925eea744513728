"""Learned camera-pose representations with Lie-group movement matrices.

Per-DOF unit-vector grids encode camera pose; skew-symmetric block-diagonal
generators rotate them under movement.  The package trains this
representation through toy-scale view synthesis, evaluates its noise
robustness, and uses it as the target of camera pose regression, with
built-in deterministic scene renderers standing in for real datasets.
"""

from .autodiff import Adam, Tensor, adam_step, backward, check_gradients, mse_loss
from .codec import (
    CoordinateCodec,
    PoseRepresentation,
    RepresentationConfig,
    build_representation,
    representation_from_description,
)
from .errors import (
    ConfigError,
    ContractError,
    CorruptionError,
    DeterminismError,
    FormatError,
    IncompatibleError,
    OptimizerError,
    PosefieldError,
    RangeError,
    ShapeError,
    TrainingDiverged,
)
from .liegroup import GeneratorMatrix, expm_skew, lie_exp, taylor_apply, taylor_rotate
from .polar import (
    PolarPositionSystem,
    decode_position,
    encode_position,
    polar_losses,
    theta_generator,
)
from .representation import (
    DofGrid,
    PoseVectorSystem,
    decode_dof,
    encode_dof,
    gram_circulant_deviation,
    gram_matrix,
    renormalize,
    rotation_loss,
)
from .scenes import (
    CameraPose,
    DatasetConfig,
    SceneDataset,
    ToyScene,
    TurntableScene,
    build_dataset,
    load_dataset,
    render_toyroom,
    render_turntable,
)
from .synthesis import (
    SynthesisModel,
    SynthesisTrainer,
    TrainConfig,
    mean_image_baseline,
    noise_eval,
    psnr,
    train_synthesis,
)
from .regression import (
    PoseRegressor,
    RegressionConfig,
    RegressionReport,
    eval_regression,
    infer_pose,
    train_regressor,
)
from .config import EvalConfig, RunConfig, load_config

__version__ = "0.1.0"
