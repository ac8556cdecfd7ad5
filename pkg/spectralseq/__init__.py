__version__ = "0.1.0"

from .errors import (
    BadMagicError,
    ConfigError,
    DatasetFormatError,
    DivergenceError,
    GraphStateError,
    ShapeError,
    SpectralSeqError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .tensor_core import ParamStore, backward, finite_diff_check, irfft2, rfft2, seed_everything
from .grid import NS_DOMAIN, WAVE_DOMAIN, GridCoords
from .spectral_layers import (
    FourierLayer,
    FRNNCell,
    PointwiseWeights,
    RNNCell,
    SpectralWeights,
    fourier_layer,
    frnn_cell_step,
    init_hidden,
    pointwise_linear,
    rnn_cell_step,
    spectral_conv,
)
from .models import (
    ModelConfig,
    build_crnn,
    build_fno2d,
    build_frnn,
    build_model,
    build_rnn,
    count_params,
    rollout,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import NoiseSpec, TrajectoryDataset, add_noise, batch_iter, load, make_windows, save, split
from .training import (
    Normalizer,
    TrainConfig,
    adam_step,
    evaluate,
    mse_loss,
    normalizer_fit,
    step_lr,
    train,
)
from .pde_solvers import (
    NSConfig,
    WaveIC,
    gaussian_random_field,
    lhs_sample,
    solve_navier_stokes,
    solve_wave,
    wave_initial_condition,
)
from .config import BenchmarkSpec
from .bench import cmd_benchmark, cmd_eval, cmd_generate, cmd_train
