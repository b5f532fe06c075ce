"""Active, noise-tolerant halfspace learning against strategic agents."""

from .environment import (
    BOUNDARY_BAND_FLIP,
    PREDICT_NEGATIVE_THRESHOLD,
    RANDOM_FLIP,
    REALIZABLE,
    DrawTraceWriter,
    EnvConfig,
    Hypothesis,
    NoiseModel,
    Observation,
    TrueExample,
    best_response,
    boundary_band_noise,
    calibrate_band_radius,
    draw_batch,
    draw_example,
    label,
    random_flip_noise,
    realizable_noise,
    truthful_config,
)
from .evaluation import (
    ErrorReport,
    MistakeLedger,
    ScalingFit,
    excess_error,
    fit_scaling,
    mc_error,
)
from .geometry import (
    angle,
    band_fraction,
    make_rng,
    normalize,
    sample_unit_ball,
    sample_unit_sphere,
)
from .learner import (
    DEFAULT_C_B,
    DEFAULT_C_M,
    EpochSchedule,
    InitResult,
    LabelOracle,
    RunTrace,
    in_band,
    initialize,
    inner_loop,
    make_schedule,
    outer_loop,
    predict,
    reflect_update,
)

__version__ = "0.1.0"
