"""Reconstruction of nonlinear dynamics from sparse observations.

A fixed random reservoir with a trained linear readout is wrapped in an
under-relaxed fixed-point iteration: the missing entries of a time series are
repeatedly re-synthesized by the network until the trajectory is a fixed
point of the teacher-forced model.  Benchmarks, baselines, metrics and an
experiment harness are included.
"""

from .errors import (
    BlowUpError,
    ConfigError,
    DegenerateSpectrumError,
    FactorizationError,
    FpesnError,
    InsufficientObservationsError,
    MalformedFileError,
    NoObservationsError,
    NumericalError,
    SpectralRadiusError,
)
from .dynamics import (
    Lorenz63Params,
    Lorenz96Params,
    MackeyGlassParams,
    Trajectory,
    VdpParams,
    gen_lorenz63,
    gen_lorenz96,
    gen_mackey_glass,
    gen_ou,
    gen_vdp,
)
from .fixed_point import (
    FixedPointConfig,
    FixedPointRun,
    ObservationSet,
    esn_operator,
    initialize_linear,
    l2_improvement,
    reconstruct,
    relax_update,
)
from .readout import (
    NormalEquationAccumulator,
    ReadoutMap,
    fit_ridge_full,
    fit_ridge_masked,
    predict,
)
from .reservoir import (
    Reservoir,
    ReservoirSpec,
    augment,
    build_reservoir,
    run_teacher_forced,
    spectral_radius,
    state_matrix,
    step,
)
from .sparsity import (
    MaskSpec,
    MetricReport,
    interp_cubic_spline,
    interp_linear,
    make_mask,
    metric_report,
    nrmse,
    sigma_vs_baseline,
)

__version__ = "0.1.0"
