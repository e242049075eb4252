"""Rotationally symmetric Ricci flow on R^(n+1): simulation, monitors,
singularity classification, and blow-up model matching.

The metric is the warped product g = xi(x,t)^2 dx^2 + phi(x,t)^2 g_sphere on
a radial grid x in [0, x_max]; everything downstream (curvature, evolution,
diagnostics, rescaling) works with the (phi, xi) profile pair.
"""

from ._version import __version__
from .config import ResolvedConfig, parse_config
from .diagnostics import (
    AsymptoticsFit,
    CriticalPoint,
    DiagnosticsRecord,
    MonitorSettings,
    SingularityReport,
    check_cylindrical_asymptotics,
    classify_singularity,
    critical_points,
    finalize_records,
    phi_s_zero_count,
    run_monitors,
)
from .errors import (
    BlowupOverrunError,
    CannotNormalizeError,
    ConfigError,
    InvalidParameterError,
    InvalidProfileError,
    NoEstimateError,
    NoNeckError,
    NotApplicableError,
    NumericFailureError,
    RotflowError,
    RunAbortedError,
    SingularProfileError,
    SingularStateError,
)
from .evolution import (
    OUTER_BCS,
    SimConfig,
    SimState,
    SingularTimeEstimate,
    Trajectory,
    adaptive_dt,
    estimate_singular_time,
    rhs,
    run,
    step,
)
from .geometry import (
    CurvatureField,
    OriginRegularityReport,
    RadialProfile,
    arc_length,
    check_origin_regularity,
    compute_A,
    compute_curvature,
    is_near_singular,
    s_derivative,
)
from .initial_data import (
    GridSpec,
    InitialDataSpec,
    PinchReport,
    make_arctan_cylindrical,
    make_flat_perturbation,
    make_neck_sine_walpha,
    pinching_report,
    sine_walpha_crossing,
)
from .output import RunManifest, emit_outputs
from .rescaling import (
    RescaledProfile,
    SolitonProfile,
    bryant_profile,
    parabolic_rescale,
    profile_match,
    soliton_residual,
    sphere_volume,
    volume_ratio_proxy,
)

__all__ = [name for name in dir() if not name.startswith("_")]
