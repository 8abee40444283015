"""Energy-efficient subarray activation for large-array ISAC downlinks.

Builds the physical scene (planar array, spherical-wavefront near-field
channels, Rayleigh far-field channels), evaluates communication SINRs, sensing
beampattern gain and total power for any subarray activation, and minimizes
power under QoS floors via a penalized SCA relaxation, validated against
all-on / random baselines and an exhaustive oracle.
"""

from .config import (
    ConfigurationError,
    SystemConfig,
    dbm_to_watts,
    desk_config,
    paper_config,
    randomize_users,
    watts_to_dbm,
)
from .scene import (
    ArrayGeometry,
    ChannelSet,
    GeometryError,
    build_channels,
    build_geometry,
    far_field_large_scale,
    near_field_channel,
    near_field_distance,
    sample_far_field,
    steering_vector,
)
from .precoding import (
    PrecoderSet,
    SingularChannelError,
    allocate_powers,
    build_precoders,
    sensing_beamformer,
    zf_far,
    zf_near,
)
from .metrics import (
    ActivationState,
    EstimationError,
    QoSTargets,
    SecondMoments,
    audit_constraints,
    beampattern_gain,
    derive_qos_targets,
    estimate_second_moments,
    ffue_sinr,
    metric_report,
    nfue_sinr,
    total_power,
)
from .scenario import Scenario, build_scenario, scenario_targets
from .surrogates import (
    bilinear_lower,
    bilinear_upper,
    linearized_binary_penalty,
    taylor_lb_quadratic,
)
from .solver import (
    ConvexSubproblem,
    InfeasibleInstanceError,
    SolveResult,
    SolverFailureError,
    SubproblemBuilder,
    SubproblemInfeasibleError,
    SurrogatePoint,
    assemble_subproblem,
    penalized_objective,
    round_and_repair,
    run_sca,
    solve_subproblem,
)
from .baselines import BaselineResult, all_subarrays, exhaustive_oracle, random_activation

__version__ = "0.1.0"
