"""combnet: planner and discrete-event simulator for comb-source DWDM
entanglement networks.

Subsystems: ITU grid and resonator comb math (grid), conjugate-pair
network planning (planner), pair-source statistics (source), detector
chains (detection), interferometric analyzers (franson), counting and
fitting (analysis), key distribution (qkd, session), stabilization loops
(control), and the scenario harness (scenario, cli).
"""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    Channel,
    ResonanceMode,
    ResonatorSpec,
    channel_center_frequency,
    conjugate_channel,
    resonance_comb,
    transmission,
)
from .planner import (  # noqa: F401
    DelaySchedule,
    EdgeAssignment,
    NetworkPlan,
    UserId,
    assign_delays,
    max_users,
    plan_network,
    verify_plan,
)
from .source import (  # noqa: F401
    PairEvents,
    SourceConfig,
    emit_pairs,
    emit_thinned,
    multi_pair_rate,
    pair_rate,
)
from .detection import (  # noqa: F401
    ChannelLoss,
    DetectorRole,
    DetectorSpec,
    TimeTagStream,
    apply_delay,
    apply_loss,
    detect,
)
from .franson import (  # noqa: F401
    AnalyzedOutcome,
    InterferometerConfig,
    Peak,
    analyze_pair,
    analyze_pair_batch,
    central_probability,
    singles_rate_check,
)
from .analysis import (  # noqa: F401
    CorrelationFit,
    FringeFit,
    Histogram,
    RateSummary,
    bandwidth_from_tau,
    build_histogram,
    cc_ac_car,
    fit_correlation,
    fit_fringe,
    rate_summary,
    two_point_visibility,
)
from .qkd import (  # noqa: F401
    QkdSessionReport,
    SiftedKey,
    binary_entropy,
    qber,
    qber_from_visibility,
    route_basis,
    secure_key_rate,
    session_report,
    sift,
)
from .control import (  # noqa: F401
    DriftModel,
    LockStatus,
    PidGains,
    phase_lock,
    pump_follow,
    step_drift,
)
from .session import EdgeSessionConfig, run_qkd_session  # noqa: F401
from .scenario import compare_golden, run_scenario  # noqa: F401
