"""Robust time-varying control barrier function safety filters.

Library and CLI for filtering a baseline controller through time-varying
barrier constraints on relative-degree-two linear plants, robust against
sector-bounded input nonlinearities, with a closed-loop simulator and a
car obstacle-avoidance study.
"""

from .barrier import (
    AnalyticBarrier,
    BarrierEvaluation,
    MovingCircleBarrier,
    eval_barrier,
    fd_check,
    initial_conditions_ok,
    relative_degree_ok,
)
from .errors import (
    ConfigurationError,
    ContractViolationError,
    DegenerateGeometryError,
    IntegrationError,
    SectorViolationError,
    SolverError,
)
from .filter import (
    FilterDecision,
    FilterProblem,
    KKTResiduals,
    SolverSettings,
    emergency_fallback,
    feasibility_margin,
    feasible_point,
    kkt_residuals,
    rtvcbf_socp,
    tvcbf_qp,
    worst_case_w,
)
from .io import (
    ScenarioConfig,
    TraceFile,
    emit_plot,
    load_scenario,
    loads_scenario,
    read_trace,
    write_trace,
)
from .plant import (
    BaselineController,
    CarParams,
    LinearPlant,
    baseline_control,
    build_car_plant,
    dynamics,
)
from .sim import (
    MonitorVerdict,
    SectorNonlinearity,
    SimulationTrace,
    rk4_step,
    run_closed_loop,
    safety_monitor,
)

__version__ = "0.1.0"
