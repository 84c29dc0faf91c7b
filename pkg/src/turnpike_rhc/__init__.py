"""Linear-quadratic optimal control with receding-horizon drivers.

Riccati machinery, steady-state analysis, finite- and infinite-horizon
receding-horizon control, and an experiment harness for the exponential
error law of the method.
"""

from .errors import (
    ConfigError,
    DimensionError,
    GridError,
    NonConvergenceError,
    RiccatiError,
    SolverError,
    ToolkitError,
)
from .model import (
    CostReport,
    Grid,
    ProblemData,
    Trajectory,
    ValidationReport,
    l2_distance,
    running_cost,
    steps_of,
    total_cost,
    validate_problem,
)
from .riccati import (
    CareSolution,
    RiccatiFlow,
    decay_rate,
    riccati_flow,
    solve_care,
    stationary_flow_matrix,
)
from .lq import (
    LqSolution,
    SegmentProblem,
    reduced_gradient_solve,
    solve_lq,
    value_and_gradient,
)
from .turnpike import (
    SteadyState,
    TurnpikeReport,
    asymptotic_cost_check,
    deviation_profile,
    overtaking_solution,
    solve_static,
    turnpike_check,
    value_relation_check,
)
from .rhc import (
    BoundInputs,
    IterRecord,
    RhcConfig,
    RhcResult,
    SweepRow,
    TerminalCostSpec,
    bound_inputs,
    build_terminal_cost,
    default_iterations,
    predicted_bound,
    rho_statistic,
    run_rhc_finite,
    run_rhc_infinite,
    sweep,
)
from .presets import default_problem

__version__ = "0.1.0"
