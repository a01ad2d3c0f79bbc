"""Form finding and form control of pre-stressed cable networks.

The package computes static equilibria of tension-only cable nets by convex
energy minimization and steers their geometry toward a target configuration
by adjusting boundary-edge rest lengths with a feasible-iterate Gauss-Newton
SQP controller, optionally regularized toward sparse actuation with an
iteratively reweighted l1 scheme.
"""

from .control import (
    ControlIterate,
    ControlProblem,
    ControlRunError,
    LineSearchError,
    RankDeficiencyError,
    RunTrace,
    TraceRow,
    WolfeCertificate,
    gn_direction,
    kkt_measure,
    run_control,
    tracking_cost,
    wolfe_line_search,
)
from .equilibrium import (
    ConvergenceError,
    EquilibriumConfig,
    EquilibriumResult,
    EquivalenceError,
    ResponseMap,
    SingularStiffnessError,
    input_sensitivity,
    solve_equilibrium,
    verify_equivalence,
)
from .model import (
    CableNet,
    DegenerateEdgeError,
    Edge,
    RestLengthError,
    edge_forces,
    edge_length,
    edge_lengths,
    effective_rest_length,
    effective_rest_lengths,
    elongation,
    elongations,
    force_residual,
    input_jacobian,
    slack_edges,
    socp_energy_terms,
    tangent_stiffness,
    total_energy,
)
from .scenario import (
    Metrics,
    Scenario,
    add_measurement_noise,
    build_grid_net,
    compute_metrics,
    estimate_rest_lengths,
    make_exact_recovery_scenario,
    percent_reduction,
)
from .sparse import (
    SparseConfig,
    SparseResult,
    SubproblemError,
    cardinality,
    run_sparse_control,
    solve_l1_subproblem,
    subgradient_certificate,
    update_weights,
)

__version__ = "0.1.0"
