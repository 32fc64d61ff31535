"""Energy-minimal configuration planning for multi-cell downlink networks.

Generates synthetic scenarios, models interference-coupled cell loads and
station power draw, and searches for configurations that serve every test
point's demand with as little energy as possible: a majorization-style
reweighting loop over exact linear programs, a rounding step to whole-cell
assignments, exact and greedy baselines, and a load-aware refinement built
on interference fixed points.
"""

from .scenario import (
    AreaConfig,
    Topology,
    TestPointSet,
    TrafficConfig,
    PropagationConfig,
    Scenario,
    generate_scenario,
    wrap_distance,
    path_loss,
    scenario_to_json,
    scenario_from_json,
)
from .linkmodel import (
    LinkParams,
    Assignment,
    sinr,
    sinr_matrix,
    spectral_efficiency,
    spectral_efficiency_matrix,
    worst_case_efficiency,
    demand_coefficients,
    load_from_assignment,
)
from .energy import (
    EnergyModel,
    ActivityReport,
    bs_energy,
    network_energy,
    normalized_energy,
    full_load_energy,
    activity_report,
)
from .lpsolver import LpProblem, LpSolution, LpInfeasibleError, solve_lp
from .optimizer import (
    ProblemInstance,
    MMConfig,
    MMTrace,
    build_problem,
    objective_h,
    gradient_h,
    majorizer_g,
    mm_weights,
    mm_iterate,
)
from .discretize import (
    RoundingFailure,
    round_assignment,
    strongest_signal_assignment,
    repair_assignment,
    ExactLimits,
    exact_solve,
    greedy_zoom,
)
from .smm import SolveResult, smm_solve, solve_with_algorithm
from .loadaware import (
    InterferenceMapping,
    FixedPointResult,
    build_interference_mapping,
    interference_map,
    fixed_point_load,
    AlternatingResult,
    alternating_solve,
)

__version__ = "0.1.0"
