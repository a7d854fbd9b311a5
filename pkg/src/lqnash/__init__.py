"""Feedback Nash equilibria for symmetric many-player LQ differential games."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .tolerances import DEFAULT, Tolerances  # noqa: F401
from .game_model import (  # noqa: F401
    AugmentedSystem,
    CouplingWeight,
    FeedbackGains,
    GameParams,
    augmented_dynamics,
    extract_gains,
    validate_game,
)
from .spectral_riccati import (  # noqa: F401
    ClassicalSolution,
    HamiltonianPencil,
    NashValue,
    SpectrumSplitCertificate,
    YSolution,
    assemble_K0,
    build_hamiltonian,
    enumerate_y_solutions,
    solve_classical_are,
    solve_k2,
    verify_similarity,
)
from .coupled_solver import (  # noqa: F401
    ClosedLoop,
    ResidualMatrix,
    SolveCertificate,
    closed_loop,
    continuation_sweep,
    default_initial_guess,
    drift_matrix,
    frechet_derivative,
    input_matrix,
    newton_solve,
    residual,
)
from .perturbation import (  # noqa: F401
    EpsilonBound,
    InvertibilityVerdict,
    OperatorL,
    SeriesTerm,
    build_operator,
    epsilon_bound,
    first_order_cost,
    first_order_rhs,
    first_order_term,
    invertibility_check,
)
from .equilibrium_analysis import (  # noqa: F401
    BestResponseReport,
    ConvergenceVerdict,
    EquilibriumReport,
    FiniteHorizonPath,
    FiniteHorizonSpec,
    best_response_gap,
    classify,
    convergence_check,
    finite_horizon_path,
)
from .mean_field_limit import (  # noqa: F401
    InverseVerdict,
    LimitSystem,
    MarketProblem,
    construct_market_problem,
    limit_dynamics,
    verify_inverse,
)
from .simulator import (  # noqa: F401
    Trajectory,
    evaluate_cost,
    simulate_full,
    simulate_reduced,
)
