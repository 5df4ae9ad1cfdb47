"""Multistart stochastic optimization that identifies all local minima.

MANSO (Multistart Algorithm for Nonconvex Stochastic Optimization) samples a
compact box uniformly, starts a local stochastic solver only from points
that are probabilistically best within a shrinking critical radius, steps
every active run once per iteration, terminates runs that wander into each
other's basins, and collects the minima that settled runs identify.

The package also ships the noisy Branin and Shekel benchmark families, a
small statevector QAOA maxcut objective, a uniform random-search baseline,
and a data-profile evaluation harness with a CLI (``manso run|profile|report``).
"""

from .core import (
    BoxDomain,
    EstimateStats,
    RngStream,
    SamplePoint,
    radius_schedule,
    uniform_sample,
    update_estimate,
)
from .start_rules import (
    StartDecision,
    StartRuleConfig,
    chebyshev_prob_bound,
    check_s1,
    check_s2,
    check_s3,
    evaluate_start_conditions,
)
from .local_search import (
    IdentificationConfig,
    LsoRun,
    LsoStepResult,
    SpsaSolver,
    TrustRegionSolver,
    detect_identification,
    make_solver,
)
from .driver import (
    IdentifiedMinimum,
    MansoConfig,
    MansoState,
    RunReport,
    dedup_minimum,
    manso_iteration,
    run_to_budget,
)
from .benchmarks import (
    BenchmarkProblem,
    Minimum,
    branin,
    branin_problem,
    noisy_eval,
    shekel,
    shekel_problem,
)
from .qaoa import (
    Graph,
    QaoaCircuit,
    brute_force_maxcut,
    exact_expectation,
    petersen_graph,
    qaoa_problem,
    sampled_objective,
    statevector,
)
from .evalcli import (
    DataProfile,
    EvaluationSet,
    data_profile,
    first_hit_time,
    identification_radius,
    random_search_baseline,
    run_experiment,
)

__version__ = "0.1.0"
