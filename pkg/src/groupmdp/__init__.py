"""Planning in tabular MDPs with grouped action spaces."""

from .bounds import (
    BoundBreakdown,
    Prop1Inputs,
    ResourceCosts,
    eps_approx,
    eps_opt_vi,
    eps_perf_vi,
    eps_samp,
    prop1_gap_bound,
    resource_costs,
)
from .estimation import (
    EmpiricalGroupedMdp,
    PipelineResult,
    RngSpec,
    SampleBudget,
    derive_seed,
    measure_loss,
    per_state_loss,
    run_pipeline,
    sample_generative,
)
from .grouping import (
    DecompositionWitness,
    DeviationFactors,
    GroupingFunction,
    InnerPolicy,
    beta_p_star,
    beta_r_star,
    build_grouped_mdp,
    decomposition_feasible_at,
    decomposition_witness,
    deviation_factors,
    lift_policy,
)
from .mdp import (
    PolicyTable,
    TabularMdp,
    ValueTables,
    bellman_optimal_update,
    evaluate_policy,
    greedy_policy,
    load_mdp,
    mdp_from_dict,
    mdp_to_dict,
    optimal_values,
    save_mdp,
    validate_mdp,
    value_iteration,
)
from .selector import (
    MdpSampler,
    ResourceGrid,
    SelectionResult,
    UtilityConfig,
    estimate_deviation_factors,
    optimize_resources,
    select_grouping_exact,
    select_grouping_practical,
)

__version__ = "0.1.0"
