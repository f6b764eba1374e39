"""Fair reciprocal recommendation engine and benchmark harness."""

from .dataset import (
    DatasetSplit,
    FileFormat,
    InteractionGraph,
    InteractionRecord,
    MatchSet,
    Side,
    SyntheticConfig,
    UserProfile,
    build_graph,
    dataset_digest,
    derive_matches,
    generate_synthetic,
    load_interactions,
    split_holdout,
    write_dataset,
)
from .similarity import (
    ScoreEngine,
    algorithmic_reciprocal_score,
    attractiveness_similarity,
    directional_score,
    interest_similarity,
    reciprocal_score,
)
from .fairness import (
    FairnessConstraint,
    InfeasibleConstraintError,
    ObjectiveWeights,
    fairness_filter,
    fairness_score,
    multi_objective_score,
    nsw_brute_force,
    nsw_greedy_balance,
    nsw_objective,
    nsw_subgradient,
    submodularity_check,
    SubgradientProblem,
)
from .recommenders import (
    FairMatchParams,
    RecommendationList,
    StableMatching,
    check_stability,
    preference_orders,
    recommend_cf,
    recommend_fair_match,
    recommend_gale_shapley,
    recommend_recon,
)
from .metrics import (
    BiasModel,
    EvaluationInput,
    MetricsReport,
    bias_reduction_report,
    coverage_adjusted,
    demographic_parity,
    estimate_bias_model,
    evaluate_lists,
    jain_index,
    ndcg_at_k,
    precision_recall_at_k,
)
from .experiment import (
    ExperimentConfig,
    RunArtifact,
    emit_report,
    run_experiment,
    scaling_benchmark,
)

__version__ = "0.1.0"
