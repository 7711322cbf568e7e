"""Cost-aware fidelity routing for question answering.

Learns calibrated per-fidelity success probabilities from question text
alone, then routes each query to the cheapest fidelity whose expected
utility justifies its acquisition cost.
"""

from .boosting import GradientBoostedRegressor, RegressionTree, TrainConfig, best_split
from .calibration import (
    CalibrationReport,
    ClippingCalibrator,
    IsotonicCalibrator,
    TemperatureCalibrator,
    brier,
    ece,
    fit_isotonic,
    fit_temperature,
    pava,
)
from .corpus import (
    CorpusError,
    CorrectnessRecord,
    Dataset,
    FoldAssignment,
    assign_folds,
    load_records,
    write_records,
)
from .costs import (
    BUILTIN_PROFILE_NAMES,
    CostProfile,
    FidelityLevel,
    ProfileError,
    builtin_profile,
    load_profile,
    normalized_costs,
    raw_cost,
    size_ratio,
)
from .features import (
    FeatureVector,
    QuestionFeaturizer,
    Vocabulary,
    featurize,
    fit_vocabulary,
    tokenize,
)
from .harness import (
    EvalReport,
    FoldReport,
    GridSpec,
    evaluate_policy,
    export_pareto_csv,
    grid_search,
    pareto_frontier,
    run_cv,
    train_bank,
)
from .policy import (
    PolicyConfig,
    PredictorBank,
    RoutingDecision,
    oracle_select,
    regret,
    route_accuracy_only,
    route_argmax_utility,
    route_fixed_threshold,
    route_greedy,
    route_greedy_probs,
    voi,
)
from .synthworld import (
    BUILTIN_WORLD_NAMES,
    Archetype,
    GeneratedCorpus,
    WorldSpec,
    builtin_world,
    generate,
    load_truth,
    true_success,
    write_truth,
)

__version__ = "0.1.0"
