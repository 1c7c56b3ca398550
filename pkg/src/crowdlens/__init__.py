"""Crowd-dynamics analytics for crowdfunding event logs.

Ingests project/contribution CSV logs, computes five crowd-behaviour features
per project, and runs a three-method analysis of fundraising success:
correlation, cross-validated random-forest prediction with permutation
importance, and coarsened exact matching with SATT estimation.  A synthetic
market generator with planted effects provides the verification oracle.
"""
from .cem import (
    CoarseningPlan,
    MatchedSample,
    SattConfig,
    SattEstimate,
    Stratum,
    coarsen,
    estimate_satt,
    l1_imbalance,
    match_strata,
    prune_one_to_one,
    satt_all_features,
)
from .evaluate import (
    EvalReport,
    ForestConfig,
    auc_score,
    cross_validate,
    undersample_indices,
)
from .features import (
    FEATURE_NAMES,
    CrowdFeatureVector,
    FeatureMatrix,
    FeatureSummary,
    MinMaxNormalizer,
    build_feature_matrix,
    extract_all,
    extract_crowd_features,
    normalize_minmax,
    summarize,
)
from .forest import RandomForest
from .importance import ImportanceReport, permutation_importance
from .ingest import (
    ContributionEvent,
    Covariate,
    CovariateSchema,
    Dataset,
    ProjectRecord,
    filter_completed,
    load_dataset,
    save_dataset,
)
from .logit import LogisticModel
from .stats import (
    CorrelationResult,
    DipResult,
    correlate_with_outcome,
    dip_test,
    histogram_data,
    pearson,
)
from .synth import CovariateGen, GroundTruth, MarketSpec, generate_market, preset_spec, write_market

__version__ = "0.1.0"
