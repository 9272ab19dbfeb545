"""Probabilistic record linkage of event-level datasets.

Pipeline: schema ingestion, scope and eligibility filters, blocking,
latent-class match scoring fit by EM, thresholded declaration, one-to-one
resolution, merged output, and a clerical review service for ambiguous pairs.
"""

from .comparators import (
    DEFAULT_CUTOFFS,
    MISSING,
    NUMERIC,
    STRING_JW,
    FieldConfig,
    build_agreement_vector,
    compare_field,
    jaro,
    jaro_winkler,
)
from .config import ConfigError, DatasetConfig, LinkageConfig, load_config
from .evaluation import (
    AdjudicationSummary,
    LinkageScore,
    SyntheticSpec,
    deterministic_baseline,
    generate_synthetic,
    load_truth,
    score_against_truth,
    sensitivity_report,
    truncated_percent,
)
from .fs_model import (
    EMDiagnostics,
    ModelParams,
    PatternCounts,
    count_patterns,
    em_fit,
    estimate_error_rates,
    observed_loglik,
    pattern_likelihood,
    posterior,
    posterior_table,
)
from .linkage_engine import (
    Block,
    BlockScore,
    PipelineError,
    PipelineResult,
    ScoredPair,
    block_by_state,
    block_pattern_counts,
    declare_matches,
    link_block,
    merge_linked,
    resolve_one_to_one,
    run_pipeline,
)
from .schema_ingest import (
    CanonicalRecord,
    FilterRuleSet,
    Reject,
    SchemaError,
    SchemaMapping,
    days_since_start,
    filter_eligibility,
    filter_scope,
    load_csv,
    normalize_city,
    normalize_state,
    normalize_zip,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CUTOFFS",
    "MISSING",
    "NUMERIC",
    "STRING_JW",
    "FieldConfig",
    "build_agreement_vector",
    "compare_field",
    "jaro",
    "jaro_winkler",
    "ConfigError",
    "DatasetConfig",
    "LinkageConfig",
    "load_config",
    "AdjudicationSummary",
    "LinkageScore",
    "SyntheticSpec",
    "deterministic_baseline",
    "generate_synthetic",
    "load_truth",
    "score_against_truth",
    "sensitivity_report",
    "truncated_percent",
    "Block",
    "BlockScore",
    "PipelineError",
    "PipelineResult",
    "ScoredPair",
    "block_by_state",
    "block_pattern_counts",
    "declare_matches",
    "link_block",
    "merge_linked",
    "resolve_one_to_one",
    "run_pipeline",
    "EMDiagnostics",
    "ModelParams",
    "PatternCounts",
    "count_patterns",
    "em_fit",
    "estimate_error_rates",
    "observed_loglik",
    "pattern_likelihood",
    "posterior",
    "posterior_table",
    "CanonicalRecord",
    "FilterRuleSet",
    "Reject",
    "SchemaError",
    "SchemaMapping",
    "days_since_start",
    "filter_eligibility",
    "filter_scope",
    "load_csv",
    "normalize_city",
    "normalize_state",
    "normalize_zip",
    "__version__",
]
