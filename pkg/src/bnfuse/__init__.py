"""Fusing a tabular Bayesian network with text-classifier probabilities.

The library covers the full pipeline: network construction and validation,
exact inference with hard and virtual evidence, maximum-likelihood fitting of
every CPD family, embedding-based symptom classifiers, the consistency-node
fusion of both predictors, and the evaluation protocol (average precision,
Brier score, subset analysis, Wilcoxon significance). The ``bnfuse`` command
orchestrates experiments; see the demos directory for narrative walkthroughs.
"""

from .network import (
    DistVec,
    LogisticCpd,
    NetworkSpec,
    NoisyOrCpd,
    TableCpd,
    TruncatedPoissonCpd,
    UnfitCpd,
    VariableSpec,
    cpd_as_table,
    require_valid,
    strip_parameters,
    validate_network,
)
from .factors import Factor, factor_marginalize, factor_product, factor_reduce
from .inference import (
    Evidence,
    InconsistentEvidenceError,
    elimination_order,
    posterior,
    symptom_posteriors,
)
from .learning import (
    FitConfig,
    fit_logistic,
    fit_network,
    fit_noisy_or,
    fit_table,
    fit_truncated_poisson,
)
from .text import (
    EmbeddingMatrix,
    MlpModel,
    MlpTrainConfig,
    cross_fitted_proba,
    predict_proba,
    read_embeddings,
    train_concat_baseline,
    train_mlp,
    write_embeddings,
)
from .fusion import (
    ConsistencyCpt,
    FusedPrediction,
    estimate_consistency_cpt,
    fuse,
    predict_variants,
    run_variant,
)
from .evaluation import (
    EvalReport,
    average_precision,
    average_precision_macro,
    brier,
    confidence,
    subset_split,
    wilcoxon_one_sided,
)
from .data import (
    ChannelConfig,
    DataError,
    PatientRecord,
    Span,
    SplitPlan,
    generate_synthetic,
    load_dataset,
    make_splits,
    mask_notes,
    sample_records,
)
from .simsum import simsum_profile, simsum_template

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
