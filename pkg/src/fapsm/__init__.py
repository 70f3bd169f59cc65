"""Fully associative patch-based 1-to-N signature matcher."""

from .associative import (
    AssociativeModel,
    GlobalMatchResult,
    KernelSpec,
    corrected_matrix,
    fit_kernel,
    fit_linear,
    globalize,
    load_model,
    make_linear_model,
    predict_global,
    save_model,
)
from .errors import (
    FapsmError,
    IncomparablePairError,
    NoCandidatesError,
    NumericalError,
    StoreError,
    ValidationError,
)
from .evaluation import (
    SplitResults,
    StatReport,
    average_ranks,
    bonferroni_dunn_cd,
    friedman_iman,
    rank1_accuracy,
    significance_from_ranks,
    significance_report,
    sweep_threshold,
)
from .local import LocalMatchResult, baseline_score, cosine_score, local_match
from .pipeline import PipelineConfig, evaluate, match, train
from .signatures import (
    SENTINEL,
    Gallery,
    ProbeSet,
    Signature,
    load_gallery,
    load_probes,
    save_gallery,
    save_probes,
    validate_pairing,
)
from .synth import SynthConfig, generate
from .weighting import (
    PatchWeights,
    decision_matrix,
    final_identity,
    fit_weights,
    l1_objective,
    load_weights,
    save_weights,
)

__version__ = "0.1.0"
