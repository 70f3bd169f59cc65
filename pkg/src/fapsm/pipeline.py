"""End-to-end training, matching, and evaluation orchestration.

Training runs: local match -> corrected matrix -> ridge fit (linear or
kernel) -> globalize -> decision matrix -> patch-weight fit. Matching runs
steps 1-4 of the deployment procedure: local match, global scores, threshold,
weighted final vote (including the weight-1 baseline vote).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .associative import (
    AssociativeModel,
    KernelSpec,
    corrected_matrix,
    fit_kernel,
    fit_linear,
    globalize,
    make_linear_model,
)
from .errors import FapsmError, NoCandidatesError, ValidationError
from .local import LocalMatchResult, local_match
from .signatures import SENTINEL, Gallery, ProbeSet, validate_pairing
from .weighting import PatchWeights, decision_matrix, final_identity, fit_weights


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters of the full matcher; defaults follow the evaluation
    protocol (Gaussian kernel sigma=0.05, lambda1=1, threshold t=0.4)."""

    lambda1: float = 1.0
    lambda2: float = 0.01
    threshold: float = 0.4
    mode: str = "kernel"
    kernel_kind: str = "gaussian"
    sigma: float = 0.05
    n_k: Optional[int] = None  # None -> min(n, 1000)
    seed: int = 0

    def __post_init__(self):
        if not self.lambda1 > 0 or not self.lambda2 > 0:
            raise ValidationError("regularizers must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError("threshold must lie in [0, 1]")
        if self.mode not in ("linear", "kernel"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")

    def kernel(self) -> KernelSpec:
        return KernelSpec(self.kernel_kind, self.sigma)


@dataclass(frozen=True)
class TrainingResult:
    model: AssociativeModel
    weights: PatchWeights
    local: LocalMatchResult
    baseline_accuracy: float
    fapsm_accuracy: float


@dataclass(frozen=True)
class MatchRow:
    probe_index: int
    final_identity: int
    final_score: float
    baseline_identity: int
    baseline_score: float


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except FapsmError as e:
        raise type(e)(f"[{name}] {e}") from e


def _baseline_vote(local: LocalMatchResult, i: int) -> Optional[tuple[int, float]]:
    bid = int(local.baseline_identities[i])
    if bid == SENTINEL:
        return None
    # clip to [0, 1] like the local score matrix; raw cosines may be negative
    return bid, float(np.clip(local.baseline_scores[i], 0.0, 1.0))


def final_identities(
    global_scores: np.ndarray,
    global_ids: np.ndarray,
    weights: PatchWeights,
    local: LocalMatchResult,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-probe final identity and vote; -1/0 when no candidate exists."""
    n = global_ids.shape[0]
    out_ids = np.full(n, SENTINEL, dtype=np.int64)
    out_scores = np.zeros(n, dtype=np.float64)
    for i in range(n):
        try:
            u, s = final_identity(
                global_ids[i], global_scores[i], weights, _baseline_vote(local, i)
            )
        except NoCandidatesError:
            continue
        out_ids[i] = u
        out_scores[i] = s
    return out_ids, out_scores


def train(gallery: Gallery, probes: ProbeSet, config: PipelineConfig) -> TrainingResult:
    """Fit the associative model and patch weights on labeled probes."""
    if probes.identities is None:
        raise ValidationError("training requires labeled probes")
    _stage("validate_pairing", lambda: validate_pairing(gallery, probes).raise_if_invalid())
    local = _stage("local_match", local_match, gallery, probes)
    truth = probes.identities
    D = _stage("corrected_matrix", corrected_matrix, local, truth)
    if config.mode == "linear":
        W = _stage("fit_linear", fit_linear, local.scores, D, config.lambda1)
        model = make_linear_model(W, config.lambda1, config.threshold)
    else:
        n = len(probes)
        n_k = config.n_k if config.n_k is not None else min(n, 1000)
        model = _stage(
            "fit_kernel",
            fit_kernel,
            local.scores,
            D,
            config.lambda1,
            config.kernel(),
            n_k,
            config.seed,
            config.threshold,
        )
    glob = _stage("globalize", globalize, model, local)
    H = _stage("decision_matrix", decision_matrix, glob.identities, truth)
    weights = _stage("fit_weights", fit_weights, H, config.lambda2)
    finals, _ = final_identities(glob.scores, glob.identities, weights, local)
    baseline_acc = float(np.mean(local.baseline_identities == truth))
    fapsm_acc = float(np.mean(finals == truth))
    return TrainingResult(model, weights, local, baseline_acc, fapsm_acc)


def match(
    gallery: Gallery,
    probes: ProbeSet,
    model: AssociativeModel,
    weights: PatchWeights,
) -> list[MatchRow]:
    """Identify each probe against the gallery with trained artifacts."""
    _stage("validate_pairing", lambda: validate_pairing(gallery, probes).raise_if_invalid())
    if model.m != gallery.m or weights.m != gallery.m:
        raise ValidationError(
            f"model/weights expect m={model.m}/{weights.m}, gallery has m={gallery.m}"
        )
    local = _stage("local_match", local_match, gallery, probes)
    glob = _stage("globalize", globalize, model, local)
    finals, scores = final_identities(glob.scores, glob.identities, weights, local)
    return [
        MatchRow(
            i,
            int(finals[i]),
            float(scores[i]),
            int(local.baseline_identities[i]),
            float(local.baseline_scores[i]),
        )
        for i in range(len(probes))
    ]


@dataclass(frozen=True)
class EvaluationReport:
    baseline_accuracy: float
    fapsm_accuracy: float
    local_patch_accuracy: np.ndarray  # per-patch fraction of correct local identities
    global_patch_accuracy: np.ndarray  # per-patch fraction of correct surviving identities


def evaluate(
    gallery: Gallery,
    probes: ProbeSet,
    model: AssociativeModel,
    weights: PatchWeights,
) -> EvaluationReport:
    """Rank-1 accuracies plus per-patch local/global accuracy tables."""
    if probes.identities is None:
        raise ValidationError("evaluation requires labeled probes")
    _stage("validate_pairing", lambda: validate_pairing(gallery, probes).raise_if_invalid())
    local = _stage("local_match", local_match, gallery, probes)
    glob = _stage("globalize", globalize, model, local)
    finals, _ = final_identities(glob.scores, glob.identities, weights, local)
    truth = probes.identities
    return EvaluationReport(
        baseline_accuracy=float(np.mean(local.baseline_identities == truth)),
        fapsm_accuracy=float(np.mean(finals == truth)),
        local_patch_accuracy=np.mean(local.identities == truth[:, None], axis=0),
        global_patch_accuracy=np.mean(glob.identities == truth[:, None], axis=0),
    )
