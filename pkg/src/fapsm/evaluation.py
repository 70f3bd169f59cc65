"""Rank-1 measurement, threshold sweeps, and the Friedman / Iman-Davenport /
Bonferroni-Dunn machinery for comparing methods over many data splits."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import NumericalError, StoreError, ValidationError
from .pipeline import PipelineConfig, TrainingResult, final_identities, train
from .associative import globalize
from .weighting import decision_matrix, fit_weights
from .signatures import Gallery, ProbeSet

# Two-tailed Bonferroni-Dunn critical values q_alpha, indexed by the number of
# compared methods k. The (k=2, alpha=0.10) entry is 1.65 to match the rounded
# value used in the reference evaluation; the rest follow the standard Dunn
# table. Overridable via significance_report(q_table=...).
BONFERRONI_DUNN_Q = {
    0.05: {2: 1.960, 3: 2.241, 4: 2.394, 5: 2.498, 6: 2.576,
           7: 2.638, 8: 2.690, 9: 2.724, 10: 2.773},
    0.10: {2: 1.65, 3: 1.960, 4: 2.128, 5: 2.241, 6: 2.326,
           7: 2.394, 8: 2.450, 9: 2.498, 10: 2.539},
}


def rank1_accuracy(predictions: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of probes whose predicted identity equals the true one."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape or predictions.ndim != 1 or predictions.size == 0:
        raise ValidationError("predictions and truth must be equal-length nonempty vectors")
    return float(np.mean(predictions == truth))


@dataclass(frozen=True)
class SplitResults:
    """Rank-1 accuracies of k methods over N data splits."""

    method_names: tuple
    accuracies: np.ndarray  # (N, k)

    def __post_init__(self):
        acc = np.asarray(self.accuracies, dtype=np.float64)
        names = tuple(str(n) for n in self.method_names)
        if acc.ndim != 2 or acc.shape[0] < 2 or acc.shape[1] < 2:
            raise ValidationError("need at least 2 splits and 2 methods")
        if acc.shape[1] != len(names):
            raise ValidationError("method_names length must match accuracy columns")
        if np.any((acc < 0) | (acc > 1)):
            raise ValidationError("accuracies must lie in [0, 1]")
        object.__setattr__(self, "method_names", names)
        object.__setattr__(self, "accuracies", acc)

    @property
    def n_splits(self) -> int:
        return self.accuracies.shape[0]

    @property
    def n_methods(self) -> int:
        return self.accuracies.shape[1]


@dataclass(frozen=True)
class StatReport:
    method_names: tuple
    avg_ranks: np.ndarray
    friedman_chi2: float
    iman_f: float  # math.inf marks a degenerate Iman-Davenport denominator
    critical_difference: float
    alpha: float
    significant_pairs: tuple  # ((name_a, name_b, rank_gap), ...)


def average_ranks(results: SplitResults) -> np.ndarray:
    """Mean rank per method; rank 1 is best, ties get the mean of their ranks."""
    ranks = rankdata(-results.accuracies, axis=1, method="average")
    return ranks.mean(axis=0)


def friedman_iman(ranks: Sequence[float], N: int, k: int) -> tuple[float, float]:
    """Friedman chi-square and the Iman-Davenport F statistic from avg ranks."""
    R = np.asarray(ranks, dtype=np.float64)
    if k < 2 or N < 2 or R.shape != (k,):
        raise ValidationError("need k >= 2 average ranks and N >= 2 splits")
    chi2 = (12.0 * N / (k * (k + 1))) * (float(np.sum(R**2)) - k * (k + 1) ** 2 / 4.0)
    chi2 = max(0.0, chi2)
    if chi2 == 0.0:
        return 0.0, 0.0
    denom = N * (k - 1) - chi2
    if denom <= 0:
        raise NumericalError(
            f"Iman-Davenport denominator N(k-1) - chi2 = {denom:.6g} is not positive"
        )
    return chi2, (N - 1) * chi2 / denom


def bonferroni_dunn_cd(q_alpha: float, k: int, N: int) -> float:
    """Critical difference CD = q_alpha * sqrt(k(k+1) / (6N))."""
    if not q_alpha > 0:
        raise ValidationError("q_alpha must be positive")
    if k < 2 or N < 1:
        raise ValidationError("need k >= 2 methods and N >= 1 splits")
    return q_alpha * math.sqrt(k * (k + 1) / (6.0 * N))


def significance_from_ranks(
    method_names: Sequence[str],
    avg_ranks: Sequence[float],
    N: int,
    alpha: float = 0.10,
    q_table: Optional[dict] = None,
) -> StatReport:
    """StatReport from already-computed average ranks over N splits.

    A degenerate Iman-Davenport denominator (perfect method ordering on every
    split) is reported as iman_f = inf rather than failing the whole report.
    """
    names = tuple(str(n) for n in method_names)
    R = np.asarray(avg_ranks, dtype=np.float64)
    k = R.shape[0]
    table = q_table if q_table is not None else BONFERRONI_DUNN_Q
    if alpha not in table or k not in table[alpha]:
        raise ValidationError(
            f"no Bonferroni-Dunn critical value for k={k}, alpha={alpha}"
        )
    try:
        chi2, f_f = friedman_iman(R, N, k)
    except NumericalError:
        chi2 = (12.0 * N / (k * (k + 1))) * (float(np.sum(R**2)) - k * (k + 1) ** 2 / 4.0)
        f_f = math.inf
    cd = bonferroni_dunn_cd(table[alpha][k], k, N)
    pairs = []
    for a in range(k):
        for b in range(a + 1, k):
            gap = abs(float(R[a] - R[b]))
            if gap > cd:
                pairs.append((names[a], names[b], gap))
    return StatReport(names, R, chi2, f_f, cd, alpha, tuple(pairs))


def significance_report(
    results: SplitResults,
    alpha: float = 0.10,
    q_table: Optional[dict] = None,
) -> StatReport:
    """Average ranks, test statistics, and the pairs separated by more than CD."""
    return significance_from_ranks(
        results.method_names,
        average_ranks(results),
        results.n_splits,
        alpha,
        q_table,
    )


@dataclass(frozen=True)
class SweepResult:
    best_threshold: float
    thresholds: np.ndarray
    accuracies: np.ndarray
    training: TrainingResult  # fit at best_threshold


def sweep_threshold(
    gallery: Gallery,
    train_probes: ProbeSet,
    candidate_ts: Sequence[float],
    config: PipelineConfig,
) -> SweepResult:
    """Train per candidate threshold, return the accuracy-maximizing one.

    The associative fit is shared across candidates (only globalization and
    weighting depend on t). Ties go to the smaller threshold. Candidates where
    patch weighting fully shrinks to zero fall back to baseline-only votes.
    """
    ts = sorted(float(t) for t in candidate_ts)
    if not ts:
        raise ValidationError("candidate threshold list is empty")
    if train_probes.identities is None:
        raise ValidationError("sweep requires labeled training probes")
    base = train(gallery, train_probes, replace(config, threshold=ts[0]))
    truth = train_probes.identities
    accs = []
    fits = []
    for t in ts:
        model = _with_threshold(base.model, t)
        glob = globalize(model, base.local)
        H = decision_matrix(glob.identities, truth)
        try:
            weights = fit_weights(H, config.lambda2)
            finals, _ = final_identities(glob.scores, glob.identities, weights, base.local)
        except NumericalError:
            weights = None
            finals = base.local.baseline_identities
        accs.append(rank1_accuracy(finals, truth))
        fits.append((model, weights, glob))
    accs = np.array(accs)
    best_i = int(np.argmax(accs))  # first max = smallest t
    model, weights, glob = fits[best_i]
    if weights is None:
        raise NumericalError(
            f"patch weighting degenerate at the best threshold t={ts[best_i]}"
        )
    finals, _ = final_identities(glob.scores, glob.identities, weights, base.local)
    training = TrainingResult(
        model, weights, base.local, base.baseline_accuracy, float(accs[best_i])
    )
    return SweepResult(ts[best_i], np.array(ts), accs, training)


def _with_threshold(model, t):
    return replace(model, threshold=float(t))


# ---------------------------------------------------------------------------
# Split-results CSV: header "split,<method1>,<method2>,...", one row per split.


def write_splits_csv(path, results: SplitResults) -> None:
    lines = ["split," + ",".join(results.method_names)]
    for i, row in enumerate(results.accuracies):
        lines.append(str(i + 1) + "," + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_splits_csv(path) -> SplitResults:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise StoreError(f"cannot read splits CSV {path}: {e}") from e
    if not lines:
        raise StoreError(f"{path}: empty splits CSV")
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "split":
        raise StoreError(f"{path}:1: expected header 'split,<method1>,<method2>,...'")
    names = header[1:]
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise StoreError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows.append([float(t) for t in parts[1:]])
        except ValueError as e:
            raise StoreError(f"{path}:{lineno}: malformed accuracy: {e}") from e
    try:
        return SplitResults(tuple(names), np.array(rows))
    except ValidationError as e:
        raise StoreError(f"{path}: {e}") from e
