"""Non-negative l1-regularized patch weighting and the final identity vote.

From the +-1 decision matrix H (did patch j identify probe i correctly after
globalization?) a sparse non-negative weight vector q is learned by minimizing

    |e' - H' q|_2^2 + lambda2 |q|_1,   q >= 0

where e' = [1, ..., 1, 1] and H' = [H; 1^T]; the appended all-ones row softly
encodes the sum-to-one constraint. The final identity of a probe is the
candidate with the largest sum of q_j * y_j over the patches that voted for
it, plus a weight-1 vote from the holistic baseline when available.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import NoCandidatesError, NumericalError, StoreError, ValidationError
from .signatures import SENTINEL

_WEIGHTS_HEADER = "fapsm-weights v1"

_MAX_SWEEPS = 10_000
_TOL = 1e-10


@dataclass(frozen=True)
class PatchWeights:
    """Non-negative per-patch combination weights and the lambda2 used."""

    weights: np.ndarray
    lambda2: float

    def __post_init__(self):
        q = np.asarray(self.weights, dtype=np.float64)
        if q.ndim != 1:
            raise ValidationError("weights must be a vector")
        if np.any(q < 0):
            raise ValidationError("weights must be non-negative")
        if not np.any(q > 0):
            raise ValidationError("at least one weight must be positive")
        object.__setattr__(self, "weights", q)

    @property
    def m(self) -> int:
        return self.weights.shape[0]


def decision_matrix(global_identities: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """(n, m) matrix of +1 where the global identity is correct, else -1.

    Rejected patches (identity -1) always count as -1.
    """
    G = np.asarray(global_identities)
    truth = np.asarray(truth, dtype=np.int64)
    if truth.ndim != 1 or truth.shape[0] != G.shape[0]:
        raise ValidationError(f"truth must have length {G.shape[0]}, got shape {truth.shape}")
    return np.where(G == truth[:, None], 1.0, -1.0)


def l1_objective(H: np.ndarray, q: np.ndarray, lambda2: float) -> float:
    """Objective |e' - H' q|^2 + lambda2 |q|_1 in the augmented form."""
    Hp, ep = _augment(np.asarray(H, dtype=np.float64))
    q = np.asarray(q, dtype=np.float64)
    r = ep - Hp @ q
    return float(r @ r + lambda2 * np.abs(q).sum())


def _augment(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, m = H.shape
    Hp = np.vstack([H, np.ones((1, m))])
    ep = np.ones(n + 1)
    return Hp, ep


def fit_weights(H: np.ndarray, lambda2: float) -> PatchWeights:
    """Cyclic coordinate descent with non-negative soft thresholding.

    Converges when the largest coordinate change in a sweep drops below 1e-10
    (at most 10,000 sweeps), then verifies the KKT conditions: zero weights
    need a non-negative subgradient, positive weights a near-zero gradient.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
        raise ValidationError(f"H must be a nonempty n x m matrix, got shape {H.shape}")
    if not lambda2 > 0:
        raise ValidationError("lambda2 must be positive")
    Hp, ep = _augment(H)
    m = Hp.shape[1]
    col_sq = np.einsum("ij,ij->j", Hp, Hp)

    q = np.zeros(m)
    r = ep - Hp @ q
    converged = False
    for _ in range(_MAX_SWEEPS):
        max_delta = 0.0
        for i in range(m):
            old = q[i]
            r += Hp[:, i] * old
            rho = float(Hp[:, i] @ r)
            q[i] = max(0.0, (rho - lambda2 / 2.0) / col_sq[i])
            r -= Hp[:, i] * q[i]
            max_delta = max(max_delta, abs(q[i] - old))
        if max_delta < _TOL:
            converged = True
            break
    if not converged:
        raise NumericalError(f"fit_weights did not converge; last sweep moved {max_delta:.3e}")

    # KKT check on the solved problem
    grad = -2.0 * (Hp.T @ r)
    scale = max(1.0, float(col_sq.max()))
    for i in range(m):
        if q[i] == 0.0:
            if grad[i] + lambda2 < -1e-6 * scale:
                raise NumericalError(f"fit_weights KKT violation at zero coordinate {i}")
        else:
            if abs(grad[i] + lambda2) > 1e-6 * scale:
                raise NumericalError(f"fit_weights stationarity residual at coordinate {i}")

    if not np.any(q > 0):
        raise NumericalError(
            "fit_weights: full shrinkage, all weights zero (lambda2 too large)"
        )
    return PatchWeights(q, float(lambda2))


def final_identity(
    g_row: np.ndarray,
    y_row: np.ndarray,
    weights: PatchWeights,
    baseline: Optional[tuple[int, float]] = None,
) -> tuple[int, float]:
    """Weighted vote over surviving patch identities, plus the baseline vote.

    vote(c) = sum of q_j * y_j over patches j with g_j = c; the baseline
    identity, when given, adds its score with weight exactly 1. Returns the
    argmax candidate and its vote; ties go to the smaller identity.
    """
    g_row = np.asarray(g_row)
    y_row = np.asarray(y_row, dtype=np.float64)
    q = weights.weights
    if g_row.shape != (q.shape[0],) or y_row.shape != (q.shape[0],):
        raise ValidationError("g, y and q must share length m")
    votes: dict[int, float] = {}
    for gj, yj, qj in zip(g_row, y_row, q):
        if gj != SENTINEL:
            votes[int(gj)] = votes.get(int(gj), 0.0) + qj * yj
    if baseline is not None:
        bid, s = int(baseline[0]), float(baseline[1])
        if bid != SENTINEL:
            votes[bid] = votes.get(bid, 0.0) + s
    if not votes:
        raise NoCandidatesError("all patches rejected and no baseline vote available")
    u = min(votes, key=lambda c: (-votes[c], c))
    return u, votes[u]


def save_weights(path, w: PatchWeights) -> None:
    lines = [
        f"{_WEIGHTS_HEADER} m={w.m} lambda2={repr(w.lambda2)}",
        ",".join(repr(float(v)) for v in w.weights),
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_weights(path) -> PatchWeights:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise StoreError(f"cannot read weights file {path}: {e}") from e
    if len(lines) < 2:
        raise StoreError(f"{path}: truncated weights file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "fapsm-weights" or head[1] != "v1":
        raise StoreError(f"{path}: bad weights header {lines[0]!r}")
    try:
        m = int(head[2].removeprefix("m="))
        lambda2 = float(head[3].removeprefix("lambda2="))
        q = np.array([float(t) for t in lines[1].split(",")])
    except ValueError as e:
        raise StoreError(f"{path}: malformed weights file: {e}") from e
    if q.shape != (m,):
        raise StoreError(f"{path}: expected {m} weights, got {q.size}")
    try:
        return PatchWeights(q, lambda2)
    except ValidationError as e:
        raise StoreError(f"{path}: invalid weights: {e}") from e
