"""Cross-patch associative learning: ridge regression from local score rows to
per-patch correctness, its kernelized form, and threshold-based globalization.

The learned structure maps a probe's length-m local score vector to a length-m
global score vector in which every patch's local evidence influences every
patch's output. Thresholding the global scores rejects unreliable patches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import NumericalError, StoreError, ValidationError
from .local import LocalMatchResult
from .signatures import SENTINEL

_MODEL_HEADER = "fapsm-model v1"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family used by the kernelized learner.

    gaussian: K(u, v) = exp(-|u - v|^2 / (2 sigma^2)); linear: K(u, v) = u.v
    """

    kind: str = "gaussian"
    sigma: float = 0.05

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValidationError("gaussian kernel requires sigma > 0")

    def gram(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if self.kind == "linear":
            return A @ B.T
        sq = cdist(A, B, "sqeuclidean")
        return np.exp(-sq / (2.0 * self.sigma**2))


@dataclass(frozen=True)
class AssociativeModel:
    """Trained cross-patch weight structure.

    mode "linear" stores the m x m weight matrix; mode "kernel" stores the
    retained training score rows together with the dual coefficients
    alpha = (K + lambda1 I)^-1 D restricted to those rows.
    """

    mode: str
    lambda1: float
    kernel: KernelSpec
    threshold: float
    linear_weights: Optional[np.ndarray] = None
    support_scores: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("linear", "kernel"):
            raise ValidationError(f"unknown model mode {self.mode!r}")
        if not self.lambda1 > 0:
            raise ValidationError("lambda1 must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValidationError("threshold must lie in [0, 1]")
        if self.mode == "linear":
            W = self.linear_weights
            if W is None or W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise ValidationError("linear mode requires a square weight matrix")
            if not np.all(np.isfinite(W)):
                raise ValidationError("linear weights must be finite")
        else:
            if self.support_scores is None or self.alpha is None:
                raise ValidationError("kernel mode requires support_scores and alpha")
            if self.support_scores.shape[0] != self.alpha.shape[0]:
                raise ValidationError("support_scores and alpha must have equal row counts")
            if self.support_scores.shape[0] < 1:
                raise ValidationError("kernel mode requires at least one support row")

    @property
    def m(self) -> int:
        if self.mode == "linear":
            return self.linear_weights.shape[0]
        return self.support_scores.shape[1]


@dataclass(frozen=True)
class GlobalMatchResult:
    """Global score matrix Y and thresholded identity matrix G."""

    scores: np.ndarray
    identities: np.ndarray


def corrected_matrix(local: LocalMatchResult, truth: np.ndarray) -> np.ndarray:
    """Binary (n, m) matrix marking which local patch identities were correct.

    The sentinel -1 never equals a true label, so unmatchable patches yield 0.
    """
    truth = np.asarray(truth, dtype=np.int64)
    if truth.ndim != 1 or truth.shape[0] != local.n:
        raise ValidationError(f"truth must have length {local.n}, got shape {truth.shape}")
    return (local.identities == truth[:, None]).astype(np.float64)


def _spd_solve(A: np.ndarray, B: np.ndarray, what: str) -> np.ndarray:
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NumericalError(f"{what}: non-finite input")
    try:
        X = cho_solve(cho_factor(A, lower=True), B)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"{what}: Cholesky solve failed: {e}") from e
    return X


def fit_linear(Z: np.ndarray, D: np.ndarray, lambda1: float) -> np.ndarray:
    """Ridge solution W = (Z'Z + lambda1 I)^-1 Z'D via a Cholesky solve."""
    Z = np.asarray(Z, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if Z.shape != D.shape:
        raise ValidationError(f"Z and D must share shape, got {Z.shape} and {D.shape}")
    if not lambda1 > 0:
        raise ValidationError("lambda1 must be positive")
    m = Z.shape[1]
    A = Z.T @ Z + lambda1 * np.eye(m)
    rhs = Z.T @ D
    W = _spd_solve(A, rhs, "fit_linear")
    scale = max(1.0, float(np.abs(rhs).max()))
    residual = float(np.abs(A @ W - rhs).max())
    if residual > 1e-8 * scale:
        raise NumericalError(f"fit_linear: residual {residual:.3e} exceeds 1e-8 * {scale:.3e}")
    return W


def fit_kernel(
    Z: np.ndarray,
    D: np.ndarray,
    lambda1: float,
    kernel: KernelSpec,
    n_k: int,
    seed: int,
    threshold: float = 0.4,
) -> AssociativeModel:
    """Kernel ridge fit on a seeded uniform subsample of n_k training rows."""
    Z = np.asarray(Z, dtype=np.float64)
    D = np.asarray(D, dtype=np.float64)
    if Z.shape != D.shape:
        raise ValidationError(f"Z and D must share shape, got {Z.shape} and {D.shape}")
    n = Z.shape[0]
    if not 1 <= n_k <= n:
        raise ValidationError(f"n_k must lie in [1, {n}], got {n_k}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=n_k, replace=False)
    supports = Z[idx]
    K = kernel.gram(supports, supports)
    alpha = _spd_solve(K + lambda1 * np.eye(n_k), D[idx], "fit_kernel")
    return AssociativeModel(
        mode="kernel",
        lambda1=float(lambda1),
        kernel=kernel,
        threshold=float(threshold),
        support_scores=supports,
        alpha=alpha,
    )


def make_linear_model(W: np.ndarray, lambda1: float, threshold: float = 0.4) -> AssociativeModel:
    return AssociativeModel(
        mode="linear",
        lambda1=float(lambda1),
        kernel=KernelSpec("linear"),
        threshold=float(threshold),
        linear_weights=np.asarray(W, dtype=np.float64),
    )


def predict_global(model: AssociativeModel, Z: np.ndarray) -> np.ndarray:
    """Global score rows y for one local score row or a stack of rows.

    Linear mode computes z W; kernel mode computes K(z, supports) alpha.
    Outputs are unclamped reals.
    """
    Z = np.asarray(Z, dtype=np.float64)
    single = Z.ndim == 1
    Z2 = np.atleast_2d(Z)
    if Z2.shape[1] != model.m:
        raise ValidationError(f"score rows must have length {model.m}, got {Z2.shape[1]}")
    if model.mode == "linear":
        Y = Z2 @ model.linear_weights
    else:
        Y = model.kernel.gram(Z2, model.support_scores) @ model.alpha
    return Y[0] if single else Y


def globalize(model: AssociativeModel, local: LocalMatchResult) -> GlobalMatchResult:
    """Apply the model and threshold: keep p where y >= t, else reject to -1."""
    Y = predict_global(model, local.scores)
    G = np.where(Y >= model.threshold, local.identities, SENTINEL)
    return GlobalMatchResult(Y, G)


# ---------------------------------------------------------------------------
# Model persistence. Header line, then comma-separated float rows written with
# repr() so values round-trip at full float64 precision.


def save_model(path, model: AssociativeModel) -> None:
    head = (
        f"{_MODEL_HEADER} mode={model.mode} m={model.m} "
        f"lambda1={repr(model.lambda1)} t={repr(model.threshold)} "
        f"kernel={model.kernel.kind} sigma={repr(model.kernel.sigma)} "
        f"nk={0 if model.mode == 'linear' else model.support_scores.shape[0]}"
    )
    lines = [head]
    if model.mode == "linear":
        rows = model.linear_weights
    else:
        rows = np.vstack([model.support_scores, model.alpha])
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> AssociativeModel:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise StoreError(f"cannot read model file {path}: {e}") from e
    if not lines:
        raise StoreError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 9 or head[0] != "fapsm-model" or head[1] != "v1":
        raise StoreError(f"{path}: bad model header {lines[0]!r}")
    try:
        kv = dict(tok.split("=", 1) for tok in head[2:])
        mode = kv["mode"]
        m = int(kv["m"])
        lambda1 = float(kv["lambda1"])
        t = float(kv["t"])
        kernel = KernelSpec(kv["kernel"], float(kv["sigma"]))
        n_k = int(kv["nk"])
    except (KeyError, ValueError, ValidationError) as e:
        raise StoreError(f"{path}: bad model header: {e}") from e
    try:
        rows = np.array([[float(t_) for t_ in line.split(",")] for line in lines[1:] if line.strip()])
    except ValueError as e:
        raise StoreError(f"{path}: malformed model row: {e}") from e
    try:
        if mode == "linear":
            if rows.shape != (m, m):
                raise StoreError(f"{path}: expected {m}x{m} weights, got {rows.shape}")
            return make_linear_model(rows, lambda1, t)
        if rows.shape != (2 * n_k, m):
            raise StoreError(f"{path}: expected {2 * n_k} rows of length {m}, got {rows.shape}")
        return AssociativeModel(
            mode="kernel",
            lambda1=lambda1,
            kernel=kernel,
            threshold=t,
            support_scores=rows[:n_k],
            alpha=rows[n_k:],
        )
    except ValidationError as e:
        raise StoreError(f"{path}: invalid model: {e}") from e
