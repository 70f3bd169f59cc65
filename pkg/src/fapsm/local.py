"""Per-patch local matching and the occlusion-masked holistic baseline.

The baseline score between two signatures averages the cosine similarity of
every mutually non-occluded patch pair. Local matching goes one step further
and records, per probe and per patch, which gallery identity that single patch
most resembles together with the (clipped) cosine score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncomparablePairError, ValidationError
from .signatures import SENTINEL, Gallery, ProbeSet, Signature, validate_pairing


def cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity dot(u, v) / (|u| |v|), in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValidationError(f"cosine_score needs equal-length vectors, got {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine_score is undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def baseline_score(g: Signature, p: Signature) -> tuple[float, int]:
    """Average cosine over mutually non-occluded patches; returns (s, k).

    Raises IncomparablePairError when no patch is visible in both signatures.
    """
    if g.b != p.b or g.m != p.m:
        raise ValidationError(f"signature shapes differ: ({g.b},{g.m}) vs ({p.b},{p.m})")
    both = (g.occlusion == 1) & (p.occlusion == 1)
    k = int(both.sum())
    if k == 0:
        raise IncomparablePairError("no mutually non-occluded patch pair")
    total = 0.0
    for j in np.flatnonzero(both):
        total += cosine_score(g.features[:, j], p.features[:, j])
    return total / k, k


@dataclass(frozen=True)
class LocalMatchResult:
    """Per-patch matching identities P, scores Z, and the baseline rank-1.

    identities:           (n, m) int matrix; -1 marks unmatchable patches.
    scores:               (n, m) float matrix in [0, 1]; 0 where identity is -1.
    baseline_identities:  length-n rank-1 identities from the holistic score
                          (-1 for probes incomparable with every gallery entry).
    baseline_scores:      length-n holistic scores (0 where identity is -1).
    """

    identities: np.ndarray
    scores: np.ndarray
    baseline_identities: np.ndarray
    baseline_scores: np.ndarray

    @property
    def n(self) -> int:
        return self.identities.shape[0]

    @property
    def m(self) -> int:
        return self.identities.shape[1]


def _unit_columns(feats: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(feats, axis=0)
    safe = np.where(norms == 0.0, 1.0, norms)
    return feats / safe


def local_match(gallery: Gallery, probes: ProbeSet) -> LocalMatchResult:
    """Compute P, Z and the baseline rank-1 result for every probe.

    Per patch, only gallery entries whose patch is non-occluded are candidates;
    ties are broken by the lowest gallery index. Identity selection uses raw
    cosines while Z stores max(0, cosine).
    """
    validate_pairing(gallery, probes).raise_if_invalid()
    l = len(gallery)
    n, m = len(probes), probes.m
    gal_ids = gallery.identities

    # (l, b, m) unit-normalized gallery features, (l, m) occlusion flags
    gal_feats = np.stack([_unit_columns(s.features) for _, s in gallery.entries])
    gal_occ = np.stack([s.occlusion for _, s in gallery.entries]).astype(bool)
    prb_feats = np.stack([_unit_columns(s.features) for s in probes.samples])
    prb_occ = np.stack([s.occlusion for s in probes.samples]).astype(bool)

    P = np.full((n, m), SENTINEL, dtype=np.int64)
    Z = np.zeros((n, m), dtype=np.float64)
    # (n, l, m) raw cosines, reused for the baseline
    cos = np.einsum("nbm,lbm->nlm", prb_feats, gal_feats)

    for j in range(m):
        cand = np.flatnonzero(gal_occ[:, j])
        if cand.size == 0:
            continue
        cj = cos[:, cand, j]
        best = np.argmax(cj, axis=1)  # first max = lowest gallery index
        raw = cj[np.arange(n), best]
        visible = prb_occ[:, j]
        P[visible, j] = gal_ids[cand[best[visible]]]
        Z[visible, j] = np.maximum(0.0, raw[visible])

    # Baseline: per (probe, gallery) average cosine over mutually visible patches
    both = prb_occ[:, None, :] & gal_occ[None, :, :]  # (n, l, m)
    k = both.sum(axis=2)
    sums = np.where(both, cos, 0.0).sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(k > 0, sums / np.maximum(k, 1), -np.inf)
    base_ids = np.full(n, SENTINEL, dtype=np.int64)
    base_scores = np.zeros(n, dtype=np.float64)
    comparable = (k > 0).any(axis=1)
    best_g = np.argmax(s, axis=1)
    base_ids[comparable] = gal_ids[best_g[comparable]]
    base_scores[comparable] = s[np.arange(n), best_g][comparable]

    return LocalMatchResult(P, Z, base_ids, base_scores)
