"""Seeded synthetic galleries and probe sets with controllable degradation.

Each identity gets one unit-sphere prototype per patch. Gallery signatures are
the clean prototypes; probes start from their identity's prototypes and then,
independently per patch, may be corrupted (the patch features are swapped for
a uniformly chosen OTHER identity's prototype, mimicking a patch that
confidently matches the wrong person), perturbed by additive Gaussian noise
with re-normalization, and finally flagged occluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .signatures import Gallery, ProbeSet, Signature

_MAX_REDRAWS = 100
_COS_LIMIT = 0.999


@dataclass(frozen=True)
class SynthConfig:
    num_identities: int
    num_probes_per_identity: int
    b: int = 512
    m: int = 8
    noise_sigma: float = 0.0
    occlusion_prob: float = 0.0
    corruption_probs: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.num_identities < 2:
            raise ValidationError("need at least 2 identities")
        if self.num_probes_per_identity < 1:
            raise ValidationError("need at least 1 probe per identity")
        if self.b < 1 or self.m < 1:
            raise ValidationError("b and m must be at least 1")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")
        if not 0.0 <= self.occlusion_prob <= 1.0:
            raise ValidationError("occlusion_prob must lie in [0, 1]")
        rho = tuple(float(r) for r in self.corruption_probs) or (0.0,) * self.m
        if len(rho) != self.m:
            raise ValidationError(f"corruption_probs must have length m={self.m}")
        if any(not 0.0 <= r <= 1.0 for r in rho):
            raise ValidationError("corruption probabilities must lie in [0, 1]")
        object.__setattr__(self, "corruption_probs", rho)


def _draw_prototypes(rng: np.random.Generator, l: int, b: int, m: int) -> np.ndarray:
    """(l, b, m) unit-norm prototypes, redrawn until no near-duplicate pair."""
    for _ in range(_MAX_REDRAWS):
        protos = rng.standard_normal((l, b, m))
        protos /= np.linalg.norm(protos, axis=1, keepdims=True)
        ok = True
        for j in range(m):
            gram = protos[:, :, j] @ protos[:, :, j].T
            np.fill_diagonal(gram, 0.0)
            if gram.max() >= _COS_LIMIT:
                ok = False
                break
        if ok:
            return protos
    raise ValidationError(
        "could not draw sufficiently distinct prototypes; increase b or reduce identities"
    )


def generate(config: SynthConfig) -> tuple[Gallery, ProbeSet]:
    """Deterministic (seeded) gallery and labeled probe set."""
    rng = np.random.default_rng(config.seed)
    l, b, m = config.num_identities, config.b, config.m
    rho = np.array(config.corruption_probs)
    protos = _draw_prototypes(rng, l, b, m)

    identities = np.arange(1, l + 1, dtype=np.int64)
    gallery = Gallery(
        (int(identities[i]), Signature(protos[i], np.ones(m, dtype=np.int8)))
        for i in range(l)
    )

    samples = []
    labels = []
    for i in range(l):
        for _ in range(config.num_probes_per_identity):
            feats = protos[i].copy()
            corrupt = rng.random(m) < rho
            for j in np.flatnonzero(corrupt):
                other = int(rng.integers(l - 1))
                if other >= i:
                    other += 1
                feats[:, j] = protos[other, :, j]
            if config.noise_sigma > 0:
                feats = feats + rng.normal(0.0, config.noise_sigma, size=(b, m))
                feats /= np.linalg.norm(feats, axis=0, keepdims=True)
            occ = (rng.random(m) >= config.occlusion_prob).astype(np.int8)
            samples.append(Signature(feats, occ))
            labels.append(int(identities[i]))
    return gallery, ProbeSet(samples, np.array(labels, dtype=np.int64))
