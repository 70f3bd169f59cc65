"""Signature, gallery, and probe-set data model plus the textual store format.

A signature is a per-subject pair (feature matrix, occlusion encoding): the
feature matrix holds one column of ``b`` features per patch, and the occlusion
vector flags which of the ``m`` patches are visible (1) versus occluded (0).
Occluded columns may hold arbitrary finite values; no scoring path reads them.

Identities are opaque non-negative integers. The sentinel ``-1`` is reserved
for "no identity" (rejected or unmatchable patches, unlabeled probes) and may
never appear inside a gallery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import StoreError, ValidationError

SENTINEL = -1

_SIG_HEADER = "fapsm-sig v1"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Signature:
    """Feature matrix of shape (b, m) plus a length-m binary occlusion vector."""

    features: np.ndarray
    occlusion: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        occ = np.asarray(self.occlusion, dtype=np.int8)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValidationError(f"features must be a b x m matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValidationError("features contain non-finite values")
        if occ.shape != (feats.shape[1],):
            raise ValidationError(
                f"occlusion must have length m={feats.shape[1]}, got shape {occ.shape}"
            )
        if not np.all((occ == 0) | (occ == 1)):
            raise ValidationError("occlusion flags must be 0 or 1")
        norms = np.linalg.norm(feats, axis=0)
        if np.any((occ == 1) & (norms == 0.0)):
            raise ValidationError("non-occluded patch has zero feature norm")
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "occlusion", _readonly(occ))

    @property
    def b(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Gallery:
    """Ordered (identity, signature) pairs defining the 1-to-N search space."""

    entries: tuple

    def __init__(self, entries: Iterable[tuple[int, Signature]]):
        entries = tuple((int(i), s) for i, s in entries)
        if not entries:
            raise ValidationError("gallery must be nonempty")
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValidationError("gallery identities must be unique")
        if any(i < 0 for i in ids):
            raise ValidationError("gallery identities must be non-negative (-1 is reserved)")
        b, m = entries[0][1].b, entries[0][1].m
        for i, s in entries:
            if s.b != b or s.m != m:
                raise ValidationError(
                    f"gallery entry {i} has shape ({s.b},{s.m}), expected ({b},{m})"
                )
        object.__setattr__(self, "entries", entries)

    @property
    def b(self) -> int:
        return self.entries[0][1].b

    @property
    def m(self) -> int:
        return self.entries[0][1].m

    @property
    def identities(self) -> np.ndarray:
        return np.array([i for i, _ in self.entries], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class ProbeSet:
    """Ordered probe signatures, optionally with true identity labels."""

    samples: tuple
    identities: Optional[np.ndarray] = None

    def __init__(self, samples: Iterable[Signature], identities=None):
        samples = tuple(samples)
        if not samples:
            raise ValidationError("probe set must be nonempty")
        b, m = samples[0].b, samples[0].m
        for s in samples:
            if s.b != b or s.m != m:
                raise ValidationError("probe signatures must share b and m")
        if identities is not None:
            identities = np.asarray(identities, dtype=np.int64)
            if identities.shape != (len(samples),):
                raise ValidationError(
                    f"identities must have length {len(samples)}, got {identities.shape}"
                )
            identities = _readonly(identities)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "identities", identities)

    @property
    def b(self) -> int:
        return self.samples[0].b

    @property
    def m(self) -> int:
        return self.samples[0].m

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError("; ".join(self.violations))


def validate_pairing(gallery: Gallery, probes: ProbeSet) -> ValidationReport:
    """Check that a probe set is matchable against a gallery.

    Pure function: lists every violation (dimension mismatches, probe labels
    missing from the gallery) instead of stopping at the first one.
    """
    violations = []
    if gallery.b != probes.b:
        violations.append(f"dimension-mismatch: gallery b={gallery.b}, probes b={probes.b}")
    if gallery.m != probes.m:
        violations.append(f"dimension-mismatch: gallery m={gallery.m}, probes m={probes.m}")
    if probes.identities is not None:
        known = set(int(i) for i in gallery.identities)
        for idx, label in enumerate(probes.identities):
            if int(label) not in known:
                violations.append(f"unknown-label: probe {idx} has identity {int(label)}")
    return ValidationReport(tuple(violations))


# ---------------------------------------------------------------------------
# Store format: line-oriented UTF-8 text.
#   line 1:  "fapsm-sig v1 b=<b> m=<m>"
#   records: "<identity>|<o_1>,...,<o_m>|<e_11>,...,<e_b1>|...|<e_1m>,...,<e_bm>"
# Floats are written with repr(), which round-trips float64 exactly.


def _fmt(x: float) -> str:
    return repr(float(x))


def write_store(path, records: Iterable[tuple[int, Signature]], b: int, m: int) -> None:
    lines = [f"{_SIG_HEADER} b={b} m={m}"]
    for identity, sig in records:
        if sig.b != b or sig.m != m:
            raise ValidationError(f"record has shape ({sig.b},{sig.m}), header says ({b},{m})")
        occ = ",".join(str(int(o)) for o in sig.occlusion)
        blocks = [",".join(_fmt(v) for v in sig.features[:, j]) for j in range(m)]
        lines.append("|".join([str(int(identity)), occ] + blocks))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_store(path) -> tuple[int, int, list[tuple[int, Signature]]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise StoreError(f"cannot read signature store {path}: {e}") from e
    lines = text.splitlines()
    if not lines:
        raise StoreError(f"{path}: empty signature store")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "fapsm-sig" or header[1] != "v1":
        raise StoreError(f"{path}: bad signature store header {lines[0]!r}")
    try:
        b = int(header[2].removeprefix("b="))
        m = int(header[3].removeprefix("m="))
    except ValueError as e:
        raise StoreError(f"{path}: bad header dimensions {lines[0]!r}") from e
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != 2 + m:
            raise StoreError(f"{path}:{lineno}: expected {2 + m} fields, got {len(parts)}")
        try:
            identity = int(parts[0])
            occ = np.array([int(t) for t in parts[1].split(",")], dtype=np.int8)
            feats = np.empty((b, m), dtype=np.float64)
            for j in range(m):
                col = np.array([float(t) for t in parts[2 + j].split(",")])
                if col.shape != (b,):
                    raise StoreError(f"{path}:{lineno}: patch {j} has {col.size} values, expected {b}")
                feats[:, j] = col
        except (ValueError, ValidationError) as e:
            raise StoreError(f"{path}:{lineno}: malformed record: {e}") from e
        try:
            sig = Signature(feats, occ)
        except ValidationError as e:
            raise StoreError(f"{path}:{lineno}: invalid signature: {e}") from e
        records.append((identity, sig))
    return b, m, records


def save_gallery(path, gallery: Gallery) -> None:
    write_store(path, gallery.entries, gallery.b, gallery.m)


def load_gallery(path) -> Gallery:
    _, _, records = read_store(path)
    try:
        return Gallery(records)
    except ValidationError as e:
        raise StoreError(f"{path}: {e}") from e


def save_probes(path, probes: ProbeSet) -> None:
    if probes.identities is None:
        labels = [SENTINEL] * len(probes)
    else:
        labels = [int(c) for c in probes.identities]
    write_store(path, zip(labels, probes.samples), probes.b, probes.m)


def load_probes(path) -> ProbeSet:
    """Load a probe store; identity -1 on every record means unlabeled."""
    _, _, records = read_store(path)
    if not records:
        raise StoreError(f"{path}: probe store has no records")
    labels = [i for i, _ in records]
    samples = [s for _, s in records]
    if all(c == SENTINEL for c in labels):
        return ProbeSet(samples, None)
    return ProbeSet(samples, np.array(labels, dtype=np.int64))
