import numpy as np
import pytest

from fapsm import Gallery, ProbeSet, Signature


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def signature_from_columns(columns, occlusion=None):
    """Build a Signature from a list of length-b feature vectors (one per patch)."""
    feats = np.column_stack([np.asarray(c, dtype=np.float64) for c in columns])
    if occlusion is None:
        occlusion = np.ones(feats.shape[1], dtype=np.int8)
    return Signature(feats, np.asarray(occlusion, dtype=np.int8))


def random_signature(rng, b, m, occlusion=None):
    feats = rng.standard_normal((b, m))
    feats /= np.linalg.norm(feats, axis=0, keepdims=True)
    if occlusion is None:
        occlusion = np.ones(m, dtype=np.int8)
    return Signature(feats, occlusion)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_gallery(rng):
    return Gallery((i + 1, random_signature(rng, 8, 4)) for i in range(5))
