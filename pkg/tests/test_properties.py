"""Property tests for the pure-math invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from funduslab.explain import attention_rollout, overlap_loss, threshold_map
from funduslab.metrics import ScoredPixels, auc_roc
from funduslab.uda import entropy_map, join_patches, split_patches

unit_floats = st.floats(0.0, 1.0, allow_nan=False, width=32)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 4, 3), elements=st.floats(0.01, 1.0)))
def test_entropy_map_bounds_and_extremes(raw):
    probs = raw / raw.sum(axis=-1, keepdims=True)
    emap = entropy_map(probs)
    assert emap.min() >= 0.0 and emap.max() <= 1.0
    # 1 iff uniform, 0 iff one-hot
    for i in range(4):
        for j in range(4):
            row = probs[i, j]
            if np.allclose(row, 1.0 / 3.0, atol=1e-12):
                assert emap[i, j] > 1.0 - 1e-9
            elif not np.allclose(row, 1.0 / 3.0, atol=1e-6):
                assert emap[i, j] < 1.0
            assert emap[i, j] > 0.0  # strictly positive scores can't be one-hot


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 4, 8]))
def test_split_patches_reconstructs(seed, grid):
    rng = np.random.default_rng(seed)
    x = rng.random((16, 16, 2))
    assert np.array_equal(join_patches(split_patches(x, grid), grid), x)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.integers(1, 4))
def test_rollout_row_stochastic(seed, tokens, layers):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(layers):
        raw = rng.random((tokens, tokens)) + 1e-6
        mats.append(raw / raw.sum(axis=1, keepdims=True))
    out = attention_rollout(mats)
    assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_roc_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random(30)
    labels = rng.integers(0, 2, 30)
    labels[0], labels[1] = 0, 1
    base = auc_roc(ScoredPixels(scores, labels))
    warped = auc_roc(ScoredPixels(np.exp(3.0 * scores), labels))
    assert abs(base - warped) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_overlap_loss_nonnegative_and_faithful(seed):
    rng = np.random.default_rng(seed)
    tam = rng.random((6, 6))
    union = rng.integers(0, 2, (6, 6)).astype(float)
    value = overlap_loss(tam, union, 6, 6)
    assert value >= 0.0
    assert overlap_loss(union, union, 6, 6) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 0.9), st.floats(1.0, 50.0))
def test_threshold_map_order_preserving(seed, sigma, omega):
    rng = np.random.default_rng(seed)
    a = rng.random((5, 5))
    delta = rng.random((5, 5)) * 0.2 + 1e-9
    ta = threshold_map(a, sigma, omega)
    tb = threshold_map(a + delta, sigma, omega)
    assert np.all(tb >= ta)
