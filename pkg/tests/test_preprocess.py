from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from keydyn.errors import InsufficientDataError
from keydyn.events import FeatureVector, feature_layout
from keydyn.preprocess import (
    MinMaxNormalizer,
    SampleBuffer,
    Standardizer,
    augment,
    buffer_weights,
    fit_minmax,
    fit_standardizer,
    standardize,
    weighted_merge,
)

from oracles import mean_std_oracle, weighted_buffer_oracle


def test_standardizer_matches_two_pass_oracle(rows):
    s = fit_standardizer(rows)
    mean, std = mean_std_oracle(rows)
    np.testing.assert_allclose(s.mean, mean, atol=1e-10)
    np.testing.assert_allclose(s.std, np.maximum(std, s.epsilon), atol=1e-10)


def test_standardized_training_data_has_zero_mean_unit_std(rows):
    s = fit_standardizer(rows)
    z = s.transform(rows)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-10)


def test_standardizer_inverse_round_trip(rows):
    s = fit_standardizer(rows)
    np.testing.assert_allclose(s.inverse(s.transform(rows)), rows, atol=1e-9)


def test_standardizer_clamps_constant_columns():
    rows = np.ones((10, 4))
    rows[:, 1] = np.arange(10)
    s = fit_standardizer(rows)
    assert s.std[0] == pytest.approx(s.epsilon)
    # constant column maps to exactly zero, not NaN
    z = s.transform(rows)
    assert np.all(np.isfinite(z))
    np.testing.assert_array_equal(z[:, 0], 0.0)


def test_standardizer_requires_two_vectors():
    with pytest.raises(InsufficientDataError):
        fit_standardizer(np.ones((1, 5)))


def test_standardize_preserves_layout(rows):
    layout = feature_layout(10)
    s = fit_standardizer(rows)
    fv = FeatureVector(values=rows[0], layout=layout)
    out = standardize(s, fv)
    assert out.layout == layout
    np.testing.assert_allclose(out.values, s.transform(rows[0]))


def test_standardizer_dict_round_trip(rows):
    s = fit_standardizer(rows)
    restored = Standardizer.from_dict(s.to_dict())
    np.testing.assert_array_equal(restored.mean, s.mean)
    np.testing.assert_array_equal(restored.std, s.std)


def test_minmax_maps_training_extremes_to_range(rows):
    m = fit_minmax(rows)
    z = m.transform(rows)
    np.testing.assert_allclose(z.min(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.max(axis=0), 1.0, atol=1e-12)


def test_minmax_custom_range(rows):
    m = fit_minmax(rows, feature_range=(-1.0, 1.0))
    z = m.transform(rows)
    np.testing.assert_allclose(z.min(axis=0), -1.0, atol=1e-12)
    np.testing.assert_allclose(z.max(axis=0), 1.0, atol=1e-12)


def test_minmax_outlier_compresses_inliers():
    rng = np.random.default_rng(3)
    base = rng.normal(size=(50, 1))
    spiked = np.concatenate([base, [[1000.0]]])
    m = fit_minmax(spiked)
    z = m.transform(base)
    # the inlier mass collapses near the low end of the range
    assert z.max() < 0.05


def test_minmax_dict_round_trip(rows):
    m = fit_minmax(rows)
    restored = MinMaxNormalizer.from_dict(m.to_dict())
    np.testing.assert_array_equal(restored.low, m.low)
    np.testing.assert_array_equal(restored.span, m.span)
    assert restored.feature_range == m.feature_range


@pytest.mark.parametrize("capacity", [2, 3, 5, 8])
def test_buffer_weights_sum_to_one_with_half_on_latest(capacity):
    w = buffer_weights(capacity)
    assert w.shape == (capacity,)
    assert w[-1] == pytest.approx(0.5)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(w[:-1], 1.0 / (2.0 * (capacity - 1)))


def test_buffer_weights_reject_capacity_below_two():
    with pytest.raises(ValueError):
        buffer_weights(1)


@settings(max_examples=50, deadline=None)
@given(
    hnp.arrays(np.float64, (5, 7),
               elements=st.floats(-1e6, 1e6, allow_nan=False)),
)
def test_weighted_merge_matches_explicit_loop(window):
    merged = weighted_merge(list(window[:-1]), window[-1])
    np.testing.assert_allclose(merged, weighted_buffer_oracle(window),
                               rtol=1e-12, atol=1e-9)


def test_weighted_merge_of_identical_vectors_is_identity():
    v = np.arange(6.0)
    np.testing.assert_allclose(weighted_merge([v, v, v, v], v), v, atol=1e-12)


def test_sample_buffer_warms_up_then_slides():
    buf = SampleBuffer(capacity=3)
    v = [np.full(2, float(i)) for i in range(6)]
    assert buf.push(v[0]) is None
    assert buf.push(v[1]) is None
    out = buf.push(v[2])
    np.testing.assert_allclose(out, weighted_merge([v[0], v[1]], v[2]))
    out = buf.push(v[3])
    np.testing.assert_allclose(out, weighted_merge([v[1], v[2]], v[3]))
    # window holds the most recent capacity-1 entries, oldest first
    np.testing.assert_allclose(np.stack(buf.window), np.stack([v[2], v[3]]))


def test_sample_buffer_rejects_capacity_below_two():
    with pytest.raises(ValueError):
        SampleBuffer(capacity=1)


def test_augment_is_deterministic_and_distinct():
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(12, 4))
    a = augment(vectors, capacity=5, count=100, seed=42)
    b = augment(vectors, capacity=5, count=100, seed=42)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (100, 4)
    assert len({tuple(np.round(row, 12)) for row in a}) == 100


def test_augment_different_seeds_differ():
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(12, 4))
    a = augment(vectors, capacity=5, count=50, seed=1)
    b = augment(vectors, capacity=5, count=50, seed=2)
    assert not np.array_equal(a, b)


def test_augment_exhaustive_count_covers_all_subsets():
    # distinguishable one-hot rows let us recover each chosen subset exactly
    n, b = 6, 3
    vectors = np.eye(n)
    total = math.comb(n, b)
    out = augment(vectors, capacity=b, count=total, seed=7)
    w = buffer_weights(b)
    recovered = set()
    for row in out:
        idx = tuple(sorted(np.nonzero(row)[0].tolist()))
        # highest index carries the 0.5 weight
        assert row[idx[-1]] == pytest.approx(w[-1])
        for i in idx[:-1]:
            assert row[i] == pytest.approx(w[0])
        recovered.add(idx)
    assert len(recovered) == total


def test_augment_rejects_count_beyond_total():
    vectors = np.eye(6)
    with pytest.raises(ValueError) as err:
        augment(vectors, capacity=3, count=math.comb(6, 3) + 1, seed=0)
    assert str(math.comb(6, 3)) in str(err.value)


def test_augment_requires_at_least_capacity_vectors():
    with pytest.raises(InsufficientDataError):
        augment(np.eye(3), capacity=5, count=1, seed=0)


def test_augment_large_space_uses_sampling_and_stays_distinct():
    # C(40, 5) = 658008 exceeds the enumeration limit
    rng = np.random.default_rng(5)
    vectors = np.eye(40) + 0.001 * rng.normal(size=(40, 40))
    out = augment(vectors, capacity=5, count=300, seed=9)
    assert out.shape == (300, 40)
    again = augment(vectors, capacity=5, count=300, seed=9)
    np.testing.assert_array_equal(out, again)
