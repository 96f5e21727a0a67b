import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import _philox_ref
from onebitcs.core import (RngSeed, SparseVector, gaussian_block, gaussian_vector, hamming_distance,
                           hard_threshold, hard_threshold_normalized, magnitude_map,
                           orthogonal_same_support, random_sparse, sign, sign_array)
from onebitcs.errors import DegenerateInput, DomainError, InvalidArgument

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


# -- sampling ---------------------------------------------------------------

def test_gaussian_matches_reference_stream():
    for seed, stream in [(1, 0), (7, 3), (2 ** 64 - 1, 12345)]:
        ref = _philox_ref.normals(seed, stream, 11)
        np.testing.assert_allclose(gaussian_vector(RngSeed(seed, stream), 11), ref, rtol=1e-15, atol=1e-15)


def test_gaussian_frozen_values():
    # first normals of stream (1, 0), from the reference implementation
    expected = [0.8974446665924707, -1.2565397431446046, 1.8905005212648325, 0.37427148559394846]
    np.testing.assert_allclose(gaussian_vector(RngSeed(1, 0), 4), expected, rtol=1e-15)


def test_gaussian_moments():
    z = gaussian_vector(RngSeed(1, 0), 10 ** 6)
    assert -0.004 <= z.mean() <= 0.004
    assert 0.99 <= z.var() <= 1.01


def test_gaussian_deterministic():
    a = gaussian_vector(RngSeed(5, 9), 1001)
    b = gaussian_vector(RngSeed(5, 9), 1001)
    assert a.tobytes() == b.tobytes()


def test_gaussian_rejects_empty():
    with pytest.raises(InvalidArgument):
        gaussian_vector(RngSeed(1, 0), 0)


@given(st.integers(0, 500), st.integers(0, 60))
def test_gaussian_slices_agree(start, count):
    full = gaussian_block(RngSeed(3, 1), 0, 600)
    assert gaussian_block(RngSeed(3, 1), start, count).tobytes() == full[start:start + count].tobytes()


def test_streams_differ():
    a = gaussian_vector(RngSeed(1, 0), 8)
    assert not np.array_equal(a, gaussian_vector(RngSeed(1, 1), 8))
    assert not np.array_equal(a, gaussian_vector(RngSeed(2, 0), 8))


def test_seed_validation():
    with pytest.raises(InvalidArgument):
        RngSeed(-1, 0)
    with pytest.raises(InvalidArgument):
        RngSeed(0, 2 ** 64)
    s = RngSeed(4, 2)
    assert s.derive(1) == s.derive(1) != s.derive(2)
    assert s.derive(1, 2) != s.derive(2, 1)


def test_random_sparse_support():
    x = random_sparse(RngSeed(1, 2), 40, 6)
    assert np.count_nonzero(x) == 6


# -- sign and hamming -------------------------------------------------------

def test_sign_examples():
    assert sign(0) == 1
    assert sign(0.0) == 1 and sign(-0.0) == 1
    assert sign(-0.3) == -1
    assert sign(5.0) == 1


def test_sign_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(InvalidArgument):
            sign(bad)
    with pytest.raises(InvalidArgument):
        sign_array([1.0, math.nan])


def test_sign_array():
    assert sign_array([0.0, -2.0, 3.0]).tolist() == [1, -1, 1]


def test_hamming_examples():
    assert hamming_distance([1, -1, 1], [1, 1, 1]) == 1
    y = np.array([1, -1, -1, 1])
    assert hamming_distance(y, y) == 0
    assert hamming_distance([1, 1], [-1, -1]) == 2
    with pytest.raises(InvalidArgument):
        hamming_distance([1], [1, 1])


# -- thresholding -----------------------------------------------------------

def test_hard_threshold_examples():
    assert hard_threshold([3, -1, 0, 5], 2).values.tolist() == [3, 0, 0, 5]
    assert hard_threshold([2, -2, 1], 1).values.tolist() == [2, 0, 0]
    assert hard_threshold([0, 0], 1).values.tolist() == [0, 0]
    assert hard_threshold([3, -1, 0, 5], 2).declared_sparsity == 2
    with pytest.raises(InvalidArgument):
        hard_threshold([1, 2], 3)


def test_hard_threshold_normalized_examples():
    np.testing.assert_array_equal(hard_threshold_normalized([3, 4], 1).values, [0, 1])
    np.testing.assert_allclose(hard_threshold_normalized([1, 1, 0], 2).values, [2 ** -0.5, 2 ** -0.5, 0])
    with pytest.raises(DegenerateInput):
        hard_threshold_normalized([0, 0, 0], 1)


@given(arrays(np.float64, st.integers(1, 15), elements=finite), st.data())
def test_hard_threshold_idempotent(v, data):
    s = data.draw(st.integers(1, v.size))
    once = hard_threshold(v, s).values
    assert np.array_equal(hard_threshold(once, s).values, once)
    assert np.count_nonzero(once) <= s


def test_best_s_term_approximation():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        s = int(rng.integers(1, min(4, n) + 1))
        v = rng.standard_normal(n)
        best = np.linalg.norm(v - hard_threshold(v, s).values)
        for supp in itertools.combinations(range(n), s):
            z = np.zeros(n)
            z[list(supp)] = v[list(supp)]
            assert best <= np.linalg.norm(v - z) + 1e-12


# -- orthogonal direction ---------------------------------------------------

def test_orthogonal_examples():
    np.testing.assert_allclose(orthogonal_same_support([0.6, 0.8, 0]).values, [0.8, -0.6, 0])
    r = 2 ** -0.5
    np.testing.assert_allclose(orthogonal_same_support([r, 0, r]).values, [r, 0, -r])


def test_orthogonal_single_support_fallback():
    u = np.array([0.0, 1.0, 0.0])
    v = orthogonal_same_support(u).values
    assert abs(u @ v) == 0.0
    assert v.tolist() == [1.0, 0.0, 0.0]
    with pytest.raises(DegenerateInput):
        orthogonal_same_support([0.0, 0.0])


@given(arrays(np.float64, st.integers(2, 20), elements=st.floats(-10, 10, allow_nan=False)))
def test_orthogonal_property(u):
    if np.linalg.norm(u) < 1e-6:
        return
    u = u / np.linalg.norm(u)
    v = orthogonal_same_support(u).values
    assert abs(u @ v) <= 1e-12
    assert abs(np.linalg.norm(v) - 1) <= 1e-12
    if np.count_nonzero(u) >= 2:
        assert set(np.flatnonzero(v)) <= set(np.flatnonzero(u))


# -- magnitude map ----------------------------------------------------------

def test_magnitude_map_examples():
    assert abs(magnitude_map(2 ** -0.5)) <= 1e-15
    assert magnitude_map(2 / math.sqrt(5)) == pytest.approx(0.5, abs=1e-15)
    assert magnitude_map(1.0) == 1.0
    for bad in (0.0, -0.2, 1.0000001):
        with pytest.raises(DomainError):
            magnitude_map(bad)


@given(st.floats(0.05, 1.0))
def test_magnitude_map_monotone(xi):
    assert magnitude_map(xi) <= magnitude_map(min(1.0, xi + 1e-3)) + 1e-15


# -- sparse vector ----------------------------------------------------------

def test_sparse_vector_invariants():
    v = SparseVector(np.array([0.0, 2.0, 0.0]), 1)
    assert v.n == 3 and v.nnz == 1 and v.support.tolist() == [1] and v.norm() == 2.0
    with pytest.raises(InvalidArgument):
        SparseVector(np.array([1.0, 2.0]), 1)
