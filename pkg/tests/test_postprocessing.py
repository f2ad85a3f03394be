import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf, log, floor

from detbb84.postprocessing import (SecurityMarginExhausted, binary_entropy, error_correct,
                                    final_key_length, gain_bracket, postprocess,
                                    privacy_amplify, tau_fraction, toeplitz_seed_bits)

mp.dps = 40


def h_mp(e):
    e = mpf(e)
    return -e * log(e, 2) - (1 - e) * log(1 - e, 2)


def tau_mp(e):
    e = mpf(e)
    return log(1 + 4 * e - 4 * e * e, 2)


def test_entropy_values():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.11) == pytest.approx(float(h_mp("0.11")), rel=1e-13)
    assert binary_entropy(0.11) == pytest.approx(0.49993, abs=1e-4)


def test_tau_values():
    assert tau_fraction(0.0) == 0.0
    assert tau_fraction(0.5) == 1.0
    assert tau_fraction(0.7) == 1.0
    assert tau_fraction(0.1) == pytest.approx(float(tau_mp("0.1")), rel=1e-13)
    assert tau_fraction(0.1) == pytest.approx(0.44360, abs=1e-4)


@pytest.mark.parametrize("fn", [binary_entropy, tau_fraction])
def test_fraction_domain(fn):
    with pytest.raises(ValueError):
        fn(-0.1)
    with pytest.raises(ValueError):
        fn(1.1)


def test_final_key_length_oracle():
    ref = int(floor(1000 * (mpf("0.9") * (1 - tau_mp(mpf("0.03") / mpf("0.9"))) - h_mp("0.03"))))
    assert ref == 548
    assert final_key_length(1000, 0.03, 0.9) == ref


def test_final_key_length_clamps_and_aborts():
    assert final_key_length(1000, 0.2, 0.5) == 0
    with pytest.raises(SecurityMarginExhausted):
        final_key_length(1000, 0.3, 0.2)
    with pytest.raises(SecurityMarginExhausted):
        gain_bracket(0.01, 0.0)


def test_final_key_length_monotone_grid():
    es = np.linspace(0.0, 0.1, 41)
    betas = np.linspace(0.2, 1.0, 33)
    grid = np.array([[final_key_length(10_000, e, b) for b in betas] for e in es])
    assert np.all(np.diff(grid, axis=0) <= 0)   # non-increasing in e
    assert np.all(np.diff(grid, axis=1) >= 0)   # non-decreasing in beta


def test_single_flip_found_in_first_pass():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 2, 64, dtype=np.int8)
    for pos in (0, 17, 63):
        b = a.copy()
        b[pos] ^= 1
        # block = whole key (0.73 / e >= 64), so one parity plus log2(64) bisection steps
        corrected, leaked = error_correct(a, b, rng, qber=0.01, passes=1)
        assert np.array_equal(corrected, a)
        assert leaked == 1 + 6


def test_cascade_leaks_at_least_shannon_bound():
    rng = np.random.default_rng(11)
    n, e = 4000, 0.05
    a = rng.integers(0, 2, n, dtype=np.int8)
    b = a ^ (rng.random(n) < e).astype(np.int8)
    corrected, leaked = error_correct(a, b, rng, qber=e)
    assert np.array_equal(corrected, a)
    assert leaked >= binary_entropy(e) * n


def test_error_correct_edge_cases(rng):
    assert error_correct([], [], rng) == (pytest.approx(np.zeros(0)), 0)
    with pytest.raises(ValueError):
        error_correct([0, 1], [0], rng)


def dense_toeplitz(key, m, seed):
    key = np.asarray(key, dtype=np.int64)
    n = len(key)
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    s = toeplitz_seed_bits(n, m, seed).astype(np.int64)
    T = np.array([[s[i - j + n - 1] for j in range(n)] for i in range(m)])
    return (T @ key) % 2


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 200), st.data(), st.integers(0, 2**32))
def test_toeplitz_matches_dense_matrix(n, data, seed):
    m = data.draw(st.integers(0, n))
    key = np.random.default_rng(seed).integers(0, 2, n)
    out = privacy_amplify(key, m, seed)
    assert out.tolist() == dense_toeplitz(key, m, seed).tolist()


def test_toeplitz_large_key_against_dense():
    rng = np.random.default_rng(5)
    key = rng.integers(0, 2, 3000)
    assert np.array_equal(privacy_amplify(key, 1500, 99), dense_toeplitz(key, 1500, 99))


def test_avalanche():
    rng = np.random.default_rng(21)
    fractions = []
    for _ in range(300):
        key = rng.integers(0, 2, 256, dtype=np.int8)
        seed = int(rng.integers(0, 2**32))
        flipped = key.copy()
        flipped[rng.integers(256)] ^= 1
        fractions.append(np.mean(privacy_amplify(key, 128, seed) != privacy_amplify(flipped, 128, seed)))
    assert np.mean(fractions) >= 0.45


def test_postprocess_yields_equal_keys():
    rng = np.random.default_rng(8)
    a = rng.integers(0, 2, 2000, dtype=np.int8)
    b = a ^ (rng.random(2000) < 0.02).astype(np.int8)
    alice, bob = postprocess(a, b, 0.02, 0.95, np.random.default_rng(1))
    assert alice.final_length == final_key_length(2000, 0.02, 0.95)
    assert np.array_equal(alice.final_key, bob.final_key)
