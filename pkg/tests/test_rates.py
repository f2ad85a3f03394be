import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf, exp, power

from detbb84.channel import DetectorParams, FiberParams
from detbb84.rates import (REFERENCE, NoCrossover, NoSecureRate, RateVariant, beta,
                           crossover_distance, distance_range, golden_section_max, max_distance,
                           optimize_mu, p_exp, p_signal, qber_model, rate_ratio, read_rate_csv,
                           secure_rate_bb84, secure_rate_det, sweep, write_rate_csv)

mp.dps = 40


def test_p_signal_oracle():
    ref = 1 - exp(-mpf("0.045") * mpf("0.63096") * mpf("0.1"))
    assert p_signal(0.045, 0.63096, 0.1) == pytest.approx(float(ref), rel=1e-12)
    # the commonly quoted 0.0028355 carries a rounding slip in the fifth digit
    assert p_signal(0.045, 0.63096, 0.1) == pytest.approx(0.0028355, rel=1e-4)


def test_p_exp_and_beta():
    assert p_exp(0.1, 0.01) == pytest.approx(0.109, rel=1e-14)
    assert beta(0.109, 0.009) == pytest.approx(float((mpf("0.109") - mpf("0.009")) / mpf("0.109")), rel=1e-14)
    assert beta(0.109, 0.009) == pytest.approx(0.91743, abs=1e-5)


def test_qber_model_oracle():
    ps, pd = mpf("0.0028"), mpf("8.5e-5")
    ref = (mpf("0.01") * ps + pd / 2) / (ps + pd - ps * pd)
    assert float(ref) == pytest.approx(0.0244387578594, rel=1e-12)
    assert qber_model(0.0028, 8.5e-5, 0.01) == pytest.approx(float(ref), rel=1e-12)


def rate_oracle(p, variant):
    """Independent mpmath evaluation of the rate formula."""
    L = mpf(p.fiber.length) if variant == "bb84" else 2 * mpf(p.fiber.length) + mpf(p.storage_loop)
    eta = power(10, -(mpf(p.fiber.alpha) * L + mpf(p.fiber.receiver_loss)) / 10)
    mu = mpf(p.mu)
    ps = 1 - exp(-mpf(p.detector.efficiency) * eta * mu)
    pd = mpf(p.detector.dark_prob)
    pe = ps + pd - ps * pd
    sm = 1 - exp(-mu) * (1 + mu)
    b = (pe - sm) / pe
    e = (mpf(p.e_det) * ps + pd / 2) / pe
    if e > b:
        return 0.0
    x = e / b
    tau = mp.log(1 + 4 * x - 4 * x * x, 2) if x <= 0.5 else 1
    h = -e * mp.log(e, 2) - (1 - e) * mp.log(1 - e, 2)
    br = b * (1 - tau) - mpf(p.f_casc) * h
    coeff = mpf(1) / 2 if variant == "bb84" else 1
    return float(max(0, coeff * pe * br))


@pytest.mark.parametrize("L", [0.5, 2.0, 8.0, 16.0, 40.0])
@pytest.mark.parametrize("mu", [0.005, 0.03, 0.1])
def test_rates_against_mpmath(L, mu):
    p = REFERENCE.at(L, mu)
    assert secure_rate_bb84(p) == pytest.approx(rate_oracle(p, "bb84"), rel=1e-10, abs=1e-300)
    assert secure_rate_det(p) == pytest.approx(rate_oracle(p, "det"), rel=1e-10, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 0.4), st.floats(0.0, 50.0), st.floats(0.0, 5.0), st.floats(0.0, 0.5),
       st.floats(0.01, 1.0), st.floats(0.0, 1e-5), st.floats(1e-3, 0.5))
def test_det_rate_is_twice_bb84_at_effective_length(alpha, L, lc, loop, eta_b, pd, mu):
    p = REFERENCE.replace(fiber=FiberParams(alpha, L, lc), storage_loop=loop, mu=mu,
                          detector=DetectorParams(eta_b, pd))
    stretched = p.at(2 * L + loop)
    r_det, r_bb = secure_rate_det(p), secure_rate_bb84(stretched)
    assert r_det == pytest.approx(2 * r_bb, rel=1e-12, abs=0.0)


def test_ideal_memory_ratio_is_exactly_two():
    p = REFERENCE.replace(ideal_memory=True).at(5.0, 0.02)
    assert secure_rate_det(p) == pytest.approx(2 * secure_rate_bb84(p), rel=1e-14)


def test_golden_section_on_parabola():
    x, fx = golden_section_max(lambda x: -(x - 0.3) ** 2, 0.0, 1.0, 1e-8)
    assert x == pytest.approx(0.3, abs=1e-7)


@pytest.mark.parametrize("variant", list(RateVariant))
@pytest.mark.parametrize("L", [2.0, 16.0])
def test_optimizer_agrees_with_grid(variant, L):
    grid = np.linspace(1e-4, 0.2, 10_001)
    base = REFERENCE.at(L)
    values = [(secure_rate_bb84 if variant is RateVariant.BB84 else secure_rate_det)(base.replace(mu=m))
              for m in grid]
    mu, r = optimize_mu(REFERENCE, L, variant)
    assert abs(mu - grid[int(np.argmax(values))]) < 1e-4
    assert r >= max(values) * (1 - 1e-8)


def test_optimized_curve_strictly_decreasing():
    for variant in RateVariant:
        curve = sweep(REFERENCE, distance_range(0, 40, 2), variant)
        assert np.all(np.diff(curve.rates) < 0)


def test_no_secure_rate_far_away():
    with pytest.raises(NoSecureRate):
        optimize_mu(REFERENCE, 150.0, RateVariant.BB84)
    curve = sweep(REFERENCE, [10.0, 150.0], RateVariant.BB84)
    assert curve.omitted == [150.0] and len(curve.points) == 1


def test_crossover_matches_grid_scan():
    x = crossover_distance(REFERENCE)
    grid = np.linspace(4.0, 8.0, 1000)
    ratio = np.array([rate_ratio(REFERENCE, L) for L in grid])
    k = int(np.flatnonzero(ratio < 1.0)[0])
    assert abs(x - 0.5 * (grid[k - 1] + grid[k])) < 0.02


def test_no_crossover_with_ideal_memory():
    with pytest.raises(NoCrossover):
        crossover_distance(REFERENCE.replace(ideal_memory=True))


def test_max_distance_brackets_zero_rate():
    d = max_distance(REFERENCE, RateVariant.BB84)
    optimize_mu(REFERENCE, d, RateVariant.BB84)
    with pytest.raises(NoSecureRate):
        optimize_mu(REFERENCE, d + 0.2, RateVariant.BB84)


def test_distance_range():
    assert distance_range(1, 20, 0.5).size == 39
    assert distance_range(2, 2, 1).tolist() == [2.0]
    with pytest.raises(ValueError):
        distance_range(5, 1, 1)
    with pytest.raises(ValueError):
        distance_range(1, 5, 0)


def test_rate_csv_round_trip(tmp_path):
    curves = [sweep(REFERENCE, [2.0, 150.0], v) for v in RateVariant]
    path = tmp_path / "rates.csv"
    write_rate_csv(curves, path)
    rows = read_rate_csv(path)
    assert len(rows) == 4
    far = [r for r in rows if r["distance_km"] == 150.0]
    assert all(r["insecure_flag"] == 1 and r["rate"] == 0.0 for r in far)
    near = [r for r in rows if r["variant"] == "det" and r["distance_km"] == 2.0][0]
    assert near["rate"] == curves[1].points[0].rate


def test_ratio_when_one_variant_has_no_rate():
    assert rate_ratio(REFERENCE, 50.0) == 0.0
    assert math.isnan(rate_ratio(REFERENCE, 150.0))
    with pytest.raises(NoCrossover):
        crossover_distance(REFERENCE, (0.5, 1.0))
    # deterministic rate already zero at the far end still yields a crossing
    assert 4 < crossover_distance(REFERENCE, (0.5, 60.0)) < 8
