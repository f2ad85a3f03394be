"""Closed-form secure-rate model for weak-pulse BB84 and the deterministic
variant, with per-distance optimisation of the mean photon number.

Both variants share the gain bracket ``beta [1 - tau(e/beta)] - f h(e)``;
BB84 carries a 1/2 sifting coefficient and the fiber transmission over L,
the deterministic variant carries coefficient 1 and the transmission over
2L + Lambda (link plus Bob's storage loop).
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .channel import (DetectorParams, FiberParams, loop_length_for_delay,
                      transmission_probability, transmission_probability_det)
from .core import SourceModel
from .postprocessing import SecurityMarginExhausted, gain_bracket

MU_MIN = 1e-4
MU_MAX = 1.0
GRID_POINTS = 200
MU_TOL = 1e-5
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class RateVariant(str, enum.Enum):
    BB84 = "bb84"
    DET = "det"


class NoSecureRate(ValueError):
    pass


class NoCrossover(ValueError):
    pass


def _reference_fiber() -> FiberParams:
    return FiberParams(alpha=0.2, length=0.0, receiver_loss=2.92, refractive_index=1.468)


def _reference_detector() -> DetectorParams:
    return DetectorParams(efficiency=0.1, dark_prob=4e-7, gate_window=10, error_prob=0.01)


@dataclass(frozen=True)
class RateParams:
    mu: float = 0.03
    fiber: FiberParams = field(default_factory=_reference_fiber)
    detector: DetectorParams = field(default_factory=_reference_detector)
    storage_loop: float = loop_length_for_delay(100, 1.468)  # km, Lambda for Delta = 100 ns
    e_det: float = 0.01
    f_casc: float = 1.0
    ideal_memory: bool = False  # deterministic variant sees eta_T instead of eta_T'

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("rates.mu must be > 0")
        if not 0 <= self.e_det < 0.5:
            raise ValueError("rates.e_det must lie in [0, 0.5)")
        if self.storage_loop < 0:
            raise ValueError("rates.storage_loop must be >= 0")
        if self.f_casc < 0:
            raise ValueError("rates.f_casc must be >= 0")

    @property
    def source(self) -> SourceModel:
        return SourceModel(self.mu)

    def replace(self, **changes) -> "RateParams":
        return dataclasses.replace(self, **changes)

    def at(self, length: float, mu: Optional[float] = None) -> "RateParams":
        return dataclasses.replace(self, fiber=self.fiber.with_length(length),
                                   mu=self.mu if mu is None else mu)


REFERENCE = RateParams()


@dataclass(frozen=True)
class RatePoint:
    distance: float
    mu_opt: float
    rate: float
    variant: RateVariant
    insecure: bool = False


@dataclass
class RateCurve:
    variant: RateVariant
    points: list = field(default_factory=list)
    omitted: list = field(default_factory=list)  # distances with no secure rate

    @property
    def distances(self) -> np.ndarray:
        return np.array([p.distance for p in self.points])

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])


def p_signal(eta_B: float, eta_T: float, mu: float) -> float:
    return -math.expm1(-eta_B * eta_T * mu)


def p_exp(p_sig: float, p_dark: float) -> float:
    return p_sig + p_dark - p_sig * p_dark


def beta(p_exp_val: float, S_m: float) -> float:
    if p_exp_val <= 0:
        raise ValueError("beta is undefined for p_exp = 0")
    return (p_exp_val - S_m) / p_exp_val


def qber_model(p_sig: float, p_dark: float, e_det: float) -> float:
    """Misalignment errors on signal clicks plus coin-flip dark clicks."""
    total = p_exp(p_sig, p_dark)
    if total <= 0:
        raise ValueError("QBER is undefined for p_exp = 0")
    return (e_det * p_sig + 0.5 * p_dark) / total


@dataclass(frozen=True)
class RateEval:
    rate: float
    eta: float
    p_exp: float
    beta: float
    qber: float
    insecure: bool


def channel_eta(p: RateParams, variant: RateVariant) -> float:
    if variant is RateVariant.BB84 or p.ideal_memory:
        return transmission_probability(p.fiber)
    return transmission_probability_det(p.fiber, p.storage_loop)


def evaluate(p: RateParams, variant) -> RateEval:
    variant = RateVariant(variant)
    eta = channel_eta(p, variant)
    ps = p_signal(p.detector.efficiency, eta, p.mu)
    pe = p_exp(ps, p.detector.dark_prob)
    b = beta(pe, p.source.multiphoton_probability)
    e = qber_model(ps, p.detector.dark_prob, p.e_det)
    coefficient = 0.5 if variant is RateVariant.BB84 else 1.0
    try:
        bracket = gain_bracket(e, b, p.f_casc)
    except SecurityMarginExhausted:
        return RateEval(0.0, eta, pe, b, e, True)
    if bracket <= 0:
        return RateEval(0.0, eta, pe, b, e, True)
    return RateEval(coefficient * pe * bracket, eta, pe, b, e, False)


def secure_rate_bb84(p: RateParams) -> float:
    return evaluate(p, RateVariant.BB84).rate


def secure_rate_det(p: RateParams) -> float:
    return evaluate(p, RateVariant.DET).rate


def secure_rate(p: RateParams, variant) -> float:
    return evaluate(p, variant).rate


def golden_section_max(f, lo: float, hi: float, tol: float = MU_TOL):
    """Maximise a unimodal ``f`` on [lo, hi] to absolute tolerance ``tol``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _grid_local_maxima(values: np.ndarray) -> np.ndarray:
    inner = (values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:]) & (values[1:-1] > 0)
    idx = np.flatnonzero(inner) + 1
    ends = [i for i in (0, len(values) - 1) if values[i] > 0 and
            values[i] >= values[1 if i == 0 else i - 1]]
    return np.unique(np.concatenate([idx, np.asarray(ends, dtype=np.int64)])).astype(np.int64)


def optimize_mu(p: RateParams, length: float, variant, mu_range=(MU_MIN, MU_MAX),
                tol: float = MU_TOL):
    """Return ``(mu_opt, rate_opt)`` at fiber length ``length``.

    A log-spaced pre-scan locates every local maximum; each is refined by
    golden-section search between its grid neighbours and the best refinement
    wins. Raises NoSecureRate if the rate is zero across the range.
    """
    variant = RateVariant(variant)
    base = p.at(length)

    def f(mu):
        return secure_rate(base.replace(mu=mu), variant)

    grid = np.geomspace(mu_range[0], mu_range[1], GRID_POINTS)
    values = np.array([f(mu) for mu in grid])
    if not np.any(values > 0):
        raise NoSecureRate(f"no secure rate for {variant.value} at L = {length} km")
    best = (float(grid[int(np.argmax(values))]), float(values.max()))
    for i in _grid_local_maxima(values):
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, len(grid) - 1)]
        mu, r = golden_section_max(f, lo, hi, tol)
        if r > best[1]:
            best = (mu, r)
    return float(best[0]), float(best[1])


def distance_range(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive arithmetic range ``lo, lo+step, ..., hi``."""
    if step <= 0 or hi < lo:
        raise ValueError(f"invalid range {lo}:{hi}:{step}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def sweep(p: RateParams, distances: Iterable[float], variant) -> RateCurve:
    variant = RateVariant(variant)
    curve = RateCurve(variant)
    for L in distances:
        L = float(L)
        try:
            mu, r = optimize_mu(p, L, variant)
        except NoSecureRate:
            curve.omitted.append(L)
            continue
        curve.points.append(RatePoint(L, mu, r, variant))
    return curve


def rate_ratio(p: RateParams, length: float) -> float:
    """R_det / R_bb84 with mu optimised independently for each.

    A variant with no secure rate counts as rate 0 (ratio 0, inf or nan).
    """
    rates = []
    for variant in (RateVariant.DET, RateVariant.BB84):
        try:
            rates.append(optimize_mu(p, length, variant)[1])
        except NoSecureRate:
            rates.append(0.0)
    r_det, r_bb = rates
    if r_bb == 0.0:
        return math.inf if r_det > 0 else math.nan
    return r_det / r_bb


def crossover_distance(p: RateParams, bracket=(0.5, 30.0), tol: float = 0.01) -> float:
    """Distance where the optimised deterministic rate falls below BB84's.

    Bisection on ratio - 1. Raises NoCrossover without a sign change.
    """
    lo, hi = bracket
    g_lo = rate_ratio(p, lo) - 1.0
    g_hi = rate_ratio(p, hi) - 1.0
    if not (g_lo > 0 > g_hi):
        raise NoCrossover(f"ratio - 1 has no sign change on [{lo}, {hi}] km "
                          f"({g_lo + 1:.4f} -> {g_hi + 1:.4f})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rate_ratio(p, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def max_distance(p: RateParams, variant, bracket=(1.0, 200.0), tol: float = 0.1) -> float:
    """Largest distance with a positive optimised rate, by bisection."""
    lo, hi = bracket

    def secure(L):
        try:
            optimize_mu(p, L, variant)
        except NoSecureRate:
            return False
        return True

    if not secure(lo):
        raise NoSecureRate(f"no secure rate at {lo} km")
    if secure(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if secure(mid):
            lo = mid
        else:
            hi = mid
    return lo


CSV_COLUMNS = ["variant", "distance_km", "mu_opt", "rate", "insecure_flag"]


def write_rate_csv(curves, path) -> None:
    """RateCurve export; omitted distances appear with rate 0 and flag 1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for curve in curves:
            rows = [(pt.distance, repr(pt.mu_opt), repr(pt.rate), int(pt.insecure))
                    for pt in curve.points]
            rows += [(L, "nan", repr(0.0), 1) for L in curve.omitted]
            for L, mu, r, flag in sorted(rows, key=lambda row: row[0]):
                w.writerow([curve.variant.value, repr(float(L)), mu, r, flag])


def read_rate_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [{"variant": row["variant"], "distance_km": float(row["distance_km"]),
                 "mu_opt": float(row["mu_opt"]), "rate": float(row["rate"]),
                 "insecure_flag": int(row["insecure_flag"])} for row in reader]
