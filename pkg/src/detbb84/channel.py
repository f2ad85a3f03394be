"""Fiber, detector and classical-channel models."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import NO_CLICK, Basis, QubitSignal, measure

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class FiberParams:
    alpha: float = 0.2             # dB/km
    length: float = 0.0            # km
    receiver_loss: float = 0.0     # dB
    refractive_index: float = 1.468

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("fiber.alpha must be >= 0")
        if self.length < 0:
            raise ValueError("fiber.length must be >= 0")
        if self.receiver_loss < 0:
            raise ValueError("fiber.receiver_loss must be >= 0")
        if self.refractive_index < 1:
            raise ValueError("fiber.refractive_index must be >= 1")

    def with_length(self, length: float) -> "FiberParams":
        return dataclasses.replace(self, length=length)


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 1.0
    dark_prob: float = 0.0
    gate_window: int = 10  # ns, same quantity as TimingParams.epsilon
    # intrinsic optical error on signal clicks (e_det); 0 for a noiseless setup
    error_prob: float = 0.0

    def __post_init__(self):
        for name in ("efficiency", "dark_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"detector.{name} must lie in [0, 1]")
        if not 0 <= self.error_prob < 0.5:
            raise ValueError("detector.error_prob must lie in [0, 0.5)")


def transmission_probability(fiber: FiberParams) -> float:
    """eta_T = 10^(-(alpha L + L_c) / 10)."""
    return 10.0 ** (-(fiber.alpha * fiber.length + fiber.receiver_loss) / 10.0)


def det_effective_length(length: float, storage_loop: float) -> float:
    # link of length L plus Bob's storage loop of length L + Lambda
    return 2.0 * length + storage_loop


def transmission_probability_det(fiber: FiberParams, storage_loop: float) -> float:
    """eta_T' = 10^(-(alpha (2L + Lambda) + L_c) / 10)."""
    if storage_loop < 0:
        raise ValueError("storage_loop must be >= 0")
    return transmission_probability(
        fiber.with_length(det_effective_length(fiber.length, storage_loop)))


def propagation_delay(length: float, n: float = 1.468) -> float:
    """Travel time in ns over ``length`` km of fiber with index ``n``."""
    if length < 0:
        raise ValueError("length must be >= 0")
    return n * length * 1e3 / SPEED_OF_LIGHT * 1e9


def loop_length_for_delay(delay_ns: float, n: float = 1.468) -> float:
    """Fiber length in km that delays a photon by ``delay_ns``."""
    return delay_ns * 1e-9 * SPEED_OF_LIGHT / n / 1e3


def transmit(signal: QubitSignal, fiber: FiberParams, rng: np.random.Generator) -> QubitSignal:
    """Each photon survives independently with the fiber's transmission probability."""
    survivors = signal.photon_count
    if survivors:
        survivors = int(rng.binomial(signal.photon_count, transmission_probability(fiber)))
    arrival = signal.emission_time + round(propagation_delay(fiber.length, fiber.refractive_index))
    return dataclasses.replace(signal, photon_count=survivors, emission_time=arrival)


def transmit_many(photons: np.ndarray, eta: float, rng: np.random.Generator) -> np.ndarray:
    if eta >= 1.0:
        return photons.copy()
    return rng.binomial(photons, eta).astype(np.int64)


def detect(signal: QubitSignal, basis: Basis, det: DetectorParams, rng: np.random.Generator):
    """One gated detection. Returns a bit, or ``NO_CLICK``.

    A signal click fires with probability 1 - (1 - eta_B)^n and a dark click
    independently with probability ``dark_prob``. When the signal fires its
    measured bit wins; a dark-only click reads a fair coin.
    """
    p_sig = 1.0 - (1.0 - det.efficiency) ** signal.photon_count
    signal_click = signal.photon_count > 0 and rng.random() < p_sig
    dark_click = rng.random() < det.dark_prob
    if signal_click:
        bit = measure(signal, basis, rng)
        if det.error_prob and rng.random() < det.error_prob:
            bit ^= 1
        return bit
    if dark_click:
        return int(rng.integers(0, 2))
    return NO_CLICK


def detect_many(photons: np.ndarray, det: DetectorParams, rng: np.random.Generator):
    """Vectorised click draw: returns ``(signal_click, dark_click)`` boolean arrays."""
    n = photons.shape[0]
    p_sig = 1.0 - (1.0 - det.efficiency) ** photons
    signal_click = rng.random(n) < p_sig
    dark_click = rng.random(n) < det.dark_prob if det.dark_prob > 0 else np.zeros(n, dtype=bool)
    return signal_click, dark_click


@dataclass(frozen=True)
class Delivery:
    payload: Any
    send_time: int
    arrival_time: int


def classical_send(payload, send_time, tau) -> Delivery:
    """Authenticated, error-free, fixed-latency delivery."""
    return Delivery(payload, send_time, send_time + tau)
