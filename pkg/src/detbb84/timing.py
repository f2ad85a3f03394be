"""Timing calculus of the practical deterministic protocol.

All times are integer nanoseconds. Alice sends qubit i at ``t_q`` and its basis
bit at ``t_q + tau + Delta``; Bob must see that basis bit at
``t_q + 2 tau + Delta + delta``. An eavesdropper who waits for the basis
cannot deliver the qubit before ``t_q + tau + Delta``, which is ``Delta`` later
than the last entry time that leaves Bob's timing signature unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TimingParams:
    tau: int            # one-way travel time
    delta_cap: int      # security parameter Delta
    delta: int = 0      # Bob's electronics delay
    delta_prime: int = 0  # measurement delay, >= delta
    epsilon: int = 0    # detector gate half-window / arrival tolerance

    def __post_init__(self):
        for name in ("tau", "delta_cap", "delta", "delta_prime", "epsilon"):
            value = getattr(self, name)
            if int(value) != value:
                raise ValueError(f"timing.{name} must be an integer number of ns, got {value!r}")
            object.__setattr__(self, name, int(value))
            if value < 0:
                raise ValueError(f"timing.{name} must be >= 0, got {value}")
        if self.delta_cap <= 0:
            raise ValueError("timing.delta_cap must be > 0")
        if not self.epsilon < self.delta_cap:
            raise ValueError(
                f"timing.epsilon ({self.epsilon}) must be < timing.delta_cap ({self.delta_cap})")
        if self.delta_prime < self.delta:
            raise ValueError("timing.delta_prime must be >= timing.delta")

    @property
    def storage_time(self) -> int:
        """Bob's storage duration, tau + Delta."""
        return self.tau + self.delta_cap


def basis_send_time(t_q, p: TimingParams):
    return t_q + p.tau + p.delta_cap


def expected_arrival(t_q, p: TimingParams):
    return t_q + 2 * p.tau + p.delta_cap + p.delta


def arrival_deviation(T_observed, t_q, p: TimingParams):
    return T_observed - expected_arrival(t_q, p)


def verify_arrival(T_observed: int, t_q: int, p: TimingParams) -> bool:
    """True when the basis bit arrived within +-epsilon of its expected time."""
    return abs(arrival_deviation(T_observed, t_q, p)) <= p.epsilon


def eve_latest_undetected_entry(t_q, p: TimingParams):
    """Latest time a qubit may enter Bob's station without shifting T_i."""
    return t_q + p.tau


def measurement_time(T_i, p: TimingParams):
    return T_i + p.delta_prime


def timing_for_fiber(fiber, delta_cap: int = 100, delta: int = 0, delta_prime: int = 0,
                     epsilon: int = 10) -> TimingParams:
    """TimingParams whose declared tau is the fiber's measured travel time."""
    from .channel import propagation_delay

    tau = round(propagation_delay(fiber.length, fiber.refractive_index))
    return TimingParams(tau, delta_cap, delta, delta_prime, epsilon)
