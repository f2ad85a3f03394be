"""Eavesdropper strategies.

``InterceptResend`` is the ordinary BB84 baseline: measure in a random basis
and resend. ``DelayForBasis`` is the attack the timing check exists for: Eve
sits next to Bob, holds each qubit until Alice emits its basis bit, measures
in that basis (so she learns the bit and induces no error) and forwards the
qubit. To keep Bob's deterministic measurement aligned with the late qubit
she must delay the basis bit by the same amount, which shifts T_i by at least
Delta and trips the arrival check.
"""
from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass

import numpy as np

from .core import Basis, QubitSignal, measure


class AttackKind(str, enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND = "ir"
    DELAY_FOR_BASIS = "delay"


@dataclass(frozen=True)
class AttackStrategy:
    kind: AttackKind = AttackKind.NONE
    fraction: float = 1.0
    # Eve's forwarding delay to Bob's station; 0 is her best case (adjacent)
    eve_to_bob_delay: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"attack.fraction must lie in [0, 1], got {self.fraction}")
        if self.eve_to_bob_delay < 0:
            raise ValueError("attack.eve_to_bob_delay must be >= 0")

    @property
    def active(self) -> bool:
        return self.kind is not AttackKind.NONE and self.fraction > 0

    def choose_targets(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not self.active:
            return np.zeros(n, dtype=bool)
        if self.fraction >= 1.0:
            return np.ones(n, dtype=bool)
        return rng.random(n) < self.fraction


NO_ATTACK = AttackStrategy()


def intercept_resend(signal: QubitSignal, rng: np.random.Generator) -> QubitSignal:
    if signal.is_vacuum:
        raise ValueError("cannot intercept a vacuum pulse")
    eve_basis = Basis(int(rng.integers(0, 2)))
    outcome = measure(signal, eve_basis, rng)
    return dataclasses.replace(signal, encoded_bit=outcome, encoded_basis=eve_basis)


def delay_for_basis(signal: QubitSignal, disclosed_basis: Basis, basis_disclosure_time: int,
                    eve_to_bob_delay: int, rng: np.random.Generator) -> QubitSignal:
    """Hold ``signal`` until the basis is public, measure in it, forward.

    ``signal.emission_time`` is read as the moment the pulse reaches Eve; the
    returned signal's ``emission_time`` is its entry time at Bob's station.
    """
    outcome = measure(signal, disclosed_basis, rng)
    entry = max(signal.emission_time, basis_disclosure_time + eve_to_bob_delay)
    return dataclasses.replace(signal, encoded_bit=outcome, encoded_basis=Basis(disclosed_basis),
                               emission_time=entry)


def intercept_resend_many(bits, bases, photons, targets, rng):
    """Array form of :func:`intercept_resend` over the ``targets`` mask.

    Vacuum pulses are skipped. Returns the resent ``(bits, bases)``.
    """
    hit = targets & (photons > 0)
    n_hit = int(hit.sum())
    bits = bits.copy()
    bases = bases.copy()
    eve_bases = rng.integers(0, 2, size=n_hit, dtype=np.int8)
    coin = rng.integers(0, 2, size=n_hit, dtype=np.int8)
    eve_bits = np.where(eve_bases == bases[hit], bits[hit], coin)
    bits[hit] = eve_bits
    bases[hit] = eve_bases
    return bits, bases


def delay_lateness(t_at_eve, t_b, eve_to_bob_delay: int):
    """How late each delayed qubit enters Bob's station (0 if Eve is not late)."""
    return np.maximum(0, t_b + eve_to_bob_delay - t_at_eve)
