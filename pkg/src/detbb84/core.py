"""BB84 state space: bases, the four-state encoding, weak-pulse sources and the
single-qubit measurement rule.

States are symbolic labels. Every photon of a multiphoton pulse carries the
same encoded state.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Basis(enum.IntEnum):
    Z = 0
    X = 1

    @property
    def conjugate(self) -> "Basis":
        return Basis(1 - self.value)


# (bit, basis) -> state label
_STATE_LABELS = {
    (0, Basis.Z): "|0>",
    (1, Basis.Z): "|1>",
    (0, Basis.X): "|+>",
    (1, Basis.X): "|->",
}
_LABEL_TO_STATE = {label: key for key, label in _STATE_LABELS.items()}


class NoClick:
    """Sentinel returned when a measurement produces no detector click."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_CLICK"

    def __bool__(self) -> bool:
        return False


NO_CLICK = NoClick()


@dataclass(frozen=True)
class QubitSignal:
    encoded_bit: int
    encoded_basis: Basis
    photon_count: int = 1
    emission_time: int = 0  # ns

    def __post_init__(self):
        if self.encoded_bit not in (0, 1):
            raise ValueError(f"encoded_bit must be 0 or 1, got {self.encoded_bit!r}")
        if self.photon_count < 0:
            raise ValueError("photon_count must be non-negative")

    @property
    def is_vacuum(self) -> bool:
        return self.photon_count == 0

    @property
    def label(self) -> str:
        return encode(self.encoded_bit, self.encoded_basis)


class PhotonStatistics(str, enum.Enum):
    POISSON = "poisson"
    # ideal single-photon source: exactly one photon per pulse, S_m = 0, mu unused
    SINGLE = "single"


@dataclass(frozen=True)
class SourceModel:
    mu: float
    statistics: PhotonStatistics = PhotonStatistics.POISSON

    def __post_init__(self):
        object.__setattr__(self, "statistics", PhotonStatistics(self.statistics))
        if not self.mu > 0:
            raise ValueError(f"source.mu must be > 0, got {self.mu}")

    @property
    def multiphoton_probability(self) -> float:
        """Probability that a pulse holds more than one photon (S_m)."""
        if self.statistics is PhotonStatistics.SINGLE:
            return 0.0
        return multiphoton_probability(self.mu)

    @property
    def vacuum_probability(self) -> float:
        if self.statistics is PhotonStatistics.SINGLE:
            return 0.0
        return math.exp(-self.mu)


def multiphoton_probability(mu: float) -> float:
    """S_m(mu) = 1 - exp(-mu) (1 + mu) for a Poisson source."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    # -expm1 keeps precision for small mu where S_m ~ mu^2 / 2
    return -math.expm1(-mu) - mu * math.exp(-mu)


def encode(bit: int, basis: Basis) -> str:
    try:
        return _STATE_LABELS[(bit, Basis(basis))]
    except KeyError:
        raise ValueError(f"cannot encode bit={bit!r}") from None


def decode(label: str, basis: Basis) -> int:
    """Bit read from a state label in its own basis.

    Raises ValueError when the label does not belong to ``basis``.
    """
    bit, own_basis = _LABEL_TO_STATE[label]
    if own_basis != Basis(basis):
        raise ValueError(f"{label} is not a {Basis(basis).name}-basis state")
    return bit


def measure(signal: QubitSignal, basis: Basis, rng: np.random.Generator):
    """Measure ``signal`` in ``basis``.

    Matched basis returns the encoded bit; the conjugate basis returns a fair
    coin drawn from ``rng``. A vacuum pulse returns ``NO_CLICK``.
    """
    if signal.is_vacuum:
        return NO_CLICK
    if Basis(basis) == signal.encoded_basis:
        return signal.encoded_bit
    return int(rng.integers(0, 2))


def measure_many(bits: np.ndarray, bases: np.ndarray, meas_bases: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    """Array form of :func:`measure` for non-vacuum pulses."""
    bits = np.asarray(bits, dtype=np.int8)
    coin = rng.integers(0, 2, size=bits.shape, dtype=np.int8)
    return np.where(np.asarray(bases) == np.asarray(meas_bases), bits, coin).astype(np.int8)


def sample_photon_number(source: SourceModel, rng: np.random.Generator, size=None):
    if source.statistics is PhotonStatistics.SINGLE:
        return 1 if size is None else np.ones(size, dtype=np.int64)
    out = rng.poisson(source.mu, size=size)
    return int(out) if size is None else out.astype(np.int64)
