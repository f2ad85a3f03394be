"""Session engine for BB84, the memory-based deterministic variant and the
practical (timed) deterministic variant.

A session is executed as the protocol's ordered phases, each applied to every
pulse at once: encoding and emission, basis disclosure, channel and storage,
Bob's measurement, loss announcement and check selection, the three-way
verification, then error correction and privacy amplification. Per-pulse
evidence is kept column-wise in a :class:`PulseLedger`; :meth:`PulseLedger.events`
returns the same run as a timestamp-ordered event list.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import timing as tm
from .adversary import (NO_ATTACK, AttackKind, AttackStrategy, delay_lateness,
                        intercept_resend_many)
from .channel import (DetectorParams, FiberParams, detect_many, loop_length_for_delay,
                      propagation_delay, transmission_probability)
from .core import Basis, SourceModel, sample_photon_number
from .postprocessing import SecurityMarginExhausted, postprocess
from .timing import TimingParams

ABSENT = -1


class Variant(str, enum.Enum):
    BB84 = "bb84"
    DET_BASIC = "det_basic"
    DET_PRACTICAL = "det"

    @property
    def deterministic(self) -> bool:
        return self is not Variant.BB84


class AbortReason(str, enum.Enum):
    BASIS_MISMATCH = "BasisMismatch"
    TIMING_VIOLATION = "TimingViolation"
    QBER_EXCEEDED = "QberExceeded"
    INSUFFICIENT_BITS = "InsufficientBits"
    SECURITY_MARGIN_EXHAUSTED = "SecurityMarginExhausted"


@dataclass(frozen=True)
class SessionConfig:
    n_target: int = 250
    eta_c: float = 0.0
    eta_m: float = 0.0
    variant: Variant = Variant.DET_PRACTICAL
    qber_abort_threshold: float = 0.11
    pulse_period: int = 1000   # ns between emissions
    pulses: Optional[int] = None  # explicit W, overrides the (4 + eta_c + eta_m) N sizing
    f_casc: float = 1.0
    ideal_memory: bool = False  # lossless storage at Bob

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.n_target < 1:
            raise ValueError("session.n_target must be >= 1")
        if self.eta_c < 0 or self.eta_m < 0:
            raise ValueError("session.eta_c and session.eta_m must be >= 0")
        if not 0 < self.qber_abort_threshold < 0.5:
            raise ValueError("session.qber_abort_threshold must lie in (0, 0.5)")
        if self.pulse_period < 1:
            raise ValueError("session.pulse_period must be >= 1 ns")
        if self.pulses is not None and self.pulses < 1:
            raise ValueError("session.pulses must be >= 1")

    @property
    def W(self) -> int:
        if self.pulses is not None:
            return int(self.pulses)
        # small tolerance so 4.0 * 250 style products do not round up spuriously
        return math.ceil((4 + self.eta_c + self.eta_m) * self.n_target - 1e-9)


@dataclass(frozen=True)
class PulseRecord:
    index: int
    alice_data: int
    alice_basis: Basis
    emission_time: int
    basis_sent_time: Optional[int]
    bob_basis_received: Optional[Basis]
    basis_arrival: Optional[int]
    qubit_entry: int
    storage_time: Optional[int]
    bob_click: bool
    bob_meas_basis: Optional[Basis]
    bob_data: Optional[int]
    measurement_time: Optional[int]


def _opt(value):
    value = int(value)
    return None if value == ABSENT else value


def _opt_basis(value):
    value = int(value)
    return None if value == ABSENT else Basis(value)


# column name -> dtype; also the transcript file's column order
LEDGER_COLUMNS = {
    "alice_data": np.int8,
    "alice_basis": np.int8,
    "emission_time": np.int64,
    "basis_sent_time": np.int64,
    "bob_basis_received": np.int8,
    "basis_arrival": np.int64,
    "qubit_entry": np.int64,
    "storage_time": np.int64,
    "bob_click": np.bool_,
    "bob_meas_basis": np.int8,
    "bob_data": np.int8,
    "measurement_time": np.int64,
}


@dataclass
class PulseLedger(Sequence):
    """Column-wise per-pulse evidence; indexing yields :class:`PulseRecord`."""

    alice_data: np.ndarray
    alice_basis: np.ndarray
    emission_time: np.ndarray
    basis_sent_time: np.ndarray
    bob_basis_received: np.ndarray
    basis_arrival: np.ndarray
    qubit_entry: np.ndarray
    storage_time: np.ndarray
    bob_click: np.ndarray
    bob_meas_basis: np.ndarray
    bob_data: np.ndarray
    measurement_time: np.ndarray

    def __len__(self) -> int:
        return len(self.alice_data)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        return PulseRecord(
            index=i,
            alice_data=int(self.alice_data[i]),
            alice_basis=Basis(int(self.alice_basis[i])),
            emission_time=int(self.emission_time[i]),
            basis_sent_time=_opt(self.basis_sent_time[i]),
            bob_basis_received=_opt_basis(self.bob_basis_received[i]),
            basis_arrival=_opt(self.basis_arrival[i]),
            qubit_entry=int(self.qubit_entry[i]),
            storage_time=_opt(self.storage_time[i]),
            bob_click=bool(self.bob_click[i]),
            bob_meas_basis=_opt_basis(self.bob_meas_basis[i]),
            bob_data=_opt(self.bob_data[i]),
            measurement_time=_opt(self.measurement_time[i]),
        )

    def __iter__(self) -> Iterator[PulseRecord]:
        for i in range(len(self)):
            yield self[i]

    def copy(self) -> "PulseLedger":
        return PulseLedger(**{name: getattr(self, name).copy() for name in LEDGER_COLUMNS})

    def events(self) -> np.ndarray:
        """All timed events ordered by timestamp, ties broken by pulse index."""
        kinds = [("emit", self.emission_time), ("basis_send", self.basis_sent_time),
                 ("qubit_entry", self.qubit_entry), ("basis_arrival", self.basis_arrival),
                 ("measure", self.measurement_time)]
        dtype = [("time", np.int64), ("pulse", np.int64), ("kind", "U13")]
        parts = []
        for kind, times in kinds:
            present = np.flatnonzero(times != ABSENT)
            part = np.empty(len(present), dtype=dtype)
            part["time"] = times[present]
            part["pulse"] = present
            part["kind"] = kind
            parts.append(part)
        ev = np.concatenate(parts)
        return ev[np.lexsort((ev["pulse"], ev["time"]))]


@dataclass
class SessionTranscript:
    variant: Variant
    n_target: int
    records: PulseLedger
    timing: TimingParams
    sifted_indices: np.ndarray
    sifted_alice: np.ndarray
    sifted_bob: np.ndarray
    check_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    key_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    qber: Optional[float] = None
    abort: Optional[AbortReason] = None
    final_key_alice: Optional[np.ndarray] = None
    final_key_bob: Optional[np.ndarray] = None
    leaked_bits: int = 0
    beta: Optional[float] = None
    residual_errors: Optional[int] = None

    @property
    def W(self) -> int:
        return len(self.records)

    @property
    def clicks(self) -> int:
        return int(np.count_nonzero(self.records.bob_click))

    @property
    def discarded(self) -> int:
        """Clicked pulses dropped by basis sifting."""
        return self.clicks - len(self.sifted_indices)

    def summary(self) -> dict:
        r = self.records
        clicked = r.bob_click
        storage = r.storage_time[clicked & (r.storage_time != ABSENT)]
        return {
            "variant": self.variant.value,
            "pulses": self.W,
            "n_target": self.n_target,
            "clicks": self.clicks,
            "sifted": len(self.sifted_indices),
            "discarded": self.discarded,
            "check_bits": len(self.check_indices),
            "qber": "" if self.qber is None else f"{self.qber:.6f}",
            "abort": "none" if self.abort is None else self.abort.value,
            "beta": "" if self.beta is None else f"{self.beta:.6f}",
            "leaked_bits": self.leaked_bits,
            "final_key_length": 0 if self.final_key_alice is None else len(self.final_key_alice),
            "keys_equal": (self.final_key_alice is not None
                           and np.array_equal(self.final_key_alice, self.final_key_bob)),
            "max_storage_ns": int(storage.max()) if len(storage) else "",
        }


def estimate_qber(alice_bits, bob_bits) -> float:
    alice_bits = np.asarray(alice_bits)
    bob_bits = np.asarray(bob_bits)
    if len(alice_bits) != len(bob_bits):
        raise ValueError("check strings differ in length")
    if len(alice_bits) == 0:
        raise ValueError("QBER of an empty check set is undefined")
    return float(np.count_nonzero(alice_bits != bob_bits)) / len(alice_bits)


def sift(records: PulseLedger, variant: Variant):
    """Return ``(alice_bits, bob_bits, kept_indices)``.

    Deterministic variants keep every clicked pulse; BB84 keeps the clicked
    pulses whose measurement basis matches Alice's.
    """
    keep = records.bob_click.copy()
    if not Variant(variant).deterministic:
        keep &= records.bob_meas_basis == records.alice_basis
    idx = np.flatnonzero(keep)
    return records.alice_data[idx].copy(), records.bob_data[idx].copy(), idx


class InsufficientBits(ValueError):
    pass


def select_check_bits(sifted_length: int, n_target: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random 2N-subset of positions ``0..sifted_length-1``, sorted.

    Raises InsufficientBits unless at least 4N pairs are available.
    """
    if sifted_length < 4 * n_target:
        raise InsufficientBits(f"{sifted_length} sifted bits < 4N = {4 * n_target}")
    return np.sort(rng.choice(sifted_length, size=2 * n_target, replace=False))


def expected_basis_arrival(variant: Variant, t_q, timing: TimingParams):
    if variant is Variant.DET_BASIC:
        # receipt returns to Alice after tau, basis then takes another tau
        return t_q + 3 * timing.tau + timing.delta
    return tm.expected_arrival(t_q, timing)


def verify_checks(transcript: SessionTranscript, timing: TimingParams,
                  qber_threshold: float = 0.11) -> Optional[AbortReason]:
    """Verify the check set in order: basis values, arrival times, QBER.

    Returns the first failing reason or None. Sets ``transcript.qber`` as a
    side effect."""
    r = transcript.records
    chk = transcript.check_indices
    if np.any(r.alice_basis[chk] != r.bob_basis_received[chk]):
        return AbortReason.BASIS_MISMATCH
    if transcript.variant.deterministic:
        expected = expected_basis_arrival(transcript.variant, r.emission_time[chk], timing)
        if np.any(np.abs(r.basis_arrival[chk] - expected) > timing.epsilon):
            return AbortReason.TIMING_VIOLATION
    transcript.qber = estimate_qber(r.alice_data[chk], r.bob_data[chk])
    if transcript.qber > qber_threshold:
        return AbortReason.QBER_EXCEEDED
    return None


def _streams(rng, k):
    return np.random.default_rng(rng).spawn(k)


def run_session(cfg: SessionConfig, fiber: FiberParams, det: DetectorParams, timing: TimingParams,
                source: SourceModel, adversary: AttackStrategy = NO_ATTACK,
                rng=None) -> SessionTranscript:
    """Run one protocol session; aborting is a normal return.

    ``rng`` may be an integer seed or a numpy Generator. Every protocol phase
    draws from its own child stream, so changing the adversary leaves Alice's
    strings and the source untouched.
    """
    variant = cfg.variant
    if adversary.kind is AttackKind.DELAY_FOR_BASIS and variant is not Variant.DET_PRACTICAL:
        raise ValueError("the delay-for-basis attack targets the practical deterministic variant")
    alice_rng, source_rng, eve_rng, chan_rng, bob_rng, post_rng = _streams(rng, 6)
    W = cfg.W

    # Alice: data and basis strings, encoding, emission schedule
    d = alice_rng.integers(0, 2, size=W, dtype=np.int8)
    b = alice_rng.integers(0, 2, size=W, dtype=np.int8)
    t_q = np.arange(W, dtype=np.int64) * cfg.pulse_period
    photons = sample_photon_number(source, source_rng, size=W)
    state_bits, state_bases = d, b

    # physical travel time; timing.tau is the value Alice and Bob agreed on
    tau_phys = round(propagation_delay(fiber.length, fiber.refractive_index))
    targets = adversary.choose_targets(W, eve_rng)
    if adversary.kind is AttackKind.INTERCEPT_RESEND:
        state_bits, state_bases = intercept_resend_many(d, b, photons, targets, eve_rng)

    link = FiberParams(fiber.alpha, fiber.length, 0.0, fiber.refractive_index)
    photons = chan_rng.binomial(photons, transmission_probability(link)).astype(np.int64)
    at_bob = t_q + tau_phys

    # basis disclosure and Bob's station
    absent = np.full(W, ABSENT, dtype=np.int64)
    if variant is Variant.DET_PRACTICAL:
        t_b = tm.basis_send_time(t_q, timing)
        storage_loop = fiber.length + loop_length_for_delay(timing.delta_cap, fiber.refractive_index)
        hold = timing.storage_time
    elif variant is Variant.DET_BASIC:
        # explicit receipt sent on qubit entry; basis goes out when it reaches Alice
        t_b = at_bob + tau_phys
        storage_loop = 2 * fiber.length
        hold = 2 * tau_phys
    else:
        t_b = absent
        storage_loop = 0.0
        hold = 0

    lateness = np.zeros(W, dtype=np.int64)
    if adversary.kind is AttackKind.DELAY_FOR_BASIS:
        hit = targets & (photons > 0)
        # Eve measures in the disclosed basis: she reads the bit, the state is unchanged
        lateness = np.where(hit, delay_lateness(at_bob, t_b, adversary.eve_to_bob_delay), 0)
    entry = at_bob + lateness

    station = FiberParams(0.0 if cfg.ideal_memory else fiber.alpha, storage_loop,
                          fiber.receiver_loss, fiber.refractive_index)
    photons = chan_rng.binomial(photons, transmission_probability(station)).astype(np.int64)

    if variant.deterministic:
        # basis bit on the classical channel, delayed along with the qubit by Eve
        T = t_b + tau_phys + timing.delta + lateness
        B = b.copy()
        storage_time = np.full(W, hold, dtype=np.int64)
    else:
        T = absent.copy()
        B = b.copy()  # announced publicly after the quantum phase
        storage_time = absent.copy()

    # Bob's detection and measurement
    signal_click, dark_click = detect_many(photons, det, bob_rng)
    click = signal_click | dark_click
    n_click = int(click.sum())
    meas_basis = np.full(W, ABSENT, dtype=np.int8)
    if variant.deterministic:
        meas_basis[click] = B[click]
    else:
        meas_basis[click] = bob_rng.integers(0, 2, size=n_click, dtype=np.int8)
    coin = bob_rng.integers(0, 2, size=n_click, dtype=np.int8)
    sig = signal_click[click]
    matched = meas_basis[click] == state_bases[click]
    outcome = np.where(sig & matched, state_bits[click], coin)
    if det.error_prob > 0:
        flip = sig & (bob_rng.random(n_click) < det.error_prob)
        outcome = outcome ^ flip.astype(np.int8)
    D = np.full(W, ABSENT, dtype=np.int8)
    D[click] = outcome
    meas_time = absent.copy()
    if variant.deterministic:
        meas_time[click] = tm.measurement_time(T[click], timing)
    else:
        meas_time[click] = at_bob[click] + timing.delta_prime
    storage_time[~click] = ABSENT

    ledger = PulseLedger(
        alice_data=d, alice_basis=b, emission_time=t_q, basis_sent_time=np.asarray(t_b, np.int64),
        bob_basis_received=B, basis_arrival=np.asarray(T, np.int64), qubit_entry=entry,
        storage_time=storage_time, bob_click=click, bob_meas_basis=meas_basis, bob_data=D,
        measurement_time=meas_time,
    )
    sa, sb, kept = sift(ledger, variant)
    tr = SessionTranscript(variant, cfg.n_target, ledger, timing, kept, sa, sb)
    return _finish(tr, cfg, source, post_rng)


def _finish(tr: SessionTranscript, cfg: SessionConfig, source: SourceModel,
            rng: np.random.Generator) -> SessionTranscript:
    """Check selection and verification, then error correction and privacy amplification."""
    try:
        pos = select_check_bits(len(tr.sifted_indices), cfg.n_target, rng)
    except InsufficientBits:
        tr.abort = AbortReason.INSUFFICIENT_BITS
        return tr
    tr.check_indices = tr.sifted_indices[pos]
    keep = np.ones(len(tr.sifted_indices), dtype=bool)
    keep[pos] = False
    tr.key_indices = tr.sifted_indices[keep]
    tr.abort = verify_checks(tr, tr.timing, cfg.qber_abort_threshold)
    if tr.abort is not None:
        return tr

    p_exp = tr.clicks / tr.W
    tr.beta = (p_exp - source.multiphoton_probability) / p_exp
    key_a = tr.records.alice_data[tr.key_indices]
    key_b = tr.records.bob_data[tr.key_indices]
    try:
        alice, bob = postprocess(key_a, key_b, tr.qber, tr.beta, rng, cfg.f_casc)
    except SecurityMarginExhausted:
        tr.abort = AbortReason.SECURITY_MARGIN_EXHAUSTED
        return tr
    tr.leaked_bits = alice.leaked_bits
    tr.residual_errors = int(np.count_nonzero(bob.corrected_key != alice.corrected_key))
    tr.final_key_alice = alice.final_key
    tr.final_key_bob = bob.final_key
    return tr


def write_transcript(tr: SessionTranscript, path) -> None:
    """One line per pulse, header first; absent values are empty fields."""
    r = tr.records
    cols = [np.arange(len(r))] + [getattr(r, name) for name in LEDGER_COLUMNS]
    text_cols = []
    for name, col in zip(["index", *LEDGER_COLUMNS], cols):
        col = col.astype(np.int64)
        s = col.astype(str)
        if name not in ("index", "alice_data", "alice_basis", "emission_time",
                        "qubit_entry", "bob_click"):
            s = np.where(col == ABSENT, "", s)
        text_cols.append(s)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", *LEDGER_COLUMNS])
        writer.writerows(zip(*text_cols))


def read_transcript(path) -> PulseLedger:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["index", *LEDGER_COLUMNS]:
            raise ValueError(f"unexpected transcript header: {header}")
        rows = list(reader)
    cols = {}
    for k, name in enumerate(LEDGER_COLUMNS, start=1):
        values = [int(row[k]) if row[k] != "" else ABSENT for row in rows]
        cols[name] = np.asarray(values, dtype=LEDGER_COLUMNS[name])
    return PulseLedger(**cols)
