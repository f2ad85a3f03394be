"""Simulator and rate analysis for deterministic BB84 quantum key distribution."""
from .adversary import AttackKind, AttackStrategy
from .channel import DetectorParams, FiberParams
from .core import Basis, PhotonStatistics, SourceModel
from .protocol import AbortReason, SessionConfig, SessionTranscript, Variant, run_session
from .rates import REFERENCE, RateParams, RateVariant, optimize_mu, secure_rate_bb84, secure_rate_det
from .timing import TimingParams, timing_for_fiber

__version__ = "0.1.0"

__all__ = [
    "AbortReason", "AttackKind", "AttackStrategy", "Basis", "DetectorParams", "FiberParams",
    "PhotonStatistics", "REFERENCE", "RateParams", "RateVariant", "SessionConfig",
    "SessionTranscript", "SourceModel", "TimingParams", "Variant", "optimize_mu",
    "run_session", "secure_rate_bb84", "secure_rate_det", "timing_for_fiber",
]
