"""Flat ``section.key=value`` configuration files.

Missing keys take the defaults below (the shipped reference configuration,
also in ``data/reference.cfg``). Unknown keys, malformed values and invariant
violations raise :class:`ConfigError` naming the key.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .adversary import AttackKind, AttackStrategy
from .channel import DetectorParams, FiberParams, loop_length_for_delay, propagation_delay
from .core import PhotonStatistics, SourceModel
from .protocol import SessionConfig, Variant
from .rates import RateParams
from .timing import TimingParams

AUTO = "auto"

# key -> default; the default's type fixes how the value is parsed
DEFAULTS: dict[str, Any] = {
    "fiber.alpha_db_per_km": 0.2,
    "fiber.length_km": 10.0,
    "fiber.receiver_loss_db": 2.92,
    "fiber.refractive_index": 1.468,
    "detector.efficiency": 0.1,
    "detector.dark_prob": 4e-7,
    "detector.error_prob": 0.01,
    "timing.tau_ns": AUTO,
    "timing.delta_cap_ns": 100,
    "timing.delta_ns": 50,
    "timing.delta_prime_ns": 60,
    "timing.epsilon_ns": 10,
    "source.mu": 0.03,
    "source.statistics": "poisson",
    "session.n_target": 250,
    "session.eta_c": 0.0,
    "session.eta_m": 0.0,
    "session.variant": "det",
    "session.qber_abort_threshold": 0.11,
    "session.pulse_period_ns": 1000,
    "session.pulses": AUTO,
    "memory.ideal": False,
    "rates.storage_loop_km": AUTO,
    "rates.f_casc": 1.0,
    "attack.kind": "none",
    "attack.fraction": 1.0,
    "attack.eve_to_bob_delay_ns": 0,
    "run.master_seed": 20070101,
    "run.output_dir": "out",
}

# optional keys whose "auto" resolves to a number of this type
_AUTO_TYPES = {"timing.tau_ns": int, "session.pulses": int, "rates.storage_loop_km": float}

_CHOICES = {
    "session.variant": [v.value for v in Variant],
    "attack.kind": [k.value for k in AttackKind],
    "source.statistics": [s.value for s in PhotonStatistics],
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _parse_value(key: str, text: str):
    default = DEFAULTS[key]
    text = text.strip()
    if key in _AUTO_TYPES:
        if text.lower() == AUTO:
            return AUTO
        kind = _AUTO_TYPES[key]
    else:
        kind = type(default)
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return lowered in ("true", "1", "yes")
        if kind is int:
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {kind.__name__}") from None
    if key in _CHOICES and text not in _CHOICES[key]:
        raise ConfigError(key, f"{text!r} is not one of {', '.join(_CHOICES[key])}")
    return text


def parse_config_text(text: str) -> dict:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown key")
        if key in values:
            raise ConfigError(key, "duplicate key")
        values[key] = _parse_value(key, value)
    return values


@dataclass(frozen=True)
class AppConfig:
    fiber: FiberParams
    detector: DetectorParams
    timing: TimingParams
    source: SourceModel
    session: SessionConfig
    attack: AttackStrategy
    rates: RateParams
    master_seed: int
    output_dir: Path
    values: dict = dataclasses.field(repr=False, default_factory=dict)
    explicit: dict = dataclasses.field(repr=False, default_factory=dict)

    def resolved_text(self) -> str:
        lines = ["# fully resolved configuration"]
        for key in DEFAULTS:
            value = self.values[key]
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def write_resolved(self, directory=None) -> Path:
        directory = Path(directory or self.output_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "resolved_config.cfg"
        path.write_text(self.resolved_text())
        return path

    def with_overrides(self, **overrides) -> "AppConfig":
        """Rebuild with ``section.key`` style overrides (dots as ``__``)."""
        values = dict(self.explicit)
        for name, value in overrides.items():
            key = name.replace("__", ".")
            if key not in DEFAULTS:
                raise ConfigError(key, "unknown key")
            values[key] = value
        return build_config(values)


_UNIT_SUFFIXES = ("_db_per_km", "_km", "_db", "_ns")


def _field_path(key: str) -> str:
    for suffix in _UNIT_SUFFIXES:
        if key.endswith(suffix):
            return key[: -len(suffix)]
    return key


_KEY_FOR_FIELD = {_field_path(k): k for k in DEFAULTS}


def _section_error(section: str, err: Exception) -> ConfigError:
    # parameter records name the offending field as "section.field"
    message = str(err)
    for token in re.findall(r"\b[a-z]+\.[a-z_]+", message):
        if token in _KEY_FOR_FIELD:
            return ConfigError(_KEY_FOR_FIELD[token], message)
    return ConfigError(section, message)


def _build(section, factory):
    try:
        return factory()
    except (ValueError, TypeError) as err:
        raise _section_error(section, err) from None


def build_config(values: Optional[dict] = None) -> AppConfig:
    explicit = dict(values or {})
    v = dict(DEFAULTS)
    v.update(explicit)
    fiber = _build("fiber", lambda: FiberParams(
        alpha=v["fiber.alpha_db_per_km"], length=v["fiber.length_km"],
        receiver_loss=v["fiber.receiver_loss_db"], refractive_index=v["fiber.refractive_index"]))
    if v["timing.tau_ns"] == AUTO:
        v["timing.tau_ns"] = round(propagation_delay(fiber.length, fiber.refractive_index))
    timing = _build("timing", lambda: TimingParams(
        tau=v["timing.tau_ns"], delta_cap=v["timing.delta_cap_ns"], delta=v["timing.delta_ns"],
        delta_prime=v["timing.delta_prime_ns"], epsilon=v["timing.epsilon_ns"]))
    detector = _build("detector", lambda: DetectorParams(
        efficiency=v["detector.efficiency"], dark_prob=v["detector.dark_prob"],
        gate_window=timing.epsilon, error_prob=v["detector.error_prob"]))
    source = _build("source", lambda: SourceModel(v["source.mu"], v["source.statistics"]))
    pulses = None if v["session.pulses"] == AUTO else v["session.pulses"]
    session = _build("session", lambda: SessionConfig(
        n_target=v["session.n_target"], eta_c=v["session.eta_c"], eta_m=v["session.eta_m"],
        variant=v["session.variant"], qber_abort_threshold=v["session.qber_abort_threshold"],
        pulse_period=v["session.pulse_period_ns"], pulses=pulses, f_casc=v["rates.f_casc"],
        ideal_memory=v["memory.ideal"]))
    attack = _build("attack", lambda: AttackStrategy(
        v["attack.kind"], v["attack.fraction"], v["attack.eve_to_bob_delay_ns"]))
    if v["rates.storage_loop_km"] == AUTO:
        v["rates.storage_loop_km"] = loop_length_for_delay(timing.delta_cap, fiber.refractive_index)
    rates = _build("rates", lambda: RateParams(
        mu=v["source.mu"] if source.statistics.value == "poisson" else 0.03,
        fiber=fiber, detector=detector, storage_loop=v["rates.storage_loop_km"],
        e_det=detector.error_prob, f_casc=v["rates.f_casc"], ideal_memory=v["memory.ideal"]))
    return AppConfig(fiber, detector, timing, source, session, attack, rates,
                     int(v["run.master_seed"]), Path(v["run.output_dir"]), v, explicit)


def load_config(path=None) -> AppConfig:
    """Parse a config file; ``None`` gives the reference configuration."""
    if path is None:
        return build_config()
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(str(path), f"cannot read config: {err.strerror}") from None
    return build_config(parse_config_text(text))


def reference_config_text() -> str:
    return resources.files("detbb84").joinpath("data/reference.cfg").read_text()
