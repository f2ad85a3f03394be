import pytest

from detbb84.config import (DEFAULTS, ConfigError, build_config, load_config,
                            parse_config_text, reference_config_text)
from detbb84.rates import REFERENCE


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = load_config(path)
    assert cfg.values == build_config().values
    assert cfg.timing.tau == 48_967
    assert cfg.session.W == 1000


def test_shipped_reference_matches_defaults():
    assert parse_config_text(reference_config_text()).keys() <= DEFAULTS.keys()
    assert build_config(parse_config_text(reference_config_text())).values == build_config().values


def test_reference_rates_match_library_reference():
    assert build_config().rates == REFERENCE.at(10.0)


def test_epsilon_must_be_below_delta():
    with pytest.raises(ConfigError) as err:
        build_config(parse_config_text("timing.epsilon_ns=100\ntiming.delta_cap_ns=100"))
    assert err.value.key == "timing.epsilon_ns"


@pytest.mark.parametrize("text,key", [
    ("fiber.alpah=0.2", "fiber.alpah"),
    ("fiber.alpha_db_per_km=abc", "fiber.alpha_db_per_km"),
    ("session.n_target=1.5", "session.n_target"),
    ("source.mu=1\nsource.mu=2", "source.mu"),
    ("detector.efficiency=2", "detector.efficiency"),
])
def test_bad_values_name_the_key(text, key):
    with pytest.raises(ConfigError) as err:
        build_config(parse_config_text(text))
    assert err.value.key == key


def test_comments_and_auto():
    v = parse_config_text("# heading\nfiber.length_km = 20  # longer\ntiming.tau_ns=auto\n")
    cfg = build_config(v)
    assert cfg.fiber.length == 20.0 and cfg.timing.tau == 97_934


def test_overrides_recompute_derived_values():
    cfg = build_config().with_overrides(fiber__length_km=20.0)
    assert cfg.timing.tau == 97_934


def test_resolved_config_round_trip(tmp_path):
    cfg = build_config({"session.variant": "bb84", "memory.ideal": True})
    path = cfg.write_resolved(tmp_path)
    again = load_config(path)
    assert again.values == cfg.values


@pytest.mark.parametrize("key", ["session.variant", "attack.kind", "source.statistics"])
def test_enum_keys_list_choices(key):
    with pytest.raises(ConfigError, match="is not one of") as err:
        parse_config_text(f"{key}=bogus")
    assert err.value.key == key
