import math
from pathlib import Path

import pytest

from soft_pvtol.config import (
    KNOWN_KEYS,
    load_config,
    load_params,
    parse_bool,
    parse_config,
    parse_float,
    parse_lines,
)
from soft_pvtol.exceptions import ConfigError, InvalidParameters
from soft_pvtol.simulator import FLIGHT_INITIAL_Q
from soft_pvtol.types import KernelMode, ReferenceKind

CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("1.5", 1.5),
        (" -2e-3 ", -2e-3),
        ("pi", math.pi),
        ("-pi", -math.pi),
        ("0.2*pi", 0.2 * math.pi),
        ("-0.15 * pi", -0.15 * math.pi),
        ("2pi", 2 * math.pi),
    ],
)
def test_parse_float(raw: str, expected: float):
    assert parse_float(raw) == pytest.approx(expected)


def test_parse_float_rejects_garbage():
    with pytest.raises(ValueError):
        parse_float("five")


def test_parse_bool():
    assert parse_bool("true") and parse_bool("Yes") and parse_bool("1")
    assert not (parse_bool("false") or parse_bool("off") or parse_bool("0"))
    with pytest.raises(ValueError):
        parse_bool("maybe")


def test_known_keys():
    assert len([k for k in KNOWN_KEYS if k.startswith("initial.q.")]) == 5
    assert "gains.Lambda.5" in KNOWN_KEYS
    assert "solver.guess.4" in KNOWN_KEYS
    assert "params.epsilon" in KNOWN_KEYS
    assert "gains.K.6" not in KNOWN_KEYS


def test_empty_config_is_reference_scenario():
    cfg = parse_config("")

    assert cfg.t_end == 40.0
    assert cfg.h == 0.01
    assert cfg.steps == 4000
    assert cfg.initial.q == pytest.approx(FLIGHT_INITIAL_Q)
    assert cfg.gains.K == (2.55, 2.55, 10.5, 21.0, 21.0)
    assert cfg.params.theta1 == 7.0
    assert cfg.kernels.mode is KernelMode.CONSTANT_LIMIT
    assert cfg.reference is ReferenceKind.PAPER_TRAJECTORY
    assert cfg.solver.initial_guess == (20.0, 10.0, 0.4, -0.2)
    assert cfg.output == Path("log.csv")


def test_parse_values_and_comments():
    text = """
    # a comment line
    sim.t_end = 5          # trailing comment
    initial.q.3 = 0.2*pi
    gains.K.3 = 12.5
    kernels.mode = series
    sim.ideal_wrench = yes
    solver.max_iterations = 80
    sim.output = out/run.csv
    """
    cfg = parse_config(text)

    assert cfg.t_end == 5.0
    assert cfg.initial.q[2] == pytest.approx(0.2 * math.pi)
    assert cfg.gains.K[2] == 12.5
    assert cfg.kernels.mode is KernelMode.SERIES
    assert cfg.ideal_wrench
    assert cfg.solver.max_iterations == 80
    assert cfg.output == Path("out/run.csv")


def test_overrides_win():
    cfg = parse_config("kernels.mode = SERIES\n", overrides={"kernels.mode": "CONSTANT_LIMIT", "sim.t_end": "3"})

    assert cfg.kernels.mode is KernelMode.CONSTANT_LIMIT
    assert cfg.t_end == 3.0


@pytest.mark.parametrize(
    "text, message",
    [
        ("gains.K.6 = 1", "line 1: unknown key"),
        ("sim.h = 0.01\nsim.h = 0.02", ":2: duplicate key"),
        ("sim.h =", "missing value"),
        ("just some words", "expected 'key = value'"),
        ("sim.h = fast", "bad value for 'sim.h'"),
        ("kernels.mode = EXACT", "expected one of CONSTANT_LIMIT|SERIES"),
    ],
)
def test_config_errors(text: str, message: str):
    with pytest.raises(ConfigError) as e:
        parse_config(text, "scenario.cfg")

    assert "scenario.cfg" in str(e.value)
    assert message.replace("line 1", "scenario.cfg:1") in str(e.value)


def test_invalid_values_name_the_invariant():
    with pytest.raises(InvalidParameters, match="params.m must be > 0"):
        parse_config("params.m = -5")
    with pytest.raises(InvalidParameters, match="gains.K.2"):
        parse_config("gains.K.2 = 0")
    with pytest.raises(InvalidParameters, match="sim.h"):
        parse_config("sim.h = -0.01")


def test_unknown_override():
    with pytest.raises(ConfigError):
        parse_config("", overrides={"sim.speed": "1"})


def test_parse_lines_keeps_raw_strings():
    raw = parse_lines(["# header", "", "sim.h = 0.02  # finer", "kernels.mode=SERIES"])

    assert raw == {"sim.h": "0.02", "kernels.mode": "SERIES"}


def test_load_missing_file(tmp_path: Path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "nope.cfg")


def test_load_params_unvalidated(tmp_path: Path):
    path = tmp_path / "bad.cfg"
    path.write_text("params.m = -1.5\n")

    with pytest.raises(InvalidParameters):
        load_params(path)
    params = load_params(path, validate=False)
    assert params.m == -1.5
    assert params.theta1 == 0.5


@pytest.mark.parametrize("name", ["flight.cfg", "hover.cfg", "prescribed.cfg"])
def test_shipped_configs_load(name: str):
    cfg = load_config(CONFIGS / name)

    assert cfg.steps >= 1000


def test_shipped_hover_config():
    cfg = load_config(CONFIGS / "hover.cfg")

    assert cfg.reference is ReferenceKind.HOVER
    assert cfg.initial.q == pytest.approx([0.0, 7.0, 0.0, 0.0, 0.0])
    assert cfg.steps == 1000


def test_shipped_prescribed_config():
    cfg = load_config(CONFIGS / "prescribed.cfg")

    assert cfg.reference is ReferenceKind.PRESCRIBED_SMOOTH
    assert cfg.kernels.mode is KernelMode.SERIES
    assert not cfg.uses_allocation
