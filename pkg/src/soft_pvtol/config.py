"""Plain `key = value` scenario files

    # reference simulation with the arms starting straight
    initial.q.4 = 0
    initial.q.5 = 0
    gains.K.3 = 12.5
    initial.q.3 = 0.2*pi

Every key is optional; missing keys take the reference simulation values.
Unknown keys, duplicates and malformed values are errors.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Any

import numpy as np

from soft_pvtol.allocation import SolverSettings
from soft_pvtol.controller import DEFAULT_K, DEFAULT_LAMBDA, Gains
from soft_pvtol.dynamics import DOF, GenState, PhysicalParams
from soft_pvtol.exceptions import ConfigError
from soft_pvtol.kernels import KernelConfig
from soft_pvtol.simulator import FLIGHT_INITIAL_Q, SimConfig
from soft_pvtol.types import KernelMode, ReferenceKind

PARAM_NAMES = ("m", "m_l", "m_r", "I", "I_l", "I_r", "l_l", "l_r", "epsilon", "g")


def parse_float(raw: str) -> float:
    """Float syntax plus `pi`, `-pi` and `<number>*pi`"""
    text = raw.strip().lower()
    if text.endswith("pi"):
        coefficient = text[:-2].strip().rstrip("*").strip()
        if coefficient in ("", "+"):
            return math.pi
        if coefficient == "-":
            return -math.pi
        return float(coefficient) * math.pi
    return float(text)


def parse_int(raw: str) -> int:
    return int(raw.strip())


def parse_bool(raw: str) -> bool:
    text = raw.strip().lower()
    if text in ("true", "yes", "on", "1"):
        return True
    if text in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _enum_parser(enum: type) -> Callable[[str], Any]:
    def parse(raw: str) -> Any:
        try:
            return enum[raw.strip().upper()]
        except KeyError:
            choices = "|".join(member.name for member in enum)
            raise ValueError(f"expected one of {choices}, got {raw.strip()!r}") from None

    return parse


def _defaults() -> dict[str, Any]:
    params = PhysicalParams()
    solver = SolverSettings()
    kernels = KernelConfig()
    sim = SimConfig.__dataclass_fields__

    values: dict[str, Any] = {
        "sim.t_end": sim["t_end"].default,
        "sim.h": sim["h"].default,
        "sim.reference": sim["reference"].default,
        "sim.ideal_wrench": sim["ideal_wrench"].default,
        "sim.arm_filter_tau": sim["arm_filter_tau"].default,
        "sim.output": sim["output"].default,
        "sim.hover_x": sim["hover_x"].default,
        "sim.hover_z": sim["hover_z"].default,
        "kernels.delta": kernels.delta,
        "kernels.mode": kernels.mode,
        "solver.tolerance": solver.tolerance,
        "solver.max_iterations": solver.max_iterations,
        "solver.damping": solver.damping,
        "solver.thrust_max": solver.thrust_max,
    }
    for i in range(DOF):
        values[f"initial.q.{i + 1}"] = FLIGHT_INITIAL_Q[i]
        values[f"initial.qdot.{i + 1}"] = 0.0
        values[f"gains.K.{i + 1}"] = DEFAULT_K[i]
        values[f"gains.Lambda.{i + 1}"] = DEFAULT_LAMBDA[i]
    for i, guess in enumerate(solver.initial_guess):
        values[f"solver.guess.{i + 1}"] = guess
    for name in PARAM_NAMES:
        values[f"params.{name}"] = getattr(params, name)
    return values


def _parsers() -> dict[str, Callable[[str], Any]]:
    parsers: dict[str, Callable[[str], Any]] = {key: parse_float for key in _defaults()}
    parsers["sim.reference"] = _enum_parser(ReferenceKind)
    parsers["sim.ideal_wrench"] = parse_bool
    parsers["sim.output"] = lambda raw: Path(raw.strip())
    parsers["kernels.mode"] = _enum_parser(KernelMode)
    parsers["solver.max_iterations"] = parse_int
    return parsers


KNOWN_KEYS = frozenset(_defaults())


def parse_lines(lines: list[str], source: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings, comments and blank lines dropped"""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        raw[key] = value
    return raw


def _values(raw: Mapping[str, str], source: str) -> dict[str, Any]:
    parsers = _parsers()
    values = _defaults()
    for key, text in raw.items():
        if key not in parsers:
            raise ConfigError(f"{source}: unknown key {key!r}")
        try:
            values[key] = parsers[key](text)
        except ValueError as e:
            raise ConfigError(f"{source}: bad value for {key!r}: {e}") from e
    return values


def _params(values: Mapping[str, Any], validate: bool = True) -> PhysicalParams:
    return PhysicalParams(**{name: values[f"params.{name}"] for name in PARAM_NAMES}, _validate=validate)


def build_config(raw: Mapping[str, str], source: str = "<config>") -> SimConfig:
    values = _values(raw, source)

    def vector(prefix: str, n: int) -> list[float]:
        return [values[f"{prefix}.{i + 1}"] for i in range(n)]

    return SimConfig(
        t_end=values["sim.t_end"],
        h=values["sim.h"],
        initial=GenState(np.array(vector("initial.q", DOF)), np.array(vector("initial.qdot", DOF))),
        params=_params(values),
        gains=Gains(K=tuple(vector("gains.K", DOF)), Lambda=tuple(vector("gains.Lambda", DOF))),
        kernels=KernelConfig(delta=values["kernels.delta"], mode=values["kernels.mode"]),
        solver=SolverSettings(
            initial_guess=tuple(vector("solver.guess", 4)),  # type: ignore[arg-type]
            tolerance=values["solver.tolerance"],
            max_iterations=values["solver.max_iterations"],
            damping=values["solver.damping"],
            thrust_max=values["solver.thrust_max"],
        ),
        arm_filter_tau=values["sim.arm_filter_tau"],
        reference=values["sim.reference"],
        ideal_wrench=values["sim.ideal_wrench"],
        output=values["sim.output"],
        hover_x=values["sim.hover_x"],
        hover_z=values["sim.hover_z"],
    )


def parse_config(text: str, source: str = "<config>", overrides: Mapping[str, str] | None = None) -> SimConfig:
    raw = parse_lines(text.splitlines(), source)
    for key, value in (overrides or {}).items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"override: unknown key {key!r}")
        raw[key] = value
    return build_config(raw, source)


def load_config(path: Path | None, overrides: Mapping[str, str] | None = None) -> SimConfig:
    """Read a scenario file; None means all defaults"""
    if path is None:
        return parse_config("", "<defaults>", overrides)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, str(path), overrides)


def load_params(path: Path | None, validate: bool = True) -> PhysicalParams:
    """Only the params.* part of a scenario file, optionally without validation"""
    if path is None:
        return PhysicalParams(_validate=validate)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return _params(_values(parse_lines(text.splitlines(), str(path)), str(path)), validate)
