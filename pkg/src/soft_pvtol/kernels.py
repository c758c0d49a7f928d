"""Shape functions of a single arm curvature

Every entry of D, C, g and the tip kinematics is a constant times one of these
scalar functions. Their closed forms divide by powers of q, so near q = 0 they
are replaced either by the q -> 0 limit (what the original simulation did) or
by a Taylor polynomial.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

from soft_pvtol.exceptions import InvalidParameters
from soft_pvtol.types import KernelKind, KernelMode

MAX_DELTA = 0.5


@dataclass(frozen=True)
class KernelConfig:
    delta: float = 0.1
    mode: KernelMode = KernelMode.CONSTANT_LIMIT

    def __post_init__(self) -> None:
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise InvalidParameters(f"kernels.delta must be > 0, got {self.delta}")
        if self.delta > MAX_DELTA:
            raise InvalidParameters(f"kernels.delta must be <= {MAX_DELTA}, got {self.delta}")


SERIES_CONFIG = KernelConfig(mode=KernelMode.SERIES)


def _sinc(q: float) -> float:
    return math.sin(q) / q


def _bend(q: float) -> float:
    return (1 - math.cos(q)) / q


def _d1(q: float) -> float:
    return (math.sin(q) - q * math.cos(q)) / q**2


def _d2(q: float) -> float:
    return (math.cos(q) + q * math.sin(q) - 1) / q**2


def _d3(q: float) -> float:
    return (q * math.cos(q) - math.sin(q)) / q**2


def _d5(q: float) -> float:
    return (q**2 + 2 - 2 * math.cos(q) - 2 * q * math.sin(q)) / q**4


def _c1(q: float) -> float:
    return ((q**2 - 2) * math.sin(q) + 2 * q * math.cos(q)) / q**3


def _c2(q: float) -> float:
    return ((q**2 - 2) * math.cos(q) - 2 * q * math.sin(q) + 2) / q**3


def _c5(q: float) -> float:
    return (q * math.cos(q / 2) - 2 * math.sin(q / 2)) ** 2 / q**5


def _grav(q: float) -> float:
    return (q * math.sin(q) + math.cos(q) - 1) / q**2


_EXACT: dict[KernelKind, Callable[[float], float]] = {
    KernelKind.SINC: _sinc,
    KernelKind.BEND: _bend,
    KernelKind.D1: _d1,
    KernelKind.D2: _d2,
    KernelKind.D3: _d3,
    KernelKind.D4: _d2,
    KernelKind.D5: _d5,
    KernelKind.D6: _d5,
    KernelKind.C1: _c1,
    KernelKind.C2: _c2,
    KernelKind.C3: _c1,
    KernelKind.C4: _c2,
    KernelKind.C5: _c5,
    KernelKind.C6: _c5,
    KernelKind.GRAV: _grav,
}

# (lowest power, coefficients of q**lowest, q**(lowest + 2), ...)
# Generated once by symbolic Taylor expansion of the closed forms above,
# truncated after five terms (error below 1e-10 for |q| <= 0.5).
_SINC_SERIES = (0, (1.0, -1 / 6, 1 / 120, -1 / 5040, 1 / 362880))
_BEND_SERIES = (1, (1 / 2, -1 / 24, 1 / 720, -1 / 40320, 1 / 3628800))
_GRAV_SERIES = (0, (1 / 2, -1 / 8, 1 / 144, -1 / 5760, 1 / 403200))
_D1_SERIES = (1, (1 / 3, -1 / 30, 1 / 840, -1 / 45360, 1 / 3991680))
_D3_SERIES = (1, (-1 / 3, 1 / 30, -1 / 840, 1 / 45360, -1 / 3991680))
_D5_SERIES = (0, (1 / 4, -1 / 72, 1 / 2880, -1 / 201600, 1 / 21772800))
_C1_SERIES = (0, (1 / 3, -1 / 10, 1 / 168, -1 / 6480, 1 / 443520))
_C2_SERIES = (1, (-1 / 4, 1 / 36, -1 / 960, 1 / 50400, -1 / 4354560))
_C5_SERIES = (1, (1 / 144, -1 / 2880, 1 / 134400, -1 / 10886400, 1 / 1341204480))

_SERIES: dict[KernelKind, tuple[int, tuple[float, ...]]] = {
    KernelKind.SINC: _SINC_SERIES,
    KernelKind.BEND: _BEND_SERIES,
    KernelKind.D1: _D1_SERIES,
    KernelKind.D2: _GRAV_SERIES,
    KernelKind.D3: _D3_SERIES,
    KernelKind.D4: _GRAV_SERIES,
    KernelKind.D5: _D5_SERIES,
    KernelKind.D6: _D5_SERIES,
    KernelKind.C1: _C1_SERIES,
    KernelKind.C2: _C2_SERIES,
    KernelKind.C3: _C1_SERIES,
    KernelKind.C4: _C2_SERIES,
    KernelKind.C5: _C5_SERIES,
    KernelKind.C6: _C5_SERIES,
    KernelKind.GRAV: _GRAV_SERIES,
}

EVEN_KINDS = frozenset(kind for kind, (power, _) in _SERIES.items() if power == 0)
ODD_KINDS = frozenset(kind for kind, (power, _) in _SERIES.items() if power == 1)


def exact(kind: KernelKind, q: float) -> float:
    """Closed form, undefined at q = 0"""
    return _EXACT[kind](q)


def series(kind: KernelKind, q: float) -> float:
    power, coefficients = _SERIES[kind]
    q2 = q * q
    acc = 0.0
    for coefficient in reversed(coefficients):
        acc = acc * q2 + coefficient
    return acc * q if power == 1 else acc


def limit_table() -> dict[KernelKind, float]:
    """The q -> 0 limits substituted in CONSTANT_LIMIT mode"""
    return {kind: series(kind, 0.0) for kind in KernelKind}


_LIMITS = limit_table()


def eval(kind: KernelKind, q: float, cfg: KernelConfig) -> float:  # noqa: A001
    if abs(q) >= cfg.delta:
        return _EXACT[kind](q)
    if cfg.mode is KernelMode.CONSTANT_LIMIT:
        return _LIMITS[kind]
    return series(kind, q)


def cos_half(q: float) -> float:
    """The cos(q/2) stand-in for sin(q)/q used by the allocation"""
    return math.cos(q / 2)
