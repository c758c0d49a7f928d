import math

import numpy as np
import pytest

from soft_pvtol import kernels
from soft_pvtol.exceptions import InvalidParameters
from soft_pvtol.kernels import EVEN_KINDS, ODD_KINDS, KernelConfig
from soft_pvtol.types import KernelKind, KernelMode
from soft_pvtol.verify import DERIVATIVE_RELATIONS, EXPECTED_LIMITS


def test_limit_table_values():
    table = kernels.limit_table()

    assert set(table) == set(KernelKind)
    for kind, expected in EXPECTED_LIMITS.items():
        assert table[kind] == pytest.approx(expected, abs=1e-15)


def test_parity_split():
    # fmt: off
    assert EVEN_KINDS == {
        KernelKind.SINC, KernelKind.D2, KernelKind.D4, KernelKind.D5, KernelKind.D6,
        KernelKind.C1, KernelKind.C3, KernelKind.GRAV,
    }
    assert ODD_KINDS == {
        KernelKind.BEND, KernelKind.D1, KernelKind.D3, KernelKind.C2, KernelKind.C4,
        KernelKind.C5, KernelKind.C6,
    }
    # fmt: on


@pytest.mark.parametrize("q", [0.05, 0.3, 1.0, 2.5, math.pi])
def test_parity_of_closed_forms(q: float):
    for kind in EVEN_KINDS:
        assert kernels.exact(kind, -q) == pytest.approx(kernels.exact(kind, q), abs=1e-14)
    for kind in ODD_KINDS:
        assert kernels.exact(kind, -q) == pytest.approx(-kernels.exact(kind, q), abs=1e-14)


def test_constant_limit_inside_band(limit_cfg: KernelConfig):
    table = kernels.limit_table()
    for q in (0.0, 1e-9, -0.05, 0.0999):
        for kind in KernelKind:
            assert kernels.eval(kind, q, limit_cfg) == table[kind]


def test_closed_form_at_and_beyond_delta(limit_cfg: KernelConfig, series_cfg: KernelConfig):
    for q in (0.1, -0.1, 1.3, -math.pi):
        for kind in KernelKind:
            assert kernels.eval(kind, q, limit_cfg) == kernels.exact(kind, q)
            assert kernels.eval(kind, q, series_cfg) == kernels.exact(kind, q)


def test_series_matches_closed_form_at_delta():
    for kind in KernelKind:
        for q in (0.1, -0.1, 0.3, kernels.MAX_DELTA):
            assert kernels.series(kind, q) == pytest.approx(kernels.exact(kind, q), abs=1e-8)


def test_series_mode_is_continuous_at_delta(series_cfg: KernelConfig):
    for kind in KernelKind:
        inside = kernels.eval(kind, math.nextafter(0.1, 0.0), series_cfg)
        outside = kernels.eval(kind, 0.1, series_cfg)
        assert abs(inside - outside) < 1e-9


def test_constant_limit_jump_at_delta(limit_cfg: KernelConfig):
    table = kernels.limit_table()
    delta = limit_cfg.delta
    for kind in KernelKind:
        jump = abs(kernels.eval(kind, delta, limit_cfg) - table[kind])
        if table[kind] == 0 and kind not in (KernelKind.C5, KernelKind.C6):
            # Odd kernels jump by their own value at delta
            assert jump == pytest.approx(abs(kernels.exact(kind, delta)))
            assert jump <= delta / 2
        else:
            assert jump < 1e-2


def test_sinc_closed_form_values():
    assert kernels.exact(KernelKind.SINC, math.pi / 2) == pytest.approx(2 / math.pi)
    assert kernels.exact(KernelKind.SINC, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert kernels.exact(KernelKind.BEND, math.pi) == pytest.approx(2 / math.pi)


def test_derivative_relations(rng: np.random.Generator):
    fd = 1e-5
    for q in rng.uniform(0.2, math.pi, size=50):
        for kind, derivative, factor in DERIVATIVE_RELATIONS:
            numeric = (kernels.exact(kind, q + fd) - kernels.exact(kind, q - fd)) / (2 * fd)
            assert numeric == pytest.approx(factor * kernels.exact(derivative, q), abs=1e-7)


def test_cos_half():
    assert kernels.cos_half(0.0) == 1.0
    assert kernels.cos_half(math.pi) == pytest.approx(0.0, abs=1e-15)
    assert kernels.cos_half(2.0) == pytest.approx(math.cos(1.0))


@pytest.mark.parametrize("delta", [0.0, -0.1, 0.51, math.nan, math.inf])
def test_kernel_config_rejects_bad_delta(delta: float):
    with pytest.raises(InvalidParameters):
        KernelConfig(delta=delta)


def test_kernel_config_defaults():
    cfg = KernelConfig()

    assert cfg.delta == 0.1
    assert cfg.mode is KernelMode.CONSTANT_LIMIT
    assert kernels.SERIES_CONFIG.mode is KernelMode.SERIES


@pytest.mark.parametrize("kind", sorted(EVEN_KINDS | {KernelKind.C5, KernelKind.C6}, key=lambda k: k.name))
def test_constant_limit_switch_is_nearly_continuous(kind: KernelKind, limit_cfg: KernelConfig):
    delta = limit_cfg.delta
    for edge in (delta, -delta):
        inside = kernels.eval(kind, math.nextafter(edge, 0.0), limit_cfg)
        outside = kernels.eval(kind, edge, limit_cfg)
        assert inside == kernels.limit_table()[kind]
        assert abs(outside - inside) < 1e-2
