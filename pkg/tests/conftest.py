from typing import Iterable

import numpy as np
import pytest

from soft_pvtol.allocation import SolverSettings
from soft_pvtol.controller import Gains
from soft_pvtol.dynamics import GenState, PhysicalParams
from soft_pvtol.kernels import KernelConfig
from soft_pvtol.types import KernelMode


@pytest.fixture
def params() -> Iterable[PhysicalParams]:
    """The reference simulation parameters"""
    yield PhysicalParams()


@pytest.fixture
def infeasible_params() -> Iterable[PhysicalParams]:
    """Negative body mass, which breaks det D(0) > 0"""
    yield PhysicalParams(m=-1.5, _validate=False)


@pytest.fixture
def gains() -> Iterable[Gains]:
    yield Gains()


@pytest.fixture
def unit_gains() -> Iterable[Gains]:
    yield Gains(K=(1.0,) * 5, Lambda=(1.0,) * 5)


@pytest.fixture
def limit_cfg() -> Iterable[KernelConfig]:
    yield KernelConfig(mode=KernelMode.CONSTANT_LIMIT)


@pytest.fixture
def series_cfg() -> Iterable[KernelConfig]:
    yield KernelConfig(mode=KernelMode.SERIES)


@pytest.fixture
def solver() -> Iterable[SolverSettings]:
    yield SolverSettings()


@pytest.fixture
def rng() -> Iterable[np.random.Generator]:
    yield np.random.default_rng(1234)


@pytest.fixture
def bent_state() -> Iterable[GenState]:
    """Both arms well outside the small-curvature band, everything moving"""
    # fmt: off
    yield GenState(
        q=np.array([0.3, 2.0, 0.1, 0.7, -1.1]),
        qdot=np.array([0.4, -0.2, 0.3, 1.5, -0.8]),
    )
    # fmt: on


@pytest.fixture
def hover_state() -> Iterable[GenState]:
    yield GenState(q=np.array([0.0, 7.0, 0.0, 0.0, 0.0]), qdot=np.zeros(5))
