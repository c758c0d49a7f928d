from __future__ import annotations

from collections.abc import Callable
from enum import Enum
from typing import TypeAlias

import numpy as np
import numpy.typing as npt


class KernelKind(Enum):
    SINC = "SINC"
    BEND = "BEND"
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D4 = "D4"
    D5 = "D5"
    D6 = "D6"
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"
    C4 = "C4"
    C5 = "C5"
    C6 = "C6"
    GRAV = "GRAV"


class KernelMode(Enum):
    CONSTANT_LIMIT = "CONSTANT_LIMIT"
    SERIES = "SERIES"


class ReferenceKind(Enum):
    PAPER_TRAJECTORY = "PAPER_TRAJECTORY"
    PRESCRIBED_SMOOTH = "PRESCRIBED_SMOOTH"
    HOVER = "HOVER"


class Quadrature(Enum):
    TRAPEZOID = "TRAPEZOID"
    RK4_STAGES = "RK4_STAGES"


# Generalized coordinates are ordered (x_v, z_v, theta, q_l, q_r)
Vector: TypeAlias = npt.NDArray[np.float64]
Matrix: TypeAlias = npt.NDArray[np.float64]
Planar: TypeAlias = tuple[float, float]

# accel_fn(t, q, qdot) -> qddot
AccelFn: TypeAlias = Callable[[float, Vector, Vector], Vector]
# tau_fn(t, q, qdot) -> tau
InputFn: TypeAlias = Callable[[float, Vector, Vector], Vector]

COORDINATE_NAMES = ("x_v", "z_v", "theta", "q_l", "q_r")
