"""Euler-Lagrange model of the Soft-PVTOL

Generalized coordinates are q = (x_v, z_v, theta, q_l, q_r) where the last two
are the constant curvature angles of the left and right arms.
"""
from __future__ import annotations

import math
from dataclasses import InitVar, dataclass

import numpy as np
import scipy.linalg
from rich.console import Console

from soft_pvtol import kernels
from soft_pvtol.exceptions import IllConditioned, IntegrationFailure, InvalidParameters
from soft_pvtol.kernels import SERIES_CONFIG, KernelConfig
from soft_pvtol.types import KernelKind, Matrix, Planar, Vector

console = Console(stderr=True)

DOF = 5
X, Z, THETA, QL, QR = range(DOF)

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class PhysicalParams:
    """Defaults are the reference simulation parameters"""

    m: float = 5.0
    m_l: float = 1.0
    m_r: float = 1.0
    I: float = 1.0  # noqa: E741
    I_l: float = 0.1
    I_r: float = 0.1
    l_l: float = 0.5
    l_r: float = 0.5
    epsilon: float = 0.0
    g: float = 9.8
    _validate: InitVar[bool] = True

    def __post_init__(self, _validate: bool) -> None:
        if _validate:
            self.validate()

    def validate(self) -> None:
        for name in ("m", "m_l", "m_r", "I", "I_l", "I_r", "l_l", "l_r"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidParameters(f"params.{name} must be > 0, got {value}")
        for name in ("epsilon", "g"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InvalidParameters(f"params.{name} must be >= 0, got {value}")

        margin_4, margin_5 = inertia_margins(self)
        if margin_4 <= 0:
            raise InvalidParameters(
                "inertia matrix not positive definite: "
                f"Theta1 > Theta3^2 / (l_l Theta3 + 4 Theta5) violated (margin {margin_4:.6g})"
            )
        if margin_5 <= 0:
            raise InvalidParameters(
                f"inertia matrix not positive definite: det D(0) > 0 violated (margin {margin_5:.6g})"
            )

    @property
    def theta1(self) -> float:
        return self.m + self.m_l + self.m_r

    @property
    def theta2(self) -> float:
        return self.I

    @property
    def theta3(self) -> float:
        return self.l_l * self.m_l

    @property
    def theta4(self) -> float:
        return self.l_r * self.m_r

    @property
    def theta5(self) -> float:
        return self.I_l

    @property
    def theta6(self) -> float:
        return self.I_r

    @property
    def rho(self) -> tuple[float, float, float, float, float]:
        """(rho1, ..., rho5), every Theta normalised by Theta3"""
        th3 = self.theta3
        return (self.theta1 / th3, self.theta2 / th3, self.theta5 / th3, self.theta4 / th3, self.theta6 / th3)


def inertia_margins(p: PhysicalParams) -> tuple[float, float]:
    """LHS - RHS of both positive definiteness conditions

    The first is the 4x4 leading block condition, the second the full 5x5
    condition at the q -> 0 worst case. Both must be strictly positive.
    """
    margin_4 = p.theta1 - p.theta3**2 / (p.l_l * p.theta3 + 4 * p.theta5)

    rho1, _, rho3, rho4, rho5 = p.rho
    l_l, l_r = p.l_l, p.l_r
    lhs = 4 * rho3 * rho1 * rho4 * l_r + 16 * rho3 * rho1 * rho5 + l_l * rho1 * rho4 * l_r + 4 * rho1 * rho5 * l_l
    rhs = rho4 * l_r + 4 * rho5 + 4 * rho3 * rho4**2 + l_l * rho4**2
    return margin_4, lhs - rhs


@dataclass
class GenState:
    q: Vector
    qdot: Vector

    def __post_init__(self) -> None:
        self.q = np.array(self.q, dtype=np.float64).reshape(DOF)
        self.qdot = np.array(self.qdot, dtype=np.float64).reshape(DOF)

    @property
    def within_curvature_bounds(self) -> bool:
        return abs(self.q[QL]) <= math.pi and abs(self.q[QR]) <= math.pi

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot)))


def mass_matrix(q: Vector, p: PhysicalParams, cfg: KernelConfig) -> Matrix:
    q_l, q_r = q[QL], q[QR]
    th3, th4 = p.theta3, p.theta4

    D = np.zeros((DOF, DOF))
    D[X, X] = D[Z, Z] = p.theta1
    D[THETA, THETA] = p.theta2
    D[X, QL] = D[QL, X] = th3 * kernels.eval(KernelKind.D1, q_l, cfg)
    D[X, QR] = D[QR, X] = th4 * kernels.eval(KernelKind.D3, q_r, cfg)
    D[Z, QL] = D[QL, Z] = th3 * kernels.eval(KernelKind.D2, q_l, cfg)
    D[Z, QR] = D[QR, Z] = th4 * kernels.eval(KernelKind.D4, q_r, cfg)
    D[QL, QL] = p.l_l * th3 * kernels.eval(KernelKind.D5, q_l, cfg) + p.theta5
    D[QR, QR] = p.l_r * th4 * kernels.eval(KernelKind.D6, q_r, cfg) + p.theta6
    return D


def mass_matrix_expanded(q: Vector, p: PhysicalParams, cfg: KernelConfig) -> Matrix:
    """Inertia matrix written with raw masses, lengths and trig terms

    Only the arms with |q| >= delta use the raw expressions; inside the band
    the kernel substitution is the only defined value.
    """
    D = mass_matrix(q, p, cfg)

    q_l = q[QL]
    if abs(q_l) >= cfg.delta:
        c, s = math.cos(q_l), math.sin(q_l)
        D[X, QL] = D[QL, X] = -p.l_l * p.m_l * (c / q_l - s / q_l**2)
        D[Z, QL] = D[QL, Z] = -p.l_l * p.m_l * (1 / q_l**2 - c / q_l**2 - s / q_l)
        D[QL, QL] = (
            p.l_l**2 * p.m_l / q_l**2
            + 2 * p.l_l**2 * p.m_l / q_l**4
            - 2 * p.l_l**2 * p.m_l * c / q_l**4
            - 2 * p.l_l**2 * p.m_l * s / q_l**3
            + p.I_l
        )

    q_r = q[QR]
    if abs(q_r) >= cfg.delta:
        c, s = math.cos(q_r), math.sin(q_r)
        D[X, QR] = D[QR, X] = p.l_r * p.m_r * (c / q_r - s / q_r**2)
        D[Z, QR] = D[QR, Z] = -p.l_r * p.m_r * (1 / q_r**2 - c / q_r**2 - s / q_r)
        D[QR, QR] = (
            p.l_r**2 * p.m_r / q_r**2
            + 2 * p.l_r**2 * p.m_r / q_r**4
            - 2 * p.l_r**2 * p.m_r * c / q_r**4
            - 2 * p.l_r**2 * p.m_r * s / q_r**3
            + p.I_r
        )

    return D


def coriolis_matrix(q: Vector, qdot: Vector, p: PhysicalParams, cfg: KernelConfig) -> Matrix:
    """Christoffel form, the one that makes D_dot - 2C skew-symmetric"""
    q_l, q_r = q[QL], q[QR]
    dq_l, dq_r = qdot[QL], qdot[QR]
    th3, th4 = p.theta3, p.theta4

    C = np.zeros((DOF, DOF))
    C[X, QL] = th3 * kernels.eval(KernelKind.C1, q_l, cfg) * dq_l
    C[X, QR] = -th4 * kernels.eval(KernelKind.C3, q_r, cfg) * dq_r
    C[Z, QL] = th3 * kernels.eval(KernelKind.C2, q_l, cfg) * dq_l
    C[Z, QR] = th4 * kernels.eval(KernelKind.C4, q_r, cfg) * dq_r
    C[QL, QL] = -2 * p.l_l * th3 * kernels.eval(KernelKind.C5, q_l, cfg) * dq_l
    C[QR, QR] = -2 * p.l_r * th4 * kernels.eval(KernelKind.C6, q_r, cfg) * dq_r
    return C


def coriolis_matrix_expanded(q: Vector, qdot: Vector, p: PhysicalParams, cfg: KernelConfig) -> Matrix:
    C = coriolis_matrix(q, qdot, p, cfg)

    q_l, dq_l = q[QL], qdot[QL]
    if abs(q_l) >= cfg.delta:
        c, s = math.cos(q_l), math.sin(q_l)
        lm, l2m = p.l_l * p.m_l, p.l_l**2 * p.m_l
        C[X, QL] = lm * (q_l * s + c) / q_l**2 * dq_l + lm * (q_l * c - 2 * s) / q_l**3 * dq_l
        C[Z, QL] = (
            2 * lm / q_l**3 * dq_l
            - lm * (q_l * s + 2 * c) / q_l**3 * dq_l
            + lm * (q_l * c - s) / q_l**2 * dq_l
        )
        C[QL, QL] = (
            -l2m / q_l**3 * dq_l
            - 4 * l2m / q_l**5 * dq_l
            + l2m * (q_l * s + 4 * c) / q_l**5 * dq_l
            - l2m * (q_l * c - 3 * s) / q_l**4 * dq_l
        )

    q_r, dq_r = q[QR], qdot[QR]
    if abs(q_r) >= cfg.delta:
        c, s = math.cos(q_r), math.sin(q_r)
        lm, l2m = p.l_r * p.m_r, p.l_r**2 * p.m_r
        C[X, QR] = -lm * (q_r * s + c) / q_r**2 * dq_r - lm * (q_r * c - 2 * s) / q_r**3 * dq_r
        C[Z, QR] = (
            2 * lm / q_r**3 * dq_r
            - lm * (q_r * s + 2 * c) / q_r**3 * dq_r
            + lm * (q_r * c - s) / q_r**2 * dq_r
        )
        C[QR, QR] = (
            -l2m / q_r**3 * dq_r
            - 4 * l2m / q_r**5 * dq_r
            + l2m * (q_r * s + 4 * c) / q_r**5 * dq_r
            - l2m * (q_r * c - 3 * s) / q_r**4 * dq_r
        )

    return C


def mass_matrix_dot(q: Vector, qdot: Vector, p: PhysicalParams, cfg: KernelConfig) -> Matrix:
    q_l, q_r = q[QL], q[QR]
    dq_l, dq_r = qdot[QL], qdot[QR]
    th3, th4 = p.theta3, p.theta4

    D_dot = np.zeros((DOF, DOF))
    D_dot[X, QL] = D_dot[QL, X] = th3 * kernels.eval(KernelKind.C1, q_l, cfg) * dq_l
    D_dot[X, QR] = D_dot[QR, X] = -th4 * kernels.eval(KernelKind.C3, q_r, cfg) * dq_r
    D_dot[Z, QL] = D_dot[QL, Z] = th3 * kernels.eval(KernelKind.C2, q_l, cfg) * dq_l
    D_dot[Z, QR] = D_dot[QR, Z] = th4 * kernels.eval(KernelKind.C4, q_r, cfg) * dq_r
    D_dot[QL, QL] = -4 * p.l_l * th3 * kernels.eval(KernelKind.C5, q_l, cfg) * dq_l
    D_dot[QR, QR] = -4 * p.l_r * th4 * kernels.eval(KernelKind.C6, q_r, cfg) * dq_r
    return D_dot


def mass_matrix_partials(q: Vector, p: PhysicalParams, cfg: KernelConfig) -> tuple[Matrix, Matrix]:
    """dD/dq_l and dD/dq_r, the only coordinates D depends on"""
    unit_l = np.zeros(DOF)
    unit_l[QL] = 1.0
    unit_r = np.zeros(DOF)
    unit_r[QR] = 1.0
    return mass_matrix_dot(q, unit_l, p, cfg), mass_matrix_dot(q, unit_r, p, cfg)


def skew_defect(state: GenState, p: PhysicalParams, cfg: KernelConfig) -> Matrix:
    """D_dot - 2C, skew-symmetric for the Christoffel form of C"""
    return mass_matrix_dot(state.q, state.qdot, p, cfg) - 2 * coriolis_matrix(state.q, state.qdot, p, cfg)


def gravity_vector(q: Vector, p: PhysicalParams, cfg: KernelConfig) -> Vector:
    return np.array(
        [
            0.0,
            p.g * p.theta1,
            0.0,
            p.g * p.theta3 * kernels.eval(KernelKind.GRAV, q[QL], cfg),
            p.g * p.theta4 * kernels.eval(KernelKind.GRAV, q[QR], cfg),
        ]
    )


def forward_dynamics(state: GenState, tau: Vector, p: PhysicalParams, cfg: KernelConfig) -> Vector:
    """Solve D(q) qddot = tau - C(q, qdot) qdot - g(q)"""
    D = mass_matrix(state.q, p, cfg)
    cond = np.linalg.cond(D)
    if not math.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditioned(f"inertia matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}")

    rhs = np.asarray(tau, dtype=np.float64) - coriolis_matrix(state.q, state.qdot, p, cfg) @ state.qdot
    rhs -= gravity_vector(state.q, p, cfg)
    if not np.all(np.isfinite(rhs)):
        raise IntegrationFailure(f"non-finite generalized force at q={state.q}, qdot={state.qdot}")

    try:
        factor = scipy.linalg.cho_factor(D)
    except np.linalg.LinAlgError as e:
        raise IllConditioned("inertia matrix is not positive definite") from e
    return scipy.linalg.cho_solve(factor, rhs)


def kinetic_energy(state: GenState, p: PhysicalParams, cfg: KernelConfig) -> float:
    return 0.5 * float(state.qdot @ mass_matrix(state.q, p, cfg) @ state.qdot)


def kinetic_energy_expanded(state: GenState, p: PhysicalParams) -> float:
    """Translational plus rotational kinetic energy, term by term

    Written with the raw trig terms, so both curvatures must be nonzero.
    """
    dx, dz, dtheta, dq_l, dq_r = state.qdot
    q_l, q_r = state.q[QL], state.q[QR]
    m, m_l, m_r, l_l, l_r = p.m, p.m_l, p.m_r, p.l_l, p.l_r
    cl, sl = math.cos(q_l), math.sin(q_l)
    cr, sr = math.cos(q_r), math.sin(q_r)

    # fmt: off
    k_t = (
        0.5 * m * (dx**2 + dz**2)
        + 0.5 * m_l * dx**2 + 0.5 * m_l * dz**2
        + 0.5 * l_l**2 * m_l / q_l**2 * dq_l**2 + l_l**2 * m_l / q_l**4 * dq_l**2
        - l_l**2 * m_l * cl / q_l**4 * dq_l**2 - l_l**2 * m_l * sl / q_l**3 * dq_l**2
        - l_l * m_l / q_l**2 * dq_l * dz
        - l_l * m_l * cl / q_l * dq_l * dx + l_l * m_l * cl / q_l**2 * dq_l * dz
        + l_l * m_l * sl / q_l**2 * dq_l * dx + l_l * m_l * sl / q_l * dq_l * dz
        + 0.5 * m_r * dx**2 + 0.5 * m_r * dz**2
        + 0.5 * l_r**2 * m_r / q_r**2 * dq_r**2 + l_r**2 * m_r / q_r**4 * dq_r**2
        - l_r**2 * m_r * cr / q_r**4 * dq_r**2 - l_r**2 * m_r * sr / q_r**3 * dq_r**2
        - l_r * m_r / q_r**2 * dq_r * dz
        + l_r * m_r * cr / q_r * dq_r * dx + l_r * m_r * cr / q_r**2 * dq_r * dz
        - l_r * m_r * sr / q_r**2 * dq_r * dx + l_r * m_r * sr / q_r * dq_r * dz
    )
    # fmt: on
    k_r = 0.5 * p.I * dtheta**2 + 0.5 * p.I_l * dq_l**2 + 0.5 * p.I_r * dq_r**2
    return k_t + k_r


def kinetic_energy_from_tips(state: GenState, p: PhysicalParams) -> float:
    v_v, v_l, v_r = tip_velocities(state, p)
    dtheta, dq_l, dq_r = state.qdot[THETA], state.qdot[QL], state.qdot[QR]
    translational = 0.5 * (p.m * _norm2(v_v) + p.m_l * _norm2(v_l) + p.m_r * _norm2(v_r))
    rotational = 0.5 * (p.I * dtheta**2 + p.I_l * dq_l**2 + p.I_r * dq_r**2)
    return translational + rotational


def _norm2(v: Planar) -> float:
    return v[0] ** 2 + v[1] ** 2


def potential_energy(q: Vector, p: PhysicalParams, cfg: KernelConfig) -> float:
    return (
        p.theta1 * p.g * q[Z]
        + p.g * p.theta3 * kernels.eval(KernelKind.BEND, q[QL], cfg)
        + p.g * p.theta4 * kernels.eval(KernelKind.BEND, q[QR], cfg)
    )


def total_energy(state: GenState, p: PhysicalParams, cfg: KernelConfig) -> float:
    return kinetic_energy(state, p, cfg) + potential_energy(state.q, p, cfg)


def lagrange_residual(
    state: GenState, qddot: Vector, tau: Vector, p: PhysicalParams, cfg: KernelConfig
) -> Vector:
    """d/dt(dL/dqdot) - dL/dq - tau, built without the Coriolis matrix

    Uses d/dt(D qdot) = D qddot + D_dot qdot and dL/dq_i = 1/2 qdot' dD/dq_i qdot
    - dP/dq_i, so it is an independent check of C for |q_l|, |q_r| >= delta.
    """
    q, qdot = state.q, state.qdot
    D = mass_matrix(q, p, cfg)
    D_dot = mass_matrix_dot(q, qdot, p, cfg)
    dD_l, dD_r = mass_matrix_partials(q, p, cfg)

    dL_dq = -gravity_vector(q, p, cfg)
    dL_dq[QL] += 0.5 * float(qdot @ dD_l @ qdot)
    dL_dq[QR] += 0.5 * float(qdot @ dD_r @ qdot)

    return D @ qddot + D_dot @ qdot - dL_dq - np.asarray(tau, dtype=np.float64)


def tip_positions(q: Vector, p: PhysicalParams) -> tuple[Planar, Planar, Planar]:
    """Body and rotor positions in the inertial frame (arm offsets are not rotated by theta)"""
    x, z, q_l, q_r = q[X], q[Z], q[QL], q[QR]
    p_v = (float(x), float(z))
    p_l = (
        float(x - p.epsilon - p.l_l * kernels.eval(KernelKind.SINC, q_l, SERIES_CONFIG)),
        float(z + p.l_l * kernels.eval(KernelKind.BEND, q_l, SERIES_CONFIG)),
    )
    p_r = (
        float(x + p.epsilon + p.l_r * kernels.eval(KernelKind.SINC, q_r, SERIES_CONFIG)),
        float(z + p.l_r * kernels.eval(KernelKind.BEND, q_r, SERIES_CONFIG)),
    )
    return p_v, p_l, p_r


def tip_velocities(state: GenState, p: PhysicalParams) -> tuple[Planar, Planar, Planar]:
    dx, dz, _, dq_l, dq_r = state.qdot
    q_l, q_r = state.q[QL], state.q[QR]
    v_v = (float(dx), float(dz))
    v_l = (
        float(dx + p.l_l * kernels.eval(KernelKind.D1, q_l, SERIES_CONFIG) * dq_l),
        float(dz + p.l_l * kernels.eval(KernelKind.D2, q_l, SERIES_CONFIG) * dq_l),
    )
    v_r = (
        float(dx + p.l_r * kernels.eval(KernelKind.D3, q_r, SERIES_CONFIG) * dq_r),
        float(dz + p.l_r * kernels.eval(KernelKind.D4, q_r, SERIES_CONFIG) * dq_r),
    )
    return v_v, v_l, v_r


def warn_curvature(state: GenState, t: float) -> bool:
    """Soft check of |q_l|, |q_r| <= pi, logs and returns False on violation"""
    if state.within_curvature_bounds:
        return True
    console.log(
        f"[yellow]t={t:.2f}s arm curvature outside [-pi, pi]: "
        f"q_l={state.q[QL]:.4f}, q_r={state.q[QR]:.4f}"
    )
    return False
