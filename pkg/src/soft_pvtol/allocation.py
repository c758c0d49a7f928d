"""Control allocation: generalized forces to thrusts and desired arm curvatures

The commanded (tau_x, tau_z) is rotated into the body frame, giving the
virtual inputs (upsilon_x, upsilon_z). Together with tau_theta they fix
v = (T_r sin q_r, T_r cos q_r, T_l sin q_l, T_l cos q_l) through the
pseudo-inverse of A_bar, where sin(q)/q is approximated by cos(q/2). Since
A_bar itself depends on the curvatures, the thrusts and curvatures are the
root of a small nonlinear system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from soft_pvtol import kernels
from soft_pvtol.dynamics import PhysicalParams
from soft_pvtol.exceptions import InfeasibleCommand, InvalidParameters, NonConvergence
from soft_pvtol.kernels import SERIES_CONFIG, cos_half
from soft_pvtol.types import KernelKind, Matrix, Planar, Vector

JACOBIAN_STEP = 1e-7
MAX_BACKTRACKS = 20
MIN_DENOMINATOR = 1e-12


@dataclass(frozen=True)
class WrenchCommand:
    tau_x: float
    tau_z: float
    tau_theta: float
    theta: float


@dataclass(frozen=True)
class AllocationSolution:
    T_l: float
    T_r: float
    q_l_d: float
    q_r_d: float
    residual_norm: float
    iterations: int
    converged: bool = True

    def as_vector(self) -> Vector:
        return np.array([self.T_l, self.T_r, self.q_l_d, self.q_r_d])

    def exceeds(self, thrust_max: float) -> bool:
        return self.T_l > thrust_max or self.T_r > thrust_max


@dataclass(frozen=True)
class SolverSettings:
    initial_guess: tuple[float, float, float, float] = (20.0, 10.0, 0.4, -0.2)
    tolerance: float = 1e-10
    max_iterations: int = 50
    damping: float = 1.0
    thrust_max: float = 200.0

    def __post_init__(self) -> None:
        if len(self.initial_guess) != 4:
            raise InvalidParameters(f"solver.guess needs 4 entries, got {len(self.initial_guess)}")
        object.__setattr__(self, "initial_guess", tuple(float(v) for v in self.initial_guess))
        if not self.tolerance > 0:
            raise InvalidParameters(f"solver.tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1:
            raise InvalidParameters(f"solver.max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 < self.damping <= 1:
            raise InvalidParameters(f"solver.damping must be in (0, 1], got {self.damping}")
        if not self.thrust_max > 0:
            raise InvalidParameters(f"solver.thrust_max must be > 0, got {self.thrust_max}")


def to_body_virtual(cmd: WrenchCommand) -> Planar:
    c, s = math.cos(cmd.theta), math.sin(cmd.theta)
    return cmd.tau_x * c + cmd.tau_z * s, -cmd.tau_x * s + cmd.tau_z * c


def from_body_virtual(upsilon_x: float, upsilon_z: float, theta: float) -> Planar:
    c, s = math.cos(theta), math.sin(theta)
    return upsilon_x * c - upsilon_z * s, upsilon_x * s + upsilon_z * c


def _forward_map(
    T_l: float, T_r: float, q_l: float, q_r: float, theta: float, p: PhysicalParams, shape_l: float, shape_r: float
) -> tuple[float, float, float]:
    upsilon_x = -T_r * math.sin(q_r) + T_l * math.sin(q_l)
    upsilon_z = T_r * math.cos(q_r) + T_l * math.cos(q_l)
    tau_theta = p.l_r * T_r * math.cos(q_r) * shape_r - p.l_l * T_l * math.cos(q_l) * shape_l
    tau_x, tau_z = from_body_virtual(upsilon_x, upsilon_z, theta)
    return tau_x, tau_z, tau_theta


def exact_forward_map(
    T_l: float, T_r: float, q_l: float, q_r: float, theta: float, p: PhysicalParams
) -> tuple[float, float, float]:
    """(tau_x, tau_z, tau_theta) produced by the actuators"""
    shape_l = kernels.eval(KernelKind.SINC, q_l, SERIES_CONFIG)
    shape_r = kernels.eval(KernelKind.SINC, q_r, SERIES_CONFIG)
    return _forward_map(T_l, T_r, q_l, q_r, theta, p, shape_l, shape_r)


def approx_forward_map(
    T_l: float, T_r: float, q_l: float, q_r: float, theta: float, p: PhysicalParams
) -> tuple[float, float, float]:
    """Same as exact_forward_map with sin(q)/q replaced by cos(q/2)"""
    return _forward_map(T_l, T_r, q_l, q_r, theta, p, cos_half(q_l), cos_half(q_r))


def kernel_gap(q: float) -> float:
    return abs(kernels.eval(KernelKind.SINC, q, SERIES_CONFIG) - cos_half(q))


def a_matrix_exact(q_l: float, q_r: float, p: PhysicalParams) -> Matrix:
    sinc_l = kernels.eval(KernelKind.SINC, q_l, SERIES_CONFIG)
    sinc_r = kernels.eval(KernelKind.SINC, q_r, SERIES_CONFIG)
    # fmt: off
    return np.array([
        [-1.0, 0.0,           1.0, 0.0],
        [0.0,  1.0,           0.0, 1.0],
        [0.0,  p.l_r * sinc_r, 0.0, -p.l_l * sinc_l],
    ])
    # fmt: on


def a_bar(q_l: float, q_r: float, p: PhysicalParams) -> Matrix:
    # fmt: off
    return np.array([
        [-1.0, 0.0,                   1.0, 0.0],
        [0.0,  1.0,                   0.0, 1.0],
        [0.0,  p.l_r * cos_half(q_r), 0.0, -p.l_l * cos_half(q_l)],
    ])
    # fmt: on


def _spread(q_l: float, q_r: float, p: PhysicalParams) -> float:
    """l_l cos(q_l/2) + l_r cos(q_r/2), the common denominator of A_bar+"""
    spread = p.l_l * cos_half(q_l) + p.l_r * cos_half(q_r)
    if spread <= MIN_DENOMINATOR:
        raise InfeasibleCommand(f"allocation denominator vanishes at q_l={q_l:.6g}, q_r={q_r:.6g}")
    return spread


def a_bar_plus(q_l: float, q_r: float, p: PhysicalParams) -> Matrix:
    spread = _spread(q_l, q_r, p)
    left, right = p.l_l * cos_half(q_l) / spread, p.l_r * cos_half(q_r) / spread
    # fmt: off
    return np.array([
        [-0.5, 0.0,   0.0],
        [0.0,  left,  1 / spread],
        [0.5,  0.0,   0.0],
        [0.0,  right, -1 / spread],
    ])
    # fmt: on


def a_plus_exact(q_l: float, q_r: float, p: PhysicalParams) -> Matrix:
    """Pseudo-inverse of the unapproximated map, undefined when q_l = q_r = 0"""
    den = p.l_l * q_r * math.sin(q_l) + p.l_r * q_l * math.sin(q_r)
    if abs(den) <= MIN_DENOMINATOR:
        raise InfeasibleCommand(f"exact pseudo-inverse undefined at q_l={q_l:.6g}, q_r={q_r:.6g}")
    # fmt: off
    return np.array([
        [-0.5, 0.0,                              0.0],
        [0.0,  p.l_l * q_r * math.sin(q_l) / den, q_l * q_r / den],
        [0.5,  0.0,                              0.0],
        [0.0,  p.l_r * q_l * math.sin(q_r) / den, -q_l * q_r / den],
    ])
    # fmt: on


def pinv_map(
    upsilon_x: float, upsilon_z: float, tau_theta: float, q_l: float, q_r: float, p: PhysicalParams
) -> Vector:
    """v = A_bar+ u, ordered (T_r sin q_r, T_r cos q_r, T_l sin q_l, T_l cos q_l)"""
    spread = _spread(q_l, q_r, p)
    return np.array(
        [
            -0.5 * upsilon_x,
            (p.l_l * cos_half(q_l) * upsilon_z + tau_theta) / spread,
            0.5 * upsilon_x,
            (p.l_r * cos_half(q_r) * upsilon_z - tau_theta) / spread,
        ]
    )


def _arctan_ratio(num: float, den: float) -> float:
    """arctan(num / den) with the +-pi/2 limit when den is zero"""
    if den == 0:
        return math.copysign(math.pi / 2, num) if num != 0 else 0.0
    return math.atan(num / den)


def fixed_point_map(x: Vector, upsilon_x: float, upsilon_z: float, tau_theta: float, p: PhysicalParams) -> Vector:
    """(T_l, T_r, q_l_d, q_r_d) recovered from v = A_bar+(q_l_d, q_r_d) u"""
    _, _, q_l, q_r = x
    spread = _spread(q_l, q_r, p)
    half_x = 0.5 * upsilon_x
    cos_l = p.l_r * cos_half(q_r) * upsilon_z - tau_theta
    cos_r = p.l_l * cos_half(q_l) * upsilon_z + tau_theta
    return np.array(
        [
            math.hypot(half_x, cos_l / spread),
            math.hypot(half_x, cos_r / spread),
            _arctan_ratio(upsilon_x * spread, 2 * cos_l),
            _arctan_ratio(-upsilon_x * spread, 2 * cos_r),
        ]
    )


def residual(x: Vector, upsilon_x: float, upsilon_z: float, tau_theta: float, p: PhysicalParams) -> Vector:
    x = np.asarray(x, dtype=np.float64)
    return x - fixed_point_map(x, upsilon_x, upsilon_z, tau_theta, p)


def _jacobian(x: Vector, upsilon_x: float, upsilon_z: float, tau_theta: float, p: PhysicalParams) -> Matrix:
    J = np.empty((4, 4))
    for i in range(4):
        dx = np.zeros(4)
        dx[i] = JACOBIAN_STEP
        forward = residual(x + dx, upsilon_x, upsilon_z, tau_theta, p)
        backward = residual(x - dx, upsilon_x, upsilon_z, tau_theta, p)
        J[:, i] = (forward - backward) / (2 * JACOBIAN_STEP)
    return J


def _solution(x: Vector, norm: float, iterations: int) -> AllocationSolution:
    return AllocationSolution(
        T_l=float(x[0]),
        T_r=float(x[1]),
        q_l_d=float(x[2]),
        q_r_d=float(x[3]),
        residual_norm=norm,
        iterations=iterations,
    )


def solve(
    upsilon_x: float,
    upsilon_z: float,
    tau_theta: float,
    p: PhysicalParams,
    settings: SolverSettings,
    guess: Vector | None = None,
) -> AllocationSolution:
    """Damped Newton on the residual, falling back to plain fixed-point iteration

    `guess` overrides the configured initial guess (warm start).
    """
    x = np.array(settings.initial_guess if guess is None else guess, dtype=np.float64)
    args = (upsilon_x, upsilon_z, tau_theta, p)

    norm = float(np.linalg.norm(residual(x, *args)))
    iterations = 0
    while iterations < settings.max_iterations:
        if norm <= settings.tolerance:
            return _solution(x, norm, iterations)
        iterations += 1

        f = residual(x, *args)
        try:
            step = np.linalg.solve(_jacobian(x, *args), -f)
        except np.linalg.LinAlgError:
            break

        scale = settings.damping
        for _ in range(MAX_BACKTRACKS):
            candidate = x + scale * step
            candidate_norm = float(np.linalg.norm(residual(candidate, *args)))
            if candidate_norm < norm:
                break
            scale /= 2
        else:
            # Newton stalled
            break
        x, norm = candidate, candidate_norm

    # Fixed-point iteration uses whatever budget Newton left over, at least one sweep
    for _ in range(max(settings.max_iterations - iterations, 1)):
        if norm <= settings.tolerance:
            return _solution(x, norm, iterations)
        iterations += 1
        x = fixed_point_map(x, *args)
        norm = float(np.linalg.norm(residual(x, *args)))

    if norm <= settings.tolerance:
        return _solution(x, norm, iterations)
    raise NonConvergence(
        f"allocation did not converge after {iterations} iterations (residual {norm:.3g})",
        last_iterate=x,
        residual_norm=norm,
    )
