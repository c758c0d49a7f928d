"""Passivity-based tracking control and its Lyapunov diagnostics"""
from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from soft_pvtol.dynamics import (
    DOF,
    QL,
    QR,
    GenState,
    PhysicalParams,
    coriolis_matrix,
    gravity_vector,
    mass_matrix,
)
from soft_pvtol.exceptions import InvalidParameters
from soft_pvtol.kernels import KernelConfig
from soft_pvtol.types import Matrix, Vector

DEFAULT_K = (2.55, 2.55, 10.5, 21.0, 21.0)
DEFAULT_LAMBDA = (1.0, 1.0, 5.0, 10.0, 10.0)

PRESCRIBED_ARM_AMPLITUDE = 0.2


@dataclass(frozen=True)
class Gains:
    """Diagonals of K and Lambda"""

    K: tuple[float, ...] = DEFAULT_K
    Lambda: tuple[float, ...] = DEFAULT_LAMBDA

    def __post_init__(self) -> None:
        for name in ("K", "Lambda"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != DOF:
                raise InvalidParameters(f"gains.{name} needs {DOF} entries, got {len(values)}")
            for i, value in enumerate(values, start=1):
                if not math.isfinite(value) or value <= 0:
                    raise InvalidParameters(f"gains.{name}.{i} must be > 0, got {value}")
            object.__setattr__(self, name, values)

    @property
    def K_matrix(self) -> Matrix:
        return np.diag(self.K)

    @property
    def Lambda_matrix(self) -> Matrix:
        return np.diag(self.Lambda)


@dataclass
class ReferenceSample:
    q_d: Vector
    qdot_d: Vector
    qddot_d: Vector

    def __post_init__(self) -> None:
        self.q_d = np.array(self.q_d, dtype=np.float64).reshape(DOF)
        self.qdot_d = np.array(self.qdot_d, dtype=np.float64).reshape(DOF)
        self.qddot_d = np.array(self.qddot_d, dtype=np.float64).reshape(DOF)

    def with_arms(self, q: Vector, qdot: Vector, qddot: Vector) -> ReferenceSample:
        """Copy with the (q_l, q_r) entries replaced"""
        sample = ReferenceSample(self.q_d, self.qdot_d, self.qddot_d)
        sample.q_d[QL:] = q
        sample.qdot_d[QL:] = qdot
        sample.qddot_d[QL:] = qddot
        return sample


def pose_reference(t: float) -> ReferenceSample:
    """Sinusoidal sweep in x, slow bob in z, level pitch; arm entries are zero"""
    q_d = np.array([4 * math.sin(t / 2), 3 * math.cos(t / 10) + 4, 0.0, 0.0, 0.0])
    qdot_d = np.array([2 * math.cos(t / 2), -0.3 * math.sin(t / 10), 0.0, 0.0, 0.0])
    qddot_d = np.array([-math.sin(t / 2), -0.03 * math.cos(t / 10), 0.0, 0.0, 0.0])
    return ReferenceSample(q_d, qdot_d, qddot_d)


def prescribed_reference(t: float) -> ReferenceSample:
    """Pose sweep plus antisymmetric sinusoidal arm bending, all analytic"""
    a = PRESCRIBED_ARM_AMPLITUDE
    arm = np.array([1.0, -1.0])
    return pose_reference(t).with_arms(
        arm * a * math.sin(t / 2),
        arm * a / 2 * math.cos(t / 2),
        arm * -a / 4 * math.sin(t / 2),
    )


def hover_reference(x: float, z: float) -> ReferenceSample:
    zeros = np.zeros(DOF)
    return ReferenceSample(np.array([x, z, 0.0, 0.0, 0.0]), zeros, zeros)


@dataclass
class ArmRefFilterState:
    """First-order filter turning raw allocation curvatures into smooth references

    The rate and acceleration estimates are backward differences of the
    previous stage, each passed through the same filter.
    """

    tau: float = 0.05
    q: Vector | None = None
    qdot: Vector = field(default_factory=lambda: np.zeros(2))
    qddot: Vector = field(default_factory=lambda: np.zeros(2))
    primed: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.tau) or self.tau <= 0:
            raise InvalidParameters(f"sim.arm_filter_tau must be > 0, got {self.tau}")
        if self.q is not None:
            self.q = np.array(self.q, dtype=np.float64).reshape(2)


def arm_reference(
    arm_filter: ArmRefFilterState, q_l_d_raw: float, q_r_d_raw: float, h: float
) -> tuple[ArmRefFilterState, tuple[Vector, Vector, Vector]]:
    if h <= 0:
        raise InvalidParameters(f"step size must be > 0, got {h}")

    raw = np.array([q_l_d_raw, q_r_d_raw], dtype=np.float64)
    alpha = -math.expm1(-h / arm_filter.tau)

    if arm_filter.q is None:
        arm_filter.q = raw.copy()

    q_prev = arm_filter.q
    q_new = q_prev + alpha * (raw - q_prev)

    if not arm_filter.primed:
        # No history yet, so no derivative estimate
        arm_filter.qdot = np.zeros(2)
        arm_filter.qddot = np.zeros(2)
        arm_filter.primed = True
    else:
        qdot_prev = arm_filter.qdot
        qdot_new = qdot_prev + alpha * ((q_new - q_prev) / h - qdot_prev)
        arm_filter.qddot = arm_filter.qddot + alpha * ((qdot_new - qdot_prev) / h - arm_filter.qddot)
        arm_filter.qdot = qdot_new

    arm_filter.q = q_new
    return arm_filter, (arm_filter.q.copy(), arm_filter.qdot.copy(), arm_filter.qddot.copy())


ARM_FILTER_STATES = 6


def arm_filter_initial(q_arms: Vector) -> Vector:
    """Filter state at rest on the given curvatures"""
    return np.concatenate([np.asarray(q_arms, dtype=np.float64).reshape(2), np.zeros(4)])


def arm_filter_rates(z: Vector, raw: Vector, tau: float) -> Vector:
    """Time derivative of the continuous arm-reference filter

    z stacks the filtered (q, qdot, qddot) of both arms. Each block lags the
    derivative of the block before it with time constant tau, the continuous
    counterpart of `arm_reference`.
    """
    if not math.isfinite(tau) or tau <= 0:
        raise InvalidParameters(f"sim.arm_filter_tau must be > 0, got {tau}")
    q, qdot, qddot = z[:2], z[2:4], z[4:ARM_FILTER_STATES]
    dq = (np.asarray(raw, dtype=np.float64) - q) / tau
    dqdot = (dq - qdot) / tau
    dqddot = (dqdot - qddot) / tau
    return np.concatenate([dq, dqdot, dqddot])


def arm_filter_references(z: Vector) -> tuple[Vector, Vector, Vector]:
    return z[:2].copy(), z[2:4].copy(), z[4:ARM_FILTER_STATES].copy()


def _errors(state: GenState, ref: ReferenceSample, gains: Gains) -> tuple[Vector, Vector, Vector, Vector]:
    """(q_tilde, upsilon, a, r) of the passivity-based law"""
    lam = np.asarray(gains.Lambda)
    q_tilde = state.q - ref.q_d
    qdot_tilde = state.qdot - ref.qdot_d
    upsilon = ref.qdot_d - lam * q_tilde
    a = ref.qddot_d - lam * qdot_tilde
    r = state.qdot - upsilon
    return q_tilde, upsilon, a, r


def tracking_control(
    state: GenState, ref: ReferenceSample, gains: Gains, p: PhysicalParams, cfg: KernelConfig
) -> Vector:
    """tau = D(q) a + C(q, qdot) upsilon + g(q) - K r"""
    _, upsilon, a, r = _errors(state, ref, gains)
    D = mass_matrix(state.q, p, cfg)
    C = coriolis_matrix(state.q, state.qdot, p, cfg)
    return D @ a + C @ upsilon + gravity_vector(state.q, p, cfg) - np.asarray(gains.K) * r


def closed_loop_residual(
    state: GenState,
    ref: ReferenceSample,
    qddot: Vector,
    gains: Gains,
    p: PhysicalParams,
    cfg: KernelConfig,
) -> Vector:
    """D r_dot + C r + K r, zero along the closed loop"""
    _, _, a, r = _errors(state, ref, gains)
    r_dot = qddot - a
    D = mass_matrix(state.q, p, cfg)
    C = coriolis_matrix(state.q, state.qdot, p, cfg)
    return D @ r_dot + C @ r + np.asarray(gains.K) * r


def lyapunov_value(
    state: GenState, ref: ReferenceSample, gains: Gains, p: PhysicalParams, cfg: KernelConfig
) -> tuple[float, Vector]:
    q_tilde, _, _, r = _errors(state, ref, gains)
    D = mass_matrix(state.q, p, cfg)
    weights = np.asarray(gains.Lambda) * np.asarray(gains.K)
    V = 0.5 * float(r @ D @ r) + float(q_tilde @ (weights * q_tilde))
    return V, r


def decay_rate_matrices(gains: Gains) -> tuple[Matrix, Matrix]:
    """Q of the Lyapunov derivative bound and the constant block Lambda K of P"""
    K, lam = gains.K_matrix, gains.Lambda_matrix
    Q = np.block([[K, K @ lam], [K @ lam, 2 * lam.T @ K @ lam]])
    return Q, lam @ K


def decay_rate_bound(
    gains: Gains,
    p: PhysicalParams,
    q_samples: Iterable[Vector],
    cfg: KernelConfig | None = None,
) -> float:
    """lambda_min(Q) / max over the samples of lambda_max(P(q))"""
    cfg = cfg or KernelConfig()
    Q, lam_k = decay_rate_matrices(gains)
    lambda_min_q = float(np.linalg.eigvalsh(Q)[0])
    lambda_max_lam_k = float(np.max(np.diag(lam_k)))

    lambda_max_p = None
    for q in q_samples:
        top = 0.5 * float(np.linalg.eigvalsh(mass_matrix(np.asarray(q, dtype=np.float64), p, cfg))[-1])
        candidate = max(top, lambda_max_lam_k)
        lambda_max_p = candidate if lambda_max_p is None else max(lambda_max_p, candidate)

    if lambda_max_p is None:
        raise InvalidParameters("decay_rate_bound needs at least one q sample")
    return lambda_min_q / lambda_max_p
