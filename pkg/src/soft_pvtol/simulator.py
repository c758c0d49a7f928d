"""Fixed-step closed-loop simulation, energy bookkeeping and CSV logging"""
from __future__ import annotations

import csv
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np
from rich.console import Console

from soft_pvtol import allocation
from soft_pvtol.allocation import AllocationSolution, SolverSettings, WrenchCommand
from soft_pvtol.controller import (
    ARM_FILTER_STATES,
    Gains,
    ReferenceSample,
    arm_filter_initial,
    arm_filter_rates,
    arm_filter_references,
    hover_reference,
    lyapunov_value,
    pose_reference,
    prescribed_reference,
    tracking_control,
)
from soft_pvtol.dynamics import (
    DOF,
    QL,
    QR,
    THETA,
    GenState,
    PhysicalParams,
    forward_dynamics,
    total_energy,
    warn_curvature,
)
from soft_pvtol.exceptions import InfeasibleCommand, IntegrationFailure, InvalidParameters, NonConvergence
from soft_pvtol.kernels import KernelConfig
from soft_pvtol.types import COORDINATE_NAMES, AccelFn, InputFn, Quadrature, ReferenceKind, Vector

console = Console(stderr=True)

PROGRESS_EVERY = 5.0

FLIGHT_INITIAL_Q = (5.0, 0.0, 0.2 * math.pi, 0.01 * math.pi, -0.15 * math.pi)


def _flight_initial_state() -> GenState:
    return GenState(np.array(FLIGHT_INITIAL_Q), np.zeros(DOF))


@dataclass
class SimConfig:
    t_end: float = 40.0
    h: float = 0.01
    initial: GenState = field(default_factory=_flight_initial_state)
    params: PhysicalParams = field(default_factory=PhysicalParams)
    gains: Gains = field(default_factory=Gains)
    kernels: KernelConfig = field(default_factory=KernelConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    arm_filter_tau: float = 0.05
    reference: ReferenceKind = ReferenceKind.PAPER_TRAJECTORY
    ideal_wrench: bool = False
    output: Path = Path("log.csv")
    hover_x: float = 0.0
    hover_z: float = 7.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.h) or self.h <= 0:
            raise InvalidParameters(f"sim.h must be > 0, got {self.h}")
        if not math.isfinite(self.t_end) or self.t_end < self.h:
            raise InvalidParameters(f"sim.t_end must be >= sim.h, got {self.t_end}")
        if not math.isfinite(self.arm_filter_tau) or self.arm_filter_tau <= 0:
            raise InvalidParameters(f"sim.arm_filter_tau must be > 0, got {self.arm_filter_tau}")
        if not self.initial.finite:
            raise InvalidParameters("initial state must be finite")
        if not self.initial.within_curvature_bounds:
            raise InvalidParameters(
                f"initial curvatures must satisfy |q| <= pi, got q_l={self.initial.q[QL]}, q_r={self.initial.q[QR]}"
            )

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.h))

    @property
    def uses_allocation(self) -> bool:
        return self.reference is not ReferenceKind.PRESCRIBED_SMOOTH


@dataclass(frozen=True)
class LogRecord:
    t: float
    q: Vector
    qdot: Vector
    q_d: Vector
    tau: Vector
    T_l: float
    T_r: float
    q_l_d: float
    q_r_d: float
    V: float
    H: float
    W: float
    alloc_residual: float
    alloc_iterations: int
    alloc_converged: bool = True

    @staticmethod
    def header() -> list[str]:
        columns = ["t"]
        columns += list(COORDINATE_NAMES)
        columns += [f"{name}_dot" for name in COORDINATE_NAMES]
        columns += [f"{name}_d" for name in COORDINATE_NAMES]
        columns += ["tau_x", "tau_z", "tau_theta", "tau_l", "tau_r"]
        columns += ["T_l", "T_r", "q_l_d", "q_r_d", "V", "H", "W"]
        columns += ["alloc_residual", "alloc_iterations", "alloc_converged"]
        return columns

    def row(self) -> list[str]:
        values = [self.t, *self.q, *self.qdot, *self.q_d, *self.tau]
        values += [self.T_l, self.T_r, self.q_l_d, self.q_r_d, self.V, self.H, self.W, self.alloc_residual]
        return [f"{float(v):.17g}" for v in values] + [str(self.alloc_iterations), str(int(self.alloc_converged))]

    @property
    def state(self) -> GenState:
        return GenState(self.q, self.qdot)


def rk4_step(
    f: Callable[[float, Vector], Vector], t: float, y: Vector, h: float, k1: Vector | None = None
) -> Vector:
    """Classical Runge-Kutta step; pass k1 when f(t, y) is already known"""
    if k1 is None:
        k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def step(state: GenState, accel_fn: AccelFn, h: float, t: float = 0.0) -> GenState:
    """One classical Runge-Kutta step of (q, qdot)' = (qdot, accel_fn(t, q, qdot))"""
    if h <= 0:
        raise InvalidParameters(f"step size must be > 0, got {h}")

    def f(t: float, y: Vector) -> Vector:
        q, qdot = y[:DOF], y[DOF:]
        qddot = np.asarray(accel_fn(t, q, qdot), dtype=np.float64)
        if not np.all(np.isfinite(qddot)):
            raise IntegrationFailure(f"non-finite acceleration at t={t:.6g}")
        return np.concatenate([qdot, qddot])

    y = rk4_step(f, t, np.concatenate([state.q, state.qdot]), h)
    if not np.all(np.isfinite(y)):
        raise IntegrationFailure(f"non-finite state after step at t={t:.6g}")
    return GenState(y[:DOF], y[DOF:])


def _reference(cfg: SimConfig, t: float) -> ReferenceSample:
    match cfg.reference:
        case ReferenceKind.PAPER_TRAJECTORY:
            return pose_reference(t)
        case ReferenceKind.PRESCRIBED_SMOOTH:
            return prescribed_reference(t)
        case ReferenceKind.HOVER:
            return hover_reference(cfg.hover_x, cfg.hover_z)


class _Allocator:
    """Warm-started allocation with reuse of the last good solution"""

    def __init__(self, cfg: SimConfig) -> None:
        self.params = cfg.params
        self.settings = cfg.solver
        self.previous: AllocationSolution | None = None
        self.warned_thrust = False

    def __call__(self, t: float, tau: Vector, theta: float) -> AllocationSolution:
        cmd = WrenchCommand(float(tau[0]), float(tau[1]), float(tau[2]), theta)
        upsilon_x, upsilon_z = allocation.to_body_virtual(cmd)
        guess = None if self.previous is None else self.previous.as_vector()
        try:
            solution = allocation.solve(upsilon_x, upsilon_z, cmd.tau_theta, self.params, self.settings, guess)
        except (NonConvergence, InfeasibleCommand) as e:
            console.log(f"[red]t={t:.2f}s allocation failed: {e}")
            return self._fallback(e)

        if solution.exceeds(self.settings.thrust_max) and not self.warned_thrust:
            console.log(f"[yellow]t={t:.2f}s thrust exceeds {self.settings.thrust_max} N (not clipped)")
            self.warned_thrust = True
        self.previous = solution
        return solution

    def _fallback(self, e: Exception) -> AllocationSolution:
        if self.previous is not None:
            base = self.previous.as_vector()
            norm = getattr(e, "residual_norm", math.inf)
        elif isinstance(e, NonConvergence) and e.last_iterate is not None:
            base = np.asarray(e.last_iterate, dtype=np.float64)
            norm = e.residual_norm
        else:
            raise IntegrationFailure(f"allocation failed on the first step: {e}") from e
        return AllocationSolution(
            T_l=float(base[0]),
            T_r=float(base[1]),
            q_l_d=float(base[2]),
            q_r_d=float(base[3]),
            residual_norm=float(norm),
            iterations=self.settings.max_iterations,
            converged=False,
        )


_WORK = 2 * DOF + ARM_FILTER_STATES


@dataclass
class _Stage:
    ref: ReferenceSample
    tau: Vector
    solution: AllocationSolution
    rates: Vector


class _ClosedLoop:
    """Plant, tracking law, allocation and arm-reference filter as one ODE

    y stacks (q, qdot, arm filter state, supplied work). Everything is evaluated
    at each Runge-Kutta stage, so the loop converges at the integrator's order.
    """

    def __init__(self, cfg: SimConfig) -> None:
        self.cfg = cfg
        self.allocator = _Allocator(cfg) if cfg.uses_allocation else None

    def initial(self) -> Vector:
        s = self.cfg.initial
        return np.concatenate([s.q, s.qdot, arm_filter_initial(s.q[QL:]), [0.0]])

    def __call__(self, t: float, y: Vector) -> _Stage:
        cfg = self.cfg
        p, kcfg = cfg.params, cfg.kernels
        state = GenState(y[:DOF], y[DOF : 2 * DOF])
        z = y[2 * DOF : _WORK]
        theta = float(state.q[THETA])

        if self.allocator is None:
            ref = _reference(cfg, t)
            tau = tracking_control(state, ref, cfg.gains, p, kcfg)
            solution = AllocationSolution(0.0, 0.0, float(ref.q_d[QL]), float(ref.q_d[QR]), 0.0, 0)
            dz = np.zeros(ARM_FILTER_STATES)
        else:
            ref = _reference(cfg, t).with_arms(*arm_filter_references(z))
            tau = tracking_control(state, ref, cfg.gains, p, kcfg)
            solution = self.allocator(t, tau, theta)
            dz = arm_filter_rates(z, np.array([solution.q_l_d, solution.q_r_d]), cfg.arm_filter_tau)
            if not cfg.ideal_wrench:
                tau = np.array(tau, dtype=np.float64)
                tau[:3] = allocation.exact_forward_map(
                    solution.T_l, solution.T_r, solution.q_l_d, solution.q_r_d, theta, p
                )

        tau = np.asarray(tau, dtype=np.float64)
        qddot = forward_dynamics(state, tau, p, kcfg)
        if not np.all(np.isfinite(qddot)):
            raise IntegrationFailure(f"non-finite acceleration at t={t:.6g}")
        rates = np.concatenate([state.qdot, qddot, dz, [float(state.qdot @ tau)]])
        return _Stage(ref, tau, solution, rates)


def run_closed_loop(cfg: SimConfig, progress: bool = True) -> list[LogRecord]:
    """Fixed-step closed loop, one record per step including t = 0 and t = t_end

    The tracking law, the warm-started allocation solve and the arm-reference
    filter run inside every Runge-Kutta stage. A record holds the first-stage
    evaluation at its own time.
    """
    p, kcfg, h = cfg.params, cfg.kernels, cfg.h
    loop = _ClosedLoop(cfg)

    def rates(t: float, y: Vector) -> Vector:
        return loop(t, y).rates

    y = loop.initial()
    curvature_ok = True
    log: list[LogRecord] = []
    next_progress = PROGRESS_EVERY
    for k in range(cfg.steps + 1):
        t = k * h
        stage = loop(t, y)
        state = GenState(y[:DOF].copy(), y[DOF : 2 * DOF].copy())
        solution = stage.solution

        V, _ = lyapunov_value(state, stage.ref, cfg.gains, p, kcfg)
        log.append(
            LogRecord(
                t=t,
                q=state.q,
                qdot=state.qdot,
                q_d=stage.ref.q_d.copy(),
                tau=stage.tau.copy(),
                T_l=solution.T_l,
                T_r=solution.T_r,
                q_l_d=solution.q_l_d,
                q_r_d=solution.q_r_d,
                V=V,
                H=total_energy(state, p, kcfg),
                W=float(y[_WORK]),
                alloc_residual=solution.residual_norm,
                alloc_iterations=solution.iterations,
                alloc_converged=solution.converged,
            )
        )

        if curvature_ok:
            curvature_ok = warn_curvature(state, t)
        if progress and t >= next_progress:
            console.log(f"t={t:.1f}s x={state.q[0]:.3f} z={state.q[1]:.3f} theta={state.q[THETA]:.3f}")
            next_progress += PROGRESS_EVERY

        if k == cfg.steps:
            break
        y = rk4_step(rates, t, y, h, k1=stage.rates)
        if not np.all(np.isfinite(y)):
            raise IntegrationFailure(f"non-finite state after step at t={t:.6g}")

    return log


def run_open_loop(
    state: GenState,
    tau_fn: InputFn,
    t_end: float,
    h: float,
    p: PhysicalParams,
    cfg: KernelConfig,
) -> list[LogRecord]:
    """Integrate the plant under tau_fn(t, q, qdot), evaluated inside every stage"""
    if h <= 0 or t_end < h:
        raise InvalidParameters(f"need h > 0 and t_end >= h, got h={h}, t_end={t_end}")

    def rates(t: float, y: Vector) -> Vector:
        q, qdot = y[:DOF], y[DOF : 2 * DOF]
        tau = np.asarray(tau_fn(t, q, qdot), dtype=np.float64)
        qddot = forward_dynamics(GenState(q, qdot), tau, p, cfg)
        if not np.all(np.isfinite(qddot)):
            raise IntegrationFailure(f"non-finite acceleration at t={t:.6g}")
        return np.concatenate([qdot, qddot, [float(qdot @ tau)]])

    steps = int(round(t_end / h))
    y = np.concatenate([state.q, state.qdot, [0.0]])
    log: list[LogRecord] = []
    for k in range(steps + 1):
        t = k * h
        current = GenState(y[:DOF].copy(), y[DOF : 2 * DOF].copy())
        log.append(
            LogRecord(
                t=t,
                q=current.q,
                qdot=current.qdot,
                q_d=np.zeros(DOF),
                tau=np.asarray(tau_fn(t, current.q, current.qdot), dtype=np.float64),
                T_l=0.0,
                T_r=0.0,
                q_l_d=0.0,
                q_r_d=0.0,
                V=0.0,
                H=total_energy(current, p, cfg),
                W=float(y[-1]),
                alloc_residual=0.0,
                alloc_iterations=0,
            )
        )
        if k < steps:
            y = rk4_step(rates, t, y, h)
            if not np.all(np.isfinite(y)):
                raise IntegrationFailure(f"non-finite state after step at t={t:.6g}")
    return log


def energy_audit(
    log: list[LogRecord],
    p: PhysicalParams,
    cfg: KernelConfig,
    quadrature: Quadrature = Quadrature.RK4_STAGES,
) -> float:
    """max over the run of |H(t) - H(0) - supplied work up to t|

    RK4_STAGES takes the work integrated alongside the state (the W column),
    TRAPEZOID rebuilds it from the logged qdot and tau samples. H is recomputed
    from the logged state so the audit only depends on the log.
    """
    if not log:
        raise InvalidParameters("energy audit needs a nonempty log")

    H0 = total_energy(log[0].state, p, cfg)
    work = 0.0
    worst = 0.0
    for prev, curr in zip(log, log[1:]):
        match quadrature:
            case Quadrature.RK4_STAGES:
                work = curr.W - log[0].W
            case Quadrature.TRAPEZOID:
                dt = curr.t - prev.t
                work += 0.5 * dt * (float(prev.qdot @ prev.tau) + float(curr.qdot @ curr.tau))
        worst = max(worst, abs(total_energy(curr.state, p, cfg) - H0 - work))
    return worst


@dataclass(frozen=True)
class Summary:
    steps: int
    final_errors: tuple[float, float, float]
    max_abs_theta: float
    energy_residual: float
    mean_alloc_iterations: float
    nonconverged_steps: int
    final_thrusts: tuple[float, float]
    max_abs_curvature: float


def summarize(
    log: list[LogRecord], p: PhysicalParams, cfg: KernelConfig, quadrature: Quadrature = Quadrature.RK4_STAGES
) -> Summary:
    if not log:
        raise InvalidParameters("cannot summarize an empty log")
    last = log[-1]
    final_errors = tuple(float(last.q[i] - last.q_d[i]) for i in range(3))
    return Summary(
        steps=len(log),
        final_errors=final_errors,  # type: ignore[arg-type]
        max_abs_theta=max(abs(float(r.q[THETA])) for r in log),
        energy_residual=energy_audit(log, p, cfg, quadrature),
        mean_alloc_iterations=float(np.mean([r.alloc_iterations for r in log])),
        nonconverged_steps=sum(1 for r in log if not r.alloc_converged),
        final_thrusts=(last.T_l, last.T_r),
        max_abs_curvature=max(max(abs(float(r.q[QL])), abs(float(r.q[QR]))) for r in log),
    )


def write_csv(log: Iterable[LogRecord], out: Path | IO[str]) -> None:
    if isinstance(out, Path):
        with out.open("w", encoding="utf-8", newline="") as f:
            write_csv(log, f)
        return

    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LogRecord.header())
    for record in log:
        writer.writerow(record.row())
