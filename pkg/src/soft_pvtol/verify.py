"""Seeded numerical checks of the model, controller and allocation properties

Each suite returns the worst residual it saw against its tolerance. Suites
never raise; a library exception inside a suite is reported as a failure.
"""
from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, replace

import numpy as np
from rich.console import Console
from rich.table import Table

from soft_pvtol import allocation, kernels
from soft_pvtol.controller import Gains, decay_rate_bound
from soft_pvtol.dynamics import (
    DOF,
    GenState,
    PhysicalParams,
    coriolis_matrix,
    coriolis_matrix_expanded,
    gravity_vector,
    inertia_margins,
    mass_matrix,
    mass_matrix_expanded,
    potential_energy,
    skew_defect,
)
from soft_pvtol.exceptions import SoftPvtolException
from soft_pvtol.kernels import SERIES_CONFIG, KernelConfig
from soft_pvtol.simulator import LogRecord, SimConfig, energy_audit, rk4_step, run_closed_loop, run_open_loop
from soft_pvtol.types import KernelKind, KernelMode, Matrix, ReferenceKind, Vector

console = Console(stderr=True)

# fmt: off
EXPECTED_LIMITS = {
    KernelKind.SINC: 1.0, KernelKind.BEND: 0.0,
    KernelKind.D1: 0.0, KernelKind.D2: 0.5, KernelKind.D3: 0.0,
    KernelKind.D4: 0.5, KernelKind.D5: 0.25, KernelKind.D6: 0.25,
    KernelKind.C1: 1 / 3, KernelKind.C2: 0.0, KernelKind.C3: 1 / 3,
    KernelKind.C4: 0.0, KernelKind.C5: 0.0, KernelKind.C6: 0.0,
    KernelKind.GRAV: 0.5,
}
# fmt: on

# (kernel, derivative kernel, factor): d kernel / dq = factor * derivative kernel
DERIVATIVE_RELATIONS = (
    (KernelKind.D1, KernelKind.C1, 1.0),
    (KernelKind.D2, KernelKind.C2, 1.0),
    (KernelKind.D3, KernelKind.C3, -1.0),
    (KernelKind.D4, KernelKind.C4, 1.0),
    (KernelKind.D5, KernelKind.C5, -4.0),
    (KernelKind.D6, KernelKind.C6, -4.0),
    (KernelKind.BEND, KernelKind.GRAV, 1.0),
)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    seconds: float = 0.0
    detail: str = ""


def _random_arms(rng: np.random.Generator, low: float, high: float) -> tuple[float, float]:
    magnitude = rng.uniform(low, high, size=2)
    sign = rng.choice([-1.0, 1.0], size=2)
    return float(magnitude[0] * sign[0]), float(magnitude[1] * sign[1])


def random_state(rng: np.random.Generator, low: float = 0.1, high: float = math.pi, speed: float = 5.0) -> GenState:
    """Random state with |q_l|, |q_r| in [low, high] and |qdot| <= speed"""
    q_l, q_r = _random_arms(rng, low, high)
    q = np.array([rng.uniform(-5, 5), rng.uniform(0, 10), rng.uniform(-math.pi, math.pi), q_l, q_r])
    return GenState(q, rng.uniform(-speed, speed, size=DOF))


def kernel_limits_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    table = kernels.limit_table()
    worst = 0.0
    for kind, expected in EXPECTED_LIMITS.items():
        worst = max(worst, abs(table[kind] - expected), abs(kernels.series(kind, 0.0) - table[kind]))
    return worst, 1e-12


def kernel_derivatives_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    cfg = KernelConfig()
    fd = 1e-5
    worst = 0.0
    for q in rng.uniform(cfg.delta, math.pi, size=200):
        for kind, derivative, factor in DERIVATIVE_RELATIONS:
            numeric = (kernels.exact(kind, q + fd) - kernels.exact(kind, q - fd)) / (2 * fd)
            analytic = factor * kernels.exact(derivative, q)
            worst = max(worst, abs(numeric - analytic) / max(1.0, abs(analytic)))
    return worst, 1e-6


def kernel_series_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    delta = KernelConfig().delta
    worst = 0.0
    for kind in KernelKind:
        for q in (delta, -delta, kernels.MAX_DELTA):
            worst = max(worst, abs(kernels.series(kind, q) - kernels.exact(kind, q)))
    return worst, 1e-8


def parameter_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    """Negative of the smallest positive definiteness margin, must stay below 0"""
    try:
        p.validate()
    except SoftPvtolException:
        return math.inf, 0.0
    return -min(inertia_margins(p)), 0.0


def positive_definite_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    """Negative of the smallest eigenvalue of D over a curvature grid"""
    cfg = KernelConfig()
    grid = np.linspace(-math.pi, math.pi, 100)
    smallest = math.inf
    q = np.zeros(DOF)
    for q_l in grid:
        for q_r in grid:
            q[3], q[4] = q_l, q_r
            smallest = min(smallest, float(np.linalg.eigvalsh(mass_matrix(q, p, cfg))[0]))
    return -smallest, 0.0


def skew_symmetry_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    cfg = KernelConfig()
    worst = 0.0
    for _ in range(1000):
        S = skew_defect(random_state(rng), p, cfg)
        worst = max(worst, float(np.abs(S + S.T).max()))
    return worst, 1e-9


def finite_difference_mass_matrix_dot(
    state: GenState, p: PhysicalParams, cfg: KernelConfig, h: float = 1e-6
) -> Matrix:
    return (mass_matrix(state.q + h * state.qdot, p, cfg) - mass_matrix(state.q - h * state.qdot, p, cfg)) / (2 * h)


def skew_symmetry_fd_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    cfg = KernelConfig()
    worst = 0.0
    for _ in range(1000):
        state = random_state(rng)
        S = finite_difference_mass_matrix_dot(state, p, cfg) - 2 * coriolis_matrix(state.q, state.qdot, p, cfg)
        worst = max(worst, float(np.abs(S + S.T).max()))
    return worst, 1e-5


def form_equivalence_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    cfg = KernelConfig()
    worst = 0.0
    for _ in range(1000):
        state = random_state(rng)
        d_err = float(np.abs(mass_matrix_expanded(state.q, p, cfg) - mass_matrix(state.q, p, cfg)).max())
        c_err = float(
            np.abs(
                coriolis_matrix_expanded(state.q, state.qdot, p, cfg) - coriolis_matrix(state.q, state.qdot, p, cfg)
            ).max()
        )
        worst = max(worst, d_err, c_err)
    return worst, 1e-10


def gravity_gradient_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    fd = 1e-6
    worst = 0.0
    for _ in range(200):
        q = random_state(rng).q
        numeric = np.empty(DOF)
        for i in range(DOF):
            dq = np.zeros(DOF)
            dq[i] = fd
            numeric[i] = (potential_energy(q + dq, p, SERIES_CONFIG) - potential_energy(q - dq, p, SERIES_CONFIG)) / (
                2 * fd
            )
        worst = max(worst, float(np.abs(numeric - gravity_vector(q, p, SERIES_CONFIG)).max()))
    return worst, 1e-5


def passivity_input(p: PhysicalParams, cfg: KernelConfig) -> Callable[[float, Vector, Vector], Vector]:
    """Gravity compensation plus bounded cosine forcing (no secular drift of the arms)"""

    def tau_fn(t: float, q: Vector, qdot: Vector) -> Vector:
        # fmt: off
        forcing = np.array([
            0.5 * math.cos(t), 0.3 * math.cos(0.7 * t), 0.2 * math.cos(2 * t),
            0.05 * math.cos(t), -0.05 * math.cos(1.5 * t),
        ])
        # fmt: on
        return gravity_vector(q, p, cfg) + forcing

    return tau_fn


PASSIVITY_INITIAL = GenState(np.array([0.0, 1.0, 0.0, 0.3, -0.4]), np.zeros(DOF))
CONSERVATIVE_INITIAL = GenState(np.array([0.0, 1.0, 0.0, 0.3, -0.4]), np.array([0.05, -0.05, 0.05, 0.1, -0.1]))


def passivity_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    t_end = 10.0
    log = run_open_loop(PASSIVITY_INITIAL, passivity_input(p, SERIES_CONFIG), t_end, 0.01, p, SERIES_CONFIG)
    return energy_audit(log, p, SERIES_CONFIG), 1e-4 * t_end


def conservative_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    p0 = replace(p, g=0.0)
    log = run_open_loop(CONSERVATIVE_INITIAL, lambda t, q, qdot: np.zeros(DOF), 10.0, 0.01, p0, SERIES_CONFIG)
    return max(abs(r.H - log[0].H) for r in log), 1e-8


def decay_rate_check(
    log: list[LogRecord], gains: Gains, p: PhysicalParams, cfg: KernelConfig, horizon: float = 10.0
) -> tuple[float, float, float]:
    """(worst relative V increase per step, fitted decay rate, rho)"""
    V = np.array([r.V for r in log])
    t = np.array([r.t for r in log])
    increase = float(np.max(V[1:] / V[:-1] - 1.0))
    window = (t <= horizon) & (V > 0)
    rate = -float(np.polyfit(t[window], np.log(V[window]), 1)[0])
    rho = decay_rate_bound(gains, p, [r.q for r in log], cfg)
    return increase, rate, rho


def exponential_decay_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    """max(relative V increase, 0.5 rho - fitted rate), must stay below 1e-6"""
    cfg = SimConfig(
        t_end=10.0,
        params=p,
        kernels=KernelConfig(mode=KernelMode.SERIES),
        reference=ReferenceKind.PRESCRIBED_SMOOTH,
    )
    log = run_closed_loop(cfg, progress=False)
    increase, rate, rho = decay_rate_check(log, cfg.gains, p, cfg.kernels)
    return max(increase, 0.5 * rho - rate), 1e-6


def hover_allocation_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    weight = p.theta1 * p.g
    solution = allocation.solve(0.0, weight, 0.0, p, allocation.SolverSettings())
    expected = np.array([weight / 2, weight / 2, 0.0, 0.0])
    return float(np.abs(solution.as_vector() - expected).max()), 1e-6


def pinv_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    worst = 0.0
    for q_l, q_r in rng.uniform(-math.pi + 1e-6, math.pi - 1e-6, size=(1000, 2)):
        product = allocation.a_bar(q_l, q_r, p) @ allocation.a_bar_plus(q_l, q_r, p)
        worst = max(worst, float(np.abs(product - np.eye(3)).max()))
    return worst, 1e-10


def integrator_order_suite(rng: np.random.Generator, p: PhysicalParams) -> tuple[float, float]:
    """Distance of the RK4 error ratio per halving from the [12, 20] band"""

    def error(h: float) -> float:
        y = np.array([1.0])
        for k in range(int(round(1 / h))):
            y = rk4_step(lambda t, y: -y, k * h, y, h)
        return abs(float(y[0]) - math.exp(-1))

    ratio = error(0.1) / error(0.05)
    return max(12 - ratio, ratio - 20, 0.0), 0.0


SUITES: dict[str, Callable[[np.random.Generator, PhysicalParams], tuple[float, float]]] = {
    "parameters": parameter_suite,
    "kernel limits": kernel_limits_suite,
    "kernel derivatives": kernel_derivatives_suite,
    "kernel series": kernel_series_suite,
    "positive definite inertia": positive_definite_suite,
    "skew symmetry": skew_symmetry_suite,
    "skew symmetry (finite difference)": skew_symmetry_fd_suite,
    "form equivalence": form_equivalence_suite,
    "gravity gradient": gravity_gradient_suite,
    "passivity": passivity_suite,
    "energy conservation": conservative_suite,
    "exponential decay": exponential_decay_suite,
    "hover allocation": hover_allocation_suite,
    "pseudo-inverse": pinv_suite,
    "integrator order": integrator_order_suite,
}


def run_suites(seed: int, p: PhysicalParams | None = None, names: list[str] | None = None) -> list[SuiteResult]:
    p = p or PhysicalParams()
    results = []
    for name, suite in SUITES.items():
        if names is not None and name not in names:
            continue
        # Every suite gets its own generator so selecting suites does not change the samples
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        start = time.perf_counter()
        try:
            worst, tolerance = suite(rng, p)
            passed = worst <= tolerance
            detail = ""
        except SoftPvtolException as e:
            worst, tolerance, passed, detail = math.inf, 0.0, False, str(e)
        results.append(SuiteResult(name, passed, worst, tolerance, time.perf_counter() - start, detail))
    return results


def render_results(results: list[SuiteResult], out: Console | None = None) -> None:
    table = Table(title="Verification")
    table.add_column("Suite")
    table.add_column("Status")
    table.add_column("Worst", justify="right")
    table.add_column("Tolerance", justify="right")
    for result in results:
        status = "[green]pass" if result.passed else "[red]FAIL"
        table.add_row(result.name, status, f"{result.worst:.3e}", f"{result.tolerance:.1e}")
    (out or console).print(table)
    for result in results:
        if result.detail:
            (out or console).print(f"[red]{result.name}: {result.detail}")
