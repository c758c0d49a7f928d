import csv
import io
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from soft_pvtol.config import load_config
from soft_pvtol.controller import Gains
from soft_pvtol.dynamics import DOF, GenState, PhysicalParams
from soft_pvtol.exceptions import IntegrationFailure, InvalidParameters
from soft_pvtol.kernels import SERIES_CONFIG, KernelConfig
from soft_pvtol.simulator import (
    FLIGHT_INITIAL_Q,
    LogRecord,
    SimConfig,
    energy_audit,
    rk4_step,
    run_closed_loop,
    run_open_loop,
    step,
    summarize,
    write_csv,
)
from soft_pvtol.types import KernelMode, Quadrature, ReferenceKind
from soft_pvtol.verify import CONSERVATIVE_INITIAL, PASSIVITY_INITIAL, passivity_input


CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture(scope="module")
def flight_log() -> list[LogRecord]:
    return run_closed_loop(SimConfig(), progress=False)


@pytest.fixture
def hover_config(hover_state: GenState) -> SimConfig:
    return SimConfig(t_end=1.0, initial=hover_state, reference=ReferenceKind.HOVER)


@pytest.fixture
def hover_log(hover_config: SimConfig) -> list[LogRecord]:
    return run_closed_loop(hover_config, progress=False)


def test_rk4_fourth_order():
    def error(h: float) -> float:
        y = np.array([1.0])
        for k in range(int(round(1 / h))):
            y = rk4_step(lambda t, y: -y, k * h, y, h)
        return abs(float(y[0]) - math.exp(-1))

    assert 12 <= error(0.1) / error(0.05) <= 20


def test_rk4_uses_time():
    y = rk4_step(lambda t, y: np.array([t]), 0.0, np.array([0.0]), 0.5)

    assert y == pytest.approx([0.125])


def test_step_rejects_non_finite_acceleration(hover_state: GenState):
    with pytest.raises(IntegrationFailure):
        step(hover_state, lambda t, q, qdot: np.full(DOF, math.nan), 0.01)


def test_step_rejects_bad_step_size(hover_state: GenState):
    with pytest.raises(InvalidParameters):
        step(hover_state, lambda t, q, qdot: np.zeros(DOF), 0.0)


def test_step_free_fall(hover_state: GenState):
    gravity = np.array([0.0, -9.8, 0.0, 0.0, 0.0])
    state = step(hover_state, lambda t, q, qdot: gravity, 0.1)

    assert state.q[1] == pytest.approx(7.0 - 0.5 * 9.8 * 0.01)
    assert state.qdot[1] == pytest.approx(-0.98)


def test_default_config():
    cfg = SimConfig()

    assert cfg.steps == 4000
    assert cfg.initial.q == pytest.approx(FLIGHT_INITIAL_Q)
    assert cfg.uses_allocation
    assert cfg.kernels.mode is KernelMode.CONSTANT_LIMIT


def test_prescribed_config_bypasses_allocation():
    cfg = SimConfig(reference=ReferenceKind.PRESCRIBED_SMOOTH)

    assert not cfg.uses_allocation


@pytest.mark.parametrize(
    "kwargs",
    [
        {"h": 0.0},
        {"h": math.nan},
        {"t_end": 0.001},
        {"arm_filter_tau": 0.0},
        {"initial": GenState(np.array([0.0, 0.0, 0.0, 3.5, 0.0]), np.zeros(DOF))},
        {"initial": GenState(np.array([0.0, math.inf, 0.0, 0.0, 0.0]), np.zeros(DOF))},
    ],
)
def test_sim_config_validation(kwargs: dict):
    with pytest.raises(InvalidParameters):
        SimConfig(**kwargs)


def test_log_header():
    header = LogRecord.header()

    assert len(header) == 31
    assert header[:6] == ["t", "x_v", "z_v", "theta", "q_l", "q_r"]
    assert header[6] == "x_v_dot"
    assert header[11] == "x_v_d"
    assert header[-4:] == ["W", "alloc_residual", "alloc_iterations", "alloc_converged"]


def test_hover_closed_loop(hover_log: list[LogRecord], hover_state: GenState):
    assert len(hover_log) == 101
    assert hover_log[0].t == 0.0
    assert hover_log[-1].t == pytest.approx(1.0)

    last = hover_log[-1]
    assert last.T_l == pytest.approx(34.3, abs=1e-6)
    assert last.T_r == pytest.approx(34.3, abs=1e-6)
    assert last.q == pytest.approx(hover_state.q, abs=1e-9)
    assert all(r.alloc_converged for r in hover_log)
    assert last.tau[:3] == pytest.approx([0.0, 68.6, 0.0])


def test_hover_summary(hover_log: list[LogRecord], hover_config: SimConfig):
    summary = summarize(hover_log, hover_config.params, hover_config.kernels)

    assert summary.steps == 101
    assert summary.final_thrusts == pytest.approx((34.3, 34.3), abs=1e-6)
    assert summary.final_errors == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)
    assert summary.nonconverged_steps == 0
    assert summary.max_abs_curvature == pytest.approx(0.0, abs=1e-9)
    assert summary.energy_residual < 1e-8


def test_ideal_wrench_hover(hover_config: SimConfig):
    log = run_closed_loop(replace(hover_config, ideal_wrench=True, t_end=0.1), progress=False)

    assert len(log) == 11
    assert log[-1].q == pytest.approx(hover_config.initial.q, abs=1e-9)


def test_prescribed_closed_loop_decreases_lyapunov():
    cfg = SimConfig(t_end=2.0, kernels=KernelConfig(mode=KernelMode.SERIES), reference=ReferenceKind.PRESCRIBED_SMOOTH)
    log = run_closed_loop(cfg, progress=False)

    V = np.array([r.V for r in log])
    assert len(log) == 201
    assert np.all(V[1:] <= V[:-1] * (1 + 1e-6))
    assert V[-1] < V[0]
    # Arm references are the analytic ones
    assert log[-1].q_l_d == pytest.approx(0.2 * math.sin(1.0))
    assert log[-1].q_r_d == pytest.approx(-0.2 * math.sin(1.0))


def test_flight_scenario_starts():
    cfg = SimConfig(t_end=0.2)
    log = run_closed_loop(cfg, progress=False)

    assert len(log) == 21
    assert log[0].q == pytest.approx(FLIGHT_INITIAL_Q)
    for record in log:
        assert np.all(np.isfinite(record.q))
        assert np.all(np.isfinite(record.tau))


def test_open_loop_conserves_energy_without_gravity(params: PhysicalParams):
    p0 = replace(params, g=0.0)
    log = run_open_loop(CONSERVATIVE_INITIAL, lambda t, q, qdot: np.zeros(DOF), 2.0, 0.01, p0, SERIES_CONFIG)

    assert len(log) == 201
    assert max(abs(r.H - log[0].H) for r in log) < 1e-8


def test_passivity_energy_balance(params: PhysicalParams):
    log = run_open_loop(PASSIVITY_INITIAL, passivity_input(params, SERIES_CONFIG), 2.0, 0.01, params, SERIES_CONFIG)

    assert energy_audit(log, params, SERIES_CONFIG) < 1e-4 * 2.0
    # Sampled quadrature misses the work done between steps
    assert energy_audit(log, params, SERIES_CONFIG, Quadrature.TRAPEZOID) < 1e-3


def test_open_loop_validation(hover_state: GenState, params: PhysicalParams):
    with pytest.raises(InvalidParameters):
        run_open_loop(hover_state, lambda t, q, qdot: np.zeros(DOF), 1.0, 0.0, params, SERIES_CONFIG)


def test_energy_audit_needs_log(params: PhysicalParams):
    with pytest.raises(InvalidParameters):
        energy_audit([], params, SERIES_CONFIG)


def test_write_csv(hover_log: list[LogRecord]):
    out = io.StringIO()
    write_csv(hover_log[:3], out)

    rows = list(csv.reader(io.StringIO(out.getvalue())))
    assert rows[0] == LogRecord.header()
    assert len(rows) == 4
    assert all(len(row) == 31 for row in rows)
    assert float(rows[1][rows[0].index("z_v")]) == 7.0
    assert float(rows[3][0]) == pytest.approx(0.02)
    assert rows[1][-1] == "1"


def test_write_csv_to_path(tmp_path, hover_log: list[LogRecord]):
    path = tmp_path / "hover.csv"
    write_csv(hover_log, path)

    lines = path.read_text().splitlines()
    assert len(lines) == 102


def test_hover_keeps_lyapunov_at_zero(hover_state: GenState):
    cfg = SimConfig(t_end=0.05, initial=hover_state, reference=ReferenceKind.HOVER, gains=Gains(K=(1.0,) * 5))
    log = run_closed_loop(cfg, progress=False)

    assert all(r.V == pytest.approx(0.0, abs=1e-12) for r in log)


def test_flight_tracks_reference(flight_log: list[LogRecord]):
    assert len(flight_log) == 4001
    assert flight_log[-1].t == pytest.approx(40.0)

    for record in flight_log:
        assert abs(record.q[3]) < math.pi and abs(record.q[4]) < math.pi
        if record.t > 25.0:
            assert abs(record.q[0] - record.q_d[0]) < 0.05
            assert abs(record.q[1] - record.q_d[1]) < 0.05
        if record.t > 5.0:
            assert abs(record.q[2]) < 0.05

    assert max(r.alloc_residual for r in flight_log if r.alloc_converged) < 1e-8


def test_flight_converges_when_step_halves(flight_log: list[LogRecord]):
    fine = run_closed_loop(SimConfig(h=0.005), progress=False)

    def final_norm(log: list[LogRecord]) -> float:
        return float(np.linalg.norm(np.concatenate([log[-1].q, log[-1].qdot])))

    assert len(fine) == 8001
    assert abs(final_norm(fine) - final_norm(flight_log)) <= 1e-5


def test_flight_energy_audit_with_series_kernels():
    cfg = SimConfig(kernels=SERIES_CONFIG)
    log = run_closed_loop(cfg, progress=False)

    assert energy_audit(log, cfg.params, cfg.kernels) <= 1e-4 * cfg.t_end


def test_flight_energy_audit_with_constant_limits(flight_log: list[LogRecord]):
    cfg = load_config(CONFIGS / "flight.cfg")
    residual = energy_audit(flight_log, cfg.params, cfg.kernels)

    # Constant limits inside |q| < delta are not a Lagrangian model, so only a loose bound holds
    assert math.isfinite(residual)
    assert residual < 1.0


@pytest.mark.parametrize("name", ["hover.cfg", "prescribed.cfg"])
def test_shipped_scenario_energy_audit(name: str):
    cfg = load_config(CONFIGS / name)
    log = run_closed_loop(cfg, progress=False)

    assert energy_audit(log, cfg.params, cfg.kernels) <= 1e-4 * cfg.t_end


def test_work_column_integrates_supplied_power(hover_log: list[LogRecord]):
    assert hover_log[0].W == 0.0
    assert all(r.W == pytest.approx(0.0, abs=1e-8) for r in hover_log)


def test_identical_runs_write_identical_logs():
    def render() -> str:
        out = io.StringIO()
        write_csv(run_closed_loop(SimConfig(t_end=0.5), progress=False), out)
        return out.getvalue()

    assert render() == render()


def test_hover_holds_for_ten_seconds():
    cfg = load_config(CONFIGS / "hover.cfg")
    log = run_closed_loop(cfg, progress=False)

    assert log[-1].t == pytest.approx(10.0)
    for record in log:
        assert np.abs(record.q - cfg.initial.q).max() < 1e-4
        assert np.abs(record.qdot).max() < 1e-4
    assert (log[-1].T_l, log[-1].T_r) == pytest.approx((34.3, 34.3), abs=1e-6)
    assert (log[-1].q_l_d, log[-1].q_r_d) == pytest.approx((0.0, 0.0), abs=1e-6)
