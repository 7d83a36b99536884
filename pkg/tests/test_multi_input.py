"""End-to-end check that nothing is hardwired to the car's scalar input."""

import numpy as np

from rtvcbf.io import (
    BarrierSection,
    BaselineSection,
    FilterSection,
    NonlinearitySection,
    PlantSection,
    ScenarioConfig,
    SimSection,
    read_trace,
    write_trace,
)
from rtvcbf.sim import run_closed_loop


def _two_input_config(horizon=0.5):
    # two decoupled double integrators: positions x0 (lateral) and x4
    # (longitudinal are states 4,5), one force input per axis
    a = np.zeros((6, 6))
    a[0, 1] = a[4, 5] = 1.0
    b = np.zeros((6, 2))
    b[1, 0] = 1.0
    b[5, 1] = 1.0
    return ScenarioConfig(
        plant=PlantSection(kind="explicit", A=a.tolist(), B=b.tolist()),
        barrier=BarrierSection(r_obs=1.0, v_e=0.3, v_s=-1.0, clearance=2.0, alpha=2.0),
        filter=FilterSection(theta=0.4, u_max_deg=None),
        baseline=BaselineSection(
            gain=[[1.0, 1.5, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]],
            reference=[0.0, 0.0, 0.0, 0.0],
            lat_indices=[0, 1, 2, 3],
        ),
        nonlinearity=NonlinearitySection(kind="random-bounded", seed=5),
        sim=SimSection(
            dt_ctrl=0.005, dt_sim=0.005, horizon=horizon,
            initial_state=[1.0, 0.0, 0.0, 0.0, -8.0, 3.0],
        ),
    )


def test_two_input_closed_loop_and_trace(tmp_path):
    cfg = _two_input_config()
    trace, verdict = run_closed_loop(cfg, "rtvcbf")
    assert trace.u.shape[1] == 2
    assert verdict.sector_ok
    assert verdict.all_steps_feasible  # unbounded input: always feasible
    assert verdict.min_h >= -1e-6 * max(1.0, abs(trace.h[0]))

    path = tmp_path / "two_input.csv"
    write_trace(trace, path)
    back = read_trace(path)
    for col in ("u0_0", "u0_1", "u_0", "u_1", "w_0", "w_1", "c2_0", "c2_1"):
        assert col in back.column_names
    np.testing.assert_array_equal(back.columns["u_1"], trace.u[:, 1])


def test_two_input_worst_case_stays_safe():
    cfg = _two_input_config()
    cfg = ScenarioConfig(
        plant=cfg.plant,
        barrier=cfg.barrier,
        filter=cfg.filter,
        baseline=cfg.baseline,
        nonlinearity=NonlinearitySection(kind="worst-case-adversary"),
        sim=cfg.sim,
    )
    trace, verdict = run_closed_loop(cfg, "rtvcbf")
    assert all(verdict.initial_ok)
    assert verdict.min_h >= -1e-6 * max(1.0, abs(trace.h[0]))
