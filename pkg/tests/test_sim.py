import numpy as np
import pytest

from rtvcbf.errors import ConfigurationError, ContractViolationError, SectorViolationError
from rtvcbf.io import NonlinearitySection, ScenarioConfig, SimSection
from rtvcbf.plant import CarParams, LinearPlant, build_car_plant
from rtvcbf.sim import (
    MonitorVerdict,
    SectorNonlinearity,
    rk4_step,
    run_closed_loop,
    safety_monitor,
)


# --- rk4 ------------------------------------------------------------------------


def test_rk4_zero_system_keeps_state():
    plant = LinearPlant(A=np.zeros((3, 3)), B=np.zeros((3, 1)))
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(rk4_step(plant, x, [0.5], [0.0], 0.1), x)


def test_rk4_scalar_exponential():
    plant = LinearPlant(A=[[-1.0]], B=[[0.0]])
    x = rk4_step(plant, np.array([1.0]), [0.0], [0.0], 0.1)
    assert x[0] == pytest.approx(np.exp(-0.1), abs=1e-7)


def test_rk4_harmonic_oscillator_period():
    plant = LinearPlant(A=[[0.0, 1.0], [-1.0, 0.0]], B=[[0.0], [0.0]])
    x = np.array([1.0, 0.0])
    dt = 1e-3
    n = int(round(2 * np.pi / dt))
    for _ in range(n):
        x = rk4_step(plant, x, [0.0], [0.0], dt)
    # one full period (up to the dt-rounding of 2*pi) returns to the start
    x_exact = np.array([np.cos(n * dt), -np.sin(n * dt)])
    assert np.max(np.abs(x - x_exact)) <= 1e-8


def test_rk4_rejects_bad_dt():
    plant = LinearPlant(A=np.zeros((2, 2)), B=np.zeros((2, 1)))
    with pytest.raises(ContractViolationError):
        rk4_step(plant, np.zeros(2), [0.0], [0.0], 0.0)


# --- nonlinearities ---------------------------------------------------------------


@pytest.mark.parametrize(
    "kind,kwargs",
    [
        ("none", {}),
        ("worst-case-adversary", {}),
        ("constant-gain", {"delta": 0.4}),
        ("time-varying-gain", {"omega": 9.0, "amplitude": 0.8}),
        ("random-bounded", {"seed": 3}),
        ("saturation-residual", {"level": 0.3}),
    ],
)
def test_sector_bound_holds_on_random_queries(kind, kwargs):
    n = 100_000
    nl = SectorNonlinearity(kind=kind, theta=0.5, **kwargs)
    rng = np.random.default_rng(0)
    ms = np.ones(n, dtype=int) if kind == "saturation-residual" else rng.integers(1, 3, n)
    us = rng.normal(scale=2.0, size=(n, 2))
    c2s = rng.normal(size=(n, 2))
    ts = rng.uniform(0, 5, n)
    worst = -np.inf
    for i in range(n):
        m = int(ms[i])
        w = nl.query(us[i, :m], float(ts[i]), c2s[i, :m])
        worst = max(worst, float(np.linalg.norm(w) - 0.5 * np.linalg.norm(us[i, :m])))
    assert worst <= 1e-12


def test_adversary_matches_closed_form():
    nl = SectorNonlinearity(kind="worst-case-adversary", theta=0.5)
    w = nl.query(np.array([2.0]), 0.0, np.array([3.0]))
    np.testing.assert_allclose(w, [-1.0], rtol=1e-15)
    assert np.array_equal(nl.query(np.array([2.0]), 0.0, np.array([0.0])), [0.0])


def test_constant_gain_validation():
    with pytest.raises(ConfigurationError):
        SectorNonlinearity(kind="constant-gain", theta=0.5, delta=0.6)
    with pytest.raises(ConfigurationError):
        SectorNonlinearity(kind="no-such-kind", theta=0.5)


def test_random_bounded_streams_are_seeded():
    a = SectorNonlinearity(kind="random-bounded", theta=0.5, seed=42)
    b = SectorNonlinearity(kind="random-bounded", theta=0.5, seed=42)
    c = SectorNonlinearity(kind="random-bounded", theta=0.5, seed=43)
    u = np.array([1.0, 1.0])
    c2 = np.array([1.0, 0.0])
    wa = [a.query(u, 0.1 * k, c2) for k in range(50)]
    wb = [b.query(u, 0.1 * k, c2) for k in range(50)]
    wc = [c.query(u, 0.1 * k, c2) for k in range(50)]
    assert all(np.array_equal(x, y) for x, y in zip(wa, wb))
    assert any(not np.array_equal(x, y) for x, y in zip(wa, wc))


def test_saturation_residual_is_residual_below_sector_cap():
    nl = SectorNonlinearity(kind="saturation-residual", theta=0.5, level=0.3)
    assert np.array_equal(nl.query(np.array([0.2]), 0.0, np.array([1.0])), [0.0])
    w = nl.query(np.array([0.5]), 0.0, np.array([1.0]))
    np.testing.assert_allclose(w, [-0.2], rtol=1e-12)  # sat(0.5)-0.5, within 0.5*0.5
    # deep saturation clips into the sector ball instead of breaking it
    w2 = nl.query(np.array([10.0]), 0.0, np.array([1.0]))
    assert abs(w2[0]) <= 0.5 * 10.0 + 1e-12


# --- closed loop -------------------------------------------------------------------


@pytest.fixture(scope="module")
def study_outcomes():
    cfg = ScenarioConfig()
    out = {}
    for arch in ("baseline-only", "tvcbf", "rtvcbf"):
        out[arch] = run_closed_loop(cfg, arch)
    return out


def test_baseline_hits_obstacle(study_outcomes):
    _, verdict = study_outcomes["baseline-only"]
    assert verdict.min_h < 0


def test_robust_filter_stays_safe_nominal_slightly_violates(study_outcomes):
    _, v_tv = study_outcomes["tvcbf"]
    _, v_rb = study_outcomes["rtvcbf"]
    assert v_tv.min_h < 0
    assert v_rb.min_h >= -1e-6
    assert v_rb.min_h > v_tv.min_h > study_outcomes["baseline-only"][1].min_h


def test_trace_shape_and_time_axis(study_outcomes):
    trace, _ = study_outcomes["rtvcbf"]
    cfg = ScenarioConfig()
    assert len(trace) == int(round(cfg.sim.horizon / cfg.sim.dt_ctrl)) + 1
    assert np.all(np.diff(trace.t) > 0)


def test_theta_zero_and_no_noise_makes_architectures_identical():
    from rtvcbf.io import FilterSection

    cfg0 = ScenarioConfig(
        filter=FilterSection(theta=0.0),
        nonlinearity=NonlinearitySection(kind="none"),
        sim=SimSection(horizon=1.2),
    )
    tr_a, _ = run_closed_loop(cfg0, "tvcbf")
    tr_b, _ = run_closed_loop(cfg0, "rtvcbf")
    assert float(np.max(np.abs(tr_a.u - tr_b.u))) <= 1e-8
    np.testing.assert_allclose(tr_a.x, tr_b.x, atol=1e-7)


def test_determinism_bytewise(tmp_path):
    from rtvcbf.io import write_trace

    cfg = ScenarioConfig(sim=SimSection(horizon=1.0))
    t1, _ = run_closed_loop(cfg, "rtvcbf", seed=5)
    t2, _ = run_closed_loop(cfg, "rtvcbf", seed=5)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace(t1, p1)
    write_trace(t2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_degenerate_relative_degree_holds_last_control():
    # start exactly on the degeneracy manifold e - v_e*t = 0 at t = 0
    cfg = ScenarioConfig(
        sim=SimSection(horizon=0.01, initial_state=[0.0, 0.0, 0.0, 0.0, -40.0, 28.0]),
    )
    trace, verdict = run_closed_loop(cfg, "rtvcbf")
    assert trace.status[0] == "degenerate-hold"
    assert verdict.n_degenerate >= 1
    # held control at step 0 falls back to the baseline command
    np.testing.assert_allclose(trace.u[0], trace.u0[0], atol=1e-12)


def test_monitor_constant_trace():
    from rtvcbf.sim import SimulationTrace

    n = 5
    trace = SimulationTrace(
        t=np.linspace(0, 0.004, n),
        x=np.zeros((n, 6)),
        u0=np.zeros((n, 1)),
        u=np.zeros((n, 1)),
        w=np.zeros((n, 1)),
        h=np.full(n, 5.0),
        lf_h=np.zeros(n),
        lf2_h=np.zeros(n),
        c1=np.zeros(n),
        c2=np.ones((n, 1)),
        feas_margin=np.full(n, np.inf),
        status=["baseline-passthrough"] * n,
        rel_deg_ok=np.ones(n, dtype=bool),
        metadata={"nonlinearity_theta": 0.5},
    )
    verdict = safety_monitor(trace, alpha=8.6)
    assert verdict.min_h == 5.0
    assert verdict.violation_time is None
    assert verdict.sector_ok


def test_monitor_flags_sector_violation():
    from rtvcbf.sim import SimulationTrace

    n = 4
    trace = SimulationTrace(
        t=np.linspace(0, 0.003, n),
        x=np.zeros((n, 6)),
        u0=np.zeros((n, 1)),
        u=np.full((n, 1), 0.1),
        w=np.full((n, 1), 0.2),  # exceeds 0.5 * 0.1
        h=np.full(n, 1.0),
        lf_h=np.zeros(n),
        lf2_h=np.zeros(n),
        c1=np.zeros(n),
        c2=np.ones((n, 1)),
        feas_margin=np.full(n, np.inf),
        status=["baseline-passthrough"] * n,
        rel_deg_ok=np.ones(n, dtype=bool),
        metadata={"nonlinearity_theta": 0.5},
    )
    assert not safety_monitor(trace, alpha=8.6).sector_ok


def test_monitor_violation_time_matches_first_crossing(study_outcomes):
    trace, verdict = study_outcomes["tvcbf"]
    below = np.nonzero(trace.h < -verdict.tol)[0]
    assert verdict.violation_time == pytest.approx(float(trace.t[below[0]]))


def test_step_size_robustness(study_outcomes):
    _, coarse = study_outcomes["rtvcbf"]
    cfg = ScenarioConfig(sim=SimSection(dt_sim=0.0005))
    _, fine = run_closed_loop(cfg, "rtvcbf")
    assert abs(fine.min_h - coarse.min_h) <= 1e-4 * (1 + abs(coarse.min_h))


def test_unknown_architecture_rejected():
    with pytest.raises(ConfigurationError):
        run_closed_loop(ScenarioConfig(), "mpc")
