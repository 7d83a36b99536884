import numpy as np
import pytest
from scipy.linalg import expm

from rtvcbf.barrier import (
    AnalyticBarrier,
    MovingCircleBarrier,
    eval_barrier,
    fd_check,
    initial_conditions_ok,
    relative_degree_ok,
)
from rtvcbf.errors import ContractViolationError
from rtvcbf.plant import CarParams, LinearPlant, build_car_plant

ALPHA = 8.6
X0 = np.array([1.0, 0.0, 0.0, 0.0, -40.0, 28.0])


@pytest.fixture(scope="module")
def car():
    return build_car_plant(CarParams())


@pytest.fixture(scope="module")
def circle():
    return MovingCircleBarrier(r_obs=1.5, v_e=1.0, v_s=-10.0, clearance=2.0)


def test_initial_barrier_value(car, circle):
    ev = eval_barrier(circle, car, X0, 0.0, ALPHA)
    # 1^2 + 40^2 - 3^2
    assert ev.h == pytest.approx(1592.0, rel=1e-15)


def test_stationary_obstacle_and_frozen_state(circle):
    # drift identically zero and a static obstacle: nothing moves
    plant = LinearPlant(A=np.zeros((6, 6)), B=np.eye(6)[:, [1]])
    frozen = MovingCircleBarrier(r_obs=1.5, v_e=0.0, v_s=0.0)
    ev = eval_barrier(frozen, plant, X0, 2.0, ALPHA)
    assert ev.Lf_h == 0.0
    assert ev.Lf2_h == 0.0


def _flow_state(plant, x0, u, t):
    """Exact state of xdot = A x + B u (constant u) via the augmented exponential."""
    n, m = plant.n, plant.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = plant.A
    aug[:n, n:] = plant.B
    z = np.concatenate([x0, np.atleast_1d(u)])
    return (expm(aug * t) @ z)[:n]


def test_lie_derivatives_match_flow_derivatives(car, circle):
    """Independent oracle: along the exact uncontrolled flow, dh/dt and d2h/dt2
    must equal the modified Lie derivatives; a constant input shifts the second
    derivative by c2@u and leaves the first untouched (relative degree two)."""
    rng = np.random.default_rng(11)
    delta = 1e-5
    for _ in range(25):
        x = rng.uniform([-4, -4, -0.5, -1, -45, 22], [4, 4, 0.5, 1, 45, 30])
        t = float(rng.uniform(0.1, 2.5))
        ev = eval_barrier(circle, car, x, t, ALPHA)

        def h_along(dt, u=0.0):
            return circle.value(_flow_state(car, x, [u], dt), t + dt)

        hd = (h_along(delta) - h_along(-delta)) / (2 * delta)
        hdd = (h_along(delta) - 2 * h_along(0.0) + h_along(-delta)) / delta**2
        assert hd == pytest.approx(ev.Lf_h, rel=1e-5, abs=1e-5)
        assert hdd == pytest.approx(ev.Lf2_h, rel=1e-5, abs=2e-4)

        # isolating c2 differences two second-differences; a larger step keeps
        # the rounding term (~ulp(h)/step^2) below the comparison tolerance
        u_probe, big = 0.4, 3e-4
        hdd_u = (
            h_along(big, u_probe) - 2 * h_along(0.0, u_probe) + h_along(-big, u_probe)
        ) / big**2
        hdd_0 = (h_along(big) - 2 * h_along(0.0) + h_along(-big)) / big**2
        hd_u = (h_along(delta, u_probe) - h_along(-delta, u_probe)) / (2 * delta)
        assert hd_u == pytest.approx(ev.Lf_h, rel=1e-5, abs=1e-5)
        assert hdd_u - hdd_0 == pytest.approx(float(ev.c2[0]) * u_probe, rel=1e-4, abs=2e-4)


def test_c1_recomputes_from_parts(car, circle):
    rng = np.random.default_rng(5)
    for _ in range(200):
        x = rng.normal(scale=10.0, size=6)
        t = float(rng.uniform(0, 3))
        ev = eval_barrier(circle, car, x, t, ALPHA)
        again = ev.Lf2_h + 2 * ALPHA * ev.Lf_h + ALPHA**2 * ev.h
        assert ev.c1 == pytest.approx(again, rel=1e-15, abs=1e-12)


def test_gradient_never_touches_input(car, circle):
    # relative degree >= 2: grad_x(h) @ B = 0 for all (x, t)
    rng = np.random.default_rng(6)
    for _ in range(200):
        x = rng.normal(scale=20.0, size=6)
        t = float(rng.uniform(0, 3))
        g = circle.grad_x(x, t)
        assert float((g @ car.B)[0]) == 0.0


def test_barrier_co_moves_with_obstacle(circle):
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = rng.normal(scale=10.0, size=6)
        t = float(rng.uniform(0, 2))
        shift = float(rng.uniform(-1, 1))
        x2 = x.copy()
        x2[0] += circle.v_e * shift
        x2[4] += circle.v_s * shift
        assert circle.value(x2, t + shift) == pytest.approx(circle.value(x, t), rel=1e-12)


def test_fd_check_quadratic_exactness(car, circle):
    report = fd_check(circle, car, X0, 0.7, ALPHA, step=1e-4)
    assert report.finite_inputs
    assert report.err_grad_x <= 1e-9
    assert report.err_d_dt <= 1e-9


def test_fd_check_residuals_over_operating_box(car, circle):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(300):
        x = rng.uniform([-5, -8, -0.7, -2, -50, 20], [5, 8, 0.7, 2, 50, 30])
        t = float(rng.uniform(0, 3))
        worst = max(worst, fd_check(circle, car, x, t, ALPHA, 1e-4).max())
    assert worst <= 1e-5


def _wavy_barrier(n=6):
    """Time-trigonometric barrier: has nonvanishing third derivatives, so the
    finite-difference error actually shows its second-order step dependence."""
    idx = 0

    def value(x, t):
        return (x[idx] - np.sin(t)) ** 2 + 0.5 * x[idx] * np.cos(2 * t)

    def grad_x(x, t):
        g = np.zeros(n)
        g[idx] = 2 * (x[idx] - np.sin(t)) + 0.5 * np.cos(2 * t)
        return g

    def d_dt(x, t):
        return -2 * (x[idx] - np.sin(t)) * np.cos(t) - x[idx] * np.sin(2 * t)

    def hess_x(x, t):
        h = np.zeros((n, n))
        h[idx, idx] = 2.0
        return h

    def grad_dt(x, t):
        g = np.zeros(n)
        g[idx] = -2 * np.cos(t) - np.sin(2 * t)
        return g

    def d_dtt(x, t):
        return (
            2 * np.sin(t) * (x[idx] - np.sin(t))
            + 2 * np.cos(t) ** 2
            - 2 * x[idx] * np.cos(2 * t)
        )

    return AnalyticBarrier(value, grad_x, d_dt, hess_x, grad_dt, d_dtt)


def test_fd_check_shows_second_order_convergence(car):
    wavy = _wavy_barrier()
    x = np.array([0.8, 0.1, 0.0, 0.0, -5.0, 28.0])
    coarse = fd_check(wavy, car, x, 0.9, ALPHA, step=2e-3).err_d_dt
    fine = fd_check(wavy, car, x, 0.9, ALPHA, step=1e-3).err_d_dt
    assert coarse / fine == pytest.approx(4.0, rel=0.15)


def test_fd_check_flags_non_finite(car, circle):
    bad = X0.copy()
    bad[2] = np.nan
    report = fd_check(circle, car, bad, 0.0, ALPHA, 1e-4)
    assert not report.finite_inputs


def test_relative_degree_threshold(car, circle):
    # e - v_e*t = 0 with the remaining c2-feeding terms zero: degree lost
    x = np.array([0.5, 0.0, 0.0, 0.0, -10.0, 28.0])
    t = 0.5
    ev = eval_barrier(circle, car, x, t, ALPHA)
    ok, margin = relative_degree_ok(ev, 1e-9)
    assert not ok and margin < 0

    ev4 = eval_barrier(circle, car, X0, 0.0, ALPHA)
    ok4, margin4 = relative_degree_ok(ev4, 1e-9)
    assert ok4 and margin4 == pytest.approx(float(np.abs(ev4.c2[0])), rel=1e-9)


def test_relative_degree_margin_sign_flip():
    ev = eval_barrier(
        MovingCircleBarrier(r_obs=1.0, v_e=0.0, v_s=0.0),
        build_car_plant(CarParams()),
        X0,
        0.0,
        ALPHA,
    )
    nc2 = float(np.linalg.norm(ev.c2))
    ok_lo, m_lo = relative_degree_ok(ev, nc2 * (1 - 1e-12))
    ok_hi, m_hi = relative_degree_ok(ev, nc2 * (1 + 1e-12))
    assert ok_lo and m_lo > 0
    assert not ok_hi and m_hi < 0


def test_initial_conditions_study_state(car, circle):
    ev = eval_barrier(circle, car, X0, 0.0, ALPHA)
    assert initial_conditions_ok(ev) == (True, True)


def test_initial_conditions_boundary_and_violation():
    ev_boundary = type("E", (), {"h": 0.0, "Lf_h": 0.0, "alpha": ALPHA})()
    assert initial_conditions_ok(ev_boundary) == (True, True)
    ev_bad = type("E", (), {"h": 5.0, "Lf_h": -ALPHA * 5.0 - 1.0, "alpha": ALPHA})()
    assert initial_conditions_ok(ev_bad) == (True, False)


def test_eval_barrier_rejects_bad_args(car, circle):
    with pytest.raises(ContractViolationError):
        eval_barrier(circle, car, X0, 0.0, 0.0)
    with pytest.raises(ContractViolationError):
        eval_barrier(circle, car, X0, -1.0, ALPHA)
    with pytest.raises(ContractViolationError):
        MovingCircleBarrier(r_obs=-1.0, v_e=0.0, v_s=0.0)
