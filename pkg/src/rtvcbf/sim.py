"""Fixed-step closed-loop simulator: plant + baseline + safety filter + nonlinearity.

Each control step evaluates the barrier, filters the baseline command through
the selected architecture, queries the sector-bounded nonlinearity with the
actually applied control, and integrates the plant with RK4 substeps under
zero-order hold.  Runs are deterministic given the scenario (including the
nonlinearity seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .barrier import eval_barrier, initial_conditions_ok, relative_degree_ok
from .errors import (
    ConfigurationError,
    ContractViolationError,
    IntegrationError,
    SectorViolationError,
)
from .filter import (
    STATUS_FALLBACK,
    FilterProblem,
    rtvcbf_socp,
    tvcbf_qp,
    worst_case_w,
)
from .plant import LinearPlant, baseline_control

if TYPE_CHECKING:
    from .io import ScenarioConfig

ARCHITECTURES = ("baseline-only", "tvcbf", "rtvcbf")

NONLINEARITY_KINDS = (
    "none",
    "worst-case-adversary",
    "constant-gain",
    "time-varying-gain",
    "random-bounded",
    "saturation-residual",
)

STATUS_BASELINE = "baseline"
STATUS_DEGENERATE_HOLD = "degenerate-hold"

_SECTOR_SLACK = 1e-12


@dataclass(eq=False)
class SectorNonlinearity:
    """Pluggable perturbation source w = phi(u, t) bounded by ||w|| <= theta*||u||.

    Kinds: none; worst-case-adversary (realizes the minimizing direction along
    -c2^T exactly); constant-gain (w = delta*u); time-varying-gain
    (w = amplitude*theta*sin(omega t + phase)*u); random-bounded (uniform radius
    and direction inside the sector ball, counter-based Philox stream);
    saturation-residual (w = sat(u) - u at the given level, clipped into the
    sector ball).  Every query re-asserts the sector bound at runtime.
    """

    kind: str
    theta: float
    delta: float = 0.0
    omega: float = 2.0 * np.pi
    phase: float = 0.0
    amplitude: float = 1.0
    level: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ConfigurationError(
                f"unknown nonlinearity kind {self.kind!r}; choose from {NONLINEARITY_KINDS}"
            )
        if not 0.0 <= self.theta < 1.0:
            raise ConfigurationError(f"sector bound theta must lie in [0, 1), got {self.theta}")
        if self.kind == "constant-gain" and abs(self.delta) > self.theta:
            raise ConfigurationError(
                f"constant gain {self.delta} exceeds the sector bound {self.theta}"
            )
        if self.kind == "time-varying-gain" and not 0.0 <= self.amplitude <= 1.0:
            raise ConfigurationError(f"amplitude must lie in [0, 1], got {self.amplitude}")
        if self.kind == "saturation-residual" and not self.level > 0.0:
            raise ConfigurationError(f"saturation level must be positive, got {self.level}")
        self._rng = np.random.Generator(np.random.Philox(int(self.seed)))

    def query(self, u: np.ndarray, t: float, c2: np.ndarray) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        m = u.shape[0]
        nu = float(np.linalg.norm(u))
        if self.kind == "none":
            w = np.zeros(m)
        elif self.kind == "worst-case-adversary":
            if float(np.linalg.norm(c2)) <= 0.0 or nu == 0.0:
                w = np.zeros(m)
            else:
                w = worst_case_w(u, c2, self.theta)
        elif self.kind == "constant-gain":
            w = self.delta * u
        elif self.kind == "time-varying-gain":
            w = self.amplitude * self.theta * np.sin(self.omega * t + self.phase) * u
        elif self.kind == "random-bounded":
            # draws are consumed every query so the stream is step-indexed
            rho = self._rng.uniform()
            raw = self._rng.standard_normal(m)
            nraw = float(np.linalg.norm(raw))
            direction = raw / nraw if nraw > 0.0 else np.zeros(m)
            w = rho * self.theta * nu * direction
        else:  # saturation-residual
            if nu > self.level:
                w = (self.level / nu) * u - u
            else:
                w = np.zeros(m)
            cap = self.theta * nu
            nw = float(np.linalg.norm(w))
            if nw > cap:
                w = w * (cap / nw)
        nw = float(np.linalg.norm(w))
        if nw > self.theta * nu + _SECTOR_SLACK:
            raise SectorViolationError(
                f"{self.kind} produced ||w||={nw:.3e} > theta*||u||={self.theta * nu:.3e}"
            )
        return w


@dataclass(eq=False)
class SimulationTrace:
    """Time-indexed closed-loop log; one record per control step plus the final state."""

    t: np.ndarray
    x: np.ndarray
    u0: np.ndarray
    u: np.ndarray
    w: np.ndarray
    h: np.ndarray
    lf_h: np.ndarray
    lf2_h: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    feas_margin: np.ndarray
    status: list[str]
    rel_deg_ok: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True, eq=False)
class MonitorVerdict:
    """Runtime safety-monitor summary for one trace.

    exp_residuals holds the per-step second-difference estimate of
    hdd + 2*alpha*hd + alpha^2*h (one entry per interior step) and
    exp_residual_min its most negative value; violation_time is set only when
    h dipped below -tol.
    """

    min_h: float
    violation_time: float | None
    initial_ok: tuple[bool, bool]
    sector_ok: bool
    exp_residuals: np.ndarray
    exp_residual_min: float
    n_fallback: int
    n_degenerate: int
    all_steps_feasible: bool
    tol: float


def rk4_step(
    plant: LinearPlant, x: np.ndarray, u: np.ndarray, w: np.ndarray, dt: float
) -> np.ndarray:
    """Classical RK4 update of xdot = A x + B (u + w) with u, w held constant."""
    if not dt > 0.0:
        raise ContractViolationError(f"dt must be positive, got {dt}")
    bu = plant.B @ (np.atleast_1d(u) + np.atleast_1d(w))
    a = plant.A

    k1 = a @ x + bu
    k2 = a @ (x + 0.5 * dt * k1) + bu
    k3 = a @ (x + 0.5 * dt * k2) + bu
    k4 = a @ (x + dt * k3) + bu
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise IntegrationError("state left the finite range")
    return x_next


def _clip_to_ball(u: np.ndarray, u_max: float) -> np.ndarray:
    nu = float(np.linalg.norm(u))
    if nu > u_max:
        return (u_max / nu) * u
    return u


def run_closed_loop(
    config: "ScenarioConfig", architecture: str, seed: int | None = None
) -> tuple[SimulationTrace, MonitorVerdict]:
    """Simulate one architecture over the scenario horizon.

    Per control step: evaluate the barrier, compute the baseline command, apply
    the selected filter (none / nominal QP / robust cone program with the
    pre-solve feasibility gate and emergency fallback), query the nonlinearity
    with the applied control, then integrate substeps to the next update.  A
    lost relative degree logs a degeneracy event and holds the previous
    control for that step.  Solver or integration failures terminate the run
    and are recorded in the metadata with the partial trace preserved.
    """
    if architecture not in ARCHITECTURES:
        raise ConfigurationError(
            f"unknown architecture {architecture!r}; choose from {ARCHITECTURES}"
        )
    plant = config.build_plant()
    barrier = config.build_barrier()
    baseline = config.build_baseline()
    nonlin = config.build_nonlinearity(seed)
    settings = config.solver_settings()
    alpha = config.barrier.alpha
    theta = config.filter.theta if architecture == "rtvcbf" else 0.0
    u_max = config.u_max_rad
    clip_mode = config.filter.saturation_mode == "clip"
    ball = None if (u_max is None or clip_mode) else u_max

    dt_c = config.sim.dt_ctrl
    n_steps = int(round(config.sim.horizon / dt_c))
    n_sub = max(1, int(round(dt_c / config.sim.dt_sim)))
    dt_s = dt_c / n_sub

    x = np.asarray(config.sim.initial_state, dtype=float)
    if x.shape != (plant.n,):
        raise ConfigurationError(
            f"initial state has shape {x.shape}, plant expects ({plant.n},)"
        )
    rel_eps = config.rel_degree_eps(plant, x)

    rows_t, rows_x, rows_u0, rows_u, rows_w = [], [], [], [], []
    rows_h, rows_lfh, rows_lf2h, rows_c1, rows_c2 = [], [], [], [], []
    rows_margin, rows_status, rows_rdeg = [], [], []
    initial_ok = (False, False)
    terminal_event = None
    last_u = None

    for k in range(n_steps + 1):
        t = k * dt_c
        try:
            ev = eval_barrier(barrier, plant, x, t, alpha)
            if k == 0:
                initial_ok = initial_conditions_ok(ev)
            u0 = baseline_control(baseline, x)
            rdeg_ok, _ = relative_degree_ok(ev, rel_eps)
            margin = np.inf
            if architecture == "baseline-only":
                u = _clip_to_ball(u0, u_max) if u_max is not None else u0
                status = STATUS_BASELINE
            elif not rdeg_ok:
                u = last_u if last_u is not None else (
                    _clip_to_ball(u0, u_max) if u_max is not None else u0
                )
                status = STATUS_DEGENERATE_HOLD
                margin = np.nan
            else:
                problem = FilterProblem(u0=u0, c1=ev.c1, c2=ev.c2, theta=theta, u_max=ball)
                decision = (
                    tvcbf_qp(problem, settings)
                    if architecture == "tvcbf"
                    else rtvcbf_socp(problem, settings)
                )
                u = decision.u
                if clip_mode and u_max is not None:
                    u = _clip_to_ball(u, u_max)
                status = decision.status
                margin = decision.feasibility_margin
            w = nonlin.query(u, t, ev.c2)
        except (RuntimeError, ContractViolationError) as exc:
            # solver failure, lost geometry, or non-finite data: record the
            # terminal event and keep the partial trace
            terminal_event = f"step {k}: {exc}"
            break

        rows_t.append(t)
        rows_x.append(x.copy())
        rows_u0.append(np.atleast_1d(u0).copy())
        rows_u.append(np.atleast_1d(u).copy())
        rows_w.append(np.atleast_1d(w).copy())
        rows_h.append(ev.h)
        rows_lfh.append(ev.Lf_h)
        rows_lf2h.append(ev.Lf2_h)
        rows_c1.append(ev.c1)
        rows_c2.append(np.atleast_1d(ev.c2).copy())
        rows_margin.append(margin)
        rows_status.append(status)
        rows_rdeg.append(rdeg_ok)
        last_u = np.atleast_1d(u)

        if k == n_steps:
            break
        try:
            for _ in range(n_sub):
                x = rk4_step(plant, x, u, w, dt_s)
        except IntegrationError as exc:
            terminal_event = f"step {k}: {exc}"
            break

    trace = SimulationTrace(
        t=np.array(rows_t),
        x=np.array(rows_x),
        u0=np.array(rows_u0),
        u=np.array(rows_u),
        w=np.array(rows_w),
        h=np.array(rows_h),
        lf_h=np.array(rows_lfh),
        lf2_h=np.array(rows_lf2h),
        c1=np.array(rows_c1),
        c2=np.array(rows_c2),
        feas_margin=np.array(rows_margin),
        status=rows_status,
        rel_deg_ok=np.array(rows_rdeg, dtype=bool),
        metadata=config.trace_metadata(architecture, nonlin, terminal_event),
    )
    verdict = safety_monitor(trace, alpha, config.sim.monitor_tol)
    return trace, verdict


def safety_monitor(trace: SimulationTrace, alpha: float, tol: float = 1e-9) -> MonitorVerdict:
    """Post-hoc verdict: minimum barrier value, first crossing below -tol,
    initial membership pair, logged sector compliance, and the finite-differenced
    residual of hdd + 2*alpha*hd + alpha^2*h over the trace."""
    if len(trace) == 0:
        raise ContractViolationError("safety monitor needs a nonempty trace")
    h = trace.h
    min_h = float(np.min(h))
    violation_time = None
    below = np.nonzero(h < -tol)[0]
    if below.size:
        violation_time = float(trace.t[below[0]])

    initial_ok = (bool(h[0] >= 0.0), bool(trace.lf_h[0] + alpha * h[0] >= 0.0))

    theta_nl = float(trace.metadata.get("nonlinearity_theta", 0.0))
    wn = np.linalg.norm(np.atleast_2d(trace.w), axis=1)
    un = np.linalg.norm(np.atleast_2d(trace.u), axis=1)
    sector_ok = bool(np.all(wn <= theta_nl * un + tol + _SECTOR_SLACK))

    if len(trace) >= 3:
        dt = float(trace.t[1] - trace.t[0])
        hd = (h[2:] - h[:-2]) / (2.0 * dt)
        hdd = (h[2:] - 2.0 * h[1:-1] + h[:-2]) / dt**2
        residuals = hdd + 2.0 * alpha * hd + alpha**2 * h[1:-1]
        exp_residual_min = float(np.min(residuals))
    else:
        residuals = np.empty(0)
        exp_residual_min = np.inf

    n_fallback = sum(1 for s in trace.status if s == STATUS_FALLBACK)
    n_degenerate = sum(1 for s in trace.status if s == STATUS_DEGENERATE_HOLD)
    all_feasible = n_fallback == 0 and n_degenerate == 0 and (
        trace.metadata.get("terminal_event") is None
    )
    return MonitorVerdict(
        min_h=min_h,
        violation_time=violation_time,
        initial_ok=initial_ok,
        sector_ok=sector_ok,
        exp_residuals=residuals,
        exp_residual_min=exp_residual_min,
        n_fallback=n_fallback,
        n_degenerate=n_degenerate,
        all_steps_feasible=all_feasible,
        tol=tol,
    )
