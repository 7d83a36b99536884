"""Safety-filter programs: nominal QP and robust second-order cone filter.

Both filters minimally correct a baseline command u0 subject to the barrier
constraint built from the scalars

    c1 = Lf2_h + 2*alpha*Lf_h + alpha^2*h      (constraint offset)
    c2 = Lg Lf_h                               (input direction, row vector)

The nominal constraint is affine, c1 + c2@u >= 0.  The robust constraint
tightens it against every sector-bounded perturbation ||w|| <= theta*||u||:

    c1 + c2@u - theta*||c2||*||u|| >= 0

The robust program is solved by structure instead of a generic conic solver:
stationarity forces the minimizer onto the one-parameter family

    v(lam) = u0 + lam*c2^T,
    u(lam) = max(0, 1 - lam*theta*||c2|| / ||v(lam)||) * v(lam),

so the solve reduces to bracketed scalar root-finding on the constraint
residual g(lam).  An optional Euclidean bound ||u|| <= u_max is handled by
active-set enumeration; when both the barrier and the bound are active the
minimizer is written in closed form on the bounding sphere, which stays exact
even when the feasible set shrinks to a single point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import ContractViolationError, DegenerateGeometryError, SolverError

STATUS_PASSTHROUGH = "baseline-passthrough"
STATUS_CONSTRAINT = "constraint-active"
STATUS_BALL = "ball-active"
STATUS_BOTH = "both-active"
STATUS_FALLBACK = "infeasible-fallback"


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and caps for the filter solves.

    primal_abs/primal_rel: the advertised level at which primal feasibility of
    a returned decision is judged (verification suites budget against it).
    kkt_tol: target for the recorded optimality residuals.
    root_tol: relative target for the scalar root-find on g(lam).
    max_iter: bracketing/root-finding iteration cap.
    """

    primal_abs: float = 1e-9
    primal_rel: float = 1e-9
    kkt_tol: float = 1e-8
    root_tol: float = 1e-12
    max_iter: int = 200


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True, eq=False)
class FilterProblem:
    """One filter instance: baseline command plus constraint data.

    u0: baseline control (m,); c1: constraint offset; c2: input row (m,);
    theta: sector bound in [0, 1); u_max: optional Euclidean input bound.
    """

    u0: np.ndarray
    c1: float
    c2: np.ndarray
    theta: float
    u_max: float | None = None

    def __post_init__(self):
        u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        c2 = np.atleast_1d(np.asarray(self.c2, dtype=float))
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "c2", c2)
        object.__setattr__(self, "c1", float(self.c1))
        object.__setattr__(self, "theta", float(self.theta))
        if u0.ndim != 1 or c2.ndim != 1 or u0.shape != c2.shape:
            raise ContractViolationError(
                f"u0 and c2 must be equal-length vectors, got {u0.shape} and {c2.shape}"
            )
        if not np.all(np.isfinite(u0)) or not np.all(np.isfinite(c2)) or not np.isfinite(self.c1):
            raise ContractViolationError("non-finite entries in filter problem data")
        if not 0.0 <= self.theta < 1.0:
            raise ContractViolationError(f"theta must lie in [0, 1), got {self.theta}")
        if float(np.linalg.norm(c2)) <= 0.0:
            raise DegenerateGeometryError("filter problem undefined: ||c2|| = 0")
        if self.u_max is not None:
            object.__setattr__(self, "u_max", float(self.u_max))
            if not self.u_max > 0.0:
                raise ContractViolationError(f"u_max must be positive, got {self.u_max}")

    @property
    def m(self) -> int:
        return self.u0.shape[0]


@dataclass(frozen=True)
class KKTResiduals:
    """Optimality residuals of a decision: stationarity, worst primal violation,
    and worst complementary-slackness product."""

    stationarity: float
    primal: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


@dataclass(frozen=True, eq=False)
class FilterDecision:
    """Filtered control with solve metadata.

    q is the cone slack, tight at the optimum (2q = ||u||^2).  lam and mu are
    the barrier and ball multipliers.  feasibility_margin is the ball-bound
    margin (+inf when the input is unconstrained).  kkt is None only for
    infeasible-fallback decisions, which certify nothing.
    """

    u: np.ndarray
    q: float
    status: str
    lam: float
    mu: float
    feasibility_margin: float
    kkt: KKTResiduals | None


def worst_case_w(u: np.ndarray, c2: np.ndarray, theta: float) -> np.ndarray:
    """Admissible perturbation minimizing c2@w over the ball ||w|| <= theta*||u||.

    Closed form: w = -theta*||u|| * c2^T/||c2||, which attains the sector bound
    with equality and makes c2@(u+w) = c2@u - theta*||c2||*||u||.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    c2 = np.atleast_1d(np.asarray(c2, dtype=float))
    if theta < 0.0:
        raise ContractViolationError(f"theta must be nonnegative, got {theta}")
    nc2 = float(np.linalg.norm(c2))
    if nc2 <= 0.0:
        raise DegenerateGeometryError("worst-case direction undefined: ||c2|| = 0")
    return -theta * float(np.linalg.norm(u)) / nc2 * c2


def feasibility_margin(
    c1: float, c2: np.ndarray, theta: float, u_max: float
) -> tuple[float, bool]:
    """Ball-bound feasibility test: margin = u_max + c1/((1-theta)*||c2||).

    Returns (margin, feasible).  A safe control within the ball exists iff
    c1 >= 0 (zero control works) or the margin is nonnegative; margins within
    rounding of zero (1e-10 relative) count as feasible so exact-boundary
    instances resolve to the unique feasible point instead of the fallback.
    """
    c2 = np.atleast_1d(np.asarray(c2, dtype=float))
    nc2 = float(np.linalg.norm(c2))
    if nc2 <= 0.0:
        raise DegenerateGeometryError("feasibility test undefined: ||c2|| = 0")
    if not 0.0 <= theta < 1.0:
        raise ContractViolationError(f"theta must lie in [0, 1), got {theta}")
    if not u_max > 0.0:
        raise ContractViolationError(f"u_max must be positive, got {u_max}")
    margin = u_max + c1 / ((1.0 - theta) * nc2)
    feasible = c1 >= 0.0 or margin >= -1e-10 * max(1.0, u_max)
    return margin, feasible


def feasible_point(c1: float, c2: np.ndarray, theta: float) -> tuple[np.ndarray, float]:
    """Constructive feasible pair (u, q) for the robust constraint when c1 < 0.

    u = (-c1 / ((1-theta)*||c2||^2)) * c2^T satisfies the constraint with
    equality: c1 + c2@u = theta*||c2||*||u|| = (theta/(1-theta))*|c1|.
    """
    if c1 >= 0.0:
        raise ContractViolationError("feasible_point requires c1 < 0; use u = 0 otherwise")
    if not 0.0 <= theta < 1.0:
        raise ContractViolationError(f"theta must lie in [0, 1), got {theta}")
    c2 = np.atleast_1d(np.asarray(c2, dtype=float))
    nc2 = float(np.linalg.norm(c2))
    if nc2 <= 0.0:
        raise DegenerateGeometryError("feasible point undefined: ||c2|| = 0")
    u = (-c1 / ((1.0 - theta) * nc2**2)) * c2
    return u, 0.5 * float(u @ u)


def emergency_fallback(c2: np.ndarray, u_max: float) -> np.ndarray:
    """Maximum-effort command along c2^T, the direction maximizing c2@u on the ball.

    Issued when the feasibility test certifies that no admissible control can
    satisfy the robust constraint; best achievable barrier push, nothing more.
    """
    if not u_max > 0.0:
        raise ContractViolationError(f"u_max must be positive, got {u_max}")
    c2 = np.atleast_1d(np.asarray(c2, dtype=float))
    nc2 = float(np.linalg.norm(c2))
    if nc2 <= 0.0:
        warnings.warn("emergency fallback with degenerate c2: returning zero control")
        return np.zeros_like(c2)
    return u_max / nc2 * c2


def _constraint_value(c1: float, c2: np.ndarray, beta: float, u: np.ndarray) -> float:
    return c1 + float(c2 @ u) - beta * float(np.linalg.norm(u))


def _shrunk_point(u0: np.ndarray, c2: np.ndarray, lam: float, beta: float) -> np.ndarray:
    v = u0 + lam * c2
    nv = float(np.linalg.norm(v))
    if nv <= 0.0:
        return np.zeros_like(u0)
    kappa = 1.0 - lam * beta / nv
    if kappa <= 0.0:
        return np.zeros_like(u0)
    return kappa * v


def _barrier_only_solve(
    p: FilterProblem, beta: float, nc2: float, settings: SolverSettings
) -> tuple[np.ndarray, float]:
    """Minimize ||u - u0||^2/2 subject to the (robust) barrier constraint alone.

    theta = 0 is the affine projection in closed form; otherwise the multiplier
    lam is found by bracketed root-finding on g(lam), which starts negative at
    lam = 0 and grows like (1-theta)^2*||c2||^2*lam, so a finite bracket always
    exists.  Returns (u, lam).
    """
    if p.theta == 0.0:
        g0 = p.c1 + float(p.c2 @ p.u0)
        lam = -g0 / nc2**2
        return p.u0 + lam * p.c2, lam

    def g_of(lam: float) -> float:
        u = _shrunk_point(p.u0, p.c2, lam, beta)
        return _constraint_value(p.c1, p.c2, beta, u)

    scale = max(1.0, abs(p.c1), nc2 * float(np.linalg.norm(p.u0)))
    growth = (1.0 - p.theta) ** 2 * nc2**2
    hi = max(abs(g_of(0.0)) / growth, float(np.linalg.norm(p.u0)) / nc2, 1.0 / nc2)
    for _ in range(settings.max_iter):
        if g_of(hi) >= 0.0:
            break
        hi *= 2.0
    else:
        raise SolverError(f"no upper bracket for lam root-find (hi={hi:.3e}, g={g_of(hi):.3e})")
    lam = brentq(
        g_of, 0.0, hi, xtol=1e-30, rtol=4 * np.finfo(float).eps, maxiter=settings.max_iter
    )
    if abs(g_of(lam)) > settings.root_tol * scale:
        raise SolverError(
            f"lam root-find stalled: |g({lam:.6e})| = {abs(g_of(lam)):.3e} "
            f"> {settings.root_tol * scale:.3e}"
        )
    return _shrunk_point(p.u0, p.c2, lam, beta), lam


def _both_active_solve(
    p: FilterProblem, beta: float, nc2: float
) -> tuple[np.ndarray, float, float]:
    """Closed-form minimizer with the barrier tight and ||u|| = u_max.

    The tight barrier pins the component of u along c2^T to
    a = (beta*u_max - c1)/||c2||; the remaining radius sqrt(u_max^2 - a^2) goes
    to the component of u0 orthogonal to c2, the closest point on the circle.
    Multipliers are recovered from stationarity; at a degenerate boundary
    (feasible set = single point) the gradients are collinear and only the
    aligned component of stationarity can be matched.
    """
    u_max = p.u_max
    assert u_max is not None
    chat = p.c2 / nc2
    a = (beta * u_max - p.c1) / nc2
    a = min(max(a, -u_max), u_max)
    b = np.sqrt(max(0.0, u_max**2 - a**2))
    perp = p.u0 - float(p.u0 @ chat) * chat
    nperp = float(np.linalg.norm(perp))
    if nperp > 1e-14 * max(1.0, float(np.linalg.norm(p.u0))):
        phat = perp / nperp
    elif p.m > 1 and b > 0.0:
        # u0 has no component off the c2 axis: every direction on the circle is
        # equally close, pick a deterministic one.
        k = int(np.argmin(np.abs(chat)))
        e = np.zeros(p.m)
        e[k] = 1.0
        phat = e - float(e @ chat) * chat
        phat = phat / float(np.linalg.norm(phat))
    else:
        phat = np.zeros(p.m)
    u = a * chat + b * phat
    # stationarity: u - u0 = lam*c2^T - (lam*beta + mu)*uhat
    z = u - p.u0
    nu = float(np.linalg.norm(u))
    uhat = u / nu if nu > 0.0 else chat
    cu = float(chat @ uhat) * nc2
    det = -(nc2**2) + cu**2
    if abs(det) > 1e-12 * nc2**2:
        zc = float(z @ p.c2)
        zu = float(z @ uhat)
        lam = (-zc + cu * zu) / det
        s = (-cu * zc + nc2**2 * zu) / det
    else:
        # collinear gradients: match the aligned component with mu = 0
        lam = float(z @ chat) / max(nc2 - beta, 1e-300)
        s = lam * beta
    lam = max(lam, 0.0)
    mu = max(s - lam * beta, 0.0)
    return u, lam, mu


def kkt_residuals(p: FilterProblem, d: FilterDecision) -> KKTResiduals:
    """Optimality residuals of a candidate decision under its stored multipliers.

    Stationarity is the gradient of the Lagrangian at u (subgradient-aware at
    u = 0); primal is the worst constraint violation; complementarity the worst
    multiplier*slack product.  A feasible but suboptimal candidate shows zero
    primal residual and nonzero stationarity.
    """
    if d.status == STATUS_FALLBACK:
        raise ContractViolationError("fallback decisions carry no optimality certificate")
    nc2 = float(np.linalg.norm(p.c2))
    beta = p.theta * nc2
    u = d.u
    nu = float(np.linalg.norm(u))
    g = _constraint_value(p.c1, p.c2, beta, u)
    if nu > 0.0:
        grad = u - p.u0 - d.lam * p.c2 + (d.lam * beta + d.mu) * (u / nu)
        stationarity = float(np.max(np.abs(grad)))
    else:
        # at u = 0 the norm terms contribute any vector of length lam*beta + mu
        stationarity = max(
            0.0, float(np.linalg.norm(p.u0 + d.lam * p.c2)) - (d.lam * beta + d.mu)
        )
    primal = max(0.0, -g)
    comp = abs(d.lam * g)
    if p.u_max is not None:
        ball_slack = nu - p.u_max
        primal = max(primal, ball_slack)
        comp = max(comp, abs(d.mu * ball_slack))
    return KKTResiduals(stationarity=stationarity, primal=primal, complementarity=comp)


def _decision(
    p: FilterProblem,
    u: np.ndarray,
    status: str,
    lam: float,
    mu: float,
    margin: float,
) -> FilterDecision:
    d = FilterDecision(
        u=u,
        q=0.5 * float(u @ u),
        status=status,
        lam=lam,
        mu=mu,
        feasibility_margin=margin,
        kkt=None,
    )
    if status == STATUS_FALLBACK:
        return d
    return replace(d, kkt=kkt_residuals(p, d))


def _solve(p: FilterProblem, settings: SolverSettings) -> FilterDecision:
    nc2 = float(np.linalg.norm(p.c2))
    if nc2 <= 0.0:
        raise DegenerateGeometryError("filter solve undefined: ||c2|| = 0")
    beta = p.theta * nc2
    ball = p.u_max is not None
    if ball:
        margin, feasible = feasibility_margin(p.c1, p.c2, p.theta, p.u_max)
        if not feasible:
            return _decision(
                p, emergency_fallback(p.c2, p.u_max), STATUS_FALLBACK, 0.0, 0.0, margin
            )
    else:
        margin = np.inf

    nu0 = float(np.linalg.norm(p.u0))
    # acceptance slack stays below the decision invariant ||u|| <= u_max + 1e-10;
    # rounding-edge cases route to the exact-on-ball branches instead
    ball_slack = 1e-12 * (1.0 + (p.u_max if ball else 0.0))
    g0 = _constraint_value(p.c1, p.c2, beta, p.u0)
    if g0 >= 0.0 and (not ball or nu0 <= p.u_max):
        return _decision(p, p.u0, STATUS_PASSTHROUGH, 0.0, 0.0, margin)

    if ball and nu0 > p.u_max:
        u_ball = (p.u_max / nu0) * p.u0
        if _constraint_value(p.c1, p.c2, beta, u_ball) >= 0.0:
            return _decision(p, u_ball, STATUS_BALL, 0.0, nu0 - p.u_max, margin)

    if g0 < 0.0:
        u, lam = _barrier_only_solve(p, beta, nc2, settings)
        if not ball or float(np.linalg.norm(u)) <= p.u_max + ball_slack:
            return _decision(p, u, STATUS_CONSTRAINT, lam, 0.0, margin)

    u, lam, mu = _both_active_solve(p, beta, nc2)
    return _decision(p, u, STATUS_BOTH, lam, mu, margin)


def tvcbf_qp(p: FilterProblem, settings: SolverSettings = DEFAULT_SETTINGS) -> FilterDecision:
    """Nominal filter: minimize ||u - u0||^2/2 s.t. c1 + c2@u >= 0 (and the ball).

    Requires theta = 0.  Without the ball the solution is closed form: u0 when
    already feasible, else the projection u0 - ((c1 + c2@u0)/||c2||^2)*c2^T.
    Ball-constrained instances can be infeasible; those return the fallback.
    """
    if p.theta != 0.0:
        raise ContractViolationError("tvcbf_qp requires theta = 0; use rtvcbf_socp")
    return _solve(p, settings)


def rtvcbf_socp(p: FilterProblem, settings: SolverSettings = DEFAULT_SETTINGS) -> FilterDecision:
    """Robust filter: minimize ||u - u0||^2/2 s.t. c1 + c2@u - theta*||c2||*||u|| >= 0.

    theta = 0 reduces to the nominal quadratic program and is routed to its
    closed form.  With a ball bound the feasibility test runs first; certified
    infeasibility returns an infeasible-fallback decision without solving.
    """
    return _solve(p, settings)
