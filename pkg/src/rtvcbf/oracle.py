"""Independent reference solvers used only to cross-check the filter.

Nothing here runs on the control path.  Both solvers attack the same program

    min ||u - u0||^2/2   s.t.  c1 + c2@u - theta*||c2||*||u|| >= 0,
                               ||u|| <= u_max (optional)

by generic means and share no code with the structured solver: an exhaustive
grid at a fixed resolution (m <= 2), and projected gradient ascent on the dual.
"""

from __future__ import annotations

import numpy as np

from .filter import FilterProblem


def _anchor_points(p: FilterProblem) -> list[np.ndarray]:
    """Feasible points known in closed form, added to the candidate set so even
    a feasible set thinner than the grid step stays represented."""
    nc2 = float(np.linalg.norm(p.c2))
    anchors = []
    if p.c1 >= 0.0:
        anchors.append(np.zeros(p.m))
    else:
        anchors.append((-p.c1 / ((1.0 - p.theta) * nc2**2)) * p.c2)
    if p.u_max is not None:
        anchors.append(p.u_max / nc2 * p.c2)
    return anchors


def _feasible(p: FilterProblem, pts: np.ndarray, tol: float) -> np.ndarray:
    nc2 = float(np.linalg.norm(p.c2))
    norms = np.linalg.norm(pts, axis=1)
    ok = p.c1 + pts @ p.c2 - p.theta * nc2 * norms >= -tol
    if p.u_max is not None:
        ok &= norms <= p.u_max + tol
    return ok


def grid_minimizer(p: FilterProblem, step: float | None = None) -> np.ndarray:
    """Exhaustive search at resolution `step` (default 1e-5 * problem scale).

    m = 1: dense grid over the interval covering every candidate optimum.
    m = 2: the optimum is u0 when feasible, otherwise lies on the boundary of
    the feasible set; both boundary pieces are one-dimensional and are swept
    densely -- the barrier boundary by its exact radius r(phi) along each of a
    dense fan of directions, the input ball by its feasible arc.  Candidate
    spacing never exceeds `step`, so the returned point is within one step of
    the minimizer.  Only used for m <= 2.
    """
    anchors = _anchor_points(p)
    reach = min(float(np.linalg.norm(a - p.u0)) for a in anchors)
    scale = max(1.0, float(np.linalg.norm(p.u0)) + reach)
    if step is None:
        step = 1e-5 * scale
    radius = 1.05 * (float(np.linalg.norm(p.u0)) + reach) + step
    tol = 1e-12 * max(1.0, abs(p.c1), float(np.linalg.norm(p.c2)) * radius)

    if p.m == 1:
        n = int(np.ceil(2.0 * radius / step)) + 1
        cand = np.linspace(-radius, radius, n)[:, None]
        cand = np.vstack([cand, [[0.0]], np.asarray(anchors), p.u0[None, :]])
    elif p.m == 2:
        nc2 = float(np.linalg.norm(p.c2))
        beta = p.theta * nc2
        max_r = radius if p.u_max is None else min(radius, p.u_max)
        phi0 = float(np.arctan2(p.c2[1], p.c2[0]))
        anchor_arr = np.asarray(anchors)

        # barrier boundary in polar form: r(phi) = -c1 / k(phi) with
        # k(phi) = ||c2||*cos(phi - phi0) - beta.  Where k -> 0 the radius
        # stretches, so a uniform fan alone does not bound candidate spacing;
        # its union with an arccos-mapped radial grid does (r is monotone in k
        # on each half-arc), giving chords <= 2*step in one shot.
        n_fan = min(4_000_000, max(64, int(np.ceil(2.0 * np.pi * max_r / step)) + 1))
        psi_sets = [np.linspace(0.0, 2.0 * np.pi, n_fan)]
        if abs(p.c1) > tol:
            r_lo = max(step, float(np.linalg.norm(p.u0)) - reach - step)
            r_hi = min(max_r, float(np.linalg.norm(p.u0)) + reach + step)
            if r_hi > r_lo:
                r_grid = np.arange(r_lo, r_hi + step, step)
                cos_psi = (-p.c1 / r_grid + beta) / nc2
                branch = np.arccos(cos_psi[np.abs(cos_psi) <= 1.0])
                psi_sets.extend([branch, 2.0 * np.pi - branch])
        else:
            # zero offset degenerates the curve to rays through the origin
            ray = float(np.arccos(min(1.0, p.theta)))
            r_grid = np.arange(step, max_r + step, step)[:, None]
            for ang in (ray, -ray):
                d = np.array([[np.cos(phi0 + ang), np.sin(phi0 + ang)]])
                anchor_arr = np.vstack([anchor_arr, r_grid * d])
        phi = phi0 + np.concatenate(psi_sets)
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        k = dirs @ p.c2 - beta
        sel = k > tol if p.c1 < 0.0 else k < -tol
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(sel, -p.c1 / np.where(sel, k, 1.0), np.nan)
        on_curve = np.isfinite(r) & (r >= 0.0) & (r <= max_r + tol)
        pieces = [
            np.zeros((1, 2)),
            p.u0[None, :],
            anchor_arr,
            r[on_curve, None] * dirs[on_curve],
        ]
        if p.u_max is not None:
            arc_ok = p.c1 + p.u_max * k >= -tol
            pieces.append(p.u_max * dirs[arc_ok])
        cand = np.vstack(pieces)
    else:
        raise NotImplementedError("grid oracle covers m <= 2 only")

    ok = _feasible(p, cand, tol)
    if not ok.any():
        raise RuntimeError("grid oracle found no feasible candidate")
    feas = cand[ok]
    objs = np.sum((feas - p.u0) ** 2, axis=1)
    return feas[int(np.argmin(objs))]


def projected_dual_ascent(
    p: FilterProblem,
    iters: int = 200_000,
    tol: float = 1e-10,
) -> np.ndarray:
    """Projected gradient ascent on the dual of the robust program.

    For multipliers (lam, mu) >= 0 the inner minimizer over u is the radially
    shrunk point of u0 + lam*c2^T; the dual gradient is the constraint residual
    pair, so ascent with a fixed step and clipping to the nonnegative orthant
    converges to the multipliers, and the primal point is recovered from them.
    """
    nc2 = float(np.linalg.norm(p.c2))
    beta = p.theta * nc2

    def primal(lam: float, mu: float) -> np.ndarray:
        v = p.u0 + lam * p.c2
        nv = float(np.linalg.norm(v))
        if nv <= 0.0:
            return np.zeros(p.m)
        kappa = 1.0 - (lam * beta + mu) / nv
        return max(kappa, 0.0) * v

    lam, mu = 0.0, 0.0
    step = 0.5 / (nc2**2 + 1.0)
    for _ in range(iters):
        u = primal(lam, mu)
        nu = float(np.linalg.norm(u))
        grad_lam = -(p.c1 + float(p.c2 @ u) - beta * nu)
        grad_mu = nu - p.u_max if p.u_max is not None else -1.0
        new_lam = max(0.0, lam + step * grad_lam)
        new_mu = max(0.0, mu + step * grad_mu) if p.u_max is not None else 0.0
        if abs(new_lam - lam) <= tol * (1.0 + lam) and abs(new_mu - mu) <= tol * (1.0 + mu):
            lam, mu = new_lam, new_mu
            break
        lam, mu = new_lam, new_mu
    return primal(lam, mu)
