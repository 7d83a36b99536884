"""Uncertain LTI plant xdot = A x + B (u + w) and the baseline state-feedback law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolationError


@dataclass(frozen=True, eq=False)
class LinearPlant:
    """State matrices for xdot = A x + B (u + w), with per-state labels.

    A is (n, n), B is (n, m); labels holds one (name, unit) pair per state.
    """

    A: np.ndarray
    B: np.ndarray
    labels: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ConfigurationError(f"A must be square and nonempty, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise ConfigurationError(f"B must be ({A.shape[0]}, m>=1), got {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ConfigurationError("plant matrices must be finite")
        if self.labels and len(self.labels) != A.shape[0]:
            raise ConfigurationError(
                f"{len(self.labels)} labels for {A.shape[0]} states"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class CarParams:
    """Physical parameters of the linear single-track lateral model.

    Stiffnesses are per axle.  Defaults describe a mid-size sedan at highway
    speed and were fixed so the shipped obstacle scenario exercises all three
    controller outcomes; see docs/derivations.md for the model equations.
    """

    mass: float = 1500.0  # kg
    yaw_inertia: float = 3850.0  # kg m^2
    cornering_front: float = 144_000.0  # N/rad, per axle
    cornering_rear: float = 90_000.0  # N/rad, per axle
    dist_front: float = 1.1  # m, CG to front axle
    dist_rear: float = 1.9  # m, CG to rear axle
    speed: float = 28.0  # m/s

    def __post_init__(self):
        for name in (
            "mass",
            "yaw_inertia",
            "cornering_front",
            "cornering_rear",
            "dist_front",
            "dist_rear",
            "speed",
        ):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0.0):
                raise ConfigurationError(f"CarParams.{name} must be positive, got {v}")


CAR_STATE_LABELS = (
    ("e", "m"),
    ("edot", "m/s"),
    ("psi", "rad"),
    ("psidot", "rad/s"),
    ("s", "m"),
    ("sdot", "m/s"),
)


def lateral_matrices(p: CarParams) -> tuple[np.ndarray, np.ndarray]:
    """Single-track lateral-error dynamics at constant speed.

    States [e, edot, psi, psidot]; input is the front steering angle (rad).
    Standard linear model with per-axle stiffnesses Cf, Cr and axle
    distances lf, lr from the center of gravity:

        A = [[0, 1, 0, 0],
             [0, -(Cf+Cr)/(m*Vx), (Cf+Cr)/m, (lr*Cr - lf*Cf)/(m*Vx)],
             [0, 0, 0, 1],
             [0, (lr*Cr - lf*Cf)/(Iz*Vx), (lf*Cf - lr*Cr)/Iz,
              -(lf^2*Cf + lr^2*Cr)/(Iz*Vx)]]
        B = [0, Cf/m, 0, lf*Cf/Iz]^T
    """
    m, iz, vx = p.mass, p.yaw_inertia, p.speed
    cf, cr, lf, lr = p.cornering_front, p.cornering_rear, p.dist_front, p.dist_rear
    a = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -(cf + cr) / (m * vx), (cf + cr) / m, (lr * cr - lf * cf) / (m * vx)],
            [0.0, 0.0, 0.0, 1.0],
            [
                0.0,
                (lr * cr - lf * cf) / (iz * vx),
                (lf * cf - lr * cr) / iz,
                -(lf**2 * cf + lr**2 * cr) / (iz * vx),
            ],
        ]
    )
    b = np.array([0.0, cf / m, 0.0, lf * cf / iz])
    return a, b


def build_car_plant(params: CarParams) -> LinearPlant:
    """Six-state car plant: lateral block plus constant-velocity longitudinal block.

    State ordering [e, edot, psi, psidot, s, sdot].  The longitudinal block is
    the unforced double integrator (A_long = [[0, 1], [0, 0]], B_long = 0), so
    steering is the only input and it never touches s or sdot.
    """
    a_lat, b_lat = lateral_matrices(params)
    a = np.zeros((6, 6))
    a[:4, :4] = a_lat
    a[4, 5] = 1.0
    b = np.zeros(6)
    b[:4] = b_lat
    return LinearPlant(A=a, B=b, labels=CAR_STATE_LABELS)


def dynamics(plant: LinearPlant, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """State derivative A x + B (u + w); pure function of its arguments."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if x.shape != (plant.n,):
        raise ContractViolationError(f"state shape {x.shape}, expected ({plant.n},)")
    if u.shape != (plant.m,) or w.shape != (plant.m,):
        raise ContractViolationError(
            f"input shapes {u.shape}/{w.shape}, expected ({plant.m},)"
        )
    return plant.A @ x + plant.B @ (u + w)


@dataclass(frozen=True, eq=False)
class BaselineController:
    """Static state feedback u0 = K (r - x[lat_indices]) on a subset of states."""

    K: np.ndarray
    r: np.ndarray
    lat_indices: tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 1:
            K = K[None, :]
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "lat_indices", tuple(int(i) for i in self.lat_indices))
        if K.shape[1] != len(self.lat_indices):
            raise ConfigurationError(
                f"gain has {K.shape[1]} columns for {len(self.lat_indices)} fed-back states"
            )
        if r.shape != (K.shape[1],):
            raise ConfigurationError(f"reference shape {r.shape}, expected ({K.shape[1]},)")


def baseline_control(ctrl: BaselineController, x: np.ndarray) -> np.ndarray:
    """Tracking law K (r - x_lat); linear in the tracking error."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or max(ctrl.lat_indices) >= x.shape[0]:
        raise ContractViolationError(
            f"state of length {x.shape} lacks indices {ctrl.lat_indices}"
        )
    x_lat = x[list(ctrl.lat_indices)]
    return ctrl.K @ (ctrl.r - x_lat)
