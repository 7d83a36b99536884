"""Scenario configuration ingestion, trace persistence, and plot descriptions.

Three documented formats (docs/formats.md):
  * scenario files: "[section]" headers with "key = <python literal>" entries,
    sections mirroring the module names; unknown sections or keys are rejected
    and every load re-validates the module invariants.  Angles are degrees in
    files and radians everywhere else; the conversion happens here, once.
  * trace files: comment header ("# key=value"), a units line, a CSV column
    header, then one row per control step with floats at 17 significant
    digits so a write/read round trip is exact.
  * plot descriptions: self-contained JSON (series + axes + obstacle circles
    + reference lines) renderable by any plotting tool; see
    scripts/render_plots.py for a matplotlib renderer.
"""

from __future__ import annotations

import ast
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .barrier import MovingCircleBarrier, eval_barrier
from .errors import ConfigurationError
from .plant import BaselineController, CarParams, LinearPlant, build_car_plant
from .filter import SolverSettings
from .sim import SectorNonlinearity, SimulationTrace

FORMAT_VERSION = "rtvcbf/1"


@dataclass(frozen=True)
class PlantSection:
    """kind = "car" builds the single-track model from the physical parameters;
    kind = "explicit" takes A and B verbatim (row-major nested lists)."""

    kind: str = "car"
    mass: float = 1500.0
    yaw_inertia: float = 3850.0
    cornering_front: float = 144_000.0
    cornering_rear: float = 90_000.0
    dist_front: float = 1.1
    dist_rear: float = 1.9
    speed: float = 28.0
    A: list | None = None
    B: list | None = None


@dataclass(frozen=True)
class BarrierSection:
    r_obs: float = 1.5
    v_e: float = 1.0
    v_s: float = -10.0
    clearance: float = 2.0
    alpha: float = 8.6


@dataclass(frozen=True)
class FilterSection:
    theta: float = 0.5
    u_max_deg: float | None = 40.0
    saturation_mode: str = "constraint"  # "constraint": bound inside the program; "clip": post-saturate
    primal_abs: float = 1e-9
    primal_rel: float = 1e-9
    kkt_tol: float = 1e-8
    root_tol: float = 1e-12
    max_iter: int = 200
    rel_degree_eps: float | None = None  # None: 1e-9 * (1 + ||c2|| at the initial state)


@dataclass(frozen=True)
class BaselineSection:
    gain: list = field(default_factory=lambda: [0.32, 0.18, 2.01, 0.16])
    reference: list = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    lat_indices: list = field(default_factory=lambda: [0, 1, 2, 3])


@dataclass(frozen=True)
class NonlinearitySection:
    kind: str = "worst-case-adversary"
    theta: float | None = None  # None: follow filter.theta
    delta: float = 0.0
    omega: float = 6.283185307179586
    phase: float = 0.0
    amplitude: float = 1.0
    level_deg: float | None = None  # saturation-residual level; None: (1-theta)*u_max_deg
    seed: int = 0


@dataclass(frozen=True)
class SimSection:
    dt_ctrl: float = 0.001
    dt_sim: float = 0.001
    horizon: float = 3.0
    initial_state: list = field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0, -40.0, 28.0])
    monitor_tol: float = 1e-9


@dataclass(frozen=True)
class OutputSection:
    out_dir: str = "out"


_SECTIONS = {
    "plant": PlantSection,
    "barrier": BarrierSection,
    "filter": FilterSection,
    "baseline": BaselineSection,
    "nonlinearity": NonlinearitySection,
    "sim": SimSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: everything a closed-loop run needs, in one value."""

    plant: PlantSection = PlantSection()
    barrier: BarrierSection = BarrierSection()
    filter: FilterSection = FilterSection()
    baseline: BaselineSection = BaselineSection()
    nonlinearity: NonlinearitySection = NonlinearitySection()
    sim: SimSection = SimSection()
    output: OutputSection = OutputSection()

    def __post_init__(self):
        self.build_plant()
        self.build_barrier()
        self.build_baseline()
        self.build_nonlinearity()
        if not 0.0 <= self.filter.theta < 1.0:
            raise ConfigurationError(f"filter.theta must lie in [0, 1), got {self.filter.theta}")
        if self.filter.u_max_deg is not None and not self.filter.u_max_deg > 0.0:
            raise ConfigurationError("filter.u_max_deg must be positive when present")
        if self.filter.saturation_mode not in ("constraint", "clip"):
            raise ConfigurationError(
                f"filter.saturation_mode must be 'constraint' or 'clip', "
                f"got {self.filter.saturation_mode!r}"
            )
        if not self.sim.dt_ctrl > 0.0 or not self.sim.dt_sim > 0.0:
            raise ConfigurationError("sim.dt_ctrl and sim.dt_sim must be positive")
        if self.sim.dt_sim > self.sim.dt_ctrl + 1e-15:
            raise ConfigurationError("sim.dt_sim must not exceed sim.dt_ctrl")
        if self.sim.horizon < 0.0:
            raise ConfigurationError("sim.horizon must be nonnegative")

    # --- builders -----------------------------------------------------------
    def build_plant(self) -> LinearPlant:
        p = self.plant
        if p.kind == "car":
            return build_car_plant(
                CarParams(
                    mass=p.mass,
                    yaw_inertia=p.yaw_inertia,
                    cornering_front=p.cornering_front,
                    cornering_rear=p.cornering_rear,
                    dist_front=p.dist_front,
                    dist_rear=p.dist_rear,
                    speed=p.speed,
                )
            )
        if p.kind == "explicit":
            if p.A is None or p.B is None:
                raise ConfigurationError("explicit plant needs both A and B")
            return LinearPlant(A=np.array(p.A, dtype=float), B=np.array(p.B, dtype=float))
        raise ConfigurationError(f"plant.kind must be 'car' or 'explicit', got {p.kind!r}")

    def build_barrier(self) -> MovingCircleBarrier:
        b = self.barrier
        if not b.alpha > 0.0:
            raise ConfigurationError(f"barrier.alpha must be positive, got {b.alpha}")
        return MovingCircleBarrier(
            r_obs=b.r_obs, v_e=b.v_e, v_s=b.v_s, clearance=b.clearance
        )

    def build_baseline(self) -> BaselineController:
        b = self.baseline
        return BaselineController(
            K=np.array(b.gain, dtype=float),
            r=np.array(b.reference, dtype=float),
            lat_indices=tuple(b.lat_indices),
        )

    def build_nonlinearity(self, seed: int | None = None) -> SectorNonlinearity:
        n = self.nonlinearity
        theta = self.filter.theta if n.theta is None else n.theta
        level_deg = n.level_deg
        if level_deg is None:
            level_deg = (
                (1.0 - theta) * self.filter.u_max_deg
                if self.filter.u_max_deg is not None
                else 45.0
            )
        return SectorNonlinearity(
            kind=n.kind,
            theta=theta,
            delta=n.delta,
            omega=n.omega,
            phase=n.phase,
            amplitude=n.amplitude,
            level=float(np.deg2rad(level_deg)),
            seed=n.seed if seed is None else int(seed),
        )

    def solver_settings(self) -> SolverSettings:
        f = self.filter
        return SolverSettings(
            primal_abs=f.primal_abs,
            primal_rel=f.primal_rel,
            kkt_tol=f.kkt_tol,
            root_tol=f.root_tol,
            max_iter=f.max_iter,
        )

    @property
    def u_max_rad(self) -> float | None:
        if self.filter.u_max_deg is None:
            return None
        return float(np.deg2rad(self.filter.u_max_deg))

    def rel_degree_eps(self, plant: LinearPlant, x0: np.ndarray) -> float:
        if self.filter.rel_degree_eps is not None:
            return self.filter.rel_degree_eps
        ev = eval_barrier(self.build_barrier(), plant, x0, 0.0, self.barrier.alpha)
        return 1e-9 * (1.0 + float(np.linalg.norm(ev.c2)))

    # --- identity -----------------------------------------------------------
    def serialize(self) -> str:
        lines = [f"# scenario ({FORMAT_VERSION})"]
        for name, section in self._section_items():
            lines.append("")
            lines.append(f"[{name}]")
            for f in fields(section):
                lines.append(f"{f.name} = {getattr(section, f.name)!r}")
        return "\n".join(lines) + "\n"

    def _section_items(self):
        return [(name, getattr(self, name)) for name in _SECTIONS]

    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()[:16]

    def geometry_hash(self) -> str:
        text = []
        for name in ("plant", "barrier", "sim"):
            section = getattr(self, name)
            text.extend(f"{name}.{f.name}={getattr(section, f.name)!r}" for f in fields(section))
        return hashlib.sha256("\n".join(text).encode()).hexdigest()[:16]

    def trace_metadata(self, architecture, nonlin, terminal_event=None) -> dict:
        return {
            "format": f"{FORMAT_VERSION}-trace",
            "config_hash": self.config_hash(),
            "geometry_hash": self.geometry_hash(),
            "architecture": architecture,
            "seed": nonlin.seed,
            "alpha": self.barrier.alpha,
            "filter_theta": self.filter.theta,
            "nonlinearity_kind": nonlin.kind,
            "nonlinearity_theta": nonlin.theta,
            "dt_ctrl": self.sim.dt_ctrl,
            "dt_sim": self.sim.dt_sim,
            "horizon": self.sim.horizon,
            "u_max_deg": self.filter.u_max_deg,
            "r_obs": self.barrier.r_obs,
            "v_e": self.barrier.v_e,
            "v_s": self.barrier.v_s,
            "clearance": self.barrier.clearance,
            "terminal_event": terminal_event,
        }


def _parse_value(raw: str, path: str, lineno: int):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError) as exc:
        raise ConfigurationError(f"{path}:{lineno}: cannot parse value {raw!r}: {exc}") from exc


def _parse_tree(text: str, path: str) -> dict[str, dict]:
    tree: dict[str, dict] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SECTIONS:
                raise ConfigurationError(
                    f"{path}:{lineno}: unknown section [{section}]; "
                    f"known: {sorted(_SECTIONS)}"
                )
            tree.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigurationError(f"{path}:{lineno}: key outside any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        known = {f.name for f in fields(_SECTIONS[section])}
        if key not in known:
            raise ConfigurationError(
                f"{path}:{lineno}: unknown key {section}.{key}; known: {sorted(known)}"
            )
        if key in tree[section]:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key {section}.{key}")
        tree[section][key] = _parse_value(raw.strip(), path, lineno)
    return tree


def _coerce(section_cls, key: str, value):
    ftypes = {f.name: f.type for f in fields(section_cls)}
    t = ftypes[key]
    if value is None:
        return None
    if t == "float" or t == "float | None":
        return float(value)
    if t == "int":
        return int(value)
    return value


def config_from_tree(tree: dict[str, dict]) -> ScenarioConfig:
    kwargs = {}
    for name, cls in _SECTIONS.items():
        entries = tree.get(name, {})
        coerced = {k: _coerce(cls, k, v) for k, v in entries.items()}
        kwargs[name] = cls(**coerced)
    return ScenarioConfig(**kwargs)


def apply_overrides(tree: dict[str, dict], overrides: dict[str, object]) -> dict[str, dict]:
    """Apply dotted-key overrides (e.g. "filter.theta") to a parsed tree.

    Keys must name an existing section and field; values may be pre-parsed
    or literal strings.
    """
    out = {k: dict(v) for k, v in tree.items()}
    for dotted, value in overrides.items():
        if "." not in dotted:
            raise ConfigurationError(f"override {dotted!r} is not of the form section.key")
        section, key = dotted.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigurationError(f"override references unknown section {section!r}")
        known = {f.name for f in fields(_SECTIONS[section])}
        if key not in known:
            raise ConfigurationError(f"override references unknown key {section}.{key}")
        if isinstance(value, str):
            value = _parse_value(value, f"<override {dotted}>", 1)
        out.setdefault(section, {})[key] = value
    return out


def load_scenario(path: str | Path, overrides: dict[str, object] | None = None) -> ScenarioConfig:
    """Parse, override, coerce, and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file not found: {path}")
    tree = _parse_tree(path.read_text(), str(path))
    if overrides:
        tree = apply_overrides(tree, overrides)
    return config_from_tree(tree)


def loads_scenario(text: str, overrides: dict[str, object] | None = None) -> ScenarioConfig:
    tree = _parse_tree(text, "<string>")
    if overrides:
        tree = apply_overrides(tree, overrides)
    return config_from_tree(tree)


# --- trace files -------------------------------------------------------------

_BASE_UNITS = {
    "t": "s",
    "h": "m^2",
    "lf_h": "m^2/s",
    "lf2_h": "m^2/s^2",
    "c1": "m^2/s^2",
    "feas_margin": "rad",
    "rel_deg_ok": "bool",
    "status": "-",
}


@dataclass(eq=False)
class TraceFile:
    """Parsed trace: header metadata, column arrays, and the status strings."""

    meta: dict
    column_names: list[str]
    units: list[str]
    columns: dict[str, np.ndarray]
    status: list[str]

    def __len__(self) -> int:
        return len(self.status)


def _trace_table(trace: SimulationTrace | TraceFile) -> TraceFile:
    if isinstance(trace, TraceFile):
        return trace
    n, nx = trace.x.shape
    m = trace.u.shape[1] if trace.u.ndim == 2 else 1
    labels = CAR_LABELS if nx == 6 else [f"x{i}" for i in range(nx)]
    units = CAR_UNITS if nx == 6 else ["-"] * nx
    names: list[str] = ["t"]
    cols: dict[str, np.ndarray] = {"t": trace.t}
    unit_list = ["s"]
    for i, (lab, unit) in enumerate(zip(labels, units)):
        names.append(lab)
        cols[lab] = trace.x[:, i]
        unit_list.append(unit)
    for base, arr, unit in (("u0", trace.u0, "rad"), ("u", trace.u, "rad"), ("w", trace.w, "rad")):
        arr2 = np.atleast_2d(arr.T).T if arr.ndim == 1 else arr
        for j in range(m):
            name = base if m == 1 else f"{base}_{j}"
            names.append(name)
            cols[name] = arr2[:, j]
            unit_list.append(unit)
    for name, arr in (
        ("h", trace.h),
        ("lf_h", trace.lf_h),
        ("lf2_h", trace.lf2_h),
        ("c1", trace.c1),
    ):
        names.append(name)
        cols[name] = arr
        unit_list.append(_BASE_UNITS[name])
    c2 = np.atleast_2d(trace.c2.T).T if trace.c2.ndim == 1 else trace.c2
    for j in range(m):
        name = "c2" if m == 1 else f"c2_{j}"
        names.append(name)
        cols[name] = c2[:, j]
        unit_list.append("m^2/s^2/rad")
    names.append("feas_margin")
    cols["feas_margin"] = trace.feas_margin
    unit_list.append(_BASE_UNITS["feas_margin"])
    names.append("rel_deg_ok")
    cols["rel_deg_ok"] = trace.rel_deg_ok.astype(float)
    unit_list.append("bool")
    names.append("status")
    unit_list.append("-")
    return TraceFile(
        meta=dict(trace.metadata),
        column_names=names,
        units=unit_list,
        columns=cols,
        status=list(trace.status),
    )


CAR_LABELS = ["e", "edot", "psi", "psidot", "s", "sdot"]
CAR_UNITS = ["m", "m/s", "rad", "rad/s", "m", "m/s"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trace(trace: SimulationTrace | TraceFile, path: str | Path) -> None:
    """Write a trace as commented-header CSV with exact-round-trip floats."""
    table = _trace_table(trace)
    path = Path(path)
    lines = []
    for key, value in table.meta.items():
        lines.append(f"# {key}={json.dumps(value)}")
    lines.append("# units=" + ",".join(table.units))
    lines.append(",".join(table.column_names))
    n = len(table)
    numeric = [name for name in table.column_names if name != "status"]
    for i in range(n):
        row = [_fmt(table.columns[name][i]) for name in numeric]
        row.append(table.status[i])
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_trace(path: str | Path) -> TraceFile:
    path = Path(path)
    meta: dict = {}
    units: list[str] = []
    names: list[str] = []
    rows: list[list[str]] = []
    for line in path.read_text().splitlines():
        if line.startswith("# units="):
            units = line[len("# units=") :].split(",")
        elif line.startswith("# "):
            key, _, raw = line[2:].partition("=")
            meta[key] = json.loads(raw)
        elif not names:
            names = line.split(",")
        elif line.strip():
            rows.append(line.split(","))
    if not names:
        raise ConfigurationError(f"{path}: not a trace file (no column header)")
    numeric = [nm for nm in names if nm != "status"]
    columns = {
        nm: np.array([float(r[j]) for r in rows]) for j, nm in enumerate(numeric)
    }
    status = [r[len(numeric)] for r in rows] if "status" in names else []
    return TraceFile(meta=meta, column_names=names, units=units, columns=columns, status=status)


# --- plot descriptions --------------------------------------------------------

PLOT_KINDS = ("trajectory", "steering", "boundary-distance")


def emit_plot(
    traces: list,
    kind: str,
    path: str | Path,
    annotate_time: float = 1.1,
) -> None:
    """Write a self-contained JSON plot description for one of the three views.

    trajectory: (s, e) paths with the keep-out circle drawn at t = 0 and at the
    annotation time.  steering: control in degrees against s, with the input
    bound as reference lines.  boundary-distance: clearance to the safety
    boundary, sqrt(h + (clearance*r_obs)^2) - clearance*r_obs, against s.
    All traces must come from the same scenario geometry.
    """
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    tables = [_trace_table(t) for t in traces]
    if not tables:
        raise ConfigurationError("emit_plot needs at least one trace")
    geo = {t.meta.get("geometry_hash") for t in tables}
    if len(geo) != 1:
        raise ConfigurationError(f"traces mix scenario geometries: {sorted(geo)}")
    meta = tables[0].meta
    boundary = float(meta["clearance"]) * float(meta["r_obs"])

    series = []
    hlines = []
    circles = []
    if kind == "trajectory":
        x_label, y_label, title = "s [m]", "e [m]", "Trajectory"
        for t in tables:
            series.append(
                {
                    "label": t.meta.get("architecture", "run"),
                    "x": [float(v) for v in t.columns["s"]],
                    "y": [float(v) for v in t.columns["e"]],
                }
            )
        for t_c in (0.0, annotate_time):
            circles.append(
                {
                    "center": [float(meta["v_s"]) * t_c, float(meta["v_e"]) * t_c],
                    "radius": boundary,
                    "label": f"t={t_c:g}s",
                }
            )
    elif kind == "steering":
        x_label, y_label, title = "s [m]", "u [deg]", "Steering Angle"
        ucol = "u" if "u" in tables[0].columns else "u_0"
        for t in tables:
            series.append(
                {
                    "label": t.meta.get("architecture", "run"),
                    "x": [float(v) for v in t.columns["s"]],
                    "y": [float(np.rad2deg(v)) for v in t.columns[ucol]],
                }
            )
        if meta.get("u_max_deg") is not None:
            bound = float(meta["u_max_deg"])
            hlines = [
                {"y": bound, "label": "+u_max"},
                {"y": -bound, "label": "-u_max"},
            ]
    else:
        x_label, y_label, title = "s [m]", "distance to boundary [m]", "Distance to Boundary"
        for t in tables:
            h = t.columns["h"]
            clearance = np.sqrt(np.maximum(0.0, h + boundary**2)) - boundary
            series.append(
                {
                    "label": t.meta.get("architecture", "run"),
                    "x": [float(v) for v in t.columns["s"]],
                    "y": [float(v) for v in clearance],
                }
            )
    doc = {
        "format": f"{FORMAT_VERSION}-plot",
        "kind": kind,
        "title": title,
        "x_label": x_label,
        "y_label": y_label,
        "series": series,
        "circles": circles,
        "hlines": hlines,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
