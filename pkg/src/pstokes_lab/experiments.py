"""Drivers for the manufactured-solution, glacier and inf-sup experiments.

Each driver takes an :class:`ExperimentConfig`, solves to convergence for every
regularization in the sweep, analyses the final iterate and writes a CSV table
(plus SVG plots) to ``config.out_dir``.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem.assembly import DEFAULT_QUAD_DEGREE, PhysicalParams
from .fem.boundary import BoundaryConditions
from .manufactured import ManufacturedSolution, ms_params
from .mesh import (
    BoundaryTag,
    Mesh,
    MeshQuality,
    extruded_glacier_mesh,
    load_mesh,
    load_profile,
    mesh_quality,
    square_mesh,
    synthetic_profile,
)
from .solver import METHODS, SolverConfig, StokesProblem, error_norms, nonlinear_solve
from .spectral import SpectralReport, analyze_state, c0_constant, cnu_constant

log = logging.getLogger(__name__)

EPS_FACTORS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)

CSV_COLUMNS = (
    "eps",
    "schur",
    "lambda_min",
    "lambda_max",
    "bound_lower",
    "bound_upper",
    "c0",
    "c_nu",
    "max_strain",
    "nonlinear_iters",
    "gmres_iters_mean",
    "converged",
)
INFSUP_COLUMNS = ("mesh", "num_cells", "h", "eps", "c0", "c_nu", "min_angle")


class ConfigError(ValueError):
    """Invalid configuration value or file."""


def glen_viscosity(rate_factor: float, n: float = 3.0) -> float:
    """``nu0`` such that the stress ``nu0 |Du|^(p-2) Du`` is Glen's flow law
    ``D = A tau_e^(n-1) tau`` with ``p = 1 + 1/n``.

    The effective strain rate is ``|Du| / sqrt(2)``, hence
    ``nu0 = 2^((n-1)/(2n)) A^(-1/n)``, i.e. ``2^(1/3) A^(-1/3)`` for ``n = 3``.
    """
    if rate_factor <= 0:
        raise ConfigError("rate_factor must be positive")
    return 2.0 ** ((n - 1.0) / (2.0 * n)) * rate_factor ** (-1.0 / n)


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run; ``None`` fields take
    experiment-dependent defaults (see :meth:`resolved_eps` and
    :meth:`solver_config`)."""

    experiment: str = "ms"
    element: str = "p2p1"
    method: str = "newton"
    nx: int = 32
    eps_list: tuple | None = None
    p_power: float = 4.0 / 3.0
    nu0: float | None = None
    delta: float = 0.01
    # glacier
    rate_factor: float = 1e-16
    rho: float = 910.0
    gravity: tuple = (0.0, -9.81)
    strain_scale: float = 0.1
    profile_path: str | None = None
    mesh_path: str | None = None
    length: float = 5000.0
    max_thickness: float = 130.0
    bed_slope: float = 0.1
    overdeepening_depth: float = 80.0
    n_columns: int = 128
    n_layers: int = 7
    lake_interval: tuple | None = (2200.0, 2800.0)
    # inf-sup study
    target: str = "ms"
    nx_list: tuple = (8, 16, 32)
    columns_list: tuple = (32, 64, 128)
    mesh_files: tuple = ()
    # solver
    schur: tuple = ("m", "mnu")
    r_tol: float = 1e-6
    a_tol: float = 1e-10
    max_iters: int = 60
    warm_start_steps: int | None = None
    warm_start_rtol: float = 1e-2
    linear_solver: str = "gmres"
    linear_tol: float = 1e-10
    restart: int = 200
    linear_max_iters: int = 2000
    line_search: bool = False
    cnu_mode: str = "both"
    quad_degree: int = DEFAULT_QUAD_DEGREE
    out_dir: str = "results"
    plots: bool = True

    def __post_init__(self):
        self.experiment = self.experiment.lower()
        self.element = self.element.lower()
        self.method = self.method.lower()
        self.target = self.target.lower()
        if isinstance(self.schur, str):
            self.schur = ("m", "mnu") if self.schur.lower() == "both" else (self.schur,)
        self.schur = tuple(s.lower() for s in self.schur)
        if self.experiment not in ("ms", "glacier", "infsup"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.element not in ("p2p1", "mini"):
            raise ConfigError(f"unknown element {self.element!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.target not in ("ms", "glacier"):
            raise ConfigError(f"unknown inf-sup target {self.target!r}")
        if self.cnu_mode not in ("both", "kernel"):
            raise ConfigError(f"cnu_mode must be both or kernel, got {self.cnu_mode!r}")
        if not self.schur or any(s not in ("m", "mnu") for s in self.schur):
            raise ConfigError(f"schur must be m, mnu or both, got {self.schur!r}")
        if self.eps_list is not None:
            self.eps_list = tuple(float(e) for e in np.atleast_1d(self.eps_list))
            if not self.eps_list or any(not e > 0 for e in self.eps_list):
                raise ConfigError("eps_list must be nonempty with positive entries")
        if self.lake_interval is not None:
            lo, hi = (float(v) for v in self.lake_interval)
            if not lo < hi:
                raise ConfigError("lake_interval must be increasing")
            self.lake_interval = (lo, hi)
        self.gravity = tuple(float(g) for g in self.gravity)
        if len(self.gravity) != 2:
            raise ConfigError("gravity must have two components")
        for name in ("nx", "n_columns", "n_layers"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")

    def resolved_eps(self, experiment: str | None = None) -> tuple:
        if self.eps_list is not None:
            return self.eps_list
        experiment = experiment or self.experiment
        scale = self.strain_scale if experiment == "glacier" else 1.0
        return tuple(float(f"{scale * f:.15g}") for f in EPS_FACTORS)

    def solver_config(self, experiment: str | None = None) -> SolverConfig:
        """Newton on the manufactured problem defaults to a 5-step Picard warm
        start; the glacier starts from zero for both methods."""
        experiment = experiment or self.experiment
        if experiment == "infsup":
            experiment = self.target
        warm = self.warm_start_steps
        if warm is None:
            warm = 5 if (self.method == "newton" and experiment == "ms") else 0
        return SolverConfig(
            method=self.method,
            r_tol=self.r_tol,
            a_tol=self.a_tol,
            max_iters=self.max_iters,
            warm_start_steps=warm,
            warm_start_rtol=self.warm_start_rtol,
            linear_solver=self.linear_solver,
            linear_tol=self.linear_tol,
            restart=self.restart,
            linear_max_iters=self.linear_max_iters,
            line_search=self.line_search,
        )

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def echo(self) -> list[str]:
        """``key = value`` lines that :func:`parse_config` reads back."""
        return [f"{f.name} = {_format_value(getattr(self, f.name))}" for f in dataclasses.fields(self)]


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_format_value(x) for x in v) if v else ""
    return str(v)


_TUPLE_FIELDS = {"eps_list", "gravity", "lake_interval", "nx_list", "columns_list", "mesh_files", "schur"}


def _parse_scalar(text: str, kind):
    low = text.lower()
    if low == "none":
        return None
    if kind is bool:
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


_FIELD_KINDS = {
    "experiment": str, "element": str, "method": str, "nx": int, "eps_list": float,
    "p_power": float, "nu0": float, "delta": float, "rate_factor": float, "rho": float,
    "gravity": float, "strain_scale": float, "profile_path": str, "mesh_path": str,
    "length": float, "max_thickness": float, "bed_slope": float,
    "overdeepening_depth": float, "n_columns": int, "n_layers": int,
    "lake_interval": float, "target": str, "nx_list": int, "columns_list": int,
    "mesh_files": str, "schur": str, "r_tol": float, "a_tol": float, "max_iters": int,
    "warm_start_steps": int, "warm_start_rtol": float, "linear_solver": str,
    "linear_tol": float, "restart": int, "linear_max_iters": int, "line_search": bool,
    "cnu_mode": str, "quad_degree": int, "out_dir": str, "plots": bool,
}


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma
    separated and ``none`` clears an optional field."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in _FIELD_KINDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = _FIELD_KINDS[key]
        try:
            if key in _TUPLE_FIELDS:
                if val.lower() == "none":
                    values[key] = None
                else:
                    items = [s.strip() for s in val.split(",") if s.strip()]
                    values[key] = tuple(_parse_scalar(s, kind) for s in items)
                    if key == "schur" and len(values[key]) == 1:
                        values[key] = values[key][0]
            else:
                values[key] = _parse_scalar(val, kind)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    base = ExperimentConfig() if base is None else base
    try:
        return base.replace(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


@dataclass
class RunReport:
    """Outcome of one driver call."""

    experiment: str
    config: ExperimentConfig
    reports: list = field(default_factory=list)
    nonlinear_iters: list = field(default_factory=list)
    gmres_iters_mean: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    error_norms: list = field(default_factory=list)
    quality: MeshQuality | None = None
    csv_path: Path | None = None
    plot_paths: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        """One row per (eps, Schur choice); iteration data repeat per eps."""
        nsch = len(self.config.schur)
        out = []
        for i, r in enumerate(self.reports):
            k = i // nsch
            out.append(
                {
                    "eps": r.eps,
                    "schur": r.schur_choice,
                    "lambda_min": r.lambda_min_nonzero,
                    "lambda_max": r.lambda_max,
                    "bound_lower": r.bound_lower,
                    "bound_upper": r.bound_upper,
                    "c0": r.c0,
                    "c_nu": r.c_nu,
                    "max_strain": r.max_strain,
                    "nonlinear_iters": self.nonlinear_iters[k],
                    "gmres_iters_mean": self.gmres_iters_mean[k],
                    "converged": self.converged[k],
                }
            )
        return out

    def by_schur(self, choice: str) -> list[SpectralReport]:
        return [r for r in self.reports if r.schur_choice == choice]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, columns, rows, header_lines=()) -> Path:
    """Deterministic CSV: ``# `` prefixed header lines, then the table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- problem factories --------------------------------------------------------

def ms_problem(config: ExperimentConfig, nx: int | None = None, eps: float | None = None):
    """``(problem, exact)`` for the manufactured solution on ``[-1, 1]^2``."""
    ms = ManufacturedSolution(delta=config.delta, p=config.p_power)
    nu0 = 1.0 if config.nu0 is None else config.nu0
    eps = config.resolved_eps("ms")[0] if eps is None else eps
    params = ms_params(ms, PhysicalParams(nu0=nu0, p=config.p_power, eps=eps, gamma=METHODS[config.method]))
    mesh = square_mesh(config.nx if nx is None else nx)
    bcs = BoundaryConditions(dirichlet_tags=(BoundaryTag.DIRICHLET_ALL,), value=ms.velocity)
    return StokesProblem(mesh, config.element, params, bcs, config.quad_degree), ms


def glacier_mesh(config: ExperimentConfig, n_columns: int | None = None) -> Mesh:
    if config.mesh_path:
        return load_mesh(config.mesh_path)
    if config.profile_path:
        profile = load_profile(config.profile_path)
    else:
        profile = synthetic_profile(
            length=config.length,
            max_thickness=config.max_thickness,
            bed_slope=config.bed_slope,
            overdeepening_depth=config.overdeepening_depth,
        )
    n_columns = config.n_columns if n_columns is None else n_columns
    return extruded_glacier_mesh(profile, n_columns, config.n_layers, lake_interval=config.lake_interval)


def glacier_problem(config: ExperimentConfig, mesh: Mesh | None = None, eps: float | None = None) -> StokesProblem:
    """No-slip bed, free-slip lake and stress-free surface, ``f = rho g``.

    Units are metres, years and pascals, so velocities are in m/a and ``eps``
    in 1/a.
    """
    mesh = glacier_mesh(config) if mesh is None else mesh
    nu0 = glen_viscosity(config.rate_factor) if config.nu0 is None else config.nu0
    eps = config.resolved_eps("glacier")[0] if eps is None else eps
    params = PhysicalParams(
        nu0=nu0,
        p=config.p_power,
        eps=eps,
        gamma=METHODS[config.method],
        rho=config.rho,
        gravity=config.gravity,
    )
    slip = (BoundaryTag.LAKE,) if BoundaryTag.LAKE in mesh.tags_present() else ()
    bcs = BoundaryConditions(dirichlet_tags=(BoundaryTag.BED,), slip_tags=slip)
    return StokesProblem(mesh, config.element, params, bcs, config.quad_degree)


# -- drivers ------------------------------------------------------------------

def _sweep(problem, config, eps_list, report: RunReport, exact=None):
    solver = config.solver_config(report.experiment)
    for eps in eps_list:
        prob = problem.with_params(problem.params.replace(eps=float(eps)))
        state = nonlinear_solve(prob, solver)
        if not state.converged:
            log.warning("eps=%g: nonlinear iteration did not converge", eps)
        report.reports.extend(
            analyze_state(prob, state.u, state.p, config.method, config.schur, config.cnu_mode)
        )
        report.nonlinear_iters.append(state.k + state.warm_start_iters)
        report.gmres_iters_mean.append(state.gmres_iters_mean)
        report.converged.append(bool(state.converged))
        report.states.append(state)
        if exact is not None:
            report.error_norms.append(error_norms(state, prob, exact))


def _finish(report: RunReport, name: str, extra_header=()) -> RunReport:
    cfg = report.config
    out = Path(cfg.out_dir)
    header = ["config: " + line for line in cfg.echo()] + list(extra_header)
    if report.quality is not None:
        header.append(
            f"mesh quality: min_angle_deg = {_fmt(np.degrees(report.quality.min_angle))}, "
            f"angle_ratio = {_fmt(report.quality.angle_ratio)}"
        )
    report.csv_path = write_csv(out / f"{name}_report.csv", CSV_COLUMNS, report.rows(), header)
    if cfg.plots:
        from .plots import emit_plots

        report.plot_paths = emit_plots(report, out / name)
    return report


def run_ms(config: ExperimentConfig) -> RunReport:
    """Manufactured-solution sweep; writes ``ms_report.csv`` with error norms."""
    config = config.replace(experiment="ms")
    problem, exact = ms_problem(config)
    report = RunReport("ms", config, quality=mesh_quality(problem.mesh))
    _sweep(problem, config, config.resolved_eps("ms"), report, exact)
    extra = [
        f"errors: eps = {_fmt(e)}, h1_velocity = {_fmt(h1)}, l2_pressure = {_fmt(l2)}"
        for e, (h1, l2) in zip(config.resolved_eps("ms"), report.error_norms)
    ]
    return _finish(report, "ms", extra)


def run_glacier(config: ExperimentConfig) -> RunReport:
    """Glacier sweep with ``f = rho g``; writes ``glacier_report.csv``."""
    config = config.replace(experiment="glacier")
    problem = glacier_problem(config)
    report = RunReport("glacier", config, quality=mesh_quality(problem.mesh))
    _sweep(problem, config, config.resolved_eps("glacier"), report)
    extra = [
        f"speed: eps = {_fmt(e)}, max_speed = {_fmt(np.hypot(*s.u.reshape(2, -1)).max())}"
        for e, s in zip(config.resolved_eps("glacier"), report.states)
    ]
    return _finish(report, "glacier", extra)


def ms_convergence(config: ExperimentConfig, nx_list=(8, 16, 32), eps: float | None = None):
    """Velocity H1-seminorm and pressure L2 errors against the exact solution."""
    out = []
    solver = config.solver_config("ms")
    for nx in nx_list:
        problem, exact = ms_problem(config, nx=nx, eps=eps)
        state = nonlinear_solve(problem, solver)
        out.append((nx,) + error_norms(state, problem, exact))
    return out


@dataclass
class InfSupTable:
    rows: list
    csv_path: Path | None = None
    plot_paths: list = field(default_factory=list)


def run_infsup(config: ExperimentConfig) -> InfSupTable:
    """``c0`` and the computed ``c_nu`` per mesh and regularization.

    ``target = ms`` sweeps square meshes over ``nx_list``; ``target = glacier``
    sweeps extruded meshes over ``columns_list`` and any ``mesh_files``.
    ``c_nu`` is evaluated at the converged state for each eps.
    """
    config = config.replace(experiment="infsup")
    meshes = []
    if config.target == "ms":
        for nx in config.nx_list:
            meshes.append((f"square_nx{nx}", nx))
    else:
        for nc in config.columns_list:
            meshes.append((f"extruded_{nc}x{config.n_layers}", glacier_mesh(config, nc)))
        for path in config.mesh_files:
            meshes.append((Path(path).stem, load_mesh(path)))
    solver = config.solver_config(config.target)
    rows = []
    for name, source in meshes:
        for eps in config.resolved_eps(config.target):
            if config.target == "ms":
                problem, _ = ms_problem(config, nx=source, eps=eps)
            else:
                problem = glacier_problem(config, source, eps=eps)
            state = nonlinear_solve(problem, solver)
            system = problem.assemble(state.u, state.p, gamma=0)
            rows.append(
                {
                    "mesh": name,
                    "num_cells": problem.mesh.num_cells,
                    "h": float(np.sqrt(2.0 * problem.mesh.cell_areas().mean())),
                    "eps": float(eps),
                    "c0": c0_constant(problem, system),
                    "c_nu": cnu_constant(problem, state.u, system, problem.params, config.cnu_mode),
                    "min_angle": float(np.degrees(mesh_quality(problem.mesh).min_angle)),
                }
            )
    table = InfSupTable(rows)
    out = Path(config.out_dir)
    header = ["config: " + line for line in config.echo()]
    table.csv_path = write_csv(out / "infsup_report.csv", INFSUP_COLUMNS, rows, header)
    if config.plots:
        from .plots import emit_infsup_plot

        table.plot_paths = emit_infsup_plot(rows, out / "infsup")
    return table
