"""Scenario configuration, validation and the end-to-end pipelines.

A scenario is described by a single YAML mapping (see ``DEFAULT_CONFIG`` for
the full key set; unknown keys are rejected so typos cannot silently corrupt
physics parameters).  The pipeline stages are: grid -> calibration ->
propagation -> analysis -> output; any error is re-raised with the failing
stage named and no partial output directory is left behind.
"""

from __future__ import annotations

import math
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import bases as bs
from . import continuous as ct
from . import discrete as dc
from . import dispersion as disp
from . import lossless as ll
from . import reporting as rep
from .errors import ConfigError, LossyPdcError
from .gaussian import (
    CorrelationPair,
    ModeBasis,
    check_physical,
    covariance_from_correlations,
    mode_count,
    overlap,
    purity,
)

DEFAULT_CONFIG = {
    "pump": {"wavelength_um": 0.8, "fwhm_fs": 50.0},
    "medium": {
        "length_um": 10000.0,
        "theta_rad": None,       # default: the built-in crystal angle
        "ordinary": None,        # {a, b, c, d} Sellmeier override
        "eta": None,
    },
    "grid": {
        "count": 511,
        "half_width_rad_fs": None,   # None -> edge-amplitude design rule
        "edge_amplitude": 0.01,
        "center_wavelength_um": None,  # must equal 2 x pump wavelength
    },
    "gain": {
        "gamma": None,
        "target_n1": None,
        "tolerance": 1e-3,
        "calibration_steps": None,   # None -> solver steps
    },
    "loss": {
        "kind": "none",              # none | constant | tabulated
        "db_per_cm": 0.0,
        "table": None,               # {omega_rad_fs: [...], db_per_cm: [...]}
    },
    "input_state": {"kind": "vacuum", "nbar": 0.0},
    "environment": {"kind": "vacuum", "nbar": 0.0},
    "solver": {
        "model": "auto",             # auto | lossless | discrete | continuous
        "steps": 1000,
        "segments": 20,
        "steps_per_segment": None,
    },
    "analysis": {
        "bases": None,               # None -> defaults per solver
        "purity_modes": 3,
        "report_modes": 6,
    },
    "output": {
        "directory": "out",
        "plots": True,
        "full_matrices": False,
    },
}

_BASIS_CHOICES = ("schmidt", "mercer_wolf", "williamson_euler", "msq")


def _merge_with_schema(schema, data, path=""):
    """Overlay ``data`` on the schema defaults, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping at '{path or '<root>'}', got {type(data).__name__}")
    out = {}
    for key, default in schema.items():
        here = f"{path}.{key}" if path else key
        if key in data and isinstance(default, dict):
            out[key] = _merge_with_schema(default, data[key], here)
        elif key in data:
            out[key] = data[key]
        else:
            out[key] = default if not isinstance(default, dict) else _merge_with_schema(default, {}, here)
    unknown = set(data) - set(schema)
    if unknown:
        where = path or "<root>"
        raise ConfigError(f"unknown key(s) {sorted(unknown)} under '{where}'")
    return out


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings (values parsed as YAML scalars)."""
    import yaml

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"override path '{key}' does not exist")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"override path '{key}' does not exist")
        node[parts[-1]] = value
    return config


def load_config(path: str, overrides=None) -> dict:
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError:
        raise
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    merged = _merge_with_schema(DEFAULT_CONFIG, raw)
    return apply_overrides(merged, overrides)


@dataclass
class Scenario:
    """Validated, resolved scenario parameters."""

    config: dict
    pump: disp.PumpSpec
    model: disp.OpticalModel
    length: float
    grid_count: int
    half_width: float | None
    edge_amplitude: float
    gamma: float | None
    target_n1: float | None
    gain_tolerance: float
    calibration_steps: int | None
    loss_kind: str
    loss_db_per_cm: float
    loss_table: dict | None
    input_state: ct.InputState
    environment: ct.EnvironmentSpec
    solver_model: str
    steps: int
    segments: int
    steps_per_segment: int | None
    bases: list
    purity_modes: int
    report_modes: int
    plots: bool
    full_matrices: bool

    @property
    def hash(self) -> str:
        return rep.config_hash(self.config)


def _positive(value, name, kind=float):
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if v <= 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")
    return v


def resolve_scenario(config: dict) -> Scenario:
    cfg = _merge_with_schema(DEFAULT_CONFIG, config)

    pump = disp.PumpSpec(
        wavelength=_positive(cfg["pump"]["wavelength_um"], "pump.wavelength_um"),
        fwhm=_positive(cfg["pump"]["fwhm_fs"], "pump.fwhm_fs"),
    )
    med = cfg["medium"]
    model_kwargs = {}
    if med["theta_rad"] is not None:
        model_kwargs["theta"] = float(med["theta_rad"])
    for name in ("ordinary", "eta"):
        if med[name] is not None:
            entry = med[name]
            if not isinstance(entry, dict) or set(entry) != {"a", "b", "c", "d"}:
                raise ConfigError(f"medium.{name} must be a mapping with keys a, b, c, d")
            model_kwargs[name] = disp.SellmeierSet(**{k: float(v) for k, v in entry.items()})
    model = disp.OpticalModel(**model_kwargs)
    length = _positive(med["length_um"], "medium.length_um")

    g = cfg["grid"]
    count = _positive(g["count"], "grid.count", int)
    if g["center_wavelength_um"] is not None:
        expected = 2.0 * pump.wavelength
        if abs(float(g["center_wavelength_um"]) - expected) > 1e-9 * expected:
            raise ConfigError(
                f"grid.center_wavelength_um must equal twice the pump wavelength ({expected} um) "
                "for the degenerate process"
            )
    half_width = None if g["half_width_rad_fs"] is None else _positive(g["half_width_rad_fs"], "grid.half_width_rad_fs")
    edge_amp = float(g["edge_amplitude"])
    if not 0 < edge_amp < 1:
        raise ConfigError("grid.edge_amplitude must lie in (0, 1)")

    gain = cfg["gain"]
    gamma = gain["gamma"]
    target = gain["target_n1"]
    if (gamma is None) == (target is None):
        raise ConfigError("exactly one of gain.gamma and gain.target_n1 must be set")
    if gamma is not None and float(gamma) < 0:
        raise ConfigError("gain.gamma must be non-negative")
    if target is not None:
        target = _positive(target, "gain.target_n1")

    loss = cfg["loss"]
    if loss["kind"] not in ("none", "constant", "tabulated"):
        raise ConfigError(f"loss.kind must be none/constant/tabulated, got {loss['kind']!r}")
    if loss["kind"] == "constant" and float(loss["db_per_cm"]) < 0:
        raise ConfigError("loss.db_per_cm must be non-negative")
    if loss["kind"] == "tabulated":
        table = loss["table"]
        if not isinstance(table, dict) or set(table) != {"omega_rad_fs", "db_per_cm"}:
            raise ConfigError("loss.table must be a mapping with keys omega_rad_fs, db_per_cm")

    def _state(section, cls):
        kind = cfg[section]["kind"]
        if kind == "vacuum":
            return cls.vacuum()
        if kind == "thermal":
            return cls.thermal(np.asarray(cfg[section]["nbar"], dtype=float))
        raise ConfigError(f"{section}.kind must be vacuum or thermal in a scenario config")

    input_state = _state("input_state", ct.InputState)
    environment = _state("environment", ct.EnvironmentSpec)

    sol = cfg["solver"]
    solver_model = sol["model"]
    if solver_model == "auto":
        solver_model = "lossless" if loss["kind"] == "none" else "continuous"
    if solver_model not in ("lossless", "discrete", "continuous"):
        raise ConfigError(f"solver.model must be lossless/discrete/continuous, got {sol['model']!r}")
    if solver_model == "lossless":
        if loss["kind"] != "none":
            raise ConfigError("the lossless solver cannot be combined with loss; use continuous or discrete")
        if input_state.kind != "vacuum" or environment.kind != "vacuum":
            raise ConfigError("the lossless solver supports vacuum input and environment only")
    steps = _positive(sol["steps"], "solver.steps", int)
    segments = _positive(sol["segments"], "solver.segments", int)
    sps = sol["steps_per_segment"]
    if sps is not None:
        sps = _positive(sps, "solver.steps_per_segment", int)

    ana = cfg["analysis"]
    requested = ana["bases"]
    if requested is None:
        requested = ["schmidt"] if solver_model == "lossless" else ["mercer_wolf", "williamson_euler", "msq"]
        if solver_model == "lossless":
            requested = ["schmidt", "mercer_wolf", "williamson_euler", "msq"]
    for b in requested:
        if b not in _BASIS_CHOICES:
            raise ConfigError(f"unknown basis {b!r}; choose from {_BASIS_CHOICES}")
    if "schmidt" in requested and solver_model != "lossless":
        raise ConfigError("the schmidt basis requires the lossless solver")
    purity_modes = _positive(ana["purity_modes"], "analysis.purity_modes", int)
    report_modes = _positive(ana["report_modes"], "analysis.report_modes", int)

    return Scenario(
        config=cfg,
        pump=pump,
        model=model,
        length=length,
        grid_count=count,
        half_width=half_width,
        edge_amplitude=edge_amp,
        gamma=None if gamma is None else float(gamma),
        target_n1=target,
        gain_tolerance=float(gain["tolerance"]),
        calibration_steps=None if gain["calibration_steps"] is None else int(gain["calibration_steps"]),
        loss_kind=loss["kind"],
        loss_db_per_cm=float(loss["db_per_cm"]),
        loss_table=loss["table"],
        input_state=input_state,
        environment=environment,
        solver_model=solver_model,
        steps=steps,
        segments=segments,
        steps_per_segment=sps,
        bases=list(requested),
        purity_modes=purity_modes,
        report_modes=report_modes,
        plots=bool(cfg["output"]["plots"]),
        full_matrices=bool(cfg["output"]["full_matrices"]),
    )


@dataclass
class RunReport:
    """In-memory result of one scenario run."""

    scenario: Scenario
    gamma: float
    grid: disp.FrequencyGrid
    loss: disp.LossProfile
    correlations: CorrelationPair
    reports: dict            # basis kind -> bases.BasisReport
    mode_bases: dict         # basis kind -> ModeBasis
    overlaps: dict           # (kind_a, kind_b) -> complex matrix
    schmidt: ll.SchmidtDecomposition | None
    runtime_s: float
    solver_settings: dict

    @property
    def config_hash(self) -> str:
        return self.scenario.hash


class _Stage:
    """Context manager that prefixes errors with the pipeline stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, LossyPdcError):
            exc.args = (f"[stage: {self.name}] {exc}",)
        return False


def _build_grid(scn: Scenario) -> disp.FrequencyGrid:
    if scn.half_width is not None:
        return disp.FrequencyGrid(scn.pump.omega / 2.0, scn.half_width, scn.grid_count)
    return disp.design_grid(scn.pump, scn.model, scn.length, scn.grid_count, scn.edge_amplitude)


def _build_loss(scn: Scenario, grid: disp.FrequencyGrid) -> disp.LossProfile:
    if scn.loss_kind == "none":
        return disp.loss_profile_none(grid)
    if scn.loss_kind == "constant":
        return disp.loss_profile_constant(scn.loss_db_per_cm, grid)
    table = scn.loss_table
    return disp.loss_profile_tabulated(
        np.asarray(table["omega_rad_fs"], dtype=float),
        np.asarray(table["db_per_cm"], dtype=float),
        grid,
    )


def _resolve_gamma(scn: Scenario, tables: ll.PropagationTables) -> float:
    if scn.gamma is not None:
        return scn.gamma
    steps = scn.calibration_steps or scn.steps
    return ll.calibrate_gamma(
        scn.target_n1,
        length=scn.length,
        steps=steps,
        tolerance=scn.gain_tolerance,
        tables=tables,
    )


def _propagate(scn: Scenario, gamma: float, tables_lossless, tables_lossy):
    """Run the configured solver; returns (correlations, schmidt_pair)."""
    if scn.solver_model == "lossless":
        pair = ll.integrate_bogoliubov(gamma, length=scn.length, steps=scn.steps, tables=tables_lossless)
        return ll.vacuum_correlations(pair), pair
    if scn.solver_model == "discrete":
        sps = scn.steps_per_segment or max(8, -(-scn.steps // scn.segments))
        chain = dc.build_chain(
            gamma,
            length=scn.length,
            n_segments=scn.segments,
            steps_per_segment=sps,
            tables=tables_lossy,
        )
        partial = dc.assemble_partial(chain)
        return dc.correlations_from_partial(partial, scn.input_state, scn.environment), None
    corr = ct.integrate_master(
        gamma,
        input_state=scn.input_state,
        env=scn.environment,
        length=scn.length,
        steps=scn.steps,
        tables=tables_lossy,
    )
    return corr, None


def run_scenario(scn: Scenario, out_dir: str | None = None, *, compare: bool = False) -> RunReport:
    """Execute the pipeline; write artifacts when ``out_dir`` is given."""
    t_start = time.perf_counter()
    with _Stage("grid"):
        grid = _build_grid(scn)
        loss = _build_loss(scn, grid)
        tables_lossless = ll.make_tables(grid, scn.pump, scn.model)
        tables_lossy = ll.make_tables(grid, scn.pump, scn.model, loss)

    with _Stage("calibration"):
        gamma = _resolve_gamma(scn, tables_lossless)

    with _Stage("propagation"):
        corr, pair = _propagate(scn, gamma, tables_lossless, tables_lossy)
        sigma = covariance_from_correlations(corr)
        check_physical(sigma, tol=1e-6)

    with _Stage("analysis"):
        schmidt = None
        mode_bases = {}
        for kind in scn.bases:
            if kind == "schmidt":
                schmidt = ll.bloch_messiah(pair)
                mode_bases[kind] = ModeBasis(schmidt.u, kind="schmidt")
            elif kind == "mercer_wolf":
                mode_bases[kind] = bs.mercer_wolf(corr)
            elif kind == "williamson_euler":
                mode_bases[kind] = bs.williamson_euler_basis(sigma)
            elif kind == "msq":
                mode_bases[kind] = bs.msq_basis(sigma)
        reports = {
            kind: bs.basis_report(corr, basis, scn.purity_modes) for kind, basis in mode_bases.items()
        }
        overlaps = {}
        kinds = list(mode_bases)
        for i, a in enumerate(kinds):
            for b in kinds[i + 1:]:
                overlaps[(a, b)] = overlap(mode_bases[a], mode_bases[b])

    report = RunReport(
        scenario=scn,
        gamma=gamma,
        grid=grid,
        loss=loss,
        correlations=corr,
        reports=reports,
        mode_bases=mode_bases,
        overlaps=overlaps,
        schmidt=schmidt,
        runtime_s=time.perf_counter() - t_start,
        solver_settings={
            "model": scn.solver_model,
            "steps": scn.steps,
            "segments": scn.segments if scn.solver_model == "discrete" else None,
            "grid_count": grid.count,
            "grid_half_width_rad_fs": grid.half_width,
        },
    )
    if out_dir is not None:
        with _Stage("output"):
            write_artifacts(report, out_dir, compare=compare)
    return report


def compare_bases(scn: Scenario, out_dir: str | None = None) -> RunReport:
    """Scenario run that additionally emits the basis-pair overlap artifacts."""
    if len(scn.bases) < 2:
        raise ConfigError("compare-bases needs at least two bases in analysis.bases")
    return run_scenario(scn, out_dir, compare=True)


def convergence_study(scn: Scenario, m_list, steps_list, out_dir: str | None = None) -> dict:
    """Discrete-vs-continuous and RK4 self-convergence tables."""
    if scn.loss_kind == "none":
        raise ConfigError("convergence study requires a lossy scenario")
    with _Stage("grid"):
        grid = _build_grid(scn)
        loss = _build_loss(scn, grid)
        tables_lossless = ll.make_tables(grid, scn.pump, scn.model)
        tables_lossy = ll.make_tables(grid, scn.pump, scn.model, loss)
    with _Stage("calibration"):
        gamma = _resolve_gamma(scn, tables_lossless)

    with _Stage("propagation"):
        reference = ct.integrate_master(
            gamma, input_state=scn.input_state, env=scn.environment,
            length=scn.length, steps=scn.steps, tables=tables_lossy,
        )
        seg_rows = []
        for m in m_list:
            sps = scn.steps_per_segment or max(8, -(-scn.steps // int(m)))
            chain = dc.build_chain(gamma, length=scn.length, n_segments=int(m),
                                   steps_per_segment=sps, tables=tables_lossy)
            corr = dc.correlations_from_partial(dc.assemble_partial(chain), scn.input_state, scn.environment)
            err = max(
                np.abs(corr.c1 - reference.c1).max(),
                np.abs(corr.c2 - reference.c2).max(),
            )
            seg_rows.append((int(m), float(err)))

        fine = ct.integrate_master(
            gamma, input_state=scn.input_state, env=scn.environment,
            length=scn.length, steps=2 * max(int(s) for s in steps_list), tables=tables_lossy,
        )
        step_rows = []
        for s in sorted(int(s) for s in steps_list):
            corr = ct.integrate_master(
                gamma, input_state=scn.input_state, env=scn.environment,
                length=scn.length, steps=s, tables=tables_lossy,
            )
            err = max(
                np.abs(corr.c1 - fine.c1).max(),
                np.abs(corr.c2 - fine.c2).max(),
            )
            step_rows.append((s, float(err)))

    result = {
        "gamma": gamma,
        "segments": seg_rows,
        "segment_ratios": [seg_rows[i][1] / seg_rows[i + 1][1] for i in range(len(seg_rows) - 1)],
        "steps": step_rows,
        "step_ratios": [step_rows[i][1] / step_rows[i + 1][1] for i in range(len(step_rows) - 1)],
    }
    if out_dir is not None:
        with _Stage("output"):
            _write_convergence(scn, result, out_dir)
    return result


# ---------------------------------------------------------------------------
# artifact writing


def _staging_dir(out_dir: str):
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    return tempfile.mkdtemp(prefix=".staging-", dir=parent)


def _commit_staging(staging: str, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(os.listdir(staging)):
        os.replace(os.path.join(staging, name), os.path.join(out_dir, name))
    shutil.rmtree(staging, ignore_errors=True)


def write_artifacts(report: RunReport, out_dir: str, *, compare: bool = False) -> None:
    scn = report.scenario
    meta_base = {
        "config_hash": scn.hash,
        "solver": scn.solver_model,
        "steps": scn.steps,
    }
    staging = _staging_dir(out_dir)
    try:
        grid = report.grid
        nrep = min(scn.report_modes, grid.count)

        rep.write_csv(
            os.path.join(staging, "spectrum.csv"),
            {
                "omega_rad_fs": grid.omegas,
                "photons": report.correlations.photons(),
                "alpha_inv_um": report.loss.alpha,
            },
            {**meta_base, "units": "omega rad/fs; photons dimensionless; alpha 1/um",
             "basis": "monochromatic"},
        )

        summary = {
            "basis": [], "k_modes": [], "min_p_db": [], "first_p_db": [],
            "total_photons": [],
        }
        for depth in range(1, scn.purity_modes + 1):
            summary[f"purity_{'1' * depth}"] = []
        for kind, brep in report.reports.items():
            summary["basis"].append(kind)
            summary["k_modes"].append(brep.k_modes)
            summary["min_p_db"].append(brep.min_p_db)
            summary["first_p_db"].append(brep.p_db[0])
            summary["total_photons"].append(float(brep.photons.sum()))
            for depth in range(1, scn.purity_modes + 1):
                key = f"purity_{'1' * depth}"
                summary[key].append(brep.purities[depth - 1] if depth - 1 < len(brep.purities) else math.nan)
        sum_cols = {k: v for k, v in summary.items()}
        lines = [f"# {k}: {v}" for k, v in {**meta_base, "gamma": report.gamma}.items()]
        lines.append(",".join(sum_cols.keys()))
        for i in range(len(summary["basis"])):
            row = []
            for k, col in sum_cols.items():
                v = col[i]
                row.append(v if isinstance(v, str) else repr(float(v)))
            lines.append(",".join(row))
        rep.atomic_write_text(os.path.join(staging, "summary.csv"), "\n".join(lines) + "\n")

        for kind, brep in report.reports.items():
            rep.write_csv(
                os.path.join(staging, f"variances_{kind}.csv"),
                {
                    "mode": np.arange(grid.count),
                    "photons": brep.photons,
                    "q_var": brep.q_var,
                    "p_var": brep.p_var,
                    "q_db": brep.q_db,
                    "p_db": brep.p_db,
                },
                {**meta_base, "basis": kind, "units": "variances relative to vacuum = 1; dB = 10 log10(var)"},
            )
            cols_abs = {"omega_rad_fs": grid.omegas}
            cols_ph = {"omega_rad_fs": grid.omegas}
            for i in range(nrep):
                cols_abs[f"mode_{i}"] = brep.mode_abs[i]
                cols_ph[f"mode_{i}"] = brep.mode_phase[i]
            rep.write_csv(os.path.join(staging, f"modes_{kind}_abs.csv"), cols_abs,
                          {**meta_base, "basis": kind, "units": "|U| rows"})
            rep.write_csv(os.path.join(staging, f"modes_{kind}_phase.csv"), cols_ph,
                          {**meta_base, "basis": kind, "units": "unwrapped arg(U) rows, rad"})
            idx = np.concatenate([np.arange(nrep), grid.count + np.arange(nrep)])
            rep.write_matrix_csv(
                os.path.join(staging, f"covariance_{kind}.csv"),
                brep.sigma[np.ix_(idx, idx)],
                {**meta_base, "basis": kind,
                 "ordering": f"(q_0..q_{nrep-1}, p_0..p_{nrep-1})", "units": "vacuum = 1"},
            )
            if scn.full_matrices:
                rep.write_matrix_csv(
                    os.path.join(staging, f"covariance_{kind}_full.csv"), brep.sigma,
                    {**meta_base, "basis": kind, "units": "vacuum = 1"},
                )

        if scn.full_matrices:
            rep.write_complex_json(os.path.join(staging, "correlations_c1.json"),
                                   report.correlations.c1,
                                   {**meta_base, "matrix": "adag_a", "basis": "monochromatic"})
            rep.write_complex_json(os.path.join(staging, "correlations_c2.json"),
                                   report.correlations.c2,
                                   {**meta_base, "matrix": "a_a", "basis": "monochromatic"})

        if compare:
            for (a, b), chi in report.overlaps.items():
                rep.write_matrix_csv(
                    os.path.join(staging, f"overlap_abs_{a}__{b}.csv"),
                    np.abs(chi[:nrep, :nrep]),
                    {**meta_base, "bases": f"{a} vs {b}", "units": "|chi| (unitary overlap)"},
                )
                if scn.full_matrices:
                    rep.write_complex_json(
                        os.path.join(staging, f"overlap_{a}__{b}.json"), chi,
                        {**meta_base, "bases": f"{a} vs {b}"},
                    )

        payload = {
            "config_hash": scn.hash,
            "gamma": report.gamma,
            "grid": {
                "count": grid.count,
                "center_rad_fs": grid.center,
                "half_width_rad_fs": grid.half_width,
                "spacing_rad_fs": grid.spacing,
            },
            "solver": report.solver_settings,
            "total_photons": float(report.correlations.total_photons()),
            "bases": {
                kind: {
                    "k_modes": brep.k_modes,
                    "min_p_db": brep.min_p_db,
                    "first_p_db": float(brep.p_db[0]),
                    "purities": list(map(float, brep.purities)),
                    "photons_head": [float(x) for x in brep.photons[:nrep]],
                }
                for kind, brep in report.reports.items()
            },
        }
        if report.schmidt is not None:
            payload["schmidt"] = {
                "n1": float(report.schmidt.lam_f[0] ** 2),
                "k_modes": float(mode_count(report.schmidt.occupations())),
            }
        rep.write_json(os.path.join(staging, "run_report.json"), payload)
        rep.write_json(os.path.join(staging, "run_metadata.json"), {
            "runtime_s": report.runtime_s,
            "config_hash": scn.hash,
        })

        if scn.plots:
            from . import plots

            plots.render_run(report, staging, compare=compare)

        _commit_staging(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def _write_convergence(scn: Scenario, result: dict, out_dir: str) -> None:
    staging = _staging_dir(out_dir)
    try:
        meta = {"config_hash": scn.hash, "gamma": result["gamma"]}
        seg = result["segments"]
        rep.write_csv(
            os.path.join(staging, "convergence_segments.csv"),
            {
                "segments": [r[0] for r in seg],
                "max_abs_error": [r[1] for r in seg],
                "ratio_to_next": result["segment_ratios"] + [math.nan],
            },
            {**meta, "reference": f"continuous, steps = {scn.steps}"},
        )
        stp = result["steps"]
        rep.write_csv(
            os.path.join(staging, "convergence_steps.csv"),
            {
                "steps": [r[0] for r in stp],
                "max_abs_error": [r[1] for r in stp],
                "ratio_to_next": result["step_ratios"] + [math.nan],
            },
            {**meta, "reference": "continuous at twice the finest step count"},
        )
        _commit_staging(staging, out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def calibrate_only(scn: Scenario, out_dir: str | None = None) -> dict:
    """Resolve the gain constant and report the achieved occupation."""
    with _Stage("grid"):
        grid = _build_grid(scn)
        tables = ll.make_tables(grid, scn.pump, scn.model)
    with _Stage("calibration"):
        gamma = _resolve_gamma(scn, tables)
        steps = scn.calibration_steps or scn.steps
        achieved = ll.first_schmidt_photons(tables, gamma, scn.length, steps)
    result = {
        "config_hash": scn.hash,
        "gamma": gamma,
        "target_n1": scn.target_n1,
        "achieved_n1": achieved,
        "steps": steps,
        "grid": {"count": grid.count, "half_width_rad_fs": grid.half_width},
    }
    if out_dir is not None:
        with _Stage("output"):
            staging = _staging_dir(out_dir)
            try:
                rep.write_json(os.path.join(staging, "calibration.json"), result)
                _commit_staging(staging, out_dir)
            except BaseException:
                shutil.rmtree(staging, ignore_errors=True)
                raise
    return result
