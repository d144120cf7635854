"""Experiment harness: configs, convergence ladders, error norms, CSV output.

A single JSON document describes one experiment (mesh, kernel, scheme,
initial data, mode and refinement ladders). Modes:

  run            -- time-step once, emit per-step reports and snapshots
  entropy        -- run plus a slim entropy-trajectory CSV
  converge_space -- mesh ladder against a shared fine reference, fixed dt
  converge_time  -- dt ladder on a fixed mesh against a fine-dt reference

All floating-point output is printed with 17 significant digits and every
reduction runs in a fixed order, so outputs are bit-identical across runs.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .errors import ConfigurationError, CrossFVError, StepFailure, UsageError
from .initial import parse_descriptor, project_initial
from .kernels import (
    DiscreteKernel,
    Extension,
    Gaussian,
    KernelSpec,
    TopHat,
    c_star_report,
    check_psd,
    discretize,
)
from .mesh import Mesh, MeshSpec, build_mesh
from .scheme import (
    Coupling,
    LinearSolverConfig,
    RunSummary,
    SchemeConfig,
    State,
    run,
)

logger = logging.getLogger(__name__)

_TINY = float(np.finfo(float).tiny)
_MODES = ("run", "entropy", "converge_space", "converge_time")


@dataclass
class ExperimentConfig:
    name: str
    mesh: MeshSpec
    kernel: KernelSpec
    scheme: SchemeConfig
    initial: list
    mode: str = "run"
    space_ladder: list | None = None
    reference_cells: int | None = None
    dt_ladder_divisors: list | None = None
    reference_dt_divisor: int | None = None
    snapshot_times: list = dataclasses.field(default_factory=list)
    diagnostics_every: int = 1
    out_dir: str | None = None
    fast_conv: str = "auto"
    threads: int = 1

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.fast_conv not in ("on", "off", "auto"):
            raise ConfigurationError("fast_conv must be on/off/auto")
        if len(self.initial) != self.kernel.n_species:
            raise ConfigurationError(
                "need exactly one initial datum per species "
                f"({self.kernel.n_species}), got {len(self.initial)}"
            )
        if self.mode == "converge_space":
            if not self.space_ladder or self.reference_cells is None:
                raise ConfigurationError(
                    "converge_space needs space_ladder and reference_cells"
                )
            for cells in self.space_ladder:
                _nesting_factor(int(self.reference_cells), int(cells))
        if self.mode == "converge_time":
            if not self.dt_ladder_divisors or self.reference_dt_divisor is None:
                raise ConfigurationError(
                    "converge_time needs dt_ladder_divisors and reference_dt_divisor"
                )
            for div in self.dt_ladder_divisors:
                _nesting_factor(int(self.reference_dt_divisor), int(div))


def _nesting_factor(fine: int, coarse: int) -> int:
    """Ratio fine/coarse, required to be a power of two (exact coarsening)."""
    if coarse < 1 or fine % coarse != 0:
        raise ConfigurationError(f"{coarse} does not nest under reference {fine}")
    factor = fine // coarse
    if factor & (factor - 1):
        raise ConfigurationError(f"refinement factor {factor} is not a power of two")
    return factor


def parse_config(source) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON file path or a parsed dict."""
    if isinstance(source, (str, os.PathLike)):
        with open(source) as handle:
            try:
                raw = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
    else:
        raw = dict(source)
    try:
        mesh = MeshSpec(
            extents=tuple(tuple(e) for e in raw["mesh"]["extents"]),
            cells_per_axis=tuple(raw["mesh"]["cells"]),
        )
        kernel = _parse_kernel(raw["kernel"])
        scheme = _parse_scheme(raw["scheme"])
        initial = [parse_descriptor(d) for d in raw["initial"]]
        return ExperimentConfig(
            name=str(raw.get("name", "experiment")),
            mesh=mesh,
            kernel=kernel,
            scheme=scheme,
            initial=initial,
            mode=str(raw.get("mode", "run")),
            space_ladder=raw.get("space_ladder"),
            reference_cells=raw.get("reference_cells"),
            dt_ladder_divisors=raw.get("dt_ladder_divisors"),
            reference_dt_divisor=raw.get("reference_dt_divisor"),
            snapshot_times=list(raw.get("snapshot_times", [])),
            diagnostics_every=int(raw.get("diagnostics_every", 1)),
            out_dir=raw.get("out_dir"),
            fast_conv=str(raw.get("fast_conv", "auto")),
            threads=int(raw.get("threads", 1)),
        )
    except KeyError as exc:
        raise ConfigurationError(f"config is missing required key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc


def _parse_kernel(raw: dict) -> KernelSpec:
    name = raw["shape"]
    if name == "gaussian":
        shape = Gaussian(eps=float(raw["eps"]))
    elif name == "top_hat":
        shape = TopHat(radius=float(raw["radius"]))
    else:
        raise ConfigurationError(f"unknown kernel shape {name!r}")
    return KernelSpec(
        strengths=np.asarray(raw["strengths"], dtype=float),
        shapes=shape,
        extension=Extension(raw.get("extension", "periodic_wrap")),
        quadrature_order=int(raw.get("quadrature_order", 4)),
    )


def _parse_scheme(raw: dict) -> SchemeConfig:
    t_end = float(raw["t_end"])
    if "dt" in raw:
        dt = float(raw["dt"])
    elif "dt_divisor" in raw:
        dt = t_end / int(raw["dt_divisor"])
    else:
        raise ConfigurationError("scheme needs dt or dt_divisor")
    lin_raw = raw.get("linear_solver", {})
    linear = LinearSolverConfig(
        method=lin_raw.get("method", "bicgstab"),
        rel_tol=float(lin_raw.get("rel_tol", 1e-12)),
        max_iter=int(lin_raw.get("max_iter", 10000)),
    )
    return SchemeConfig(
        kappa=float(raw["kappa"]),
        dt=dt,
        t_end=t_end,
        weight=raw.get("weight", "bernoulli"),
        coupling=raw.get("coupling", "implicit"),
        picard_tol=float(raw.get("picard_tol", 1e-10)),
        picard_max_iter=int(raw.get("picard_max_iter", 200)),
        linear=linear,
    )


def coarsen(fine: np.ndarray, coarse_shape: tuple) -> np.ndarray:
    """Measure-weighted average of the fine cells inside each coarse cell."""
    fine = np.asarray(fine, dtype=float)
    if fine.ndim != len(coarse_shape):
        raise UsageError("coarse shape must match the field dimension")
    factors = []
    for mf, mc in zip(fine.shape, coarse_shape):
        if mc < 1 or mf % mc != 0:
            raise UsageError(f"mesh {fine.shape} is not nested over {coarse_shape}")
        factor = mf // mc
        if factor & (factor - 1):
            raise UsageError(f"refinement factor {factor} is not a power of two")
        factors.append(factor)
    reshaped = fine.reshape(
        tuple(v for mc, f in zip(coarse_shape, factors) for v in (mc, f))
    )
    return reshaped.mean(axis=tuple(range(1, 2 * len(coarse_shape), 2)))


def error_norms(a: np.ndarray, b: np.ndarray, mesh: Mesh) -> dict:
    """Discrete max and L1 distances between two cell fields."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != mesh.shape or b.shape != mesh.shape:
        raise UsageError("fields must live on the given mesh")
    diff = np.abs(a - b)
    return {"Linf": float(diff.max()), "L1": float(mesh.cell_measure * diff.sum())}


def fit_rate(resolutions, errors) -> tuple:
    """(least-squares order, last-pair order) of log error vs log resolution.

    Zero error entries are excluded with a notice; at least three rows and
    strictly decreasing resolutions are required.
    """
    res = np.asarray(resolutions, dtype=float)
    err = np.asarray(errors, dtype=float)
    if res.size < 3:
        raise UsageError("rate fit needs at least 3 rows")
    if np.any(np.diff(res) >= 0):
        raise UsageError("resolutions must be strictly decreasing")
    if np.any(err < 0):
        raise UsageError("errors must be nonnegative")
    mask = err > 0
    if not np.all(mask):
        logger.info("fit_rate: excluding %d zero-error rows", int((~mask).sum()))
    res, err = res[mask], err[mask]
    if res.size < 2:
        return float("nan"), float("nan")
    slope = np.polyfit(np.log(res), np.log(err), 1)[0]
    last = np.log(err[-2] / err[-1]) / np.log(res[-2] / res[-1])
    return float(slope), float(last)


@dataclass
class ErrorTable:
    kind: str  # 'space' | 'time'
    resolutions: list
    linf: np.ndarray  # (rows, n_species)
    l1: np.ndarray
    orders_linf: np.ndarray = None
    orders_l1: np.ndarray = None
    last_orders_linf: np.ndarray = None
    last_orders_l1: np.ndarray = None

    def fit(self):
        n = self.linf.shape[1]
        self.orders_linf = np.array(
            [fit_rate(self.resolutions, self.linf[:, i])[0] for i in range(n)]
        )
        self.last_orders_linf = np.array(
            [fit_rate(self.resolutions, self.linf[:, i])[1] for i in range(n)]
        )
        self.orders_l1 = np.array(
            [fit_rate(self.resolutions, self.l1[:, i])[0] for i in range(n)]
        )
        self.last_orders_l1 = np.array(
            [fit_rate(self.resolutions, self.l1[:, i])[1] for i in range(n)]
        )
        return self


def dominant_mode(field: np.ndarray) -> tuple:
    """Strongest nonzero Fourier mode of a profile: (modes, magnitude).

    Mode entries are folded to the symmetric range and normalized so the
    first nonzero entry is positive (a real wave and its mirror coincide).
    """
    spectrum = np.fft.fftn(field - field.mean())
    mag = np.abs(spectrum)
    mag.flat[0] = 0.0
    flat_idx = int(np.argmax(mag))
    modes = np.array(np.unravel_index(flat_idx, field.shape))
    for axis, m in enumerate(field.shape):
        if modes[axis] > m // 2:
            modes[axis] -= m
    nz = modes[modes != 0]
    if nz.size and nz[0] < 0:
        modes = -modes
    return tuple(int(k) for k in modes), float(mag.flat[flat_idx])


@dataclass
class ExperimentResult:
    name: str
    mode: str
    summary: dict
    error_table: ErrorTable | None = None
    run_summary: RunSummary | None = None
    files: list = dataclasses.field(default_factory=list)


def _build_problem(cfg: ExperimentConfig, cells=None, dt=None):
    """Mesh, kernel, scheme config and floored initial state for one solve."""
    mesh_spec = cfg.mesh
    if cells is not None:
        mesh_spec = MeshSpec(
            extents=cfg.mesh.extents,
            cells_per_axis=tuple([int(cells)] * len(cfg.mesh.extents)),
        )
    mesh = build_mesh(mesh_spec)
    kernel = discretize(cfg.kernel, mesh)
    kernel.set_fast_mode(cfg.fast_conv)
    scheme_cfg = cfg.scheme if dt is None else dataclasses.replace(cfg.scheme, dt=dt)
    u0 = np.stack([project_initial(d, mesh) for d in cfg.initial])
    # Positivity floor: indicator data projects to exact zeros outside its
    # support; the scheme and its entropy checks need u > 0, and a floor at
    # the smallest positive normal float is far below every tolerance.
    u0 = np.maximum(u0, _TINY)
    state = State(k=0, u=u0, mesh=mesh)
    return mesh, kernel, scheme_cfg, state


def _kernel_reports(cfg: ExperimentConfig, mesh: Mesh, kernel: DiscreteKernel, u0):
    try:
        psd = check_psd(kernel)
        psd_summary = {"is_psd": psd.is_psd, "min_eigenvalue": psd.min_eigenvalue}
        psd_ok = psd.is_psd
    except UsageError as exc:
        logger.info("skipping PSD check: %s", exc)
        psd_summary, psd_ok = None, None
    cstar = c_star_report(kernel, u0, mesh, cfg.scheme.kappa, cfg.scheme.weight.alpha)
    cstar_summary = {
        "c_star": cstar.c_star,
        "threshold": cstar.threshold,
        "within_threshold": cstar.within_threshold,
    }
    return psd_summary, psd_ok, cstar_summary


class _ReportWriter:
    """Streams one CSV row per step so failed runs leave partial output."""

    def __init__(self, path: str, n_species: int):
        self.handle = open(path, "w")
        self.handle.write(diagnostics.report_csv_header(n_species) + "\n")

    def __call__(self, state, report):
        self.handle.write(diagnostics.report_csv_row(report) + "\n")
        self.handle.flush()

    def close(self):
        self.handle.close()


class _SnapshotWriter:
    def __init__(self, out_dir: str, mesh: Mesh, times, dt: float, files: list):
        self.out_dir = out_dir
        self.mesh = mesh
        self.steps = sorted({int(round(t / dt)) for t in times})
        self.files = files

    def __call__(self, state, report):
        if state.k in self.steps:
            path = os.path.join(self.out_dir, f"snapshot_step{state.k:06d}.csv")
            write_snapshot(path, self.mesh, state)
            self.files.append(path)


def write_snapshot(path: str, mesh: Mesh, state: State) -> None:
    n = state.n_species
    d = mesh.dim
    coords = np.meshgrid(*[mesh.axis_coordinates(ax) for ax in range(d)], indexing="ij")
    with open(path, "w") as handle:
        header = [f"x_{ax + 1}" for ax in range(d)] + [f"u_{i + 1}" for i in range(n)]
        handle.write(",".join(header) + "\n")
        flat_coords = [c.ravel() for c in coords]
        flat_u = [state.u[i].ravel() for i in range(n)]
        for row in range(mesh.n_cells):
            cells = [f"{c[row]:.17g}" for c in flat_coords]
            cells += [f"{u[row]:.17g}" for u in flat_u]
            handle.write(",".join(cells) + "\n")


def _write_error_table(path: str, table: ErrorTable, n_species: int) -> None:
    label = "dx" if table.kind == "space" else "dt"
    with open(path, "w") as handle:
        cols = [label]
        for i in range(n_species):
            cols += [f"Linf_u{i + 1}", f"L1_u{i + 1}"]
        handle.write(",".join(cols) + "\n")
        for row, res in enumerate(table.resolutions):
            cells = [f"{res:.17g}"]
            for i in range(n_species):
                cells += [f"{table.linf[row, i]:.17g}", f"{table.l1[row, i]:.17g}"]
            handle.write(",".join(cells) + "\n")
        if table.orders_linf is not None:
            for name, linf_vals, l1_vals in (
                ("order_ls", table.orders_linf, table.orders_l1),
                ("order_last", table.last_orders_linf, table.last_orders_l1),
            ):
                cells = [name]
                for i in range(n_species):
                    cells += [f"{linf_vals[i]:.17g}", f"{l1_vals[i]:.17g}"]
                handle.write(",".join(cells) + "\n")


def _write_summary(out_dir: str | None, summary: dict, files: list) -> None:
    if out_dir is None:
        return
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    files.append(path)


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Execute one experiment; writes artifact files when out_dir is set."""
    if cfg.out_dir is not None:
        os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.mode in ("run", "entropy"):
        return _run_mode(cfg)
    if cfg.mode == "converge_space":
        return _converge_space(cfg)
    return _converge_time(cfg)


def _run_mode(cfg: ExperimentConfig) -> ExperimentResult:
    mesh, kernel, scheme_cfg, state = _build_problem(cfg)
    psd_summary, psd_ok, cstar_summary = _kernel_reports(cfg, mesh, kernel, state.u)
    files: list = []
    observers = []
    writer = None
    if cfg.out_dir is not None:
        report_path = os.path.join(cfg.out_dir, "report.csv")
        writer = _ReportWriter(report_path, kernel.n_species)
        files.append(report_path)
        observers.append(writer)
        if cfg.snapshot_times:
            observers.append(
                _SnapshotWriter(cfg.out_dir, mesh, cfg.snapshot_times, scheme_cfg.dt, files)
            )
    summary = {
        "name": cfg.name,
        "mode": cfg.mode,
        "cells": list(mesh.shape),
        "dt": scheme_cfg.dt,
        "t_end": scheme_cfg.t_end,
        "psd": psd_summary,
        "c_star": cstar_summary,
        "initial_masses": [float(m) for m in state.masses()],
    }
    try:
        run_summary = run(
            scheme_cfg,
            state,
            kernel,
            observers=tuple(observers),
            diagnostics_every=cfg.diagnostics_every,
            psd_ok=psd_ok,
        )
    except StepFailure as exc:
        summary["failed_step"] = exc.step_index
        summary["failure"] = str(exc)
        _write_summary(cfg.out_dir, summary, files)
        if writer is not None:
            writer.close()
        raise
    if writer is not None:
        writer.close()

    gated_failures = 0
    rao_non_increasing = True
    prev_h_rao = None
    for report in run_summary.reports:
        if report.verdicts is not None:
            for verdict in report.verdicts.values():
                if verdict.gated and not verdict.passed:
                    gated_failures += 1
            if prev_h_rao is not None and report.h_rao > prev_h_rao:
                rao_non_increasing = False
            prev_h_rao = report.h_rao
    summary.update(
        {
            "final_masses": [float(m) for m in run_summary.final_state.masses()],
            "max_mass_drift": run_summary.max_mass_drift,
            "min_density": run_summary.min_density,
            "n_steps": run_summary.n_steps,
            "gated_failures": gated_failures,
            "h_rao_non_increasing": rao_non_increasing,
            "dominant_modes": [
                {
                    "species": i + 1,
                    "modes": list(dominant_mode(run_summary.final_state.u[i])[0]),
                    "magnitude": dominant_mode(run_summary.final_state.u[i])[1],
                }
                for i in range(kernel.n_species)
            ],
        }
    )
    if cfg.mode == "entropy" and cfg.out_dir is not None:
        path = os.path.join(cfg.out_dir, "entropy.csv")
        with open(path, "w") as handle:
            handle.write("step,time,H_B,H_R\n")
            for report in run_summary.reports:
                handle.write(
                    f"{report.step},{report.time:.17g},"
                    f"{report.h_boltzmann:.17g},{report.h_rao:.17g}\n"
                )
        files.append(path)
    _write_summary(cfg.out_dir, summary, files)
    return ExperimentResult(
        name=cfg.name,
        mode=cfg.mode,
        summary=summary,
        run_summary=run_summary,
        files=files,
    )


def _solve_final_state(cfg: ExperimentConfig, cells=None, dt=None) -> RunSummary:
    _, kernel, scheme_cfg, state = _build_problem(cfg, cells=cells, dt=dt)
    return run(scheme_cfg, state, kernel, diagnostics_every=0)


def _run_ladder(cfg: ExperimentConfig, jobs: list) -> list:
    """Solve independent ladder entries, optionally in a thread pool."""
    if cfg.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(_solve_final_state, cfg, **job) for job in jobs]
            results = []
            for future in futures:
                results.append(future.result())
            return results
    return [_solve_final_state(cfg, **job) for job in jobs]


def _structure_summary(summaries: list) -> dict:
    return {
        "max_mass_drift": max(s.max_mass_drift for s in summaries),
        "min_density": min(s.min_density for s in summaries),
    }


def _converge_space(cfg: ExperimentConfig) -> ExperimentResult:
    ladder = [int(c) for c in cfg.space_ladder]
    reference = int(cfg.reference_cells)
    jobs = [{"cells": cells} for cells in ladder] + [{"cells": reference}]
    summaries = _run_ladder(cfg, jobs)
    ref_state = summaries[-1].final_state
    n = cfg.kernel.n_species
    extent = cfg.mesh.extents[0][1] - cfg.mesh.extents[0][0]
    rows_linf = np.zeros((len(ladder), n))
    rows_l1 = np.zeros((len(ladder), n))
    resolutions = []
    for row, (cells, summary) in enumerate(zip(ladder, summaries[:-1])):
        coarse_mesh = summary.final_state.mesh
        resolutions.append(extent / cells)
        for i in range(n):
            ref_coarse = coarsen(ref_state.u[i], coarse_mesh.shape)
            norms = error_norms(summary.final_state.u[i], ref_coarse, coarse_mesh)
            rows_linf[row, i] = norms["Linf"]
            rows_l1[row, i] = norms["L1"]
    table = ErrorTable(
        kind="space", resolutions=resolutions, linf=rows_linf, l1=rows_l1
    ).fit()
    return _finish_convergence(cfg, table, summaries, "space_errors.csv")


def _converge_time(cfg: ExperimentConfig) -> ExperimentResult:
    t_end = cfg.scheme.t_end
    divisors = [int(d) for d in cfg.dt_ladder_divisors]
    ref_div = int(cfg.reference_dt_divisor)
    jobs = [{"dt": t_end / div} for div in divisors] + [{"dt": t_end / ref_div}]
    summaries = _run_ladder(cfg, jobs)
    ref_state = summaries[-1].final_state
    n = cfg.kernel.n_species
    mesh = ref_state.mesh
    rows_linf = np.zeros((len(divisors), n))
    rows_l1 = np.zeros((len(divisors), n))
    resolutions = [t_end / div for div in divisors]
    for row, summary in enumerate(summaries[:-1]):
        for i in range(n):
            norms = error_norms(summary.final_state.u[i], ref_state.u[i], mesh)
            rows_linf[row, i] = norms["Linf"]
            rows_l1[row, i] = norms["L1"]
    table = ErrorTable(
        kind="time", resolutions=resolutions, linf=rows_linf, l1=rows_l1
    ).fit()
    return _finish_convergence(cfg, table, summaries, "time_errors.csv")


def _finish_convergence(
    cfg: ExperimentConfig, table: ErrorTable, summaries: list, filename: str
) -> ExperimentResult:
    files: list = []
    summary = {
        "name": cfg.name,
        "mode": cfg.mode,
        "resolutions": [float(r) for r in table.resolutions],
        "orders_linf": [float(v) for v in table.orders_linf],
        "orders_l1": [float(v) for v in table.orders_l1],
        "last_orders_linf": [float(v) for v in table.last_orders_linf],
        "last_orders_l1": [float(v) for v in table.last_orders_l1],
    }
    summary.update(_structure_summary(summaries))
    if cfg.out_dir is not None:
        path = os.path.join(cfg.out_dir, filename)
        _write_error_table(path, table, cfg.kernel.n_species)
        files.append(path)
    _write_summary(cfg.out_dir, summary, files)
    return ExperimentResult(
        name=cfg.name, mode=cfg.mode, summary=summary, error_table=table, files=files
    )
