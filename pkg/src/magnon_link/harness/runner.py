"""Single runs, rate sweeps and the diagnostics report, with their output files."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .. import __version__, metrics
from ..dynamics import IntegrationError, IntegratorConfig, ProtocolRun, TrajectoryRecord, run_protocol
from ..model import DEFAULT_G_WG, DEFAULT_OMEGA_RATIO, DEFAULT_STAGE1_COUPLING, DEFAULT_T2_SPAN, SystemParams
from .checks import run_checks
from .config import MANIFEST_KIND, RunConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2
SCHEDULE_SAMPLES_PER_STAGE = 512

NOTES = [
    "Frequencies in the system section are cyclic (GHz), rates are cyclic (MHz, value of rate/2pi), times in us.",
    "rates_are_angular=true reinterprets the kappa values as angular rates in rad/us.",
    f"Unset g_wg defaults to {DEFAULT_G_WG} MHz; unset Omega defaults to {DEFAULT_OMEGA_RATIO} * g_wg.",
    f"Unset T1 follows from a stage-1 coupling g1/2pi = {DEFAULT_STAGE1_COUPLING} MHz via g1 = sqrt(2) pi / (4 T1).",
    f"Unset T2 is T1 + {DEFAULT_T2_SPAN} / (2 pi g_wg).",
    "F is the fidelity to (|e000> + e^{i phi}|g001>)/sqrt(2) maximised over phi; "
    "F_literal fixes phi = 0 and bell_phase reports the optimal e^{i phi}.",
]


def fmt(x: float) -> str:
    """12 significant digits in scientific notation."""
    return f"{float(x):.11e}"


def _round12(x: float) -> float:
    return float(fmt(x)) if math.isfinite(x) else x


def _write_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False, allow_nan=True)
        fh.write("\n")


def _write_rows(path: Path, rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def workers_from_env(default: Optional[int] = None) -> int:
    raw = os.environ.get("MAGNON_LINK_WORKERS")
    if raw:
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(f"MAGNON_LINK_WORKERS must be a positive integer, got {raw!r}") from exc
        if n < 1:
            raise ValueError("MAGNON_LINK_WORKERS must be >= 1")
        return n
    return default or os.cpu_count() or 1


# ---- per-run summaries ----------------------------------------------------


def summarize(run: ProtocolRun, params: SystemParams) -> dict[str, Any]:
    rec = run.record
    layout = params.layout
    F, phase = metrics.fidelity_up_to_phase(run.rho, metrics.FINAL_TARGET, layout)
    F_lit = metrics.fidelity(run.rho, metrics.FINAL_TARGET.state(layout))
    i2 = int(np.argmax(rec.N2))
    return {
        "F": _round12(F),
        "F_literal": _round12(F_lit),
        "bell_phase": [_round12(phase.real), _round12(phase.imag)],
        "N1_max": _round12(float(rec.N1.max())),
        "N2_max": _round12(float(rec.N2[i2])),
        "t_N2_max_us": _round12(float(rec.times[i2])),
        "N2_final": _round12(float(rec.N2[-1])),
        "diagnostics": {
            "max_trace_err": _round12(float(rec.trace_err.max())),
            "max_herm_err": _round12(float(rec.herm_err.max())),
            "min_eig": _round12(float(rec.min_eig.min())),
            "renormalizations": int(rec.renormalizations),
            "max_trace_drift": _round12(rec.max_trace_drift),
            "samples": len(rec),
            "dt_stage1_us": _round12(run.dts[0]),
            "dt_stage2_us": _round12(run.dts[1]),
            "max_rate_rad_per_us": _round12(run.max_rate),
            "dt_bound_us": _round12(run.dt_bound),
        },
    }


def timeseries_rows(record: TrajectoryRecord) -> list[list[str]]:
    rows = [list(TrajectoryRecord.COLUMNS)]
    rows.extend([fmt(x) for x in row] for row in record.table())
    return rows


def _units() -> dict[str, Any]:
    return {
        "frequencies": "GHz (cyclic)",
        "rates": "MHz (cyclic, rate/2pi)",
        "time": "us",
        "internal": "angular, rad/us",
    }


def build_manifest(cfg: RunConfig, extra: dict[str, Any], started: float) -> dict[str, Any]:
    params = cfg.system
    return {
        "kind": MANIFEST_KIND,
        "tool_version": __version__,
        "experiment": cfg.experiment.kind,
        "config": cfg.resolved_document(),
        "defaulted": {name: name in params.defaulted for name in ("Omega", "T1", "T2")},
        "assumed_defaults": {
            "T1_us": params.T1,
            "T2_us": params.T2,
            "g_wg_MHz": params.g_wg,
            "Omega_MHz": params.Omega,
            "omega_q_GHz": params.omega_q,
            "rates_are_angular": params.rates_are_angular,
        },
        "units": _units(),
        "notes": NOTES,
        **extra,
        "duration_s": round(time.perf_counter() - started, 3),
    }


# ---- single run -----------------------------------------------------------


@dataclass
class Outcome:
    exit_code: int
    out_dir: Path
    payload: dict[str, Any] = field(default_factory=dict)


def run_single(cfg: RunConfig, out_dir: Optional[os.PathLike] = None) -> Outcome:
    """Default-schedule protocol run; writes timeseries.csv, summary.json and manifest.json."""
    started = time.perf_counter()
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    params = cfg.system
    try:
        run = run_protocol(params, cfg.integrator)
    except (IntegrationError, ValueError, ArithmeticError) as exc:
        log.error("run failed: %s", exc)
        summary = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        _write_json(out / "summary.json", summary)
        _write_json(out / "manifest.json", build_manifest(cfg, {"status": "failed"}, started))
        return Outcome(EXIT_FAIL, out, summary)

    _write_rows(out / "timeseries.csv", timeseries_rows(run.record))
    summary = {"status": "ok", **summarize(run, params)}
    _write_json(out / "summary.json", summary)
    extra = {
        "status": "ok",
        "integrator_resolved": {
            "dt_stage1_us": run.dts[0],
            "dt_stage2_us": run.dts[1],
            "record_stride_stage1": run.strides[0],
            "record_stride_stage2": run.strides[1],
            "method": cfg.integrator.method,
        },
        "schedule_samples": run.schedule.samples(SCHEDULE_SAMPLES_PER_STAGE),
    }
    _write_json(out / "manifest.json", build_manifest(cfg, extra, started))
    return Outcome(EXIT_OK, out, summary)


# ---- sweeps ---------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    overrides: tuple[tuple[str, float], ...]
    ok: bool
    F: float = math.nan
    N2_max: float = math.nan
    max_trace_err: float = math.nan
    min_eig: float = math.nan
    renormalizations: int = 0
    error: str = ""


def evaluate_cell(job: tuple[SystemParams, IntegratorConfig, tuple[tuple[str, float], ...]]) -> CellResult:
    base, integrator, overrides = job
    try:
        params = base.replace(**dict(overrides))
        run = run_protocol(params, integrator)
    except (IntegrationError, ValueError, ArithmeticError) as exc:
        return CellResult(overrides, False, error=f"{type(exc).__name__}: {exc}")
    F, _ = metrics.fidelity_up_to_phase(run.rho, metrics.FINAL_TARGET, params.layout)
    rec = run.record
    return CellResult(
        overrides,
        True,
        F=float(F),
        N2_max=float(rec.N2.max()),
        max_trace_err=float(rec.trace_err.max()),
        min_eig=float(rec.min_eig.min()),
        renormalizations=int(rec.renormalizations),
    )


def evaluate_cells(
    base: SystemParams,
    integrator: IntegratorConfig,
    cells: Sequence[dict[str, float]],
    workers: Optional[int] = None,
) -> list[CellResult]:
    """Run the protocol once per override set; results come back in input order.

    Each cell is a pure function of its inputs, so the worker count only
    changes wall time.
    """
    jobs = [(base, integrator, tuple(sorted(c.items()))) for c in cells]
    workers = workers or workers_from_env()
    workers = max(1, min(workers, len(jobs)))
    if workers == 1:
        return [evaluate_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(evaluate_cell, jobs))


def sweep_rows(values1: Sequence[float], values2: Sequence[float], matrix: np.ndarray, label: str) -> list[list[str]]:
    rows = [[label] + [fmt(v) for v in values2]]
    for v1, row in zip(values1, matrix):
        rows.append([fmt(v1)] + [fmt(x) for x in row])
    return rows


def run_sweep(cfg: RunConfig, out_dir: Optional[os.PathLike] = None, workers: Optional[int] = None) -> Outcome:
    """Evaluate the two-axis rate grid; writes one CSV per metric plus per-cell diagnostics."""
    started = time.perf_counter()
    if cfg.experiment.kind != "sweep" or len(cfg.experiment.axes) != 2:
        raise ValueError("run_sweep needs a sweep experiment with two axes")
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    a1, a2 = cfg.experiment.axes
    v1, v2 = a1.values(), a2.values()
    cells = [{a1.name: x, a2.name: y} for x in v1 for y in v2]
    results = evaluate_cells(cfg.system, cfg.integrator, cells, workers)

    shape = (len(v1), len(v2))
    F = np.array([r.F for r in results]).reshape(shape)
    N2 = np.array([r.N2_max for r in results]).reshape(shape)
    label = f"{a1.name}\\{a2.name}"
    files = {"F": ("sweep_F.csv", F), "N2_max": ("sweep_N2max.csv", N2)}
    for metric in cfg.experiment.metrics:
        name, mat = files[metric]
        _write_rows(out / name, sweep_rows(v1, v2, mat, label))

    diag = [["i", "j", a1.name, a2.name, "status", "F", "N2_max", "max_trace_err", "min_eig", "renormalizations", "error"]]
    for k, r in enumerate(results):
        i, j = divmod(k, len(v2))
        diag.append(
            [str(i), str(j), fmt(v1[i]), fmt(v2[j]), "ok" if r.ok else "failed", fmt(r.F), fmt(r.N2_max),
             fmt(r.max_trace_err), fmt(r.min_eig), str(r.renormalizations), r.error]
        )
    _write_rows(out / "sweep_cells.csv", diag)

    failed = sum(not r.ok for r in results)
    ok_F = F[np.isfinite(F)]
    summary = {
        "status": "ok" if not failed else ("failed" if failed == len(results) else "partial"),
        "axes": {a1.name: [fmt(v) for v in v1], a2.name: [fmt(v) for v in v2]},
        "cells": len(results),
        "failed_cells": failed,
        "F_range": [_round12(float(ok_F.min())), _round12(float(ok_F.max()))] if ok_F.size else None,
        "F_in_unit_interval": bool(np.all((ok_F >= -1e-12) & (ok_F <= 1 + 1e-12))),
    }
    _write_json(out / "sweep_summary.json", summary)
    _write_json(out / "manifest.json", build_manifest(cfg, {"status": summary["status"]}, started))
    code = EXIT_OK if not failed else (EXIT_FAIL if failed == len(results) else EXIT_PARTIAL)
    return Outcome(code, out, summary)


# ---- diagnostics ------------------------------------------------------------


def format_report(results) -> str:
    lines = []
    for r in results:
        values = ", ".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in r.measured.items())
        lines.append(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {values}")
        if r.detail:
            lines.append(f"       {r.detail}")
    return "\n".join(lines)


def run_check(cfg: RunConfig, out_dir: Optional[os.PathLike] = None) -> Outcome:
    """Run every diagnostic and write check_report.json; exit 1 if any check fails."""
    started = time.perf_counter()
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    results = run_checks(cfg.system, cfg.integrator)
    report = {"passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    _write_json(out / "check_report.json", report)
    _write_json(out / "manifest.json", build_manifest(cfg, {"status": "ok" if report["passed"] else "failed"}, started))
    report["text"] = format_report(results)
    return Outcome(EXIT_OK if report["passed"] else EXIT_FAIL, out, report)
