"""Multi-step simulation driver with per-step certification and persistence.

A run advances one trajectory, evaluates every monitored inequality after
each step, enforces the short-time horizon of its monitor variant, and
writes a CSV time series, a JSON report and optional binary field
snapshots.  Monitors never alter the trajectory: a violated bound finishes
the current row, marks the termination reason and stops.

All outputs are written atomically (write to a temp file, then rename) and
are byte-identical across reruns of the same deterministic configuration.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import analysis, spectral, stepping
from .analysis import (
    BoundsReport,
    Check,
    ConstantsSet,
    DtReport,
    HorizonReport,
    InfeasibleConfig,
    StepVerdict,
)
from .spectral import (
    ForcingEvaluator,
    ForcingSpec,
    Grid,
    InitialSpec,
    NormBundle,
    SpectralField,
    Zero,
    describe_spec,
    make_field,
    norms,
    save_field,
)
from .stepping import NonConvergence, SchemeConfig

CSV_HEADER = (
    "n,t,l2_sq,h1_sq,h2_sq,l3,fp_iters,energy_residual,"
    "verdict_l2,verdict_h1,verdict_lemma,verdict_y1,verdict_bound,"
    "y1,y2,y_plus,slack_min"
)

TERMINATIONS = ("completed", "horizon_reached", "nonconvergence", "bound_violated")


@dataclass(frozen=True)
class RunConfig:
    n: int
    scheme: SchemeConfig
    initial: InitialSpec = Zero()
    forcing: ForcingSpec = Zero()
    constants: ConstantsSet = ConstantsSet()
    n_steps: Optional[int] = None
    t_end: Optional[float] = None
    monitor: str = "none"
    snapshot_cadence: int = 0
    out_dir: Optional[str] = None
    seed: int = 0
    allow_over_horizon: bool = False
    label: str = "run"

    def __post_init__(self):
        if (self.n_steps is None) == (self.t_end is None):
            raise ValueError("exactly one of n_steps and t_end must be set")
        if self.n_steps is not None and self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.t_end is not None and not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        if self.snapshot_cadence < 0:
            raise ValueError("snapshot_cadence must be nonnegative")
        if self.monitor not in analysis.MONITOR_VARIANTS:
            raise ValueError(
                f"monitor must be one of {analysis.MONITOR_VARIANTS}, got {self.monitor!r}"
            )
        if self.monitor.startswith("semi") and self.scheme.scheme != stepping.SEMI_IMPLICIT:
            raise ValueError(f"monitor {self.monitor!r} requires the semi-implicit scheme")
        if self.monitor.startswith("full") and self.scheme.scheme != stepping.FULLY_IMPLICIT:
            raise ValueError(f"monitor {self.monitor!r} requires the fully implicit scheme")

    def resolved_steps(self) -> int:
        if self.n_steps is not None:
            return self.n_steps
        return max(1, int(math.floor(self.t_end / self.scheme.k + 1e-9)))


@dataclass(frozen=True)
class StepRow:
    n: int
    t: float
    norms: NormBundle
    fp_iters: int
    fp_residual: float
    energy_residual: float
    verdict: StepVerdict


@dataclass
class RunReport:
    config: RunConfig
    bounds: BoundsReport
    horizons: HorizonReport
    dt_tables: dict[str, Union[DtReport, str]]
    rows: list[StepRow]
    termination: str
    horizon_applied: Optional[float]
    wall_time_s: float
    final_field: SpectralField
    csv_path: Optional[str] = None
    json_path: Optional[str] = None

    @property
    def first_violation_step(self) -> Optional[int]:
        for row in self.rows:
            if not row.verdict.all_ok:
                return row.n
        return None


def run(config: RunConfig) -> RunReport:
    """Execute one monitored trajectory.

    Preflight: for the small-solution monitors the variant's smallness and
    timestep conditions are checked before stepping and raise
    InfeasibleConfig when violated.  Short-time monitors instead stop the
    run at the variant's guaranteed horizon (opt out per config).

    Forcing sup norms are taken over the requested step times; for
    time-modulated forcing this under-approximates a continuous supremum.
    """
    t0 = time.perf_counter()
    grid = Grid(config.n)
    cfg = config.scheme
    consts = config.constants

    u0 = make_field(grid, config.initial)
    forcing = ForcingEvaluator(config.forcing, grid)

    n_requested = config.resolved_steps()
    times = [(i + 1) * cfg.k for i in range(n_requested)]
    f_hm1_sup_sq, f_l2_sup_sq = forcing.sup_norms_sq(times)

    u0_norms = norms(u0)
    bounds = analysis.compute_bounds(
        u0_norms.l2_sq, u0_norms.h1_sq, f_hm1_sup_sq, f_l2_sup_sq, cfg.nu, consts
    )
    horizons = analysis.compute_horizons(bounds, consts, cfg.nu)
    dt_tables = _dt_tables(bounds, consts, cfg.nu)

    if config.monitor in ("semi_small", "full_small"):
        table = dt_tables[config.monitor]
        if isinstance(table, str):
            raise InfeasibleConfig(table)
        k_check = Check("k", cfg.k, table.k_max)
        if not k_check.ok:
            raise InfeasibleConfig(
                f"k = {cfg.k} exceeds the admissible k_max = {table.k_max:.6g} "
                f"for monitor {config.monitor} (binding: {table.binding})"
            )

    horizon_applied = None
    n_cap = n_requested
    if config.monitor in ("semi_short", "full_short") and not config.allow_over_horizon:
        t_star = analysis.horizon_for_variant(horizons, config.monitor)
        horizon_applied = t_star
        if math.isfinite(t_star):
            n_cap = min(n_requested, int(math.floor(t_star / cfg.k + 1e-12)))

    f_norms_const = norms(forcing.at(times[0])) if forcing.constant_in_time else None

    snapshots = config.snapshot_cadence > 0 and config.out_dir is not None
    if snapshots:
        os.makedirs(config.out_dir, exist_ok=True)
        save_field(u0, os.path.join(config.out_dir, f"snap_{0:08d}.fld"))

    rows: list[StepRow] = []
    u = u0
    prev_norms = u0_norms
    termination = "completed"
    failure: Optional[NonConvergence] = None
    for i in range(1, n_cap + 1):
        t_i = i * cfg.k
        f_i = forcing.at(t_i)
        try:
            result = stepping.step(u, f_i, cfg)
        except NonConvergence as exc:
            termination = "nonconvergence"
            failure = exc
            break
        new_norms = norms(result.u_new)
        f_nb = f_norms_const if f_norms_const is not None else norms(f_i)
        verdict = analysis.step_verdict(
            prev_norms, new_norms, f_nb, cfg, consts, bounds, config.monitor
        )
        rows.append(
            StepRow(
                n=i,
                t=t_i,
                norms=new_norms,
                fp_iters=result.fp_iters,
                fp_residual=result.fp_residual,
                energy_residual=result.energy_identity_residual,
                verdict=verdict,
            )
        )
        u = result.u_new
        prev_norms = new_norms
        if snapshots and i % config.snapshot_cadence == 0:
            save_field(u, os.path.join(config.out_dir, f"snap_{i:08d}.fld"))
        if config.monitor != "none" and not verdict.bound.ok:
            termination = "bound_violated"
            break
    else:
        if n_cap < n_requested:
            termination = "horizon_reached"

    report = RunReport(
        config=config,
        bounds=bounds,
        horizons=horizons,
        dt_tables=dt_tables,
        rows=rows,
        termination=termination,
        horizon_applied=horizon_applied,
        wall_time_s=time.perf_counter() - t0,
        final_field=u,
    )
    if config.out_dir is not None:
        _write_outputs(report)
    if failure is not None:
        failure.report = report
        raise failure
    return report


def _dt_tables(
    bounds: BoundsReport, consts: ConstantsSet, nu: float
) -> dict[str, Union[DtReport, str]]:
    tables: dict[str, Union[DtReport, str]] = {}
    for variant in ("semi_small", "semi_short", "full_small", "full_short"):
        try:
            tables[variant] = analysis.dt_restrictions(bounds, consts, nu, variant)
        except InfeasibleConfig as exc:
            tables[variant] = f"infeasible: {exc}"
    return tables


# -- sweeps ------------------------------------------------------------------------


@dataclass
class SweepEntry:
    config: RunConfig
    report: Optional[RunReport]
    error: Optional[str]


def sweep(configs: Sequence[RunConfig], max_workers: int = 1) -> list[SweepEntry]:
    """Independent runs; per-run failures are recorded and the sweep continues."""

    def _one(config: RunConfig) -> SweepEntry:
        try:
            return SweepEntry(config, run(config), None)
        except NonConvergence as exc:
            return SweepEntry(config, getattr(exc, "report", None), f"nonconvergence: {exc}")
        except InfeasibleConfig as exc:
            return SweepEntry(config, None, f"infeasible: {exc}")

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_one, configs))
    return [_one(c) for c in configs]


def sweep_summary(entries: Sequence[SweepEntry]) -> str:
    """Table of (k, scheme, monitor) -> first violation step or none/error."""
    lines = ["k scheme monitor first_violation termination"]
    for e in entries:
        cfg = e.config
        if e.report is None:
            status, term = "-", e.error or "error"
        else:
            first = e.report.first_violation_step
            status = "none" if first is None else str(first)
            term = e.report.termination if e.error is None else e.error
        lines.append(
            f"{_fmt(cfg.scheme.k)} {cfg.scheme.scheme} {cfg.monitor} {status} {term}"
        )
    return "\n".join(lines)


def convergence_orders(errors: Sequence[float]) -> list[float]:
    """log2 of successive error ratios for step halvings."""
    return [math.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]


def fitted_order(ks: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(k)."""
    lk = np.log(np.asarray(ks, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    slope, _ = np.polyfit(lk, le, 1)
    return float(slope)


# -- persistence ---------------------------------------------------------------------


def _fmt(x) -> str:
    """Shortest decimal that round-trips to the same float."""
    return repr(float(x))


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(rows: Sequence[StepRow]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        v = row.verdict
        cub = v.cubic
        y1 = cub.y1 if cub.has_positive_roots else float("nan")
        y2 = cub.y2 if cub.has_positive_roots else float("nan")
        lines.append(
            ",".join(
                [
                    str(row.n),
                    _fmt(row.t),
                    _fmt(row.norms.l2_sq),
                    _fmt(row.norms.h1_sq),
                    _fmt(row.norms.h2_sq),
                    _fmt(row.norms.l3),
                    str(row.fp_iters),
                    _fmt(row.energy_residual),
                    str(int(v.l2_recurrence.ok)),
                    str(int(v.h1_recurrence.ok)),
                    str(int(v.lemma_hypotheses_ok)),
                    str(int(v.y1_membership.ok)),
                    str(int(v.bound.ok)),
                    _fmt(y1),
                    _fmt(y2),
                    _fmt(cub.y_plus),
                    _fmt(v.min_rel_slack),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _json_safe(x):
    if isinstance(x, float):
        if math.isfinite(x):
            return x
        return repr(x)  # 'inf', '-inf', 'nan'
    return x


def _check_dict(chk: Check) -> dict:
    return {
        "name": chk.name,
        "value": _json_safe(chk.value),
        "threshold": _json_safe(chk.threshold),
        "ok": chk.ok,
        "slack": _json_safe(chk.slack),
    }


def _dt_table_dict(table: Union[DtReport, str]) -> dict:
    if isinstance(table, str):
        return {"infeasible": table}
    return {
        "k_max": _json_safe(table.k_max),
        "binding": table.binding,
        "constraints": [
            {"tag": c.tag, "formula": c.formula, "k_max": _json_safe(c.k_max)}
            for c in table.constraints
        ],
    }


def _config_dict(config: RunConfig) -> dict:
    s = config.scheme
    c = config.constants
    return {
        "n": config.n,
        "scheme": {
            "scheme": s.scheme,
            "k": s.k,
            "nu": s.nu,
            "fp_tol": s.fp_tol,
            "fp_max_iter": s.fp_max_iter,
            "deterministic": s.deterministic,
        },
        "initial": describe_spec(config.initial),
        "forcing": describe_spec(config.forcing),
        "constants": {"c0": c.c0, "c1": c.c1, "c2": c.c2, "c3": c.c3, "c4": c.c4, "c5": c.c5},
        "run": {
            "n_steps": config.n_steps,
            "t_end": config.t_end,
            "monitor": config.monitor,
            "snapshot_cadence": config.snapshot_cadence,
            "seed": config.seed,
            "allow_over_horizon": config.allow_over_horizon,
            "label": config.label,
        },
        "output": {"dir": config.out_dir},
    }


def report_json_dict(report: RunReport) -> dict:
    b = report.bounds
    h = report.horizons
    last = report.rows[-1] if report.rows else None
    doc = {
        "config": _config_dict(report.config),
        "bounds": {
            "u0_l2_sq": b.u0_l2_sq,
            "u0_h1_sq": b.u0_h1_sq,
            "f_hm1_sup_sq": b.f_hm1_sup_sq,
            "f_l2_sup_sq": b.f_l2_sup_sq,
            "K0": b.K0,
            "K1": b.K1,
            "K0_tilde": b.K0_tilde,
            "K1_tilde": b.K1_tilde,
            "K_init": b.K_init,
            "F_short": b.F_short,
            "F_full": b.F_full,
        },
        "horizons": {
            "t_star_continuous": _json_safe(h.t_star_continuous),
            "t_star_semi": _json_safe(h.t_star_semi),
            "t_f_star": _json_safe(h.t_f_star),
            "blowup_time": _json_safe(h.blowup_time),
        },
        "dt_restrictions": {
            variant: _dt_table_dict(table) for variant, table in report.dt_tables.items()
        },
        "termination": report.termination,
        "horizon_applied": _json_safe(report.horizon_applied)
        if report.horizon_applied is not None
        else None,
        "steps_completed": len(report.rows),
        "final_t": last.t if last else 0.0,
        "final_l2_sq": last.norms.l2_sq if last else b.u0_l2_sq,
        "final_h1_sq": last.norms.h1_sq if last else b.u0_h1_sq,
        "first_violation_step": report.first_violation_step,
        # wall time varies between runs, so deterministic reports omit it
        "wall_time_s": None if report.config.scheme.deterministic else report.wall_time_s,
    }
    return doc


def _write_outputs(report: RunReport) -> None:
    config = report.config
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{config.label}.csv")
    json_path = os.path.join(out_dir, f"{config.label}.json")
    _atomic_write_text(csv_path, _csv_text(report.rows))
    _atomic_write_text(json_path, json.dumps(report_json_dict(report), indent=2) + "\n")
    report.csv_path = csv_path
    report.json_path = json_path
