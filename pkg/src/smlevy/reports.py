"""Deterministic file emission for reports and tables.

All writers produce byte-identical output for equal inputs: UTF-8 CSV with a
header row, comma separator, '.' decimal point, floats at 17 significant
digits (lossless round-trip), no timestamps.  JSON output carries the same
rows as a list of objects with sorted keys.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .harness import (
    ArbitrationReport,
    ConvergenceReport,
    FullSuiteResult,
    GeneratorCheckReport,
    SuiteReport,
)
from .limits import LevyCharacteristics
from .prelimit import EnsembleStats, IncrementReport, SupMomentReport

__all__ = [
    "fmt_float",
    "write_csv",
    "write_rows",
    "emit_report",
    "write_ensemble_csv",
    "write_stats_csv",
    "characteristics_table",
    "write_characteristics",
    "read_characteristics_csv",
    "write_ergodic_summary",
]


def fmt_float(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_float(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return str(path)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return str(v)


def write_rows(path, header, rows, fmt: str) -> str:
    """Write tabular data as CSV or as a JSON array of row objects."""
    if fmt == "csv":
        return write_csv(path, header, rows)
    payload = [{k: _json_value(v) for k, v in zip(header, row)} for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return str(path)


def _write_text(path, text) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")
    return str(path)


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "json"


# ---------------------------------------------------------------------------
# Report dispatch
# ---------------------------------------------------------------------------

def emit_report(report, out_dir, fmt: str = "csv", basename: str | None = None):
    """Write a report as (table file, summary text); returns written paths.

    Supported: GeneratorCheckReport, ConvergenceReport, ArbitrationReport,
    SuiteReport, FullSuiteResult, EnsembleStats, SupMomentReport,
    IncrementReport.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def table(name, header, rows):
        p = os.path.join(out_dir, f"{basename or name}.{_ext(fmt)}")
        paths.append(write_rows(p, header, rows, fmt))

    def summary(name, text):
        p = os.path.join(out_dir, f"{basename or name}_summary.txt")
        paths.append(_write_text(p, text))

    if isinstance(report, GeneratorCheckReport):
        table("gencheck", ("eps", "phi", "estimate", "target", "se", "rel_err"),
              report.rows)
        summary("gencheck", report.summary())
    elif isinstance(report, ConvergenceReport):
        table("convergence", ("eps", "w1", "w1_lo", "w1_hi", "ks", "ks_lo", "ks_hi"),
              report.rows)
        p = os.path.join(out_dir, f"{basename or 'convergence'}_moments.{_ext(fmt)}")
        paths.append(write_rows(
            p, ("eps", "t", "prelimit_mean", "limit_mean", "prelimit_var", "limit_var"),
            report.moment_rows, fmt))
        summary("convergence", report.summary())
    elif isinstance(report, ArbitrationReport):
        table("arbitration", ("reading", "sigma2", "predicted_var", "within_ci"),
              report.entries)
        summary("arbitration", report.summary())
    elif isinstance(report, SuiteReport):
        table("suites", ("scenario", "passed", "detail"),
              [(s.name, s.passed, s.detail) for s in report.scenarios])
        summary("suites", report.summary())
    elif isinstance(report, FullSuiteResult):
        table("suite_criteria", ("criterion", "passed", "detail"),
              [(c.name, c.passed, c.detail) for c in report.criteria])
        summary("suite", report.summary())
        for key, sub in report.reports.items():
            if isinstance(sub, (list, tuple)):
                for i, s in enumerate(sub):
                    paths.extend(emit_report(s, out_dir, fmt, basename=f"{key}_{i}"))
            else:
                paths.extend(emit_report(sub, out_dir, fmt, basename=key))
    elif isinstance(report, EnsembleStats):
        paths.append(write_stats_csv(
            report, os.path.join(out_dir, f"{basename or 'stats'}.{_ext(fmt)}"), fmt))
    elif isinstance(report, SupMomentReport):
        table("sup_moment", ("eps", "sup2_mean", "sup2_se"), report.entries)
        summary("sup_moment", report.summary())
    elif isinstance(report, IncrementReport):
        table("increments", ("s", "t", "slope"),
              [(s, t, v) for (s, t), v in report.pairs])
        summary("increments", report.summary())
    else:
        raise TypeError(f"no writer for report type {type(report).__name__}")
    return paths


# ---------------------------------------------------------------------------
# Ensembles, stats, characteristics
# ---------------------------------------------------------------------------

def write_ensemble_csv(samples: np.ndarray, t_grid, path, fmt: str = "csv") -> str:
    """Long-format ensemble table: replica, time, value_0.. value_{d-1}."""
    n, G, d = samples.shape
    header = ["replica", "time"] + [f"value_{i}" for i in range(d)]
    rows = []
    for r in range(n):
        for g in range(G):
            rows.append([r, float(t_grid[g])] + [float(v) for v in samples[r, g]])
    return write_rows(path, header, rows, fmt)


def write_stats_csv(stats: EnsembleStats, path, fmt: str = "csv") -> str:
    d = stats.mean.shape[1]
    header = (["time"] + [f"mean_{i}" for i in range(d)]
              + [f"var_{i}" for i in range(d)] + [f"se_{i}" for i in range(d)])
    rows = []
    for g, t in enumerate(stats.t_grid):
        rows.append([float(t)] + list(stats.mean[g]) + list(stats.var[g])
                    + list(stats.mean_se[g]))
    return write_rows(path, header, rows, fmt)


def characteristics_table(chars: LevyCharacteristics, u_grid):
    """Header and rows of the limit-characteristics table (d = 1)."""
    if chars.dim != 1:
        raise ValueError("the characteristics table is defined for d = 1")
    n_atoms = len(chars._atom_locs)
    header = ["u", "b", "sigma2", "lambda"]
    for k in range(n_atoms):
        header += [f"atom_{k}_v", f"atom_{k}_p"]
    rows = []
    for u in np.asarray(u_grid, dtype=float):
        ch = chars.averaged([u])
        sig = chars.sigma2([u])[0, 0]
        row = [float(u), float(ch.drift[0]), float(sig), float(ch.lam)]
        for k in range(n_atoms):
            row += [float(ch.atoms[k][0]),
                    float(ch.probs[k]) if len(ch.probs) else 0.0]
        rows.append(row)
    return header, rows


def write_characteristics(chars: LevyCharacteristics, u_grid, path,
                          fmt: str = "csv") -> str:
    header, rows = characteristics_table(chars, u_grid)
    return write_rows(path, header, rows, fmt)


def read_characteristics_csv(path) -> dict:
    """Read back a characteristics CSV into column arrays (lossless floats)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, v in zip(header, ln.split(",")):
            cols[h].append(float(v))
    return {h: np.array(v) for h, v in cols.items()}


def write_ergodic_summary(summary, states, path) -> str:
    """Human-readable ergodic analytics block."""
    lines = ["ergodic summary"]
    lines.append("state,rho,pi,m,q")
    for i, s in enumerate(states):
        lines.append(",".join([s] + [fmt_float(v) for v in
                                     (summary.rho[i], summary.pi[i],
                                      summary.m_vec[i], summary.q_vec[i])]))
    lines.append(f"m_bar,{fmt_float(summary.m_bar)}")
    lines.append(f"q_bar,{fmt_float(summary.q_bar)}")
    lines.append("R0_tilde")
    for row in summary.R0_tilde:
        lines.append(",".join(fmt_float(v) for v in row))
    return _write_text(path, "\n".join(lines))
