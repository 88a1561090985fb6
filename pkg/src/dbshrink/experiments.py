"""Experiment harness: PRIAL tables, sweeps over ``t`` and ``a``, identity checks."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive_int
from .estimators import EstimatorSpec, a_optimal, t_max
from .risk import (
    LOSS_KINDS,
    NumericalFailure,
    mean_and_se,
    prial_se,
    report_from_values,
    resolve_spec,
    scenario_k_star,
    simulate_losses,
)
from .sampling import Scenario
from .stein_haff import CorrectionG, identity_G, verify_identity, zero_G

logger = logging.getLogger(__name__)

TABLE_FIELDS = ("p", "m", "q", "family", "rho", "loss", "estimator", "reps", "seed", "avg_loss", "std_err", "prial")

REFERENCE_PRIAL = {
    (20, 4): 15.00, (20, 8): 18.56, (20, 12): 25.56, (20, 16): 47.034,
    (100, 20): 3.39, (100, 40): 4.19, (100, 60): 5.76, (100, 80): 10.42,
}


@dataclass
class ExperimentConfig:
    scenarios: list
    estimators: list
    losses: tuple = ("data-based",)
    reps: int = 1000
    master_seed: int = 0
    output_path: str | None = None
    output_format: str = "csv"
    workers: int | str = 1
    paired: bool = True

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("config needs at least one scenario")
        if not self.estimators:
            raise ValueError("config needs at least one estimator")
        self.reps = check_positive_int(self.reps, "reps", minimum=2)
        self.losses = tuple(self.losses)
        for kind in self.losses:
            if kind not in LOSS_KINDS:
                raise ValueError(f"unknown loss {kind!r}")
        if self.output_format not in ("csv", "json"):
            raise ValueError(f"unknown output format {self.output_format!r}")

    @classmethod
    def from_dict(cls, d, base_dir=None):
        out = d.get("output") or {}
        return cls(
            scenarios=[Scenario.from_dict(s, base_dir=base_dir) for s in d["scenarios"]],
            estimators=list(d["estimators"]),
            losses=tuple(d.get("losses", ("data-based",))),
            reps=d.get("reps", 1000),
            master_seed=int(d.get("master_seed", 0)),
            output_path=out.get("path"),
            output_format=out.get("format", "csv"),
            workers=d.get("workers", 1),
            paired=bool(d.get("paired", True)),
        )

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        with path.open() as fh:
            return cls.from_dict(json.load(fh), base_dir=path.parent)

    def to_dict(self):
        d = {
            "scenarios": [sc.to_dict() for sc in self.scenarios],
            "estimators": list(self.estimators),
            "losses": list(self.losses),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "paired": self.paired,
        }
        if self.output_path:
            d["output"] = {"path": self.output_path, "format": self.output_format}
        return d


def reference_table_config(reps=1000, master_seed=20190601, workers="auto"):
    """The eight (p, m) reference settings, Gaussian AR(1) with rho = 0.9."""
    return ExperimentConfig(
        scenarios=[Scenario.ar1(p, m, 0.9) for p, m in REFERENCE_PRIAL],
        estimators=["usual:a=auto", "corrected:a=auto,t=auto"],
        losses=("data-based", "quadratic"),
        reps=reps,
        master_seed=master_seed,
        workers=workers,
    )


@dataclass
class TableResult:
    rows: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def _row(sc, report):
    return {
        "p": sc.p, "m": sc.m, "q": sc.q, "family": sc.family.label,
        "rho": sc.rho, "loss": report.loss_kind, "estimator": report.estimator,
        "reps": report.reps, "seed": report.seed, "avg_loss": report.avg_loss,
        "std_err": report.std_err, "prial": report.prial_vs_baseline,
    }


def run_table(cfg, workers=None):
    """Run every scenario x estimator x loss cell of a config.

    PRIAL is reported for each estimator against the first ``usual`` one.
    A scenario hitting a non-finite loss is logged and skipped; it is listed
    in ``failures``.
    """
    workers = cfg.workers if workers is None else workers
    result = TableResult()
    for sc in cfg.scenarios:
        try:
            specs = [resolve_spec(e, sc) for e in cfg.estimators]
            vals = simulate_losses(sc, specs, cfg.losses, cfg.reps, cfg.master_seed, workers, cfg.paired)
        except NumericalFailure as exc:
            logger.error("scenario p=%d m=%d aborted: %s", sc.p, sc.m, exc)
            result.failures.append((sc, str(exc)))
            continue
        base = next((j for j, s in enumerate(specs) if s.kind == "usual"), None)
        for k, kind in enumerate(cfg.losses):
            reports = [report_from_values(sc, s.label, kind, cfg.master_seed, vals[j, k]) for j, s in enumerate(specs)]
            for j, rep in enumerate(reports):
                if base is not None and j != base:
                    rep = rep.with_prial(reports[base])
                result.reports.append(rep)
                result.rows.append(_row(sc, rep))
    return result


def _grid_with(grid, value):
    grid = np.asarray(grid, dtype=np.float64)
    if not np.any(np.isclose(grid, value, rtol=1e-12, atol=0)):
        grid = np.sort(np.append(grid, value))
    return grid


def sweep_t(sc, t_grid, reps=1000, seed=0, workers=1):
    """Paired PRIAL of ``corrected(a_o, t)`` over ``usual(a_o)`` for each ``t``.

    ``t_max`` is added to the grid if missing and flagged in the output.
    """
    tm = t_max(sc.p, sc.m)
    grid = _grid_with(t_grid, tm)
    if np.any(grid < 0):
        raise ValueError("t grid must be nonnegative")
    a = a_optimal(sc.p, sc.m, scenario_k_star(sc))
    specs = [EstimatorSpec.usual(a)] + [EstimatorSpec.corrected(a, float(t)) for t in grid]
    vals = simulate_losses(sc, specs, ("data-based",), reps, seed, workers)[:, 0]
    base_mean = float(np.mean(vals[0]))
    rows = []
    for j, t in enumerate(grid, start=1):
        delta, delta_se = mean_and_se(vals[j] - vals[0])
        rows.append({
            "p": sc.p, "m": sc.m, "rho": sc.rho, "family": sc.family.label,
            "t": float(t), "t_max": tm, "is_t_max": bool(np.isclose(t, tm, rtol=1e-12, atol=0)),
            "in_dominance_interval": bool(t <= tm * (1 + 1e-12)),
            "prial": 100.0 * (base_mean - float(np.mean(vals[j]))) / base_mean,
            "prial_se": prial_se(vals[0], vals[j]),
            "delta": delta, "delta_se": delta_se, "reps": reps, "seed": seed,
        })
    return rows


def sweep_a(sc, a_grid, reps=1000, seed=0, workers=1):
    """Empirical data-based risk of ``a S`` over a grid of ``a``; flags the argmin."""
    grid = np.asarray(a_grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("a grid must be positive and non-empty")
    a_o = a_optimal(sc.p, sc.m, scenario_k_star(sc))
    specs = [EstimatorSpec.usual(float(a)) for a in grid]
    vals = simulate_losses(sc, specs, ("data-based",), reps, seed, workers)[:, 0]
    stats = [mean_and_se(v) for v in vals]
    best = int(np.argmin([s[0] for s in stats]))
    return [
        {
            "p": sc.p, "m": sc.m, "rho": sc.rho, "family": sc.family.label,
            "a": float(a), "a_opt": a_o, "avg_loss": avg, "std_err": se,
            "is_argmin": j == best, "reps": reps, "seed": seed,
        }
        for j, (a, (avg, se)) in enumerate(zip(grid, stats))
    ]


G_CHOICES = {"correction": None, "s": identity_G, "zero": zero_G}


def verify(sc, reps=10_000, seed=0, g="correction", t=None, workers=1):
    """Stein-Haff identity check for the named ``G`` (``correction``, ``s`` or ``zero``)."""
    if g not in G_CHOICES:
        raise ValueError(f"unknown G {g!r}; choose from {sorted(G_CHOICES)}")
    G = G_CHOICES[g]
    if g == "correction":
        G = CorrectionG(t_max(sc.p, sc.m) if t is None else t)
    return verify_identity(sc, G, reps=reps, seed=seed, workers=workers)


def _fmt(key, value):
    if value is None:
        return ""
    if key in ("avg_loss", "std_err", "delta", "delta_se"):
        return f"{value:.6g}"
    if key in ("prial", "prial_se"):
        return f"{value:.2f}"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _json_value(key, value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    return float(_fmt(key, value))


def format_rows(rows, fmt="csv", fields=None):
    """Serialize rows as CSV (fixed column order) or a JSON list with the same fields."""
    if not rows:
        fields = fields or ()
    fields = tuple(fields or rows[0].keys())
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(k, row.get(k)) for k in fields])
        return buf.getvalue()
    if fmt == "json":
        return json.dumps([{k: _json_value(k, row.get(k)) for k in fields} for row in rows], indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_grid(text):
    """``"start:stop:num"`` (inclusive linspace) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:num, got {text!r}")
        return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    return np.array([float(x) for x in text.split(",") if x.strip()])
