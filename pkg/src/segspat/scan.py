"""Threshold x lag experiment grid."""

from __future__ import annotations

import csv
import dataclasses
import math
import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .diagnostics import SCAN_COLUMNS, effect_table, fit_report, skipped_report
from .errors import DegenerateDesignError, NumericalError
from .model import ModelSpec, PriorConfig, assemble, usable_dates
from .panel import OUTCOMES
from .sampler import SamplerConfig, gibbs_fit
from .splines import make_basis

__all__ = ["ScanGrid", "run_scan", "write_scan_csv", "read_scan_csv", "best_threshold", "cell_seed"]


@dataclasses.dataclass(frozen=True)
class ScanGrid:
    thresholds: tuple = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0)
    lags: tuple = (0, 7, 14)
    outcomes: tuple = ("incidence",)
    spline_df: dict = dataclasses.field(default_factory=lambda: {"incidence": 16, "lethality": 10})
    random_slope: bool = False
    spatial: bool = True
    priors: PriorConfig = dataclasses.field(default_factory=PriorConfig)

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(c) for c in self.thresholds))
        object.__setattr__(self, "lags", tuple(int(x) for x in self.lags))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        if not (self.thresholds and self.lags and self.outcomes):
            raise ValueError("scan grid lists must be non-empty")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if len(set(self.lags)) != len(self.lags):
            raise ValueError("duplicate lags in scan grid")
        for o in self.outcomes:
            if o not in OUTCOMES:
                raise ValueError(f"unknown outcome {o!r}")
            if o not in self.spline_df:
                raise ValueError(f"no spline df given for outcome {o!r}")

    def specs(self):
        """Model specs in canonical order: outcome, then c, then lag."""
        return [
            ModelSpec(
                outcome=o,
                threshold_c=c,
                lag=lag,
                spline_df=int(self.spline_df[o]),
                random_slope=self.random_slope,
                spatial=self.spatial,
                priors=self.priors,
            )
            for o in self.outcomes
            for c in self.thresholds
            for lag in self.lags
        ]


def cell_seed(seed, spec):
    """Seed for one grid cell, a function of the base seed and the cell key only."""
    key = zlib.crc32(f"{spec.outcome}|{spec.threshold_c:.6g}|{spec.lag}".encode())
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, key]).generate_state(1, np.uint64)[0])


def _fit_cell(panel, graph, spec, basis, sampler_config):
    try:
        model = assemble(panel, graph, spec, basis=basis)
    except DegenerateDesignError as exc:
        return skipped_report(spec, str(exc), "degenerate-design")
    cfg = dataclasses.replace(sampler_config, seed=cell_seed(sampler_config.seed, spec), workers=1)
    try:
        draws = gibbs_fit(model, cfg)
    except NumericalError as exc:
        return skipped_report(spec, str(exc), "numerical-failure")
    return fit_report(model, draws)


def run_scan(panel, graph, grid=ScanGrid(), sampler_config=SamplerConfig(), workers=1):
    """Fit every (outcome, c, lag) cell; one :class:`FitReport` per cell.

    Cells that cannot be fitted come back with ``status='skipped'`` and a
    reason. Each cell's seed depends only on the base seed and its key, so
    results do not depend on ``workers`` or evaluation order.
    """
    panel = panel.reorder(graph.region_ids)
    specs = grid.specs()
    bases = {}
    for spec in specs:
        key = (spec.outcome, spec.lag)
        if key not in bases:
            t = usable_dates(panel, spec.outcome, spec.lag)
            try:
                bases[key] = make_basis(t, spec.spline_df)
            except ValueError as exc:
                bases[key] = exc
    jobs = []
    for spec in specs:
        b = bases[(spec.outcome, spec.lag)]
        jobs.append((spec, b))

    def run(spec, b):
        if isinstance(b, Exception):
            return skipped_report(spec, str(b), "spline-basis")
        return _fit_cell(panel, graph, spec, b, sampler_config)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                None if isinstance(b, Exception) else pool.submit(_fit_cell, panel, graph, spec, b, sampler_config)
                for spec, b in jobs
            ]
            reports = [run(spec, b) if f is None else f.result() for (spec, b), f in zip(jobs, futures)]
    else:
        reports = [run(spec, b) for spec, b in jobs]

    if all(r.status != "ok" for r in reports):
        raise DegenerateDesignError("every scan cell is degenerate: " + "; ".join(r.reason for r in reports[:3]))
    return reports


def _fmt(x):
    if isinstance(x, float):
        return "" if not math.isfinite(x) else repr(x)
    return str(x)


def write_scan_csv(reports, path):
    """One row per cell, outcomes in grid order, then by c and lag."""
    order = list(dict.fromkeys(r.outcome for r in reports))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for outcome in order:
            table = effect_table([r for r in reports if r.outcome == outcome])
            for row in table[SCAN_COLUMNS].itertuples(index=False):
                w.writerow([_fmt(x) for x in row])


def read_scan_csv(path):
    """Rows of a scan CSV as dicts with numeric fields parsed (NaN when empty)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            row = dict(rec)
            for k in SCAN_COLUMNS:
                if k in ("outcome", "status"):
                    continue
                row[k] = float(rec[k]) if rec[k] != "" else math.nan
            row["lag"] = int(row["lag"])
            rows.append(row)
    return rows


def best_threshold(reports, outcome=None, lag=None):
    """Scanned ``c`` with the largest posterior-mean ``|beta|`` among fitted cells."""
    cand = [
        r for r in reports
        if r.status == "ok" and (outcome is None or r.outcome == outcome) and (lag is None or r.lag == lag)
    ]
    if not cand:
        raise ValueError("no fitted cells to choose from")
    return max(cand, key=lambda r: abs(r.beta_mean)).c
