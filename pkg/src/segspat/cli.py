"""Command-line front end: ``segspat {fit,scan,synth,print-config}``.

Exit codes are a stable contract: 0 success, 2 input or configuration
error, 3 degenerate model, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import hashlib
import json
import os
import re
import sys
import tempfile
import traceback
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import config as config_mod
from .diagnostics import fit_report
from .errors import InputError, NumericalError, SegspatError
from .figures import render_effect_svg
from .graph import SPAIN_REGIONS, load_adjacency, spain_graph
from .model import assemble
from .panel import build_rate_panel, ingest_csv
from .sampler import gibbs_fit, summarize
from .scan import run_scan, write_scan_csv
from .synthetic import synthetic_series, write_series_csv

__all__ = ["main", "build_parser", "RunManifest"]

ENV_OUT = "SEGSPAT_OUT"
ENV_THREADS = "SEGSPAT_THREADS"


class RunManifest:
    """Provenance record written next to every output set."""

    def __init__(self, command, config_path, seed, argv=None):
        self.command = command
        self.config_path = None if config_path is None else str(Path(config_path).resolve())
        self.seed = seed
        self.argv = list(argv or [])
        self.input_hashes = {}
        self.outputs = []
        self.started_at = _now()
        self.finished_at = None

    def add_input(self, path):
        if path is None:
            return
        path = Path(path)
        self.input_hashes[str(path.resolve())] = sha256_file(path)

    def add_output(self, path):
        self.outputs.append(str(Path(path)))

    def to_dict(self):
        return {
            "command": self.command,
            "config_path": self.config_path,
            "input_hashes": self.input_hashes,
            "seed": self.seed,
            "engine_version": __version__,
            "argv": self.argv,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
        }

    def write(self, out_dir):
        self.finished_at = _now()
        path = Path(out_dir) / "manifest.json"
        with atomic_path(path) as tmp:
            Path(tmp).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path in the target directory; move it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


# -- shared plumbing ---------------------------------------------------------


def _resolve_settings(args, cfg):
    out = args.out or os.environ.get(ENV_OUT) or cfg["output"]["dir"]
    threads = args.threads
    if threads is None and os.environ.get(ENV_THREADS):
        try:
            threads = int(os.environ[ENV_THREADS])
        except ValueError:
            raise InputError(f"{ENV_THREADS} must be an integer, got {os.environ[ENV_THREADS]!r}") from None
    threads = 1 if threads is None else threads
    if threads < 1:
        raise InputError(f"--threads must be at least 1, got {threads}")
    if args.seed is not None:
        cfg["sampler"]["seed"] = args.seed
        cfg["synth"]["seed"] = args.seed
    return Path(out), threads


def _read_adjacency(path, region_ids, strict):
    if not Path(path).is_file():
        raise InputError(f"adjacency file not found: {path}")
    return load_adjacency(path, region_ids, strict=strict)


def _load_inputs(cfg, manifest):
    data = cfg["data"]
    if not data["path"]:
        raise InputError("config key data.path is required")
    path = Path(data["path"])
    if not path.is_file():
        raise InputError(f"data file not found: {path}")
    series = ingest_csv(path, schema=data["columns"], fill_gaps=data["fill_gaps"], delimiter=data["delimiter"])
    panel = build_rate_panel(series)
    manifest.add_input(path)
    if data["adjacency"]:
        graph = _read_adjacency(data["adjacency"], panel.regions, data["strict_adjacency"])
        manifest.add_input(data["adjacency"])
    elif set(panel.regions) == set(SPAIN_REGIONS):
        graph = spain_graph()
    else:
        raise InputError("config key data.adjacency is required unless the regions are the built-in Spanish set")
    return panel, graph


def _write_json(path, obj, manifest):
    with atomic_path(path) as tmp:
        Path(tmp).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    manifest.add_output(path)


def _write_with(path, writer, manifest):
    with atomic_path(path) as tmp:
        writer(tmp)
    manifest.add_output(path)


def _cell_name(report):
    c = f"{report.c:g}".replace(".", "p")
    return re.sub(r"[^A-Za-z0-9_]", "_", f"{report.outcome}_c{c}_lag{report.lag}") + ".json"


# -- commands ----------------------------------------------------------------


def cmd_fit(args, cfg):
    out, threads = _resolve_settings(args, cfg)
    manifest = RunManifest("fit", args.config, cfg["sampler"]["seed"], sys.argv)
    manifest.add_input(args.config)
    panel, graph = _load_inputs(cfg, manifest)
    spec = config_mod.model_spec(cfg)
    model = assemble(panel, graph, spec)
    draws = gibbs_fit(model, config_mod.sampler_config(cfg, workers=threads))
    report = fit_report(model, draws)

    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit_report.json", report.to_dict(), manifest)
    _write_with(out / "fit_report.csv", lambda p: write_scan_csv([report], p), manifest)
    _write_with(
        out / "posterior_summary.csv", lambda p: summarize(draws).to_csv(p, index_label="parameter"), manifest
    )
    if args.emit_draws or cfg["output"]["emit_draws"]:
        _write_with(out / "draws.csv", draws.to_csv, manifest)
    manifest.write(out)
    print(
        f"beta = {report.beta_mean:.4g} [{report.beta_low:.4g}, {report.beta_high:.4g}], "
        f"DIC = {report.dic:.2f}; wrote {out}"
    )
    return 0


def cmd_scan(args, cfg):
    out, threads = _resolve_settings(args, cfg)
    manifest = RunManifest("scan", args.config, cfg["sampler"]["seed"], sys.argv)
    manifest.add_input(args.config)
    panel, graph = _load_inputs(cfg, manifest)
    grid = config_mod.scan_grid(cfg)
    reports = run_scan(panel, graph, grid, config_mod.sampler_config(cfg), workers=threads)

    out.mkdir(parents=True, exist_ok=True)
    scan_csv = out / "scan.csv"
    _write_with(scan_csv, lambda p: write_scan_csv(reports, p), manifest)
    for r in reports:
        _write_json(out / "cells" / _cell_name(r), r.to_dict(), manifest)
    _write_with(out / "effects.svg", lambda p: render_effect_svg(scan_csv, p), manifest)
    manifest.write(out)
    n_ok = sum(r.status == "ok" for r in reports)
    print(f"fitted {n_ok} of {len(reports)} cells; wrote {out}")
    return 0


def _write_pairs(graph, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in graph.pairs():
            fh.write(f"{graph.region_ids[i]} {graph.region_ids[j]}\n")


def cmd_synth(args, cfg):
    out, _ = _resolve_settings(args, cfg)
    manifest = RunManifest("synth", args.config, cfg["synth"]["seed"], sys.argv)
    manifest.add_input(args.config)
    graph = None
    adj = cfg["synth"]["adjacency"]
    if adj:
        graph = _read_adjacency(adj, None, cfg["data"]["strict_adjacency"])
        manifest.add_input(adj)
    sc = config_mod.synth_config(cfg, graph)
    if graph is not None and graph.n_regions != sc.n_regions:
        raise InputError(f"synth.n_regions={sc.n_regions} but {adj} lists {graph.n_regions} regions")
    series, truth = synthetic_series(sc)

    out.mkdir(parents=True, exist_ok=True)
    _write_with(out / "synthetic.csv", lambda p: write_series_csv(series, p), manifest)
    _write_with(out / "adjacency.adj", lambda p: _write_pairs(sc.resolved_graph(), p), manifest)
    _write_json(out / "ground_truth.json", truth.to_dict(), manifest)
    manifest.write(out)
    print(f"wrote {len(series)} regions x {sc.n_dates} dates to {out}")
    return 0


def cmd_print_config(args, cfg):
    sys.stdout.write(yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None))
    return 0


COMMANDS = {"fit": cmd_fit, "scan": cmd_scan, "synth": cmd_synth, "print-config": cmd_print_config}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration (defaults are embedded)")
    common.add_argument("--seed", type=int, metavar="N", help="override the sampler and synth seeds")
    common.add_argument("--out", metavar="DIR", help=f"output directory (env {ENV_OUT})")
    common.add_argument("--threads", type=int, metavar="N", help=f"worker processes (env {ENV_THREADS})")
    common.add_argument("--emit-draws", action="store_true", help="also write every retained draw (fit)")

    parser = argparse.ArgumentParser(
        prog="segspat",
        description="Spatial threshold-effect regression on areal panels.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("fit", parents=[common], help="fit one model and write its report")
    sub.add_parser("scan", parents=[common], help="fit the threshold x lag grid and draw the effect figure")
    sub.add_parser("synth", parents=[common], help="simulate a panel with known ground truth")
    sub.add_parser("print-config", parents=[common], help="print the effective configuration")
    return parser


def _origin(exc):
    """Name of the innermost engine module in the traceback."""
    pkg = Path(__file__).parent
    name = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        p = Path(frame.filename)
        if p.parent == pkg:
            name = p.stem
    return name


def _exit_code(exc):
    if isinstance(exc, SegspatError):
        return exc.exit_code
    if isinstance(exc, np.linalg.LinAlgError):
        return NumericalError.exit_code
    return InputError.exit_code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (SegspatError, np.linalg.LinAlgError, ValueError, OSError) as exc:
        print(f"segspat: error in {_origin(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)

if __name__ == "__main__":
    sys.exit(main())
