"""Bayesian spatial threshold-effect regression for areal time-series panels.

Typical use::

    from segspat import ingest_csv, build_rate_panel, spain_graph, ModelSpec, assemble, gibbs_fit

    panel = build_rate_panel(ingest_csv("counts.csv"))
    model = assemble(panel, spain_graph(), ModelSpec(threshold_c=50, lag=7, spline_df=16))
    draws = gibbs_fit(model)
"""

__version__ = "0.1.0"

from .diagnostics import FitReport, dic, effect_table, fit_report, variance_decomposition
from .errors import (
    AlignmentError,
    DataError,
    DegenerateDesignError,
    InputError,
    NumericalError,
    ParseError,
    RegionMismatchError,
    SchemaError,
    SegspatError,
)
from .graph import (
    SPAIN_REGIONS,
    AdjacencyGraph,
    CarStructure,
    car_structure,
    load_adjacency,
    path_graph,
    spain_graph,
)
from .model import AssembledModel, ModelSpec, PriorConfig, assemble, log_likelihood
from .panel import RatePanel, RegionSeries, build_rate_panel, ingest_csv, lag_exposure
from .sampler import PosteriorDraws, SamplerConfig, gibbs_fit, rhat, summarize
from .scan import ScanGrid, best_threshold, run_scan, write_scan_csv
from .splines import SplineBasis, evaluate_basis, make_basis
from .synthetic import GroundTruth, SynthConfig, generate_synthetic

__all__ = [
    "AdjacencyGraph", "AlignmentError", "AssembledModel", "CarStructure", "DataError",
    "DegenerateDesignError", "FitReport", "GroundTruth", "InputError", "ModelSpec",
    "NumericalError", "ParseError", "PosteriorDraws", "PriorConfig", "RatePanel",
    "RegionMismatchError", "RegionSeries", "SPAIN_REGIONS", "SamplerConfig", "ScanGrid",
    "SchemaError", "SegspatError", "SplineBasis", "SynthConfig", "assemble",
    "best_threshold", "build_rate_panel", "car_structure", "dic", "effect_table",
    "evaluate_basis", "fit_report", "gibbs_fit", "generate_synthetic", "ingest_csv",
    "lag_exposure", "load_adjacency", "log_likelihood", "make_basis", "path_graph",
    "rhat", "run_scan", "spain_graph", "summarize", "variance_decomposition",
    "write_scan_csv",
]
