"""Synthetic panels with known change points for end-to-end checks."""

from __future__ import annotations

import csv
import dataclasses

import numpy as np

from .graph import AdjacencyGraph, SPAIN_REGIONS, car_structure, path_graph, spain_graph
from .panel import DEFAULT_SCHEMA, RegionSeries, build_rate_panel
from .splines import make_basis

__all__ = ["SynthConfig", "GroundTruth", "synthetic_series", "generate_synthetic", "write_series_csv"]


@dataclasses.dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Exposure follows a logistic S-curve ``vmax / (1 + exp(-(t - m_i) / steepness))``
    with per-region midpoints ``m_i`` drawn uniformly from ``midpoint_range``
    (date-index units). The trend is a natural spline with ``trend_df``
    columns over the full date index and fixed coefficients scaled by
    ``trend_amplitude`` (0 gives a flat trend). The signal is carried by the
    incidence rate; lethality is a constant case-fatality ratio.

    With ``graph=None`` the 15-region peninsular Spain graph is used when
    ``n_regions == 15`` and a path graph otherwise.
    """

    n_regions: int = 15
    n_dates: int = 192
    start_date: str = "2021-01-04"
    true_alpha: float = 20.0
    true_beta: float = -0.5
    true_c: float = 50.0
    true_lag: int = 7
    sigma_u: float = 1.0
    sigma_v: float = 0.5
    sigma_eps: float = 1.0
    vmax: float = 85.0
    midpoint_range: tuple = (70.0, 140.0)
    steepness: float = 15.0
    trend_df: int = 6
    trend_amplitude: float = 2.0
    population_range: tuple = (5e5, 8e6)
    lethality: float = 2.0
    seed: int = 0
    graph: AdjacencyGraph | None = None

    def __post_init__(self):
        if self.n_regions < 1 or self.n_dates < 2:
            raise ValueError("n_regions and n_dates must be positive (n_dates >= 2)")
        for name in ("sigma_u", "sigma_v", "sigma_eps", "steepness"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0 < self.vmax <= 100:
            raise ValueError("vmax must be in (0, 100]")
        if self.true_lag < 0 or int(self.true_lag) != self.true_lag:
            raise ValueError("true_lag must be a nonnegative integer")
        if self.graph is not None and self.graph.n_regions != self.n_regions:
            raise ValueError(
                f"graph has {self.graph.n_regions} regions but n_regions={self.n_regions}"
            )

    def resolved_graph(self):
        if self.graph is not None:
            return self.graph
        return spain_graph() if self.n_regions == len(SPAIN_REGIONS) else path_graph(self.n_regions)


@dataclasses.dataclass(frozen=True, eq=False)
class GroundTruth:
    config: SynthConfig
    region_ids: tuple
    u: np.ndarray
    v: np.ndarray
    trend: np.ndarray
    exposure: np.ndarray
    indicator: np.ndarray
    mean: np.ndarray
    crossing_index: np.ndarray

    def to_dict(self):
        cfg = dataclasses.asdict(dataclasses.replace(self.config, graph=None))
        cfg["midpoint_range"] = list(cfg["midpoint_range"])
        cfg["population_range"] = list(cfg["population_range"])
        return {
            "config": cfg,
            "regions": list(self.region_ids),
            "alpha": self.config.true_alpha,
            "beta": self.config.true_beta,
            "c": self.config.true_c,
            "lag": self.config.true_lag,
            "u": self.u.tolist(),
            "v": self.v.tolist(),
            "trend": self.trend.tolist(),
            # first 1-based date index with the indicator on, or null
            "crossing_index": [None if k < 0 else int(k) for k in self.crossing_index],
        }


_TREND_SHAPE = (1.0, -0.6, 0.8, -1.0, 0.5, 0.3)


def _trend(t, df, amplitude):
    if amplitude == 0:
        return np.zeros(len(t))
    basis = make_basis(t, df)
    coefs = np.resize(np.asarray(_TREND_SHAPE), df) * amplitude
    trend = basis.B @ coefs
    return trend - trend.mean()


def _icar_draw(rng, graph, sigma):
    car = car_structure(graph)
    Z = car.constraint_basis()
    if sigma == 0 or Z.shape[1] == 0:
        return np.zeros(graph.n_regions)
    L = np.linalg.cholesky(Z.T @ car.Q @ Z)
    z = np.linalg.solve(L.T, rng.standard_normal(Z.shape[1]))
    return sigma * (Z @ z)


def synthetic_series(config):
    """Simulate raw region series and the generating truth."""
    cfg = config
    graph = cfg.resolved_graph()
    rng = np.random.default_rng(cfg.seed)
    n_r, n_t = cfg.n_regions, cfg.n_dates
    t = np.arange(1, n_t + 1, dtype=float)

    lo, hi = cfg.population_range
    population = np.round(np.exp(rng.uniform(np.log(lo), np.log(hi), n_r)))
    mid = rng.uniform(*cfg.midpoint_range, n_r)
    u = _icar_draw(rng, graph, cfg.sigma_u)
    v = cfg.sigma_v * rng.standard_normal(n_r)
    eps = cfg.sigma_eps * rng.standard_normal((n_r, n_t))

    def exposure(tt):
        if cfg.steepness == 0:
            return np.where(tt[None, :] >= mid[:, None], cfg.vmax, 0.0)
        return cfg.vmax / (1.0 + np.exp(-(tt[None, :] - mid[:, None]) / cfg.steepness))

    V = exposure(t)
    indicator = (exposure(t - cfg.true_lag) > cfg.true_c).astype(float)
    trend = _trend(t, cfg.trend_df, cfg.trend_amplitude)
    mean = cfg.true_alpha + cfg.true_beta * indicator + (u + v)[:, None] + trend[None, :]
    y = mean + eps
    if np.any(y < 0):
        raise ValueError("simulated incidence went negative; raise true_alpha or lower the noise")

    crossing = np.array([np.argmax(row) + 1 if row.any() else -1 for row in indicator > 0])
    start = np.datetime64(cfg.start_date, "D")
    dates = start + np.arange(n_t)
    series = []
    for i, rid in enumerate(graph.region_ids):
        new_cases = y[i] * population[i] / 100000.0
        cum_cases = 0.05 * population[i] + np.cumsum(new_cases)
        series.append(
            RegionSeries(
                region_id=rid,
                population=population[i],
                dates=dates,
                new_cases=new_cases,
                cum_cases=cum_cases,
                cum_deaths=cum_cases * (cfg.lethality / 100.0),
                fully_vaccinated=V[i] * population[i] / 100.0,
            )
        )
    truth = GroundTruth(cfg, graph.region_ids, u, v, trend, V, indicator, mean, crossing)
    return series, truth


def generate_synthetic(config):
    """Simulated :class:`RatePanel` plus :class:`GroundTruth`."""
    series, truth = synthetic_series(config)
    return build_rate_panel(series), truth


def write_series_csv(series, path, schema=None):
    """Write raw series in the layout :func:`segspat.panel.ingest_csv` reads."""
    cols = {**DEFAULT_SCHEMA, **(schema or {})}
    fields = ["region", "date", "population", "new_cases", "cum_cases", "cum_deaths", "fully_vaccinated"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([cols[f] for f in fields])
        for s in series:
            for k, d in enumerate(s.dates):
                w.writerow(
                    [s.region_id, str(d), repr(float(s.population))]
                    + [repr(float(getattr(s, f)[k])) for f in fields[3:]]
                )
