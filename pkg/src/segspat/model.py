"""Segmented spatio-temporal regression design.

For region ``i`` and date index ``t`` the mean outcome is::

    eta[i, t] = alpha + beta * I(V[i, t - lag] > c) + u[i] + v[i] + ns(t, df)

with ``u`` an intrinsic CAR effect, ``v`` an exchangeable normal effect and
``ns`` a natural cubic spline trend. The random-slope variant adds
``(gamma[i] + delta[i]) * I(...)`` where ``gamma`` and ``delta`` copy the
structure of ``u`` and ``v``. Observations carry Gaussian noise with
precision ``tau_eps``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import DegenerateDesignError
from .graph import car_structure
from .panel import OUTCOMES, lag_exposure
from .splines import make_basis

__all__ = ["PriorConfig", "ModelSpec", "AssembledModel", "assemble", "log_likelihood", "usable_dates"]


@dataclasses.dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters.

    Fixed effects (intercept, threshold effect, spline coefficients) get
    independent ``Normal(0, fixed_effect_variance)`` priors. Every precision
    (noise and each random effect) gets ``Gamma(precision_shape,
    precision_rate)`` in the shape/rate parameterisation.
    """

    fixed_effect_variance: float = 1e6
    precision_shape: float = 1.0
    precision_rate: float = 5e-5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            x = getattr(self, f.name)
            if not (isinstance(x, (int, float)) and math.isfinite(x) and x > 0):
                raise ValueError(f"prior {f.name} must be positive and finite, got {x!r}")


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    outcome: str = "incidence"
    threshold_c: float = 50.0
    lag: int = 0
    spline_df: int = 10
    random_slope: bool = False
    spatial: bool = True
    priors: PriorConfig = dataclasses.field(default_factory=PriorConfig)

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}, got {self.outcome!r}")
        if not 0 <= float(self.threshold_c) <= 100:
            raise ValueError(f"threshold_c must be a percentage in [0, 100], got {self.threshold_c}")
        if int(self.lag) != self.lag or self.lag < 0:
            raise ValueError(f"lag must be a nonnegative integer, got {self.lag}")
        if int(self.spline_df) != self.spline_df or self.spline_df < 2:
            raise ValueError(f"spline_df must be an integer >= 2, got {self.spline_df}")
        if isinstance(self.priors, dict):
            object.__setattr__(self, "priors", PriorConfig(**self.priors))


@dataclasses.dataclass(frozen=True, eq=False)
class AssembledModel:
    """Likelihood-ready design; one row per usable (region, date) cell.

    ``X_fixed`` has columns ``[1, indicator, spline_1 .. spline_df]``.
    ``missing_mask`` is ``(n_regions, n_dates)`` and True on excluded cells.
    """

    spec: ModelSpec
    graph: object
    car: object
    regions: tuple
    dates: np.ndarray
    y: np.ndarray
    region_index: np.ndarray
    t_index: np.ndarray
    indicator_column: np.ndarray
    X_fixed: np.ndarray
    basis: object
    missing_mask: np.ndarray

    @property
    def n_obs(self):
        return len(self.y)

    @property
    def n_regions(self):
        return len(self.regions)

    @property
    def p_fixed(self):
        return self.X_fixed.shape[1]

    @property
    def fixed_names(self):
        return ["alpha", "beta"] + [f"spline[{k + 1}]" for k in range(self.basis.df)]

    @property
    def has_spatial(self):
        return self.spec.spatial

    @property
    def random_slope(self):
        return self.spec.random_slope

    # flat parameter vector: fixed, u, v, [gamma, delta], noise variance
    def layout(self):
        sizes = [("fixed", self.p_fixed)]
        if self.has_spatial:
            sizes += [("u", self.n_regions), ("v", self.n_regions)]
        if self.random_slope:
            sizes += [("gamma", self.n_regions), ("delta", self.n_regions)]
        sizes.append(("noise_variance", 1))
        out, start = {}, 0
        for name, k in sizes:
            out[name] = slice(start, start + k)
            start += k
        return out

    @property
    def n_params(self):
        return list(self.layout().values())[-1].stop

    def pack(self, fixed, u=None, v=None, gamma=None, delta=None, noise_variance=1.0):
        lay = self.layout()
        vec = np.zeros(self.n_params)
        vec[lay["fixed"]] = fixed
        for name, val in (("u", u), ("v", v), ("gamma", gamma), ("delta", delta)):
            if name in lay and val is not None:
                vec[lay[name]] = val
        vec[lay["noise_variance"]] = noise_variance
        return vec

    def unpack(self, params):
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"parameter vector has shape {params.shape}, expected ({self.n_params},)")
        lay = self.layout()
        out = {name: params[s] for name, s in lay.items()}
        out["noise_variance"] = float(params[lay["noise_variance"]][0])
        return out

    def linear_predictor(self, params):
        p = self.unpack(params)
        eta = self.X_fixed @ p["fixed"]
        r = self.region_index
        if "u" in p:
            eta = eta + p["u"][r] + p["v"][r]
        if "gamma" in p:
            eta = eta + (p["gamma"][r] + p["delta"][r]) * self.indicator_column
        return eta

    def design_csv(self, path):
        names = ["region", "date", "y"] + self.fixed_names
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(names) + "\n")
            for k in range(self.n_obs):
                head = [self.regions[self.region_index[k]], str(self.dates[self.t_index[k] - 1]), repr(float(self.y[k]))]
                fh.write(",".join(head + [repr(float(x)) for x in self.X_fixed[k]]) + "\n")


def usable_dates(panel, outcome, lag):
    """1-based date indices with at least one usable cell after lagging."""
    lagged = lag_exposure(panel, lag)
    ok = np.isfinite(panel.outcome(outcome)) & np.isfinite(lagged.vaccination)
    return np.flatnonzero(ok.any(axis=0)) + 1


def assemble(panel, graph, spec, basis=None):
    """Build the design for ``spec`` on ``panel`` over ``graph``.

    The panel is reordered to the graph's region order. A precomputed
    spline ``basis`` may be supplied when fitting many thresholds at the
    same (outcome, lag); its t values must match the usable dates.
    """
    panel = panel.reorder(graph.region_ids)
    lagged = lag_exposure(panel, spec.lag)
    y_full = panel.outcome(spec.outcome)
    v_lag = lagged.vaccination
    ok = np.isfinite(y_full) & np.isfinite(v_lag)
    if not ok.any():
        raise DegenerateDesignError(
            f"no usable cells for outcome={spec.outcome}, lag={spec.lag}", spec.threshold_c, spec.lag
        )
    region_index, t0 = np.nonzero(ok)
    t_index = t0 + 1
    indicator = (v_lag[ok] > spec.threshold_c).astype(float)
    if indicator.min() == indicator.max():
        state = "all 1" if indicator[0] else "all 0"
        raise DegenerateDesignError(
            f"indicator I(V > c) is constant ({state}) at c={spec.threshold_c}, lag={spec.lag}",
            spec.threshold_c,
            spec.lag,
        )

    t_unique = np.unique(t_index)
    if basis is None:
        basis = make_basis(t_unique, spec.spline_df)
    elif basis.df != spec.spline_df or not np.array_equal(basis.t_values, t_unique):
        raise ValueError("supplied spline basis does not match the usable dates of this design")
    pos = np.searchsorted(t_unique, t_index)
    X = np.column_stack([np.ones(len(t_index)), indicator, basis.B[pos]])

    return AssembledModel(
        spec=spec,
        graph=graph,
        car=car_structure(graph),
        regions=panel.regions,
        dates=panel.dates,
        y=y_full[ok].astype(float),
        region_index=region_index,
        t_index=t_index,
        indicator_column=indicator,
        X_fixed=X,
        basis=basis,
        missing_mask=~ok,
    )


def log_likelihood(model, params):
    """Gaussian log density of ``y`` given a flat parameter vector."""
    sigma2 = model.unpack(params)["noise_variance"]
    if not sigma2 > 0:
        raise ValueError(f"noise variance must be positive, got {sigma2}")
    resid = model.y - model.linear_predictor(params)
    n = model.n_obs
    return -0.5 * n * math.log(2 * math.pi * sigma2) - 0.5 * float(resid @ resid) / sigma2
