"""DIC, spatial variance shares and threshold-effect tables."""

from __future__ import annotations

import dataclasses
import json
import math
import warnings

import numpy as np
import pandas as pd

from .errors import NumericalError
from .model import log_likelihood
from .sampler import rhat, summarize

__all__ = [
    "FitReport",
    "dic",
    "posterior_mean_params",
    "variance_decomposition",
    "fit_report",
    "skipped_report",
    "effect_table",
    "SCAN_COLUMNS",
]

SCAN_COLUMNS = [
    "outcome", "c", "lag", "beta_mean", "beta_low", "beta_high",
    "dic", "p_d", "structured_share", "unstructured_share", "status",
]


def posterior_mean_params(draws, model):
    """Flat parameter vector at the posterior mean.

    The noise variance plugged in is the reciprocal of the posterior mean
    noise precision.
    """
    fixed = np.concatenate(
        [[draws.pooled("alpha").mean(), draws.pooled("beta").mean()], draws.pooled("spline").mean(axis=0)]
    )
    extra = {k: draws.pooled(k).mean(axis=0) for k in ("u", "v", "gamma", "delta") if k in draws}
    return model.pack(fixed, noise_variance=1.0 / draws.pooled("tau_eps").mean(), **extra)


def dic(draws, model):
    """Deviance information criterion.

    Returns ``(dic, p_d, dbar)`` with ``dbar`` the mean sampled deviance,
    ``p_d = dbar - D(posterior mean)`` and ``dic = dbar + p_d``. Deviance is
    ``-2 log L`` including the Gaussian normalising constant.
    """
    dev = draws["deviance"]
    bad = np.argwhere(~np.isfinite(dev))
    if bad.size:
        c, k = bad[0]
        raise NumericalError(f"non-finite deviance in chain {c} at retained draw {k}", block="deviance", iteration=int(k))
    dbar = float(dev.mean())
    d_hat = -2.0 * log_likelihood(model, posterior_mean_params(draws, model))
    p_d = dbar - d_hat
    if p_d < 0:
        warnings.warn(f"negative effective number of parameters (p_d={p_d:.3g})", RuntimeWarning, stacklevel=2)
    return dbar + p_d, p_d, dbar


def variance_decomposition(draws, structured="u", unstructured="v"):
    """Posterior mean share of between-region variance of each spatial effect.

    For every draw the empirical variances of the structured and the
    unstructured effect across regions are formed; the structured share is
    the posterior mean of ``var(u) / (var(u) + var(v))``. Draws where both
    variances vanish carry no information and are dropped.
    """
    if structured not in draws or unstructured not in draws:
        raise ValueError(f"draws lack {structured!r}/{unstructured!r} effects")
    u = draws.pooled(structured)
    v = draws.pooled(unstructured)
    if u.shape[1] < 2:
        raise ValueError("variance decomposition needs at least two regions")
    vu = u.var(axis=1)
    vv = v.var(axis=1)
    total = vu + vv
    keep = total > 0
    if not keep.any():
        raise ValueError("both spatial effects are identically zero in every draw")
    share = float(np.mean(vu[keep] / total[keep]))
    return share, 1.0 - share


@dataclasses.dataclass
class FitReport:
    """Summary of one fitted (outcome, threshold, lag) cell."""

    outcome: str
    c: float
    lag: int
    spline_df: int
    random_slope: bool
    status: str = "ok"
    reason: str = ""
    reason_code: str = ""
    beta_mean: float = math.nan
    beta_sd: float = math.nan
    beta_low: float = math.nan
    beta_high: float = math.nan
    dic: float = math.nan
    p_d: float = math.nan
    dbar: float = math.nan
    structured_share: float = math.nan
    unstructured_share: float = math.nan
    max_rhat: float = math.nan
    n_draws: int = 0
    region_effects: list = dataclasses.field(default_factory=list)

    @property
    def key(self):
        return (self.outcome, self.c, self.lag)

    @property
    def significant(self):
        """'negative' / 'positive' when the 95% interval excludes zero, else ''."""
        if self.status != "ok":
            return ""
        if self.beta_high < 0:
            return "negative"
        if self.beta_low > 0:
            return "positive"
        return ""

    def to_dict(self):
        d = dataclasses.asdict(self)
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=False)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def scan_row(self):
        status = self.status if self.status == "ok" else f"skipped:{self.reason_code}"
        return {k: (status if k == "status" else getattr(self, k)) for k in SCAN_COLUMNS}


def _interval(draws, name, probs):
    x = draws.pooled(name)
    return x.mean(axis=0), np.quantile(x, probs[0], axis=0), np.quantile(x, probs[1], axis=0)


def fit_report(model, draws, probs=(0.025, 0.975)):
    spec = model.spec
    beta = summarize(draws, probs=probs, names=["beta"]).loc["beta"]
    d, p_d, dbar = dic(draws, model)
    report = FitReport(
        outcome=spec.outcome,
        c=float(spec.threshold_c),
        lag=int(spec.lag),
        spline_df=int(spec.spline_df),
        random_slope=bool(spec.random_slope),
        beta_mean=float(beta["mean"]),
        beta_sd=float(beta["sd"]),
        beta_low=float(beta.iloc[2]),
        beta_high=float(beta.iloc[3]),
        dic=d,
        p_d=p_d,
        dbar=dbar,
        n_draws=draws.n_chains * draws.n_draws,
    )
    if draws.n_chains >= 2 and draws.n_draws >= 10:
        r = rhat(draws).drop(labels=["deviance"])
        report.max_rhat = float(np.nanmax(r.to_numpy()))
    if "u" in draws:
        report.structured_share, report.unstructured_share = variance_decomposition(draws)
        effects = {"spatial": draws.pooled("u") + draws.pooled("v")}
        if "gamma" in draws:
            effects["slope"] = draws.pooled("gamma") + draws.pooled("delta")
        rows = []
        for k, rid in enumerate(model.regions):
            row = {"region": rid}
            for name, x in effects.items():
                col = x[:, k]
                row[f"{name}_mean"] = float(col.mean())
                row[f"{name}_low"] = float(np.quantile(col, probs[0]))
                row[f"{name}_high"] = float(np.quantile(col, probs[1]))
            rows.append(row)
        report.region_effects = rows
    return report


def skipped_report(spec, reason, code="unfittable"):
    """Report for a cell that was not fitted; ``code`` is a short machine-readable tag."""
    return FitReport(
        outcome=spec.outcome,
        c=float(spec.threshold_c),
        lag=int(spec.lag),
        spline_df=int(spec.spline_df),
        random_slope=bool(spec.random_slope),
        status="skipped",
        reason=reason,
        reason_code=code,
    )


def effect_table(reports):
    """Threshold-effect table for one outcome, sorted by ``c`` then ``lag``.

    ``flag`` is ``significant-negative`` or ``significant-positive`` when
    the equal-tailed 95% interval excludes zero.
    """
    if not reports:
        return pd.DataFrame(columns=SCAN_COLUMNS + ["flag"])
    outcomes = {r.outcome for r in reports}
    if len(outcomes) != 1:
        raise ValueError(f"reports mix outcomes {sorted(outcomes)}")
    keys = [r.key for r in reports]
    dup = {k for k in keys if keys.count(k) > 1}
    if dup:
        raise ValueError(f"duplicate (outcome, c, lag) cells: {sorted(dup)}")
    rows = []
    for r in sorted(reports, key=lambda r: (r.c, r.lag)):
        row = r.scan_row()
        row["flag"] = f"significant-{r.significant}" if r.significant else ""
        rows.append(row)
    return pd.DataFrame(rows, columns=SCAN_COLUMNS + ["flag"])
