import dataclasses
import json
import math

import numpy as np
import pytest

from segspat.diagnostics import (
    FitReport,
    dic,
    effect_table,
    fit_report,
    skipped_report,
    variance_decomposition,
)
from segspat.graph import AdjacencyGraph, path_graph
from segspat.model import ModelSpec, assemble, log_likelihood
from segspat.panel import RatePanel
from segspat.sampler import PosteriorDraws, SamplerConfig, gibbs_fit
from segspat.scan import ScanGrid
from segspat.synthetic import SynthConfig, generate_synthetic



def _two_obs_model():
    panel = RatePanel(
        regions=("R01",),
        dates=np.datetime64("2021-01-01") + np.arange(3),
        population=np.array([1e6]),
        incidence=np.array([[1.0, 3.0, 4.0]]),
        lethality=np.ones((1, 3)),
        vaccination=np.array([[0.0, 60.0, 70.0]]),
    )
    m = assemble(panel, AdjacencyGraph.from_pairs(["R01"], []), ModelSpec(threshold_c=50, lag=0, spline_df=2, spatial=False))
    keep = slice(0, 2)
    return dataclasses.replace(
        m, y=m.y[keep], X_fixed=m.X_fixed[keep], region_index=m.region_index[keep],
        t_index=m.t_index[keep], indicator_column=m.indicator_column[keep],
    )


def _draws_from(model, fixed_rows, tau_eps):
    fixed_rows = np.asarray(fixed_rows, dtype=float)
    tau_eps = np.asarray(tau_eps, dtype=float)
    dev = np.array([
        -2 * log_likelihood(model, model.pack(f, noise_variance=1 / t)) for f, t in zip(fixed_rows, tau_eps)
    ])
    return PosteriorDraws(
        params={
            "alpha": fixed_rows[None, :, 0],
            "beta": fixed_rows[None, :, 1],
            "spline": fixed_rows[None, :, 2:],
            "tau_eps": tau_eps[None, :],
            "deviance": dev[None, :],
        },
        region_ids=model.regions,
        fixed_names=tuple(model.fixed_names),
    )


def test_identical_draws_give_zero_pd():
    m = _two_obs_model()
    f = [1.5, 0.3, 0.1, -0.2]
    d = _draws_from(m, [f] * 5, [0.8] * 5)
    value, p_d, dbar = dic(d, m)
    point = -2 * log_likelihood(m, m.pack(np.array(f), noise_variance=1 / 0.8))
    assert p_d == pytest.approx(0.0, abs=1e-12)
    assert value == pytest.approx(point, rel=1e-12)


def test_three_draws_hand_computed():
    m = _two_obs_model()
    y = m.y  # (1, 3); indicator (0, 1); spline rows from the basis
    X = m.X_fixed
    draws = np.array([[2.0, 0.0, 0.0, 0.0], [1.0, 2.0, 0.0, 0.0], [1.5, 1.0, 0.0, 0.0]])
    taus = np.array([1.0, 2.0, 0.5])
    devs = []
    for f, t in zip(draws, taus):
        r = y - X @ f
        devs.append(2 * math.log(2 * math.pi) - 2 * math.log(t) + t * float(r @ r))
    dbar = sum(devs) / 3
    fbar = draws.mean(axis=0)
    s2 = 1 / taus.mean()
    r = y - X @ fbar
    d_hat = 2 * math.log(2 * math.pi * s2) + float(r @ r) / s2
    expected = dbar + (dbar - d_hat)
    value, p_d, got_dbar = dic(_draws_from(m, draws, taus), m)
    assert got_dbar == pytest.approx(dbar, rel=1e-12)
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(got_dbar + p_d, abs=1e-9)


def test_negative_pd_warns():
    m = _two_obs_model()
    # one exact, confident draw and one poor, diffuse draw: the plug-in point
    # pairs the averaged (poor) mean with a high precision
    d = _draws_from(m, [[1.0, 2.0, 0, 0], [11.0, 2.0, 0, 0]], [100.0, 0.01])
    with pytest.warns(RuntimeWarning, match="negative"):
        _, p_d, _ = dic(d, m)
    assert p_d < 0


def _uv_draws(u, v):
    u, v = np.asarray(u, float), np.asarray(v, float)
    return PosteriorDraws(
        params={"u": u[None], "v": v[None], "deviance": np.zeros((1, u.shape[0]))},
        region_ids=tuple(f"R{k}" for k in range(u.shape[1])),
        fixed_names=(),
    )


def test_variance_decomposition_degenerate_and_ratio():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((10, 4))
    assert variance_decomposition(_uv_draws(np.zeros((10, 4)), v)) == (0.0, 1.0)
    u1 = np.array([[1.0, -1.0, 1.0, -1.0]] * 3)  # population variance 1
    v99 = u1 * math.sqrt(99)
    s, us = variance_decomposition(_uv_draws(u1, v99))
    assert us == pytest.approx(0.99) and s == pytest.approx(0.01)


def test_variance_decomposition_relabel_invariant():
    rng = np.random.default_rng(1)
    u, v = rng.standard_normal((50, 6)), rng.standard_normal((50, 6))
    perm = rng.permutation(6)
    assert variance_decomposition(_uv_draws(u, v)) == pytest.approx(variance_decomposition(_uv_draws(u[:, perm], v[:, perm])))


def test_variance_ordering_recovered():
    # CAR effect at high precision, large exchangeable effect: unstructured dominates
    base = SynthConfig(n_dates=80, midpoint_range=(25.0, 55.0), steepness=5.0, true_lag=0, trend_df=3,
                       sigma_u=0.05, sigma_v=2.0)
    cfg = SamplerConfig(n_chains=2, n_iterations=1200, n_burnin=400, seed=2)
    for seed in (7, 8, 9):
        panel, truth = generate_synthetic(dataclasses.replace(base, seed=seed))
        m = assemble(panel, truth.config.resolved_graph(), ModelSpec(threshold_c=50, lag=0, spline_df=3))
        structured, unstructured = variance_decomposition(gibbs_fit(m, cfg))
        assert unstructured > 0.8 > structured


def test_fit_report_identity_and_json(small_synth, tmp_path):
    panel, _ = small_synth
    m = assemble(panel, path_graph(5), ModelSpec(threshold_c=40, lag=2, spline_df=3, random_slope=True))
    d = gibbs_fit(m, SamplerConfig(n_chains=2, n_iterations=500, n_burnin=200, seed=0))
    r = fit_report(m, d)
    assert r.dic == r.dbar + r.p_d
    assert r.beta_low < r.beta_mean < r.beta_high
    assert len(r.region_effects) == 5 and "slope_mean" in r.region_effects[0]
    assert r.structured_share + r.unstructured_share == pytest.approx(1.0)
    loaded = json.loads(r.to_json(tmp_path / "r.json"))
    assert loaded["c"] == 40.0 and loaded["status"] == "ok"


def _report(c, lag, lo, hi, outcome="incidence"):
    return FitReport(outcome, c, lag, 16, False, beta_mean=(lo + hi) / 2, beta_low=lo, beta_high=hi)


def test_effect_table_flags():
    t = effect_table([_report(20, 0, -2, -1), _report(10, 0, -1, 1), _report(30, 0, 0.5, 2)])
    assert list(t["c"]) == [10, 20, 30]
    assert list(t["flag"]) == ["", "significant-negative", "significant-positive"]


def test_effect_table_full_grid():
    specs = ScanGrid().specs()
    t = effect_table([_report(s.threshold_c, s.lag, -1, 1) for s in specs])
    assert len(t) == 24
    assert sorted(set(t["c"])) == [10, 20, 30, 40, 50, 60, 70, 80]
    assert sorted(set(t["lag"])) == [0, 7, 14]


def test_effect_table_errors_and_skips():
    with pytest.raises(ValueError):
        effect_table([_report(10, 0, -1, 1), _report(10, 0, -1, 1)])
    with pytest.raises(ValueError):
        effect_table([_report(10, 0, -1, 1), _report(10, 0, -1, 1, outcome="lethality")])
    skipped = skipped_report(ModelSpec(threshold_c=80, lag=14), "indicator constant", "degenerate-design")
    t = effect_table([skipped])
    assert t.loc[0, "status"] == "skipped:degenerate-design" and t.loc[0, "flag"] == ""
    assert skipped.to_dict()["beta_mean"] is None
