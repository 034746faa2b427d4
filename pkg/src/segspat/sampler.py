"""Gibbs sampler for the segmented spatio-temporal model.

With a Gaussian response every full conditional is available in closed
form. Each sweep draws

1. the random-effect precisions by Metropolis moves on their logarithms,
   with the mean parameters integrated out analytically,
2. all mean parameters (intercept, threshold effect, spline coefficients,
   structured and unstructured region effects, and the random-slope
   effects when present) jointly from their multivariate normal
   conditional, then
3. every precision from its Gamma conditional.

Structured (CAR) effects are sampled in the coordinates of an orthonormal
basis of the sum-to-zero subspace, so each draw satisfies the per-component
constraint exactly and the improper prior becomes proper on that subspace.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
import scipy.linalg as sla

from .errors import NumericalError

__all__ = ["SamplerConfig", "PosteriorDraws", "gibbs_fit", "summarize", "rhat", "sample_precision"]

_LOG_2PI = math.log(2 * math.pi)


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    """Chain settings.

    ``noise_precision`` fixes the observation precision instead of sampling
    it. ``workers`` bounds the number of processes used to run chains; it
    never changes the draws.
    """

    n_chains: int = 4
    n_iterations: int = 5000
    n_burnin: int = 2500
    thin: int = 1
    seed: int = 0
    noise_precision: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.n_chains < 1 or self.n_iterations < 1 or self.thin < 1 or self.workers < 1:
            raise ValueError("n_chains, n_iterations, thin and workers must be positive")
        if not 0 <= self.n_burnin < self.n_iterations:
            raise ValueError(f"need 0 <= n_burnin < n_iterations, got {self.n_burnin}, {self.n_iterations}")
        if self.noise_precision is not None and not self.noise_precision > 0:
            raise ValueError("noise_precision must be positive")

    @property
    def n_kept(self):
        return len(range(self.n_burnin, self.n_iterations, self.thin))


@dataclasses.dataclass(frozen=True, eq=False)
class PosteriorDraws:
    """Retained draws, ``params[name]`` shaped ``(n_chains, n_draws, ...)``."""

    params: dict
    region_ids: tuple
    fixed_names: tuple

    @property
    def n_chains(self):
        return self.params["deviance"].shape[0]

    @property
    def n_draws(self):
        return self.params["deviance"].shape[1]

    def __contains__(self, name):
        return name in self.params

    def __getitem__(self, name):
        return self.params[name]

    def pooled(self, name):
        a = self.params[name]
        return a.reshape((-1,) + a.shape[2:])

    def columns(self):
        """Flat scalar columns in a stable order, each ``(n_chains, n_draws)``."""
        cols = {}
        for name, a in self.params.items():
            if a.ndim == 2:
                cols[name] = a
            elif name == "spline":
                for k in range(a.shape[2]):
                    cols[f"spline[{k + 1}]"] = a[:, :, k]
            else:
                for k, r in enumerate(self.region_ids):
                    cols[f"{name}[{r}]"] = a[:, :, k]
        return cols

    def to_csv(self, path):
        cols = self.columns()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("chain,draw," + ",".join(cols) + "\n")
            for c in range(self.n_chains):
                for d in range(self.n_draws):
                    fh.write(f"{c},{d}," + ",".join(repr(float(a[c, d])) for a in cols.values()) + "\n")


class _Design:
    """Column blocks of the joint Gaussian update and their prior structure."""

    def __init__(self, model):
        self.y = model.y
        self.n = model.n_obs
        priors = model.spec.priors
        self.shape, self.rate = priors.precision_shape, priors.precision_rate
        n_r = model.n_regions
        R = np.zeros((self.n, n_r))
        R[np.arange(self.n), model.region_index] = 1.0
        Z = model.car.constraint_basis()
        K = Z.T @ model.car.Q @ Z
        slope = R * model.indicator_column[:, None]

        blocks = [("fixed", model.X_fixed, None)]
        if model.has_spatial:
            blocks += [("u", R @ Z, K), ("v", R, None)]
        if model.random_slope:
            blocks += [("gamma", slope @ Z, K), ("delta", slope, None)]
        self.Z = Z
        self.slices = {}
        start = 0
        for name, cols, _ in blocks:
            self.slices[name] = slice(start, start + cols.shape[1])
            start += cols.shape[1]
        self.q = start
        self.M = np.hstack([cols for _, cols, _ in blocks])
        self.G = self.M.T @ self.M
        self.h = self.M.T @ self.y
        self.structure = {
            name: (K if K is not None else np.eye(cols.shape[1])) for name, cols, K in blocks if name != "fixed"
        }
        self.dims = {name: K.shape[0] for name, K in self.structure.items()}
        self.fixed_prec = 1.0 / priors.fixed_effect_variance
        # structured/unstructured pairs share one swap move; the offset maps a
        # structured precision to the exchangeable precision giving the same
        # average marginal variance
        mean_var = float(np.mean(np.diag(Z @ np.linalg.pinv(K) @ Z.T))) if K.size else 1.0
        self.swap_offset = math.log(mean_var) if mean_var > 0 else 0.0
        self.pairs = [p for p in (("u", "v"), ("gamma", "delta")) if p[0] in self.structure and self.dims[p[0]] > 0]

    def precision(self, tau):
        P = tau["eps"] * self.G
        s = self.slices["fixed"]
        P[s, s] += self.fixed_prec * np.eye(s.stop - s.start)
        for name, K in self.structure.items():
            s = self.slices[name]
            P[s, s] += tau[name] * K
        return P

    def collapsed(self, tau):
        """Cholesky factor of the mean-parameter precision and the log
        posterior of the random-effect log-precisions with the mean
        parameters integrated out (up to a constant)."""
        L = sla.cholesky(self.precision(tau), lower=True, check_finite=False)
        x = sla.solve_triangular(L, tau["eps"] * self.h, lower=True, check_finite=False)
        lp = 0.5 * float(x @ x) - float(np.sum(np.log(np.diag(L))))
        for name, dim in self.dims.items():
            lp += (0.5 * dim + self.shape) * math.log(tau[name]) - self.rate * tau[name]
        return L, lp


def sample_precision(rng, shape, rate, dim, quad):
    """Draw from the Gamma full conditional of a precision.

    Prior ``Gamma(shape, rate)``; a Gaussian block of (proper) dimension
    ``dim`` with quadratic form ``quad`` contributes ``dim/2`` to the shape
    and ``quad/2`` to the rate.
    """
    return rng.gamma(shape + 0.5 * dim, 1.0 / (rate + 0.5 * quad))


_RW_STEP = 1.0


def _collapsed_moves(d, rng, tau, L, lp):
    """Metropolis moves on random-effect log-precisions, mean parameters
    integrated out: a random walk on each, then a structured/unstructured
    swap per pair. Under vague precision priors plain Gibbs gets stuck with
    one of the two spatial effects switched off; these moves let the chain
    cross between those modes."""

    def try_move(proposal, L, lp):
        if not all(math.isfinite(t) and 0 < t < 1e300 for t in proposal.values()):
            return tau, L, lp
        try:
            L2, lp2 = d.collapsed(proposal)
        except (sla.LinAlgError, ValueError):
            return tau, L, lp
        if math.log(rng.uniform()) < lp2 - lp:
            return proposal, L2, lp2
        return tau, L, lp

    for name in d.structure:
        prop = dict(tau)
        prop[name] = tau[name] * math.exp(_RW_STEP * rng.standard_normal())
        tau, L, lp = try_move(prop, L, lp)
    for s, e in d.pairs:
        prop = dict(tau)
        prop[s] = tau[e] * math.exp(d.swap_offset)
        prop[e] = tau[s] * math.exp(-d.swap_offset)
        tau, L, lp = try_move(prop, L, lp)
    return tau, L


def _run_chain(design, config, chain):
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(chain,)))
    d = design
    scale = 1.0 / max(float(np.var(d.y)), 1e-12)
    tau = {"eps": config.noise_precision or scale * math.exp(rng.normal(0.0, 0.5))}
    for name in d.structure:
        tau[name] = scale * math.exp(rng.normal(0.0, 0.5))

    n_keep = config.n_kept
    W = np.empty((n_keep, d.q))
    T = {name: np.empty(n_keep) for name in tau}
    dev = np.empty(n_keep)
    k = 0
    for it in range(config.n_iterations):
        try:
            L, lp = d.collapsed(tau)
        except (sla.LinAlgError, ValueError) as exc:
            raise NumericalError(
                f"Cholesky of the mean-parameter conditional precision failed at iteration {it}: {exc}",
                block="mean",
                iteration=it,
            ) from None
        if d.structure:
            tau, L = _collapsed_moves(d, rng, tau, L, lp)
        mean = sla.cho_solve((L, True), tau["eps"] * d.h, check_finite=False)
        w = mean + sla.solve_triangular(L, rng.standard_normal(d.q), lower=True, trans="T", check_finite=False)

        resid = d.y - d.M @ w
        sse = float(resid @ resid)
        if config.noise_precision is None:
            tau["eps"] = sample_precision(rng, d.shape, d.rate, d.n, sse)
        for name, K in d.structure.items():
            x = w[d.slices[name]]
            tau[name] = sample_precision(rng, d.shape, d.rate, x.size, float(x @ K @ x))
        deviance = d.n * (_LOG_2PI - math.log(tau["eps"])) + tau["eps"] * sse
        if not math.isfinite(deviance):
            raise NumericalError(f"non-finite deviance at iteration {it}", block="deviance", iteration=it)

        if it >= config.n_burnin and (it - config.n_burnin) % config.thin == 0:
            W[k] = w
            for name in tau:
                T[name][k] = tau[name]
            dev[k] = deviance
            k += 1
    return W, T, dev


def gibbs_fit(model, config=SamplerConfig()):
    """Run ``config.n_chains`` seeded chains on an assembled model.

    Chain ``c`` uses the generator seeded by ``SeedSequence(seed,
    spawn_key=(c,))``, so draws are identical whatever ``workers`` is.
    """
    design = _Design(model)
    chains = range(config.n_chains)
    if config.workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, config.n_chains)) as pool:
            results = list(pool.map(_run_chain, [design] * config.n_chains, [config] * config.n_chains, chains))
    else:
        results = [_run_chain(design, config, c) for c in chains]

    W = np.stack([r[0] for r in results])
    s = design.slices
    fx = W[:, :, s["fixed"]]
    params = {"alpha": fx[:, :, 0], "beta": fx[:, :, 1], "spline": fx[:, :, 2:]}
    if "u" in s:
        params["u"] = W[:, :, s["u"]] @ design.Z.T
        params["v"] = W[:, :, s["v"]]
    if "gamma" in s:
        params["gamma"] = W[:, :, s["gamma"]] @ design.Z.T
        params["delta"] = W[:, :, s["delta"]]
    for name in results[0][1]:
        params[f"tau_{name}"] = np.stack([r[1][name] for r in results])
    params["deviance"] = np.stack([r[2] for r in results])
    return PosteriorDraws(params=params, region_ids=model.regions, fixed_names=tuple(model.fixed_names))


def summarize(draws, probs=(0.025, 0.5, 0.975), names=None):
    """Posterior mean, sd and quantiles per scalar parameter, pooled over chains."""
    cols = draws.columns()
    if names is not None:
        cols = {k: cols[k] for k in names}
    if draws.n_draws == 0 or draws.n_chains == 0:
        raise ValueError("no retained draws to summarise")
    rows = {}
    for name, a in cols.items():
        x = a.ravel()
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        rows[name] = [float(np.mean(x)), sd] + [float(q) for q in np.quantile(x, probs)]
    return pd.DataFrame.from_dict(rows, orient="index", columns=["mean", "sd"] + [f"{100 * p:g}%" for p in probs])


def _split_rhat(chains):
    m, n = chains.shape
    half = n // 2
    split = np.concatenate([chains[:, :half], chains[:, n - half :]])
    w = split.var(axis=1, ddof=1).mean()
    b_over_n = split.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b_over_n == 0 else math.inf
    var_plus = (half - 1) / half * w + b_over_n
    return math.sqrt(var_plus / w)


def rhat(draws):
    """Split-chain potential scale reduction factor per scalar parameter.

    Accepts :class:`PosteriorDraws` or a ``(n_chains, n_draws)`` array.
    Zero-variance parameters whose chains agree are reported as 1.
    """
    if isinstance(draws, PosteriorDraws):
        cols = draws.columns()
    else:
        cols = {"x": np.asarray(draws, dtype=float)}
    first = next(iter(cols.values()))
    if first.shape[0] < 2:
        raise ValueError("rhat needs at least two chains")
    if first.shape[1] < 10:
        raise ValueError("rhat needs at least 10 retained draws per chain")
    out = pd.Series({name: _split_rhat(a) for name, a in cols.items()}, dtype=float)
    return out if isinstance(draws, PosteriorDraws) else float(out["x"])
