"""Adaptive Metropolis-within-Gibbs sampler used as a reference engine.

Sampling uses the centred parameterisation. Study logits
``eta_i = M_i f + (phi_i, psi_i)`` are updated with per-study bivariate
random-walk proposals. The fixed effects ``f`` are drawn exactly from their
Gaussian full conditional. The internal hyperparameters are updated jointly
by a random walk, twice per sweep: once with the logits held fixed and once
with the whitened random effects ``L(theta)^-1 (eta_i - M_i f)`` held fixed.
The second move keeps the chain mixing when the data say little about the
random effects. Proposal scales adapt only during burn-in.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from ..data import Dataset
from ..model import LatentModel, PriorBundle
from .marginals import MarginalSummary, PosteriorSummary, summarize

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20150901


@dataclass(frozen=True)
class MCMCConfig:
    iterations: int = 200_000
    burn_in: int = 20_000
    thin: int = 10
    seed: int = DEFAULT_SEED
    use_likelihood: bool = True
    latent_target: float = 0.44
    hyper_target: float = 0.23

    def __post_init__(self):
        if self.iterations <= self.burn_in:
            raise ValueError("iterations must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")


@dataclass
class MCMCResult:
    samples: np.ndarray  # (n_kept, n_quantities)
    names: list[str]
    summary: PosteriorSummary
    acceptance: dict[str, float]
    ess: dict[str, float]
    warnings: list[str] = field(default_factory=list)

    def column(self, name) -> np.ndarray:
        return self.samples[:, self.names.index(name)]


def effective_sample_size(x) -> float:
    """ESS from the initial positive sequence of autocorrelation pairs."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    s = 0.0
    for t in range(0, n - 1, 2):
        pair = acf[t] + acf[t + 1]
        if pair <= 0:
            break
        s += pair
    tau = max(2.0 * s - 1.0, 1e-12)
    return float(min(n / tau, n * math.log10(n)))


def _empirical_logits(y, n):
    return np.log((y + 0.5) / (n - y + 0.5))


def _binom_ll(y, n, eta):
    return y * eta - n * np.logaddexp(0.0, eta)


class _State:
    __slots__ = ("f", "eta", "theta", "q", "logdet")


def mcmc_oracle(dataset: Dataset, priors: PriorBundle | None = None,
                config: MCMCConfig = MCMCConfig()) -> MCMCResult:
    """Run the reference sampler and summarise the retained draws."""
    t0 = time.perf_counter()
    priors = priors if priors is not None else PriorBundle()
    model = LatentModel(dataset, priors)
    lik = model.likelihood
    rng = np.random.default_rng(config.seed)
    I, k = model.n_studies, model.k
    X1, X2 = model.X1, model.X2
    tau = priors.intercept_prior_variance
    fixed_rho = priors.fixed_rho
    nh = priors.n_hyper
    # beyond |z| = 30 the correlation rounds to +-1 in double precision
    bound = np.array([60.0, 60.0, 30.0])[:nh]
    on = 1.0 if config.use_likelihood else 0.0

    def precision(theta):
        q11, q12, q22, logdet = model._precision(theta)
        return np.array([[q11, q12], [q12, q22]]), logdet

    def resid_quad(eta, f, q):
        r0 = eta[:, 0] - X1 @ f
        r1 = eta[:, 1] - X2 @ f
        return q[0, 0] * r0 * r0 + 2.0 * q[0, 1] * r0 * r1 + q[1, 1] * r1 * r1

    def log_hyper_target(theta, eta, f):
        q, logdet = precision(theta)
        return priors.log_prior_internal(theta) - 0.5 * float(np.sum(resid_quad(eta, f, q))) - 0.5 * I * logdet

    def chol(theta):
        v1, v2, rho, lg = priors.full_internal(theta)
        s1, s2 = math.sqrt(v1), math.sqrt(v2)
        return s1, rho * s2, s2 * math.exp(0.5 * lg)

    def loglik(eta):
        return on * float(np.sum(_binom_ll(lik.y1, lik.n1, eta[:, 0]) + _binom_ll(lik.y2, lik.n2, eta[:, 1])))

    # starting values
    if config.use_likelihood:
        eta = np.column_stack([_empirical_logits(lik.y1, lik.n1), _empirical_logits(lik.y2, lik.n2)])
    else:
        eta = np.zeros((I, 2))
    theta = np.zeros(nh)
    if fixed_rho is None:
        theta[2] = 2.0 * math.atanh(getattr(priors.cor_prior, "rho0", 0.0))
    f = np.zeros(k)

    # proposal shapes: per-study binomial information, then scale adaptation
    if config.use_likelihood:
        p1, p2 = special.expit(eta[:, 0]), special.expit(eta[:, 1])
        info = np.column_stack([lik.n1 * p1 * (1 - p1), lik.n2 * p2 * (1 - p2)])
        lat_sd = 1.0 / np.sqrt(info + 1.0)
    else:
        lat_sd = np.ones((I, 2))
    lat_scale = np.full(I, 2.38 / math.sqrt(2.0))
    hyp_chol = np.eye(nh) * 0.5
    hyp_scale = 2.38 / math.sqrt(nh)
    nc_scale = hyp_scale
    hyp_hist = []

    n_keep = (config.iterations - config.burn_in) // config.thin
    names = ([f"f{j}" for j in range(k)] + ["var_phi", "var_psi"] + (["cor"] if fixed_rho is None else [])
             + ["Se", "Sp"])
    out = np.empty((n_keep, len(names)))
    lat_acc = np.zeros(I)
    hyp_acc = nc_hyp_acc = 0
    row = 0
    q, logdet = precision(theta)

    for it in range(config.iterations):
        burning = it < config.burn_in
        # fixed effects: exact Gaussian full conditional
        A = np.eye(k) / tau
        b = np.zeros(k)
        M = np.stack([X1, X2], axis=1)  # (I, 2, k)
        QM = np.einsum("ab,ibk->iak", q, M)
        A += np.einsum("iak,ial->kl", M, QM)
        b += np.einsum("iak,ia->k", QM, eta)
        L = np.linalg.cholesky(A)
        mean = np.linalg.solve(L.T, np.linalg.solve(L, b))
        f = mean + np.linalg.solve(L.T, rng.standard_normal(k))

        # study logits: vectorised bivariate random walk
        prop = eta + (lat_scale[:, None] * lat_sd) * rng.standard_normal((I, 2))
        cur_ll = on * (_binom_ll(lik.y1, lik.n1, eta[:, 0]) + _binom_ll(lik.y2, lik.n2, eta[:, 1]))
        new_ll = on * (_binom_ll(lik.y1, lik.n1, prop[:, 0]) + _binom_ll(lik.y2, lik.n2, prop[:, 1]))
        log_ratio = new_ll - cur_ll - 0.5 * (_quad_rows(prop, f, q, X1, X2) - _quad_rows(eta, f, q, X1, X2))
        acc = np.log(rng.random(I)) < log_ratio
        eta[acc] = prop[acc]

        # hyperparameters: joint random walk
        cur = log_hyper_target(theta, eta, f)
        prop_t = theta + hyp_scale * (hyp_chol @ rng.standard_normal(nh))
        new = log_hyper_target(prop_t, eta, f) if np.all(np.abs(prop_t) < bound) else -np.inf
        h_acc = math.log(rng.random()) < new - cur
        if h_acc:
            theta = prop_t
            q, logdet = precision(theta)

        # hyperparameters again, moving the logits with them through the whitened effects
        prop_t = theta + nc_scale * (hyp_chol @ rng.standard_normal(nh))
        nc_acc = False
        if np.all(np.abs(prop_t) < bound):
            a11, a21, a22 = chol(theta)
            b11, b21, b22 = chol(prop_t)
            mean = np.column_stack([X1 @ f, X2 @ f])
            e1 = (eta[:, 0] - mean[:, 0]) / a11
            e2 = (eta[:, 1] - mean[:, 1] - a21 * e1) / a22
            prop_eta = mean + np.column_stack([b11 * e1, b21 * e1 + b22 * e2])
            log_ratio = (priors.log_prior_internal(prop_t) - priors.log_prior_internal(theta)
                         + loglik(prop_eta) - loglik(eta))
            if math.log(rng.random()) < log_ratio:
                theta, eta, nc_acc = prop_t, prop_eta, True
                q, logdet = precision(theta)

        if burning:
            gamma = 1.0 / math.sqrt(1.0 + it / 50.0)
            lat_scale *= np.exp(gamma * (acc - config.latent_target))
            hyp_scale *= math.exp(gamma * (h_acc - config.hyper_target))
            nc_scale *= math.exp(gamma * (nc_acc - config.hyper_target))
            hyp_hist.append(theta.copy())
            # learn the hyper proposal shape from the second quarter of burn-in
            if it == config.burn_in // 2 and len(hyp_hist) > 200:
                h = np.array(hyp_hist[len(hyp_hist) // 2:])
                c = np.cov(h.T) + 1e-6 * np.eye(nh)
                try:
                    hyp_chol = np.linalg.cholesky(c)
                    hyp_scale = nc_scale = 2.38 / math.sqrt(nh)
                except np.linalg.LinAlgError:
                    pass
        else:
            lat_acc += acc
            hyp_acc += h_acc
            nc_hyp_acc += nc_acc
            if (it - config.burn_in) % config.thin == 0 and row < n_keep:
                v1, v2 = math.exp(theta[0]), math.exp(theta[1])
                vals = list(f) + [v1, v2]
                if fixed_rho is None:
                    vals.append(math.tanh(theta[2] / 2.0))
                vals += [special.expit(f[0]), special.expit(f[1])]
                out[row] = vals
                row += 1

    out = out[:row]
    n_post = config.iterations - config.burn_in
    acceptance = {"latent_mean": float(np.mean(lat_acc) / n_post), "latent_min": float(np.min(lat_acc) / n_post),
                  "latent_max": float(np.max(lat_acc) / n_post), "hyper": hyp_acc / n_post,
                  "hyper_whitened": nc_hyp_acc / n_post}
    warnings = []
    for key in ("latent_min", "latent_max", "hyper", "hyper_whitened"):
        if not 0.05 <= acceptance[key] <= 0.8:
            warnings.append(f"acceptance rate {key}={acceptance[key]:.3f} outside [0.05, 0.8]")
    fe_names = (["mu", "nu"] + [f"alpha_{c}" for c in dataset.se_covariate_names]
                + [f"beta_{c}" for c in dataset.sp_covariate_names])
    names = fe_names + names[k:]
    ess = {n: effective_sample_size(out[:, j]) for j, n in enumerate(names)}
    for n, e in ess.items():
        if e < 200:
            warnings.append(f"effective sample size for {n} is {e:.0f} (< 200)")
    for w in warnings:
        logger.warning(w)
    marg = {n: summarize_samples(out[:, j], n) for j, n in enumerate(names)}
    c = np.corrcoef(out[:, 0], out[:, 1])[0, 1] if row > 1 else float("nan")
    summary = PosteriorSummary(
        engine="mcmc", marginals=marg, marginal_log_likelihood=None, mu_nu_correlation=float(c),
        priors=priors.describe(), timings={"total": time.perf_counter() - t0}, warnings=warnings,
        diagnostics={"acceptance": acceptance, "ess": ess, "iterations": config.iterations,
                     "burn_in": config.burn_in, "thin": config.thin, "seed": config.seed},
        fixed_rho=fixed_rho, se_covariates=tuple(dataset.se_covariate_names),
        sp_covariates=tuple(dataset.sp_covariate_names))
    return MCMCResult(out, names, summary, acceptance, ess, warnings)


def _quad_rows(eta, f, q, X1, X2):
    r0 = eta[:, 0] - X1 @ f
    r1 = eta[:, 1] - X2 @ f
    return q[0, 0] * r0 * r0 + 2.0 * q[0, 1] * r0 * r1 + q[1, 1] * r1 * r1


def summarize_samples(x, name: str = "", n_eval: int = 512) -> MarginalSummary:
    """Sample moments and quantiles, with a kernel density for plotting."""
    x = np.asarray(x, dtype=float)
    q = tuple(float(v) for v in np.quantile(x, (0.025, 0.5, 0.975)))
    if np.ptp(x) > 0:
        kde = stats.gaussian_kde(x)
        lo, hi = x.min(), x.max()
        pad = 3 * kde.factor * x.std()
        grid = np.linspace(lo - pad, hi + pad, n_eval)
        dens = kde(grid)
    else:
        grid = np.array([x[0]])
        dens = np.array([1.0])
    return MarginalSummary(name, float(x.mean()), float(x.std(ddof=1)) if len(x) > 1 else 0.0, q, grid, dens)
