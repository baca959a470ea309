"""Bivariate random-effects model for 2x2 diagnostic tables.

Study ``i`` contributes ``TP_i ~ Bin(TP_i + FN_i, Se_i)`` and
``TN_i ~ Bin(TN_i + FP_i, Sp_i)`` with

    logit Se_i = mu + U_i alpha + phi_i
    logit Sp_i = nu + V_i beta  + psi_i
    (phi_i, psi_i) ~ N(0, Sigma)

and ``Sigma`` built from two variances and a correlation. The latent vector
is laid out as ``[mu, nu, alpha, beta, phi_1, psi_1, ..., phi_I, psi_I]``;
random effects are interleaved so the prior precision is block diagonal.

Hyperparameters are handled on an unconstrained internal scale
``(log var_phi, log var_psi, z)`` with ``z = logit((rho + 1) / 2)``. When the
correlation prior is :class:`~metadiag.priors.FixedCorrelation` the ``z``
coordinate is dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset
from .priors import FixedCorrelation, VariancePCPrior, preset, rho_to_z, z_to_rho, _log1m_rho2_from_z

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Hyperparameters:
    var_phi: float
    var_psi: float
    rho: float

    def __post_init__(self):
        if not (self.var_phi > 0 and self.var_psi > 0):
            raise ValueError("variances must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")

    def to_internal(self) -> np.ndarray:
        return np.array([math.log(self.var_phi), math.log(self.var_psi), float(rho_to_z(self.rho))])

    @classmethod
    def from_internal(cls, theta, fixed_rho: float | None = None) -> "Hyperparameters":
        theta = np.asarray(theta, dtype=float)
        rho = fixed_rho if fixed_rho is not None else float(z_to_rho(theta[2]))
        return cls(math.exp(theta[0]), math.exp(theta[1]), rho)


def assemble_covariance(hyper: Hyperparameters) -> np.ndarray:
    """Between-study covariance ``V^1/2 R V^1/2``."""
    s1, s2 = math.sqrt(hyper.var_phi), math.sqrt(hyper.var_psi)
    c = hyper.rho * s1 * s2
    return np.array([[hyper.var_phi, c], [c, hyper.var_psi]])


@dataclass
class LatentField:
    mu: float
    nu: float
    phi: np.ndarray
    psi: np.ndarray
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_vector(self) -> np.ndarray:
        re = np.column_stack([self.phi, self.psi]).ravel()
        return np.concatenate([[self.mu, self.nu], self.alpha, self.beta, re])

    @classmethod
    def from_vector(cls, x, p_se: int = 0, p_sp: int = 0) -> "LatentField":
        x = np.asarray(x, dtype=float)
        k = 2 + p_se + p_sp
        re = x[k:].reshape(-1, 2)
        return cls(mu=x[0], nu=x[1], alpha=x[2:2 + p_se].copy(), beta=x[2 + p_se:k].copy(),
                   phi=re[:, 0].copy(), psi=re[:, 1].copy())

    @property
    def dimension(self) -> int:
        return 2 + len(self.alpha) + len(self.beta) + 2 * len(self.phi)


@dataclass(frozen=True)
class PriorBundle:
    var_phi_prior: object = field(default_factory=lambda: preset("pcvar"))
    var_psi_prior: object = field(default_factory=lambda: preset("pcvar"))
    cor_prior: object = field(default_factory=lambda: preset("pc1"))
    intercept_prior_variance: float = 100.0

    def __post_init__(self):
        if not self.intercept_prior_variance > 0:
            raise ValueError("intercept_prior_variance must be positive")

    @property
    def fixed_rho(self) -> float | None:
        return self.cor_prior.rho if isinstance(self.cor_prior, FixedCorrelation) else None

    @property
    def n_hyper(self) -> int:
        return 2 if self.fixed_rho is not None else 3

    def hyper_names(self) -> list[str]:
        return ["var_phi", "var_psi"] + ([] if self.fixed_rho is not None else ["cor"])

    def log_prior_internal(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        lp = self.var_phi_prior.log_density_internal(theta[0]) + self.var_psi_prior.log_density_internal(theta[1])
        if self.fixed_rho is None:
            lp += self.cor_prior.log_density_internal(theta[2])
        return float(lp)

    def full_internal(self, theta) -> tuple[float, float, float, float]:
        """``(var_phi, var_psi, rho, log(1 - rho^2))`` from an internal vector."""
        theta = np.asarray(theta, dtype=float)
        if self.fixed_rho is not None:
            rho = self.fixed_rho
            lg = math.log1p(-rho * rho)
        else:
            rho = float(z_to_rho(theta[2]))
            lg = float(_log1m_rho2_from_z(theta[2]))
        return math.exp(theta[0]), math.exp(theta[1]), rho, lg

    def describe(self) -> dict:
        return {
            "var_phi": self.var_phi_prior.spec_string(),
            "var_psi": self.var_psi_prior.spec_string(),
            "cor": self.cor_prior.spec_string(),
            "intercept_variance": self.intercept_prior_variance,
        }


# ---------------------------------------------------------------------------
# likelihoods on the per-study linear predictors


class BinomialLikelihood:
    """Binomial counts with logit link; normalising constants included."""

    def __init__(self, y1, n1, y2, n2):
        self.y1 = np.asarray(y1, dtype=float)
        self.n1 = np.asarray(n1, dtype=float)
        self.y2 = np.asarray(y2, dtype=float)
        self.n2 = np.asarray(n2, dtype=float)
        self.log_const = float(
            np.sum(special.gammaln(self.n1 + 1) - special.gammaln(self.y1 + 1) - special.gammaln(self.n1 - self.y1 + 1))
            + np.sum(special.gammaln(self.n2 + 1) - special.gammaln(self.y2 + 1) - special.gammaln(self.n2 - self.y2 + 1))
        )

    def value(self, eta1, eta2) -> float:
        return float(self.log_const
                     + np.sum(self.y1 * eta1 - self.n1 * np.logaddexp(0.0, eta1))
                     + np.sum(self.y2 * eta2 - self.n2 * np.logaddexp(0.0, eta2)))

    def derivatives(self, eta1, eta2):
        """Gradient and negative second derivative with respect to each predictor."""
        p1 = special.expit(eta1)
        p2 = special.expit(eta2)
        return (self.y1 - self.n1 * p1, self.y2 - self.n2 * p2,
                self.n1 * p1 * (1.0 - p1), self.n2 * p2 * (1.0 - p2))

    def third_derivatives(self, eta1, eta2):
        p1 = special.expit(eta1)
        p2 = special.expit(eta2)
        return (-self.n1 * p1 * (1.0 - p1) * (1.0 - 2.0 * p1), -self.n2 * p2 * (1.0 - p2) * (1.0 - 2.0 * p2))


class GaussianLikelihood:
    """Gaussian pseudo-observations of each predictor with known variances."""

    def __init__(self, y1, y2, var1, var2):
        self.y1 = np.asarray(y1, dtype=float)
        self.y2 = np.asarray(y2, dtype=float)
        self.var1 = np.broadcast_to(np.asarray(var1, dtype=float), self.y1.shape)
        self.var2 = np.broadcast_to(np.asarray(var2, dtype=float), self.y2.shape)

    def value(self, eta1, eta2) -> float:
        r1 = self.y1 - eta1
        r2 = self.y2 - eta2
        return float(-0.5 * np.sum(r1**2 / self.var1 + np.log(self.var1) + LOG_2PI)
                     - 0.5 * np.sum(r2**2 / self.var2 + np.log(self.var2) + LOG_2PI))

    def derivatives(self, eta1, eta2):
        return ((self.y1 - eta1) / self.var1, (self.y2 - eta2) / self.var2, 1.0 / self.var1, 1.0 / self.var2)

    def third_derivatives(self, eta1, eta2):
        return np.zeros_like(np.asarray(eta1, dtype=float)), np.zeros_like(np.asarray(eta2, dtype=float))


# ---------------------------------------------------------------------------


class LatentModel:
    """Design, likelihood and latent-conditional derivatives for one dataset.

    Parameters
    ----------
    dataset : Dataset
    priors : PriorBundle
    likelihood : optional
        Replaces the binomial likelihood (used for the Gaussian reduction).
    """

    def __init__(self, dataset: Dataset, priors: PriorBundle | None = None, likelihood=None):
        self.dataset = dataset
        self.priors = priors if priors is not None else PriorBundle()
        self.n_studies = len(dataset)
        self.p_se, self.p_sp = dataset.p_se, dataset.p_sp
        self.k = 2 + self.p_se + self.p_sp
        I = self.n_studies
        U, V = dataset.covariate_matrices()
        X1 = np.zeros((I, self.k))
        X2 = np.zeros((I, self.k))
        X1[:, 0] = 1.0
        X2[:, 1] = 1.0
        X1[:, 2:2 + self.p_se] = U
        X2[:, 2 + self.p_se:self.k] = V
        self.X1, self.X2 = X1, X2
        if likelihood is None:
            a = dataset.arrays()
            likelihood = BinomialLikelihood(a["tp"], a["tp"] + a["fn"], a["tn"], a["tn"] + a["fp"])
        self.likelihood = likelihood

    @property
    def dimension(self) -> int:
        return self.k + 2 * self.n_studies

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[:self.k], x[self.k:].reshape(self.n_studies, 2)

    def predictors(self, f, r):
        return self.X1 @ f + r[:, 0], self.X2 @ f + r[:, 1]

    def log_likelihood(self, x) -> float:
        f, r = self.split(x)
        return self.likelihood.value(*self.predictors(f, r))

    def _precision(self, theta):
        v1, v2, rho, lg = self.priors.full_internal(theta)
        s = math.sqrt(v1 * v2)
        det = v1 * v2 * math.exp(lg)
        # inverse of [[v1, rho s], [rho s, v2]]
        q11, q22, q12 = v2 / det, v1 / det, -rho * s / det
        logdet_sigma = math.log(v1) + math.log(v2) + lg
        return q11, q12, q22, logdet_sigma

    def log_latent_prior(self, x, theta) -> float:
        f, r = self.split(x)
        q11, q12, q22, logdet = self._precision(theta)
        quad = np.sum(q11 * r[:, 0] ** 2 + 2 * q12 * r[:, 0] * r[:, 1] + q22 * r[:, 1] ** 2)
        tau = self.priors.intercept_prior_variance
        return float(-0.5 * quad - self.n_studies * (LOG_2PI + 0.5 * logdet)
                     - 0.5 * np.dot(f, f) / tau - 0.5 * self.k * (LOG_2PI + math.log(tau)))

    def log_joint(self, x, theta) -> float:
        """Likelihood + latent Gaussian prior + hyperprior (internal scale)."""
        return self.log_likelihood(x) + self.log_latent_prior(x, theta) + self.priors.log_prior_internal(theta)

    def conditional_terms(self, x, theta):
        """Value, gradient and block negative Hessian of the latent-conditional log joint.

        Returns ``(value, grad_f, grad_r, A, U, V, D)`` where the negative
        Hessian is ``[[A, B], [B^T, blockdiag(D)]]`` and the 2-column block of
        ``B`` for study ``i`` is ``[U[i], V[i]]``. ``D`` holds ``(d11, d12, d22)``.
        The hyperprior is omitted (constant in ``x``).
        """
        f, r = self.split(x)
        eta1, eta2 = self.predictors(f, r)
        g1, g2, w1, w2 = self.likelihood.derivatives(eta1, eta2)
        q11, q12, q22, logdet = self._precision(theta)
        tau = self.priors.intercept_prior_variance
        rq0 = q11 * r[:, 0] + q12 * r[:, 1]
        rq1 = q12 * r[:, 0] + q22 * r[:, 1]
        value = (self.likelihood.value(eta1, eta2)
                 - 0.5 * float(np.sum(r[:, 0] * rq0 + r[:, 1] * rq1))
                 - self.n_studies * (LOG_2PI + 0.5 * logdet)
                 - 0.5 * float(np.dot(f, f)) / tau - 0.5 * self.k * (LOG_2PI + math.log(tau)))
        grad_r = np.column_stack([g1 - rq0, g2 - rq1])
        grad_f = self.X1.T @ g1 + self.X2.T @ g2 - f / tau
        U = self.X1 * w1[:, None]
        V = self.X2 * w2[:, None]
        A = self.X1.T @ U + self.X2.T @ V + np.eye(self.k) / tau
        D = (q11 + w1, np.full_like(w1, q12), q22 + w2)
        return value, grad_f, grad_r, A, U, V, D

    def gradient(self, x, theta) -> np.ndarray:
        _, gf, gr, *_ = self.conditional_terms(x, theta)
        return np.concatenate([gf, gr.ravel()])

    def hessian(self, x, theta) -> np.ndarray:
        """Dense Hessian of the log joint in ``x`` (negative definite)."""
        _, _, _, A, U, V, (d11, d12, d22) = self.conditional_terms(x, theta)
        n = self.dimension
        H = np.zeros((n, n))
        H[:self.k, :self.k] = A
        for i in range(self.n_studies):
            j = self.k + 2 * i
            H[:self.k, j] = U[i]
            H[:self.k, j + 1] = V[i]
            H[j:j + 2, j:j + 2] = [[d11[i], d12[i]], [d12[i], d22[i]]]
        H[self.k:, :self.k] = H[:self.k, self.k:].T
        return -H


def log_likelihood(dataset: Dataset, latent: LatentField) -> float:
    """Binomial log likelihood of the study counts, including binomial coefficients."""
    return LatentModel(dataset).log_likelihood(latent.to_vector())


def log_joint(dataset: Dataset, latent: LatentField, hyper: Hyperparameters, priors: PriorBundle) -> float:
    model = LatentModel(dataset, priors)
    theta = hyper.to_internal()[:priors.n_hyper]
    return model.log_joint(latent.to_vector(), theta)
