"""Gaussian (Laplace) approximation of the latent field given hyperparameters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..model import LOG_2PI, BinomialLikelihood, LatentField, LatentModel
from . import _kernels

_EPS = np.finfo(float).eps


class LaplaceError(RuntimeError):
    pass


@dataclass
class GaussianApprox:
    theta: np.ndarray
    mode: np.ndarray
    log_det_precision: float
    log_unnormalized_evidence: float
    fixed_cov: np.ndarray  # posterior covariance of [mu, nu, alpha, beta]
    n_iter: int
    grad_norm: float
    _model: LatentModel | None = None
    _block_cache: tuple | None = None

    @property
    def _blocks(self) -> tuple:
        if self._block_cache is None:
            _, _, _, A, U, V, D = self._model.conditional_terms(self.mode, self.theta)
            self._block_cache = (A, U, V, D)
        return self._block_cache

    @property
    def k(self) -> int:
        return self.fixed_cov.shape[0]

    def latent_field(self, p_se: int = 0, p_sp: int = 0) -> LatentField:
        return LatentField.from_vector(self.mode, p_se, p_sp)

    @property
    def precision(self) -> np.ndarray:
        """Dense precision matrix (negative Hessian at the mode)."""
        A, U, V, (d11, d12, d22) = self._blocks
        k = A.shape[0]
        n = k + 2 * U.shape[0]
        Q = np.zeros((n, n))
        Q[:k, :k] = A
        idx = k + 2 * np.arange(U.shape[0])
        Q[:k, idx] = U.T
        Q[:k, idx + 1] = V.T
        Q[k:, :k] = Q[:k, k:].T
        Q[idx, idx] = d11
        Q[idx + 1, idx + 1] = d22
        Q[idx, idx + 1] = d12
        Q[idx + 1, idx] = d12
        return Q

    def random_effect_covariances(self) -> np.ndarray:
        """Marginal 2x2 posterior covariance of each study's ``(phi_i, psi_i)``."""
        A, U, V, (d11, d12, d22) = self._blocks
        det = d11 * d22 - d12 * d12
        i11, i12, i22 = d22 / det, -d12 / det, d11 / det
        # D^-1 B^T for each study, shape (I, 2, k)
        DB = np.stack([i11[:, None] * U + i12[:, None] * V, i12[:, None] * U + i22[:, None] * V], axis=1)
        extra = np.einsum("iak,kl,ibl->iab", DB, self.fixed_cov, DB)
        base = np.stack([np.stack([i11, i12], -1), np.stack([i12, i22], -1)], axis=1)
        return base + extra


    def skewness_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """First-order skewness corrections ``(gamma1, gamma3)`` per fixed effect.

        On the standardised scale ``s`` of a fixed effect the corrected log
        density is ``-s^2/2 + gamma1 s + gamma3 s^3 / 6``; both terms come
        from the third derivative of the likelihood along the conditional
        mean path of the predictors.
        """
        model = self._model
        if type(model.likelihood) is BinomialLikelihood:
            lik = model.likelihood
            q11, q12, q22, _ = model._precision(self.theta)
            return _kernels.skewness_binomial(self.mode, model.X1, model.X2, lik.n1, lik.n2, q11, q12, q22,
                                              float(model.priors.intercept_prior_variance), self.fixed_cov)
        return self._skewness_terms_numpy()

    def _skewness_terms_numpy(self) -> tuple[np.ndarray, np.ndarray]:
        model = self._model
        A, U, V, (d11, d12, d22) = self._blocks
        det = d11 * d22 - d12 * d12
        i11, i12, i22 = d22 / det, -d12 / det, d11 / det
        Sinv = self.fixed_cov
        # G_i = M_i - D_i^-1 B_i^T so that cov(eta_i, f) = G_i S^-1
        G1 = model.X1 - (i11[:, None] * U + i12[:, None] * V)
        G2 = model.X2 - (i12[:, None] * U + i22[:, None] * V)
        C = np.concatenate([G1 @ Sinv, G2 @ Sinv])
        var_eta = np.concatenate([np.einsum("ik,kl,il->i", G1, Sinv, G1) + i11,
                                  np.einsum("ik,kl,il->i", G2, Sinv, G2) + i22])
        f, r = model.split(self.mode)
        d3 = np.concatenate(model.likelihood.third_derivatives(*model.predictors(f, r)))
        sa = np.sqrt(np.diag(Sinv))
        a = C / sa  # (2I, k)
        g1 = 0.5 * np.sum((var_eta[:, None] - a * a) * d3[:, None] * a, axis=0)
        g3 = np.sum(d3[:, None] * a**3, axis=0)
        return g1, g3


def _newton_direction(grad_f, grad_r, A, U, V, D):
    d11, d12, d22 = D
    det = d11 * d22 - d12 * d12
    if np.any(det <= 0) or np.any(d11 <= 0):
        raise LaplaceError("random-effect block of the precision is not positive definite")
    i11, i12, i22 = d22 / det, -d12 / det, d11 / det
    # B D^-1 B^T and B D^-1 g_r, summed over studies
    Ui11 = U * i11[:, None]
    Vi22 = V * i22[:, None]
    Ui12 = U * i12[:, None]
    BDB = U.T @ Ui11 + V.T @ Vi22 + U.T @ (V * i12[:, None]) + V.T @ Ui12
    Dg0 = i11 * grad_r[:, 0] + i12 * grad_r[:, 1]
    Dg1 = i12 * grad_r[:, 0] + i22 * grad_r[:, 1]
    S = A - BDB
    try:
        cho = linalg.cho_factor(S, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise LaplaceError("Schur complement of the precision is not positive definite") from exc
    step_f = linalg.cho_solve(cho, grad_f - U.T @ Dg0 - V.T @ Dg1, check_finite=False)
    rhs0 = grad_r[:, 0] - U @ step_f
    rhs1 = grad_r[:, 1] - V @ step_f
    step_r = np.column_stack([i11 * rhs0 + i12 * rhs1, i12 * rhs0 + i22 * rhs1])
    logdet = float(np.sum(np.log(det)) + 2.0 * np.sum(np.log(np.diag(cho[0]))))
    return step_f, step_r, cho, logdet


def _gradient_floor(model, x, theta):
    """Rounding level of the gradient terms; Newton cannot resolve below it."""
    f, r = model.split(x)
    q11, q12, q22, _ = model._precision(theta)
    a0, a1 = np.abs(r[:, 0]), np.abs(r[:, 1])
    rq = np.maximum(abs(q11) * a0 + abs(q12) * a1, abs(q12) * a0 + abs(q22) * a1)
    return 1e3 * _EPS * float(np.max(rq + 1.0))


def _newton_numpy(model, theta, x, tol, max_iter):
    terms = model.conditional_terms(x, theta)
    value = terms[0]
    for it in range(max_iter + 1):
        _, gf, gr, A, U, V, D = terms
        gnorm = max(float(np.max(np.abs(gf))), float(np.max(np.abs(gr))))
        step_f, step_r, cho, logdet = _newton_direction(gf, gr, A, U, V, D)
        if gnorm < max(tol, _gradient_floor(model, x, theta)):
            break
        if it == max_iter:
            raise LaplaceError(f"Newton did not converge in {max_iter} iterations (gradient max-norm {gnorm:.3g})")
        step = np.concatenate([step_f, step_r.ravel()])
        t = 1.0
        for _ in range(40):
            trial = model.conditional_terms(x + t * step, theta)
            if trial[0] >= value - 1e-10 * max(1.0, abs(value)):
                break
            t *= 0.5
        else:
            raise LaplaceError(f"line search failed (gradient max-norm {gnorm:.3g})")
        x = x + t * step
        terms = trial
        value = trial[0]
    fixed_cov = linalg.cho_solve(cho, np.eye(model.k), check_finite=False)
    return x, value, logdet, fixed_cov, it, gnorm, (A, U, V, D)


_STATUS = {1: "Newton did not converge", 2: "precision is not positive definite", 3: "line search failed"}


def _newton_compiled(model, theta, x, tol, max_iter):
    lik = model.likelihood
    q11, q12, q22, logdet_sigma = model._precision(theta)
    status, x, value, logdet, fixed_cov, it, gnorm = _kernels.newton_binomial(
        x, model.X1, model.X2, lik.y1, lik.n1, lik.y2, lik.n2, lik.log_const,
        q11, q12, q22, logdet_sigma, float(model.priors.intercept_prior_variance), float(tol), int(max_iter))
    if status != 0:
        raise LaplaceError(f"{_STATUS[status]} after {it} iterations (gradient max-norm {gnorm:.3g})")
    return x, value, logdet, fixed_cov, it, gnorm, None


def laplace_fit(model: LatentModel, theta, x0=None, tol: float = 1e-8, max_iter: int = 100,
                compiled: bool | None = None) -> GaussianApprox:
    """Newton iterations to the mode of the latent field given ``theta``.

    Stops when the max-norm of the gradient drops below `tol`, or below the
    rounding level of its terms when that is larger (near |rho| = 1 the
    random-effect precision is huge). Each step is halved until the log
    joint does not decrease. The evidence estimate is
    ``log p(y, x*, theta) - 0.5 log det(Q / 2 pi)``, which includes the
    hyperprior, i.e. it approximates ``log p(y, theta)``.

    The binomial likelihood uses a compiled kernel unless ``compiled=False``.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.zeros(model.dimension) if x0 is None else np.array(x0, dtype=float)
    if compiled is None:
        compiled = type(model.likelihood) is BinomialLikelihood
    solver = _newton_compiled if compiled else _newton_numpy
    x, value, logdet, fixed_cov, it, gnorm, blocks = solver(model, theta, x, tol, max_iter)
    if not np.isfinite(value):
        raise LaplaceError("non-finite log joint at the mode")
    log_joint_mode = value + model.priors.log_prior_internal(theta)
    evidence = log_joint_mode + 0.5 * model.dimension * LOG_2PI - 0.5 * logdet
    return GaussianApprox(theta=theta, mode=x, log_det_precision=logdet,
                          log_unnormalized_evidence=float(evidence), fixed_cov=fixed_cov,
                          n_iter=it, grad_norm=gnorm, _model=model, _block_cache=blocks)
