"""Hyperparameter mode search and grid exploration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..model import Hyperparameters, LatentModel
from ..priors import CorrelationPCPrior, rho_to_z
from .laplace import GaussianApprox, LaplaceError, laplace_fit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridConfig:
    step: float = 0.75
    log_drop: float = math.log(1000.0)
    fd_step: float = 1e-4
    hessian_step: float = 5e-3
    max_radius: int = 25
    min_points: int = 7


@dataclass
class GridPoint:
    theta: np.ndarray
    z: np.ndarray
    log_post: float
    weight: float
    approx: GaussianApprox

    def hyper(self, fixed_rho: float | None = None) -> Hyperparameters:
        return Hyperparameters.from_internal(self.theta, fixed_rho)


@dataclass
class HyperGrid:
    points: list[GridPoint]
    mode_theta: np.ndarray
    hessian: np.ndarray  # negative Hessian of the log posterior at the mode, internal scale
    transform: np.ndarray  # theta = mode_theta + transform @ z
    step: float
    fixed_rho: float | None = None
    degenerate: bool = False
    n_evaluations: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.points])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.points])

    @property
    def log_posts(self) -> np.ndarray:
        return np.array([p.log_post for p in self.points])

    @property
    def mode_hyper(self) -> Hyperparameters:
        return Hyperparameters.from_internal(self.mode_theta, self.fixed_rho)

    def log_cell_volume(self) -> float:
        """Log volume of one grid cell on the internal scale."""
        n = len(self.mode_theta)
        return n * math.log(self.step) + math.log(abs(np.linalg.det(self.transform)))


class _Evaluator:
    """Caches Laplace fits and warm-starts each from the nearest previous mode."""

    _CAPACITY = 4000

    def __init__(self, model: LatentModel):
        self.model = model
        self._thetas = np.empty((self._CAPACITY, model.priors.n_hyper))
        self._modes = np.empty((self._CAPACITY, model.dimension))
        self._n = 0
        self.count = 0

    def fit(self, theta) -> GaussianApprox:
        theta = np.asarray(theta, dtype=float)
        x0 = None
        if self._n:
            d = np.sum((self._thetas[:self._n] - theta) ** 2, axis=1)
            x0 = self._modes[int(np.argmin(d))]
        self.count += 1
        try:
            g = laplace_fit(self.model, theta, x0=x0)
        except LaplaceError:
            if x0 is None:
                raise
            g = laplace_fit(self.model, theta)
        if self._n < self._CAPACITY:
            self._thetas[self._n] = theta
            self._modes[self._n] = g.mode
            self._n += 1
        return g

    def log_post(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if np.any(np.abs(theta) > 60):
            return -np.inf
        try:
            return self.fit(theta).log_unnormalized_evidence
        except LaplaceError:
            return -np.inf


def _initial_theta(priors) -> np.ndarray:
    theta = [0.0, 0.0]
    if priors.fixed_rho is None:
        rho0 = getattr(priors.cor_prior, "rho0", 0.0)
        theta.append(2.0 * math.atanh(rho0))
    return np.array(theta)


def _fd_gradient(f, x, h):
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hessian(f, x, h, f0=None):
    n = len(x)
    f0 = f(x) if f0 is None else f0
    H = np.empty((n, n))
    E = np.eye(n) * h
    fp = [f(x + E[j]) for j in range(n)]
    fm = [f(x - E[j]) for j in range(n)]
    for j in range(n):
        H[j, j] = (fp[j] - 2 * f0 + fm[j]) / h**2
        for l in range(j + 1, n):
            fpp = f(x + E[j] + E[l])
            fmm = f(x - E[j] - E[l])
            # uses the axis evaluations already available
            H[j, l] = H[l, j] = (fpp + fmm - fp[j] - fm[j] - fp[l] - fm[l] + 2 * f0) / (2 * h**2)
    return H


def _kink(priors) -> float | None:
    """Internal-scale location of the correlation prior's cusp, if it has one."""
    if priors.fixed_rho is None and isinstance(priors.cor_prior, CorrelationPCPrior):
        return float(rho_to_z(priors.cor_prior.rho0))
    return None


def _is_local_max(f, x, h, tol):
    """Each coordinate is stationary, or a kink with one-sided slopes bracketing zero."""
    f0 = f(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        up, down = (f(x + e) - f0) / h, (f0 - f(x - e)) / h
        if not (abs(0.5 * (up + down)) <= tol or (up <= tol and down >= -tol)):
            return False
    return True


def find_hyper_mode(model: LatentModel, config: GridConfig = GridConfig(), evaluator=None):
    """Maximise the Laplace log posterior of the hyperparameters (BFGS, FD gradients).

    The PC correlation prior has a cusp at its base value and the mode often
    sits exactly there. BFGS then stalls; the search is finished by pinning
    the correlation coordinate at the cusp and optimising the rest.
    """
    ev = evaluator or _Evaluator(model)

    def negf(t):
        v = ev.log_post(t)
        return 1e300 if not np.isfinite(v) else -v

    def grad(t):
        return _fd_gradient(negf, t, config.fd_step)

    theta0 = _initial_theta(model.priors)
    res = optimize.minimize(negf, theta0, jac=grad, method="BFGS", options={"gtol": 1e-4, "maxiter": 200})
    theta, fun = res.x, res.fun
    if res.success:
        return theta, -fun, ev
    z0 = _kink(model.priors)
    if z0 is not None and abs(theta[2] - z0) < 0.25:
        def negf_pinned(s):
            return negf(np.array([s[0], s[1], z0]))

        sub = optimize.minimize(negf_pinned, theta[:2], jac=lambda s: _fd_gradient(negf_pinned, s, config.fd_step),
                                method="BFGS", options={"gtol": 1e-4, "maxiter": 200})
        if sub.fun <= fun + 1e-9:
            theta, fun = np.array([sub.x[0], sub.x[1], z0]), sub.fun
    if not _is_local_max(lambda t: -negf(t), theta, 1e-3, 1e-2):
        gnorm = float(np.max(np.abs(grad(theta))))
        raise LaplaceError(f"hyperparameter mode search failed: {res.message} (gradient {gnorm:.3g})")
    return theta, -fun, ev


def _mode_curvature(model, ev, theta, config) -> np.ndarray:
    """Negative FD Hessian of the log posterior, ignoring the prior cusp.

    Next to the cusp a second difference across it measures the jump in slope,
    not curvature. There the correlation prior is taken out, the rest is
    differenced, and the prior's own curvature is added back as the mean of
    its one-sided second differences.
    """
    h = config.hessian_step
    z0 = _kink(model.priors)
    if z0 is None or abs(theta[2] - z0) > 2 * h:
        return -_fd_hessian(ev.log_post, theta, h)
    lp = model.priors.cor_prior.log_density_internal

    def smooth(t):
        return ev.log_post(t) - lp(float(t[2]))

    H = -_fd_hessian(smooth, theta, h)
    left = (lp(z0) - 2 * lp(z0 - h) + lp(z0 - 2 * h)) / h**2
    right = (lp(z0) - 2 * lp(z0 + h) + lp(z0 + 2 * h)) / h**2
    H[2, 2] -= 0.5 * (left + right)
    return H


def explore_hyperposterior(model: LatentModel, config: GridConfig = GridConfig()) -> HyperGrid:
    """Mode, curvature and an axis-aligned grid in eigen-standardised coordinates.

    Grid points are visited outward from the mode (flood fill over the
    integer lattice) and kept while the log posterior is within
    ``config.log_drop`` of the best value seen.
    """
    theta_star, lp_star, ev = find_hyper_mode(model, config)
    H = _mode_curvature(model, ev, theta_star, config)
    H = 0.5 * (H + H.T)
    warnings = []
    evals, evecs = np.linalg.eigh(H)
    if np.any(evals <= 0):
        warnings.append("hyperparameter Hessian not positive definite at the mode; eigenvalues floored")
        evals = np.maximum(evals, 1e-2 * max(float(np.max(np.abs(evals))), 1.0))
    transform = evecs / np.sqrt(evals)

    n = len(theta_star)
    cache: dict[tuple, tuple[float, GaussianApprox | None]] = {}

    def visit(idx):
        if idx not in cache:
            theta = theta_star + transform @ (config.step * np.array(idx, dtype=float))
            try:
                g = ev.fit(theta) if np.all(np.abs(theta) <= 60) else None
            except LaplaceError:
                g = None
            cache[idx] = (g.log_unnormalized_evidence if g is not None else -np.inf, g)
        return cache[idx][0]

    origin = (0,) * n
    best = visit(origin)
    frontier = [origin]
    kept = {origin}
    while frontier:
        nxt = []
        for idx in frontier:
            for j in range(n):
                for s in (-1, 1):
                    nb = list(idx)
                    nb[j] += s
                    nb = tuple(nb)
                    if nb in kept or max(abs(c) for c in nb) > config.max_radius:
                        continue
                    lp = visit(nb)
                    best = max(best, lp)
                    if lp > best - config.log_drop:
                        kept.add(nb)
                        nxt.append(nb)
        frontier = nxt
    kept = [idx for idx in kept if cache[idx][0] > best - config.log_drop]
    kept.sort()
    lps = np.array([cache[idx][0] for idx in kept])
    w = np.exp(lps - lps.max())
    w /= w.sum()
    points = [
        GridPoint(theta=cache[idx][1].theta, z=config.step * np.array(idx, dtype=float),
                  log_post=float(lp), weight=float(wi), approx=cache[idx][1])
        for idx, lp, wi in zip(kept, lps, w)
    ]
    degenerate = len(points) < config.min_points
    if degenerate:
        msg = f"only {len(points)} grid points retained; hyperparameter posterior looks degenerate"
        logger.warning(msg)
        warnings.append(msg)
    return HyperGrid(points=points, mode_theta=theta_star, hessian=H, transform=transform, step=config.step,
                     fixed_rho=model.priors.fixed_rho, degenerate=degenerate, n_evaluations=ev.count,
                     warnings=warnings)
