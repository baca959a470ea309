"""SROC geometry: regression-line curve, summary point and HPD regions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import contourpy
import numpy as np
from matplotlib.path import Path
from scipy import ndimage, special
from scipy.interpolate import RegularGridInterpolator

from .data import Dataset
from .inference.marginals import PosteriorSummary
from .inference.mcmc import MCMCResult

DEFAULT_DRAWS = 10_000


class SrocError(ValueError):
    pass


@dataclass
class SrocInputs:
    """Posterior quantities the SROC construction needs, engine independent.

    ``latent_draws`` are posterior draws of ``(mu, nu)``; ``predictive_draws``
    add a new study's random effect drawn with the matching hyperparameters.
    """

    mean_mu: float
    mean_nu: float
    mean_rho: float
    mean_sd_phi: float
    mean_sd_psi: float
    latent_draws: np.ndarray
    predictive_draws: np.ndarray

    @classmethod
    def from_laplace(cls, summary: PosteriorSummary, n_draws: int = DEFAULT_DRAWS, seed: int = 20150901):
        mix, grid = summary.mixture, summary.grid
        if mix is None or grid is None:
            raise SrocError("summary carries no grid mixture; use a Laplace fit")
        _require_no_covariates(summary)
        rng = np.random.default_rng(seed)
        draws, comp = mix.sample(rng, n_draws)
        th = mix.thetas[comp]
        sd1, sd2 = np.exp(th[:, 0] / 2), np.exp(th[:, 1] / 2)
        rho = np.full(n_draws, mix.fixed_rho) if mix.fixed_rho is not None else np.tanh(th[:, 2] / 2)
        pred = draws + _correlated_normals(rng, sd1, sd2, rho)
        w = mix.weights
        sd_phi = float(w @ np.exp(grid.thetas[:, 0] / 2))
        sd_psi = float(w @ np.exp(grid.thetas[:, 1] / 2))
        mean_rho = mix.fixed_rho if mix.fixed_rho is not None else summary["cor"].mean
        return cls(summary["mu"].mean, summary["nu"].mean, mean_rho, sd_phi, sd_psi, draws, pred)

    @classmethod
    def from_mcmc(cls, result: MCMCResult, n_draws: int = DEFAULT_DRAWS, seed: int = 20150901):
        _require_no_covariates(result.summary)
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, len(result.samples), size=n_draws)
        mu, nu = result.column("mu"), result.column("nu")
        v1, v2 = result.column("var_phi"), result.column("var_psi")
        fixed = result.summary.fixed_rho
        rho = result.column("cor") if fixed is None else np.full(len(mu), fixed)
        draws = np.column_stack([mu[rows], nu[rows]])
        pred = draws + _correlated_normals(rng, np.sqrt(v1[rows]), np.sqrt(v2[rows]), rho[rows])
        return cls(float(mu.mean()), float(nu.mean()), float(rho.mean()), float(np.sqrt(v1).mean()),
                   float(np.sqrt(v2).mean()), draws, pred)


def _require_no_covariates(summary: PosteriorSummary):
    if summary.se_covariates or summary.sp_covariates:
        raise SrocError("SROC output is only defined for covariate-free fits")


def _correlated_normals(rng, sd1, sd2, rho):
    z1 = rng.standard_normal(len(sd1))
    z2 = rng.standard_normal(len(sd1))
    return np.column_stack([sd1 * z1, sd2 * (rho * z1 + np.sqrt(1 - rho**2) * z2)])


def to_roc(logit_se, logit_sp) -> np.ndarray:
    """Map logit pairs to ROC coordinates ``(1 - Sp, Se)``."""
    return np.column_stack([1.0 - special.expit(logit_sp), special.expit(logit_se)])


# ---------------------------------------------------------------------------
# curve


def sroc_curve(inputs: SrocInputs, dataset: Dataset, n_points: int = 201):
    """Regression-line SROC in ROC and logit coordinates.

    ``logit Se(x) = E[mu] + E[rho] E[sd_phi] / E[sd_psi] (x - E[nu])`` over a
    logit-specificity grid spanning the observed range widened by 20%. The
    grid always contains ``E[nu]`` so the curve passes through the summary point.
    """
    a = dataset.arrays()
    obs = np.log((a["tn"] + 0.5) / (a["fp"] + 0.5))
    lo, hi = float(obs.min()), float(obs.max())
    pad = 0.1 * max(hi - lo, 1e-6)
    x = np.linspace(lo - pad, hi + pad, n_points)
    x = np.unique(np.append(x, inputs.mean_nu))
    slope = inputs.mean_rho * inputs.mean_sd_phi / inputs.mean_sd_psi
    y = inputs.mean_mu + slope * (x - inputs.mean_nu)
    return to_roc(y, x), np.column_stack([y, x]), slope


# ---------------------------------------------------------------------------
# HPD regions by kernel contouring


@dataclass
class HPDRegion:
    polygon_logit: np.ndarray  # closed (n, 2) polygon in (logit Se, logit Sp)
    level: float
    threshold: float

    def contains(self, points_logit) -> np.ndarray:
        return Path(self.polygon_logit).contains_points(np.asarray(points_logit, dtype=float))

    @property
    def polygon_roc(self) -> np.ndarray:
        return to_roc(self.polygon_logit[:, 0], self.polygon_logit[:, 1])


def hpd_region(draws, level: float = 0.95, bins: int = 256) -> HPDRegion:
    """Highest-density region of a bivariate sample.

    The sample is whitened, a Gaussian KDE with Scott's bandwidth is computed
    by binning plus filtering, and the contour is drawn at the KDE value
    exceeded by a fraction `level` of the draws.
    """
    draws = np.asarray(draws, dtype=float)
    n = len(draws)
    if n < 100:
        raise SrocError("at least 100 draws are needed for kernel contouring")
    centre = draws.mean(axis=0)
    cov = np.cov(draws.T)
    if not np.all(np.isfinite(cov)) or np.linalg.det(cov) <= 0:
        raise SrocError("draws are degenerate; cannot contour")
    L = np.linalg.cholesky(cov)
    white = np.linalg.solve(L, (draws - centre).T).T
    bw = n ** (-1.0 / 6.0)  # Scott's factor in two dimensions
    lim = np.abs(white).max() + 4 * bw
    edges = np.linspace(-lim, lim, bins + 1)
    h = edges[1] - edges[0]
    hist, _, _ = np.histogram2d(white[:, 0], white[:, 1], bins=[edges, edges])
    dens = ndimage.gaussian_filter(hist, sigma=bw / h, mode="constant", truncate=5.0)
    dens /= n * h * h
    centres = 0.5 * (edges[1:] + edges[:-1])
    interp = RegularGridInterpolator((centres, centres), dens, bounds_error=False, fill_value=0.0)
    at_draws = interp(white)
    threshold = float(np.quantile(at_draws, 1.0 - level))
    gen = contourpy.contour_generator(centres, centres, dens.T)
    lines = gen.lines(threshold)
    closed = [ln for ln in lines if len(ln) > 3]
    if not closed:
        raise SrocError("no contour found at the requested level")
    # keep the piece enclosing the most draws
    best = max(closed, key=lambda ln: Path(ln).contains_points(white).sum())
    if not np.allclose(best[0], best[-1]):
        best = np.vstack([best, best[:1]])
    poly = centre + best @ L.T
    return HPDRegion(poly, level, threshold)


def credible_region(inputs: SrocInputs, level: float = 0.95) -> HPDRegion:
    return hpd_region(inputs.latent_draws, level)


def prediction_region(inputs: SrocInputs, level: float = 0.95) -> HPDRegion:
    return hpd_region(inputs.predictive_draws, level)


# ---------------------------------------------------------------------------
# geometry bundle


@dataclass
class SrocGeometry:
    summary_point: tuple[float, float]  # (1 - Sp, Se)
    summary_logit: tuple[float, float]  # (logit Se, logit Sp)
    curve: np.ndarray
    curve_logit: np.ndarray
    slope: float
    credible: HPDRegion
    prediction: HPDRegion
    study_points: list[tuple[float, float, int]]

    @property
    def credible_region(self) -> np.ndarray:
        return self.credible.polygon_roc

    @property
    def prediction_region(self) -> np.ndarray:
        return self.prediction.polygon_roc

    def nesting_ok(self) -> bool:
        """Summary point inside the credible region, which lies inside the prediction region."""
        inside = self.credible.contains(np.array([self.summary_logit]))[0]
        nested = bool(np.all(self.prediction.contains(self.credible.polygon_logit[:-1])))
        return bool(inside and nested)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["element", "index", "fpr", "tpr"])
        w.writerow(["summary", 0, repr(self.summary_point[0]), repr(self.summary_point[1])])
        for name, arr in (("curve", self.curve), ("credible", self.credible_region),
                          ("prediction", self.prediction_region)):
            for i, (x, y) in enumerate(arr):
                w.writerow([name, i, repr(float(x)), repr(float(y))])
        for i, (x, y, _) in enumerate(self.study_points):
            w.writerow(["study", i, repr(x), repr(y)])
        return buf.getvalue()


def sroc_geometry(inputs: SrocInputs, dataset: Dataset, level: float = 0.95) -> SrocGeometry:
    curve, curve_logit, slope = sroc_curve(inputs, dataset)
    a = dataset.arrays()
    se = a["tp"] / (a["tp"] + a["fn"])
    sp = a["tn"] / (a["tn"] + a["fp"])
    n = a["tp"] + a["fn"] + a["tn"] + a["fp"]
    studies = [(float(1 - s2), float(s1), int(k)) for s1, s2, k in zip(se, sp, n)]
    pt = to_roc(np.array([inputs.mean_mu]), np.array([inputs.mean_nu]))[0]
    return SrocGeometry(
        summary_point=(float(pt[0]), float(pt[1])),
        summary_logit=(inputs.mean_mu, inputs.mean_nu),
        curve=curve, curve_logit=curve_logit, slope=slope,
        credible=credible_region(inputs, level),
        prediction=prediction_region(inputs, level),
        study_points=studies,
    )


def region_mass(region: HPDRegion, draws) -> float:
    return float(np.mean(region.contains(draws)))


def marginal_extent(region: HPDRegion) -> dict[str, tuple[float, float]]:
    """Se and Sp ranges spanned by a region."""
    p = region.polygon_logit
    se = special.expit(p[:, 0])
    sp = special.expit(p[:, 1])
    return {"Se": (float(se.min()), float(se.max())), "Sp": (float(sp.min()), float(sp.max()))}
