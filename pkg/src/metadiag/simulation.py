"""Synthetic meta-analyses and frequentist metrics of posterior summaries."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .data import Dataset, StudyRecord
from .inference.laplace import LaplaceError
from .inference.marginals import posterior_marginals
from .inference.mcmc import MCMCConfig, mcmc_oracle
from .model import PriorBundle
from .priors import preset

logger = logging.getLogger(__name__)

PARAMETERS = ("mu", "nu", "Se", "Sp", "var_phi", "var_psi", "cor")
SE_SP_PAIRS = ((0.8, 0.7), (0.9, 0.9), (0.95, 0.3))
STUDY_COUNTS = (10, 25, 50)
CORRELATIONS = (-0.95, -0.8, -0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6)
ENGINES = ("laplace", "mcmc", "oracle")


@dataclass(frozen=True)
class Scenario:
    n_studies: int
    true_se: float
    true_sp: float
    rho: float
    var_phi: float = 1.0
    var_psi: float = 1.0
    size_distribution: tuple[float, float, float] = (1.2, 0.03, 30.0)  # shape, rate, shift
    diseased_fraction: float = 0.5
    scenario_id: int = 0

    def __post_init__(self):
        if self.n_studies < 2:
            raise ValueError("a scenario needs at least 2 studies")
        if not (0 < self.true_se < 1 and 0 < self.true_sp < 1):
            raise ValueError("true_se and true_sp must lie in (0, 1)")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if not (self.var_phi > 0 and self.var_psi > 0):
            raise ValueError("variances must be positive")
        shape, rate, shift = self.size_distribution
        if not (shape > 0 and rate > 0 and shift >= 2):
            raise ValueError("size distribution needs shape > 0, rate > 0 and shift >= 2")
        if not 0 < self.diseased_fraction < 1:
            raise ValueError("diseased_fraction must lie in (0, 1)")

    @property
    def mu(self) -> float:
        return float(special.logit(self.true_se))

    @property
    def nu(self) -> float:
        return float(special.logit(self.true_sp))

    def truth(self) -> dict[str, float]:
        return {"mu": self.mu, "nu": self.nu, "Se": self.true_se, "Sp": self.true_sp,
                "var_phi": self.var_phi, "var_psi": self.var_psi, "cor": self.rho}

    def covariance(self) -> np.ndarray:
        c = self.rho * math.sqrt(self.var_phi * self.var_psi)
        return np.array([[self.var_phi, c], [c, self.var_psi]])


def builtin_scenarios() -> list[Scenario]:
    """The 81 standard scenarios, numbered from 1: Se/Sp pair, then I, then rho."""
    out = []
    for se, sp in SE_SP_PAIRS:
        for n in STUDY_COUNTS:
            for rho in CORRELATIONS:
                out.append(Scenario(n_studies=n, true_se=se, true_sp=sp, rho=rho, scenario_id=len(out) + 1))
    return out


def parse_scenario_selection(text: str, n_available: int = 81) -> list[int]:
    """Parse ``"1-9,28,81"`` into sorted unique 1-based ids."""
    ids: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                a, b = (int(v) for v in part.split("-", 1))
                if a > b:
                    raise ValueError
                ids.update(range(a, b + 1))
            else:
                ids.add(int(part))
        except ValueError:
            raise ValueError(f"invalid scenario selector {part!r}") from None
    bad = sorted(i for i in ids if not 1 <= i <= n_available)
    if bad:
        raise ValueError(f"unknown scenario id {bad[0]} (valid: 1-{n_available})")
    if not ids:
        raise ValueError("empty scenario selection")
    return sorted(ids)


def draw_studies(scenario: Scenario, rng: np.random.Generator, n_studies: int | None = None) -> dict[str, np.ndarray]:
    """Study sizes, logits and counts as arrays."""
    n = scenario.n_studies if n_studies is None else n_studies
    shape, rate, shift = scenario.size_distribution
    sizes = np.floor(shift + rng.gamma(shape, 1.0 / rate, size=n) + 0.5)
    sizes = np.maximum(sizes, shift).astype(np.int64)
    diseased = np.floor(sizes * scenario.diseased_fraction + 0.5).astype(np.int64)
    diseased = np.clip(diseased, 1, sizes - 1)
    healthy = sizes - diseased
    effects = rng.multivariate_normal(np.zeros(2), scenario.covariance(), size=n, method="cholesky")
    logit_se = scenario.mu + effects[:, 0]
    logit_sp = scenario.nu + effects[:, 1]
    tp = rng.binomial(diseased, special.expit(logit_se))
    tn = rng.binomial(healthy, special.expit(logit_sp))
    return {"sizes": sizes, "diseased": diseased, "healthy": healthy, "logit_se": logit_se,
            "logit_sp": logit_sp, "tp": tp, "fn": diseased - tp, "tn": tn, "fp": healthy - tn}


def generate_dataset(scenario: Scenario, seed: int) -> Dataset:
    d = draw_studies(scenario, np.random.default_rng(seed))
    studies = tuple(
        StudyRecord(f"S{i + 1}", int(d["tp"][i]), int(d["fp"][i]), int(d["fn"][i]), int(d["tn"][i]))
        for i in range(scenario.n_studies)
    )
    return Dataset(studies, name=f"scenario{scenario.scenario_id}-seed{seed}")


# ---------------------------------------------------------------------------
# prior configurations compared in the study

def named_prior_config(name: str) -> PriorBundle:
    """Variance and correlation priors for a named comparison arm.

    ``pc0`` .. ``pc3`` pair the PC correlation presets with PC(3, 0.05)
    variances; ``paul`` uses normal-z(0, 5) with PC variances and
    ``paul-ig`` the same correlation prior with inverse-gamma(0.25, 0.025)
    variances.
    """
    if name in ("pc0", "pc1", "pc2", "pc3"):
        return PriorBundle(cor_prior=preset(name))
    if name == "paul":
        return PriorBundle(cor_prior=preset("paul"))
    if name == "paul-ig":
        return PriorBundle(var_phi_prior=preset("invgamma"), var_psi_prior=preset("invgamma"),
                           cor_prior=preset("paul"))
    raise ValueError(f"unknown prior configuration {name!r} (choose from pc0, pc1, pc2, pc3, paul, paul-ig)")


PRIOR_CONFIG_NAMES = ("pc0", "pc1", "pc2", "pc3", "paul", "paul-ig")


# ---------------------------------------------------------------------------
# metrics

@dataclass
class ParameterMetrics:
    errors: np.ndarray
    bias: float
    mse: float
    coverage95: float

    @classmethod
    def from_records(cls, medians, lowers, uppers, truth: float) -> "ParameterMetrics":
        medians = np.asarray(medians, dtype=float)
        errors = medians - truth
        if len(errors) == 0:
            return cls(errors, float("nan"), float("nan"), float("nan"))
        bias = float(np.mean(errors))
        mse = bias**2 + float(np.var(errors))
        covered = (np.asarray(lowers) <= truth) & (truth <= np.asarray(uppers))
        return cls(errors, bias, mse, float(np.mean(covered)))


@dataclass
class ReplicateRecord:
    replicate: int
    parameter: str
    truth: float
    median: float
    lower95: float
    upper95: float

    @property
    def error(self) -> float:
        return self.median - self.truth

    @property
    def covered(self) -> bool:
        return self.lower95 <= self.truth <= self.upper95


@dataclass
class ScenarioMetrics:
    scenario: Scenario
    prior: str
    engine: str
    parameters: dict[str, ParameterMetrics]
    n_replicates: int
    n_failures: int
    records: list[ReplicateRecord] = field(default_factory=list, repr=False)

    RECORD_COLUMNS = ("replicate", "parameter", "truth", "median", "lower95", "upper95", "error", "covered")
    METRIC_COLUMNS = ("scenario", "prior", "engine", "n_studies", "true_se", "true_sp", "true_rho", "parameter",
                      "truth", "bias", "mse", "coverage95", "n_replicates", "n_failures")

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.RECORD_COLUMNS)
        for r in self.records:
            w.writerow([r.replicate, r.parameter, _fmt(r.truth), _fmt(r.median), _fmt(r.lower95),
                        _fmt(r.upper95), _fmt(r.error), int(r.covered)])
        return buf.getvalue()

    def metric_rows(self) -> list[list]:
        truth = self.scenario.truth()
        s = self.scenario
        return [[s.scenario_id, self.prior, self.engine, s.n_studies, s.true_se, s.true_sp, s.rho, name,
                 _fmt(truth[name]), _fmt(m.bias), _fmt(m.mse), _fmt(m.coverage95), self.n_replicates,
                 self.n_failures]
                for name, m in self.parameters.items()]


def metrics_csv(results: list[ScenarioMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ScenarioMetrics.METRIC_COLUMNS)
    for res in results:
        w.writerows(res.metric_rows())
    return buf.getvalue()


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# running replicates

def replicate_seed(base_seed: int, replicate: int) -> int:
    return int(base_seed) ^ int(replicate)


def _summaries(dataset: Dataset, priors: PriorBundle, engine: str, truth: dict, mcmc_config: MCMCConfig):
    """Posterior (median, lower, upper) per parameter for one fit."""
    if engine == "oracle":
        return {p: (v, v, v) for p, v in truth.items()}
    if engine == "laplace":
        summ = posterior_marginals(dataset, priors)
    elif engine == "mcmc":
        summ = mcmc_oracle(dataset, priors, mcmc_config).summary
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return {p: (m.median, m.lower, m.upper) for p, m in summ.marginals.items() if p in truth}


def _run_replicate(args):
    scenario, prior_names, engine, seed, rep, mcmc_config = args
    dataset = generate_dataset(scenario, seed)
    truth = scenario.truth()
    out = {}
    for name in prior_names:
        priors = named_prior_config(name)
        try:
            out[name] = _summaries(dataset, priors, engine, truth, mcmc_config)
        except (LaplaceError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            logger.warning("scenario %s replicate %d prior %s failed: %s", scenario.scenario_id, rep, name, exc)
            out[name] = None
    return rep, out


def run_scenario(scenario: Scenario, priors=("pc0", "paul"), engine: str = "laplace", n_replicates: int = 100,
                 seed: int = 20150901, workers: int = 1,
                 mcmc_config: MCMCConfig | None = None) -> dict[str, ScenarioMetrics]:
    """Fit every prior configuration to every replicate dataset of a scenario.

    Replicate ``r`` uses the dataset generated from ``seed ^ r``; all prior
    configurations see the same datasets. Failed fits are excluded and counted.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be at least 1")
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}")
    prior_names = list(priors)
    for name in prior_names:
        named_prior_config(name)
    mcmc_config = mcmc_config or MCMCConfig(iterations=20_000, burn_in=5_000, thin=5)
    jobs = [(scenario, prior_names, engine, replicate_seed(seed, r), r, mcmc_config) for r in range(n_replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replicate, jobs))
    else:
        results = [_run_replicate(j) for j in jobs]
    results.sort(key=lambda t: t[0])

    truth = scenario.truth()
    out = {}
    for name in prior_names:
        records = []
        failures = 0
        for rep, fits in results:
            summ = fits[name]
            if summ is None:
                failures += 1
                continue
            for p in PARAMETERS:
                if p in summ:
                    med, lo, hi = summ[p]
                    records.append(ReplicateRecord(rep, p, truth[p], med, lo, hi))
        params = {}
        for p in PARAMETERS:
            rs = [r for r in records if r.parameter == p]
            if rs:
                params[p] = ParameterMetrics.from_records([r.median for r in rs], [r.lower95 for r in rs],
                                                          [r.upper95 for r in rs], truth[p])
        out[name] = ScenarioMetrics(scenario, name, engine, params, n_replicates, failures, records)
    return out
