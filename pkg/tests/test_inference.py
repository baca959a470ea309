import math

import numpy as np
import pytest
from scipy import stats

from metadiag.data import Dataset, StudyRecord
from metadiag.inference.grid import GridConfig, explore_hyperposterior
from metadiag.inference.laplace import laplace_fit
from metadiag.inference.marginals import (
    LatentMixture, SummaryError, posterior_marginals, skewnorm_params, summarize, summarize_transformed,
)
from metadiag.model import LatentModel, PriorBundle
from metadiag.priors import FixedCorrelation, preset
from metadiag.simulation import Scenario, draw_studies, generate_dataset


class TestSummarize:
    def test_standard_normal(self):
        x = np.linspace(-8, 8, 401)
        s = summarize(x, stats.norm.pdf(x))
        assert s.mean == pytest.approx(0, abs=1e-6)
        assert s.sd == pytest.approx(1, abs=1e-4)
        assert s.quantiles == pytest.approx((-1.959964, 0.0, 1.959964), abs=1e-4)

    def test_exponential_median(self):
        x = np.linspace(0, 40, 2001)
        assert summarize(x, np.exp(-x)).median == pytest.approx(math.log(2), abs=1e-4)

    def test_pc1_quantiles_match_sampling(self):
        p = preset("pc1")
        z = np.linspace(-40, 40, 20001)
        s = summarize_transformed(z, np.exp(p.log_density_internal(z)), lambda t: np.tanh(t / 2),
                                  lambda t: math.log(2) - 2 * np.logaddexp(t / 2, -t / 2))
        draws = p.sample(np.random.default_rng(4), 2_000_000)
        for q, level in zip(s.quantiles, (0.025, 0.5, 0.975)):
            assert q == pytest.approx(np.quantile(draws, level), abs=1e-3)

    def test_lognormal_transform(self):
        t = np.linspace(-6, 6, 801)
        s = summarize_transformed(t, stats.norm.pdf(t, 0, 0.5), np.exp, lambda u: u)
        assert s.mean == pytest.approx(math.exp(0.125), rel=1e-5)
        assert s.median == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("x, d, frag", [
        (np.linspace(0, 1, 10), np.ones(10), "at least 30"),
        (np.linspace(0, 1, 50), np.r_[np.ones(49), np.nan], "non-finite"),
        (np.linspace(1, 0, 50), np.ones(50), "increasing"),
        (np.linspace(0, 1, 50), -np.ones(50), "nonnegative"),
    ])
    def test_rejects_bad_grids(self, x, d, frag):
        with pytest.raises(SummaryError, match=frag):
            summarize(x, d)

    def test_skewnormal_moments(self):
        shape, loc, scale = skewnorm_params(1.0, 2.0, 0.5)
        m, v, sk = stats.skewnorm.stats(shape, loc, scale, moments="mvs")
        assert (m, math.sqrt(v), sk) == pytest.approx((1.0, 2.0, 0.5), rel=1e-10)

    def test_mixture_moments(self):
        rng = np.random.default_rng(0)
        mix = LatentMixture(weights=np.array([0.3, 0.7]), means=np.array([[0.0, 1.0], [1.0, 0.0]]),
                            covs=np.array([np.eye(2), 2 * np.eye(2)]), thetas=np.zeros((2, 3)))
        x, _ = mix.sample(rng, 200_000)
        np.testing.assert_allclose(x.mean(0), mix.mean(), atol=0.01)
        np.testing.assert_allclose(np.cov(x.T), mix.covariance(), atol=0.03)


class TestGrid:
    @pytest.fixture(scope="class")
    @staticmethod
    def grid(telomerase):
        return explore_hyperposterior(LatentModel(telomerase))

    def test_weights(self, grid):
        w = grid.weights
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(grid.points) >= GridConfig().min_points

    def test_mode_correlation_negative(self, grid):
        rho = math.tanh(grid.mode_theta[2] / 2)
        assert -1 < rho < -0.5

    def test_cutoff_respected(self, grid):
        lp = grid.log_posts
        assert lp.max() - lp.min() <= math.log(1000) + 1e-9

    def test_reorder_invariance(self, telomerase, telomerase_fit):
        order = [3, 7, 0, 9, 1, 5, 2, 8, 6, 4]
        again = posterior_marginals(telomerase.reordered(order), PriorBundle(intercept_prior_variance=1000.0))
        assert again.marginal_log_likelihood == pytest.approx(telomerase_fit.marginal_log_likelihood, abs=1e-6)
        for name in telomerase_fit.marginals:
            assert again[name].mean == pytest.approx(telomerase_fit[name].mean, abs=1e-6)


class TestPosterior:
    def test_summary_invariants(self, telomerase_fit):
        for name, m in telomerase_fit.marginals.items():
            assert m.lower <= m.median <= m.upper, name
            assert np.all(m.density >= 0)
            x, d = m.x, m.density
            assert np.trapezoid(d, x) == pytest.approx(1.0, abs=1e-4), name

    def test_json_keys(self, telomerase_fit):
        import json
        d = json.loads(telomerase_fit.to_json({"seed": 1}))
        for key in ("fixed_effects", "hyperparameters", "accuracy", "mlik", "timings", "config_echo"):
            assert key in d
        assert set(d["accuracy"]) == {"mean(Se)", "mean(Sp)"}
        assert set(d["hyperparameters"]) == {"var_phi", "var_psi", "cor"}

    def test_swap_equivariance(self, telomerase):
        priors = PriorBundle(cor_prior=preset("pc0"))
        a = posterior_marginals(telomerase, priors)
        b = posterior_marginals(telomerase.swapped(), priors)
        for x, y in (("mu", "nu"), ("Se", "Sp"), ("var_phi", "var_psi"), ("cor", "cor")):
            assert a[x].mean == pytest.approx(b[y].mean, abs=2e-3), x
            assert a[x].sd == pytest.approx(b[y].sd, rel=2e-2), x
        assert a.marginal_log_likelihood == pytest.approx(b.marginal_log_likelihood, abs=1e-3)

    def test_contraction_on_homogeneous_studies(self):
        # with between-study spread in the data, scaling counts turns sampling noise into
        # apparent heterogeneity, so contraction is only guaranteed for homogeneous studies
        studies = tuple(StudyRecord(f"s{i}", tp=30 + i % 2, fp=15, fn_=10, tn=25 + i % 3) for i in range(10))
        ds = Dataset(studies)
        small, big = posterior_marginals(ds), posterior_marginals(ds.scaled(100))
        for name in ("mu", "nu", "Se", "Sp", "var_phi", "var_psi"):
            assert big[name].sd < 0.5 * small[name].sd, name

    def test_fixed_correlation_mode(self, telomerase):
        s = posterior_marginals(telomerase, PriorBundle(cor_prior=FixedCorrelation(-0.2)))
        assert "cor" not in s.marginals
        assert s.to_dict()["hyperparameters"]["cor"] == {"fixed": -0.2}
        assert s.grid.thetas.shape[1] == 2

    def test_gaussian_strategy_available(self, telomerase):
        s = posterior_marginals(telomerase, skew=False)
        assert s.diagnostics["latent_strategy"] == "gaussian"
        assert s["Se"].mean == pytest.approx(0.766, abs=0.02)


def test_huge_counts_mode_at_half():
    n = 1_000_000
    studies = tuple(StudyRecord(f"s{i}", tp=n // 2, fp=n // 2, fn_=n // 2, tn=n // 2) for i in range(6))
    m = LatentModel(Dataset(studies))
    a = laplace_fit(m, np.array([0.0, 0.0, 0.0]))
    assert a.mode[0] == pytest.approx(0.0, abs=1e-2)
    assert a.mode[1] == pytest.approx(0.0, abs=1e-2)


def test_conditional_mode_on_telomerase(telomerase, telomerase_fit):
    theta = [math.log(telomerase_fit["var_phi"].mean), math.log(telomerase_fit["var_psi"].mean),
             2 * math.atanh(telomerase_fit["cor"].mean)]
    a = laplace_fit(LatentModel(telomerase), np.array(theta))
    assert 1 / (1 + math.exp(-a.mode[0])) == pytest.approx(0.766, abs=0.02)


def test_large_study_consistency():
    # compared with the moments of the effects actually drawn, not the generating values
    sc = Scenario(n_studies=200, true_se=0.8, true_sp=0.7, rho=-0.4, size_distribution=(1.0, 1.0, 2000.0))
    d = draw_studies(sc, np.random.default_rng(7))
    grid = explore_hyperposterior(LatentModel(generate_dataset(sc, 7)))
    emp = np.cov(np.column_stack([d["logit_se"], d["logit_sp"]]).T)
    v1, v2 = np.exp(grid.mode_theta[:2])
    rho = math.tanh(grid.mode_theta[2] / 2)
    assert v1 == pytest.approx(emp[0, 0], rel=0.1)
    assert v2 == pytest.approx(emp[1, 1], rel=0.1)
    assert rho == pytest.approx(emp[0, 1] / math.sqrt(emp[0, 0] * emp[1, 1]), abs=0.1)
    assert rho == pytest.approx(-0.4, abs=0.15)


def test_mode_on_prior_cusp():
    # small between-study variance puts the hyper mode at the PC prior's base value
    sc = Scenario(n_studies=10, true_se=0.8, true_sp=0.7, rho=-0.4, var_phi=0.05, var_psi=0.05)
    s = posterior_marginals(generate_dataset(sc, 4))
    assert s.diagnostics["hyper_mode"][2] == pytest.approx(math.log(0.4 / 0.6), abs=1e-6)
    assert not s.warnings
    assert s.grid.hessian[2, 2] < 50
