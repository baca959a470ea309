import numpy as np
import pytest

from metadiag.inference.mcmc import MCMCConfig, effective_sample_size, mcmc_oracle
from metadiag.model import PriorBundle
from metadiag.priors import preset


def test_config_validation():
    with pytest.raises(ValueError):
        MCMCConfig(iterations=100, burn_in=100)
    with pytest.raises(ValueError):
        MCMCConfig(iterations=200, burn_in=100, thin=0)


def test_ess_iid_and_ar1():
    rng = np.random.default_rng(2)
    n = 50_000
    assert effective_sample_size(rng.standard_normal(n)) == pytest.approx(n, rel=0.1)
    phi = 0.8
    x = np.empty(n)
    x[0] = 0
    e = rng.standard_normal(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    assert effective_sample_size(x) == pytest.approx(n * (1 - phi) / (1 + phi), rel=0.15)


def test_same_seed_bit_identical(telomerase):
    cfg = MCMCConfig(iterations=3000, burn_in=1000, thin=2, seed=99)
    a = mcmc_oracle(telomerase, config=cfg)
    b = mcmc_oracle(telomerase, config=cfg)
    assert np.array_equal(a.samples, b.samples)
    c = mcmc_oracle(telomerase, config=MCMCConfig(iterations=3000, burn_in=1000, thin=2, seed=100))
    assert not np.array_equal(a.samples, c.samples)


def test_short_run_warns_and_reports(telomerase):
    res = mcmc_oracle(telomerase, config=MCMCConfig(iterations=2000, burn_in=500, thin=5))
    assert res.names[:2] == ["mu", "nu"] and res.names[-2:] == ["Se", "Sp"]
    assert any("effective sample size" in w for w in res.warnings)
    assert set(res.ess) == set(res.names)
    assert 0 < res.acceptance["hyper"] < 1


@pytest.mark.parametrize("name", ["pc1"])
def test_prior_only_run_recovers_prior(telomerase, name):
    prior = preset(name)
    priors = PriorBundle(cor_prior=prior)
    res = mcmc_oracle(telomerase, priors, MCMCConfig(iterations=80_000, burn_in=8_000, thin=4, seed=5,
                                                     use_likelihood=False))
    rho = res.column("cor")
    assert np.mean(rho <= prior.rho0) == pytest.approx(prior.omega1, abs=0.04)
    assert np.mean(rho <= -0.95) == pytest.approx(0.05, abs=0.02)
    var = preset("pcvar")
    v = res.column("var_phi")
    for q in (0.25, 0.5, 0.75):
        assert np.quantile(v, q) == pytest.approx(var.ppf(q), rel=0.15)


def test_swap_equivariance(telomerase):
    priors = PriorBundle(cor_prior=preset("pc0"))
    cfg = MCMCConfig(iterations=60_000, burn_in=6_000, thin=3, seed=8)
    a = mcmc_oracle(telomerase, priors, cfg).summary
    b = mcmc_oracle(telomerase.swapped(), priors, cfg).summary
    # independent chains, so agreement is up to Monte-Carlo error
    for x, y in (("Se", "Sp"), ("Sp", "Se"), ("var_phi", "var_psi"), ("cor", "cor")):
        assert a[x].mean == pytest.approx(b[y].mean, abs=0.1 * a[x].sd)


def test_whitened_hyper_move_is_used(telomerase):
    res = mcmc_oracle(telomerase, config=MCMCConfig(iterations=6000, burn_in=2000, thin=2, seed=4))
    assert 0.05 < res.acceptance["hyper_whitened"] < 0.8
