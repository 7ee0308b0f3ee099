import math

import numpy as np
import pytest
from scipy import stats

import piglm as pg
from piglm.glm import ModelData, fit_irls
from piglm.posterior import grid_posterior, laplace_posterior, rw_metropolis


@pytest.fixture(scope="module")
def gaussian_fit():
    rng = np.random.default_rng(5)
    n = 20
    X = np.column_stack([np.ones(n), np.linspace(-1, 1, n)])
    y = X @ np.array([1.0, 2.0]) + rng.standard_normal(n)
    data = ModelData(y=y, X=X)
    return data, fit_irls("gaussian", "identity", data)


class TestLargeSamplePosterior:
    def test_known_scale_gives_normal(self, credence_primary):
        data, fit = credence_primary
        res = laplace_posterior(fit, None, "poisson")
        post = res.beta_posterior
        assert post.kind == "normal"
        assert post.mean == pytest.approx(fit.beta_hat)
        assert post.cov == pytest.approx(fit.cov_unscaled)
        assert res.scale_marginal is None

    def test_unknown_scale_heavy_tailed_marginal(self, gaussian_fit):
        data, fit = gaussian_fit
        res = laplace_posterior(fit, pg.ScalePriorSpec("jeffreys"), "gaussian")
        n, p = data.n, data.p
        assert res.beta_posterior.kind == "mvt"
        assert res.beta_posterior.dof == n - p
        # scale matrix matches the classical regression posterior s^2 (X'X)^-1
        s2 = fit.deviance / (n - p)
        assert res.beta_posterior.cov == pytest.approx(s2 * fit.cov_unscaled, rel=1e-12)
        assert res.scale_marginal.dof == n - p
        assert res.scale_marginal.scale == pytest.approx(s2, rel=1e-12)
        assert res.phi_map == pytest.approx(s2, rel=1e-12)
        # plug-in variant is normal at the same location/scale
        assert res.plugin.kind == "normal"
        # marginal cdf agrees with an independent reference t distribution
        x = fit.beta_hat[1] + 0.7
        scale = math.sqrt(s2 * fit.cov_unscaled[1, 1])
        ref = stats.t.cdf((x - fit.beta_hat[1]) / scale, n - p)
        assert res.beta_posterior.marginal_cdf(1, x) == pytest.approx(ref, rel=1e-10)

    def test_bounded_scale_prior_dof(self, gaussian_fit):
        data, fit = gaussian_fit
        res = laplace_posterior(fit, pg.ScalePriorSpec("uniform_bounded", bounds=(0.0, 50.0)),
                                "gaussian")
        assert res.beta_posterior.dof == data.n - data.p - 2

    def test_boundary_fit_rejected(self, dapa_dka):
        data, fit = dapa_dka
        with pytest.raises(pg.BoundaryError):
            laplace_posterior(fit, None, "poisson")

    def test_sampling_moments(self, gaussian_fit):
        data, fit = gaussian_fit
        res = laplace_posterior(fit, pg.ScalePriorSpec("jeffreys"), "gaussian")
        draws = res.beta_posterior.sample(40000, pg.RngStream(3, 1))
        assert draws.mean(axis=0) == pytest.approx(fit.beta_hat, abs=0.02)
        assert draws[:, 1].std() == pytest.approx(res.beta_posterior.marginal_sd(1), rel=0.05)
        phi = res.scale_marginal.sample(40000, pg.RngStream(3, 2))
        dof, sc = res.scale_marginal.dof, res.scale_marginal.scale
        assert phi.mean() == pytest.approx(dof * sc / (dof - 2), rel=0.05)


class TestGridPosterior:
    def test_matches_analytic_normal(self):
        # gaussian likelihood with flat prior: posterior is exactly normal
        data = ModelData(y=np.array([0.8, 1.2, 1.0, 0.6]), X=np.ones((4, 1)))
        ll = pg.vectorized_loglik("gaussian", "identity", data)
        # bounds wide enough (~8 sd each side) that truncated mass is negligible
        gp = grid_posterior(ll, [None], [(-3.0, 5.0)], resolution=1601)
        assert gp.proper
        grid, dens = gp.marginal(0)
        ybar = data.y.mean()
        expect = stats.norm.pdf(grid, ybar, 0.5)
        assert np.max(np.abs(dens - expect)) < 1e-6
        m, s = gp.mean_sd(0)
        assert m == pytest.approx(ybar, abs=1e-8)
        assert s == pytest.approx(0.5, abs=1e-5)
        assert gp.marginal_cdf_at(0, ybar + 0.5) == pytest.approx(
            stats.norm.cdf(1.0), abs=1e-5
        )

    def test_prior_shifts_posterior(self):
        data = ModelData(y=np.array([0.8, 1.2, 1.0, 0.6]), X=np.ones((4, 1)))
        ll = pg.vectorized_loglik("gaussian", "identity", data)
        prior = pg.PriorSpec("test_fixed_sigma", beta0=0.0, sigma=0.5)
        gp = grid_posterior(ll, [prior], [(-2.0, 3.0)], resolution=801)
        # conjugate normal-normal update, derived by hand
        post_var = 1.0 / (4.0 / 1.0 + 1.0 / 0.25)
        post_mean = post_var * (data.y.sum() / 1.0)
        m, s = gp.mean_sd(0)
        assert m == pytest.approx(post_mean, abs=1e-6)
        assert s == pytest.approx(math.sqrt(post_var), abs=1e-5)

    def test_sampling(self):
        data = ModelData(y=np.array([0.8, 1.2, 1.0, 0.6]), X=np.ones((4, 1)))
        ll = pg.vectorized_loglik("gaussian", "identity", data)
        gp = grid_posterior(ll, [None], [(-1.0, 3.0)], resolution=801)
        draws = gp.sample(20000, pg.RngStream(4, 1))
        assert draws[:, 0].mean() == pytest.approx(data.y.mean(), abs=0.02)
        assert draws[:, 0].std() == pytest.approx(0.5, rel=0.05)

    def test_improper_flagged_and_density_withheld(self, dapa_dka):
        data, _ = dapa_dka
        ll = pg.vectorized_loglik("poisson", "log", data)
        gp = grid_posterior(ll, [None, None], [(-25.0, 10.0), (-60.0, 20.0)],
                            resolution=201)
        assert not gp.proper
        with pytest.raises(pg.SupportError):
            gp.density()

    def test_dimension_limit(self):
        with pytest.raises(pg.DomainError):
            grid_posterior(lambda b: np.zeros(len(b)), [None] * 4, [(-1, 1)] * 4)


class TestImproprietyDetector:
    def test_heavy_but_integrable_tail_passes(self):
        cauchy = lambda b: float(stats.cauchy.logpdf(b))
        out = pg.detect_impropriety(cauchy)
        assert not out["improper"]
        assert "slope" in out["evidence"]

    def test_flat_tail_flagged(self):
        # one-sided plateau: log density -> 0 as b -> -inf
        flat_left = lambda b: -2.0 * math.log1p(math.exp(b))
        out = pg.detect_impropriety(flat_left)
        assert out["improper"]
        assert not pg.detect_impropriety(flat_left, direction="right")["improper"]
        assert pg.detect_impropriety(flat_left, direction="left")["improper"]

    def test_gaussian_clean(self):
        out = pg.detect_impropriety(lambda b: -0.5 * b * b)
        assert not out["improper"]

    def test_direction_validation(self):
        with pytest.raises(pg.DomainError):
            pg.detect_impropriety(lambda b: -b * b, direction="up")


class TestMetropolis:
    def test_standard_normal_target(self):
        chain = rw_metropolis(lambda b: -0.5 * float(b @ b), np.zeros(1),
                              np.eye(1), 20000, 4000, pg.RngStream(2, 1))
        assert 0.15 < chain.acceptance_rate < 0.6
        assert chain.draws[:, 0].mean() == pytest.approx(0.0, abs=0.05)
        assert chain.draws[:, 0].std() == pytest.approx(1.0, rel=0.05)

    def test_deterministic_given_stream(self):
        kw = dict(n_iter=2000, burn_in=500, stream=pg.RngStream(2, 9))
        a = rw_metropolis(lambda b: -0.5 * float(b @ b), np.zeros(2), np.eye(2), **kw)
        b = rw_metropolis(lambda b: -0.5 * float(b @ b), np.zeros(2), np.eye(2), **kw)
        assert np.array_equal(a.draws, b.draws)

    def test_bad_init_rejected(self):
        with pytest.raises(pg.DomainError):
            rw_metropolis(lambda b: -np.inf, np.zeros(1), np.eye(1), 100, 10,
                          pg.RngStream(2, 2))

    def test_frozen_chain_raises_mixing_error(self):
        # density is a point mass at the start: every proposal is rejected
        target = lambda b: 0.0 if float(np.abs(b).max()) == 0.0 else -np.inf
        with pytest.raises(pg.MixingError):
            rw_metropolis(target, np.zeros(1), np.eye(1), 500, 100, pg.RngStream(2, 3))


class TestNormalizedLikelihoodDensity:
    def test_integral_and_agreement_with_grid(self, credence_primary):
        data, fit = credence_primary
        se = fit.se(1.0)
        g0 = np.linspace(fit.beta_hat[0] - 6 * se[0], fit.beta_hat[0] + 6 * se[0], 201)
        g1 = np.linspace(fit.beta_hat[1] - 6 * se[1], fit.beta_hat[1] + 6 * se[1], 201)
        out = pg.p_formula_density(fit, "poisson", "log", data, (g0, g1))
        # frozen value: the raw normal-approximation constant overshoots the
        # true normalizer by ~6e-4 on this model
        assert out["raw_integral"] == pytest.approx(1.0005853952151607, rel=1e-9)
        gp = grid_posterior(pg.vectorized_loglik("poisson", "log", data), [None, None],
                            [(g0[0], g0[-1]), (g1[0], g1[-1])], resolution=201)
        assert np.max(np.abs(gp.density() - out["renormalized"])) < 1e-3

    def test_boundary_rejected(self, dapa_dka):
        data, fit = dapa_dka
        with pytest.raises(pg.BoundaryError):
            pg.p_formula_density(fit, "poisson", "log", data,
                                 (np.linspace(-1, 1, 11), np.linspace(-1, 1, 11)))
