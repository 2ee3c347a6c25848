import json
import math

import numpy as np
import pytest

from centilebench.cohort import Cohort, VisitSchedule, generate_cohort
from centilebench.model import LognormalAR1Model, conditional_percentile
from centilebench.mvn import (
    MVNFit,
    fit_mvn,
    gaussian_log_likelihood,
    mvn_conditional_centile,
    mvn_marginal_centile,
)
from centilebench.numerics import RngStream, std_normal_quantile
from centilebench.splines import design_matrix

from conftest import true_log_mean


@pytest.fixture(scope="module")
def fitted(recovery_cohort, spec5):
    return fit_mvn(recovery_cohort, spec5)


@pytest.fixture(scope="module")
def oracle_fit(spec5):
    """The true model expressed as an MVN fit."""
    grid = np.linspace(16.0, 36.0, 201)
    coefs, *_ = np.linalg.lstsq(design_matrix(spec5, grid), true_log_mean(grid), rcond=None)
    return MVNFit(spec=spec5, mean_coefs=tuple(coefs), sigma_hat=0.1, rho_hat=0.6)


class TestFit:
    def test_recovers_covariance_parameters(self, fitted):
        assert fitted.rho_hat == pytest.approx(0.6, abs=0.05)
        assert fitted.sigma_hat == pytest.approx(0.1, abs=0.005)

    def test_mean_curve_recovery(self, fitted, spec5):
        grid = np.linspace(18.0, 34.0, 161)
        m_hat = np.exp(design_matrix(spec5, grid) @ np.array(fitted.mean_coefs))
        assert np.max(np.abs(m_hat - np.exp(true_log_mean(grid)))) < 0.4

    def test_rho_zero_recovered(self, spec5):
        indep = LognormalAR1Model(rho=0.0)
        sched = VisitSchedule(attendance_prob=1.0)
        cohort = generate_cohort(indep, sched, 4000, RngStream(55).child(0))
        fit = fit_mvn(cohort, spec5)
        assert abs(fit.rho_hat) < 0.03

    def test_subject_without_observations_skipped(self, model, schedule, spec5):
        cohort = generate_cohort(model, schedule, 50, RngStream(2).child(0))
        observed = cohort.observed.copy()
        observed[0] = False
        masked = Cohort(
            model=model, schedule=schedule, times=cohort.times,
            values=cohort.values, observed=observed,
        )
        fit = fit_mvn(masked, spec5)
        assert fit.n_obs == int(observed.sum())

    def test_loglik_consistency_between_paths(self, fitted, recovery_cohort, spec5):
        direct = gaussian_log_likelihood(
            recovery_cohort, spec5, fitted.mean_coefs, fitted.sigma_hat, fitted.rho_hat
        )
        assert fitted.loglik == pytest.approx(direct, abs=1e-5)

    @pytest.mark.parametrize("seed", [404, 71, 72])
    def test_ml_dominates_truth(self, model, schedule, spec5, oracle_fit, seed):
        cohort = generate_cohort(model, schedule, 400, RngStream(seed).child(0))
        fit = fit_mvn(cohort, spec5)
        at_truth = gaussian_log_likelihood(
            cohort, spec5, oracle_fit.mean_coefs, 0.1, 0.6
        )
        assert fit.loglik >= at_truth - 1e-6

    def test_scale_invariance(self, recovery_cohort, spec5, fitted, model, schedule):
        scaled = Cohort(
            model=model, schedule=schedule, times=recovery_cohort.times,
            values=recovery_cohort.values * 3.0, observed=recovery_cohort.observed,
        )
        fit3 = fit_mvn(scaled, spec5)
        assert fit3.sigma_hat == pytest.approx(fitted.sigma_hat, abs=1e-8)
        assert fit3.rho_hat == pytest.approx(fitted.rho_hat, abs=1e-6)
        shift = np.array(fit3.mean_coefs) - np.array(fitted.mean_coefs)
        assert np.allclose(shift, math.log(3.0), atol=1e-6)


class TestMarginalCentile:
    def test_median_is_exp_mean(self, fitted):
        assert mvn_marginal_centile(fitted, 24.0, 0.5) == pytest.approx(
            math.exp(float(fitted.mean_at(24.0)[0])), rel=1e-12
        )

    def test_oracle_week22_third(self, oracle_fit):
        assert mvn_marginal_centile(oracle_fit, 22.0, 0.03) == pytest.approx(56.3, abs=0.05)

    def test_strictly_increasing_in_tau(self, fitted):
        vals = [mvn_marginal_centile(fitted, 28.0, tau) for tau in (0.03, 0.1, 0.5, 0.9, 0.97)]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestConditionalCentile:
    def test_oracle_path_a_median(self, oracle_fit):
        y_a = math.exp(float(true_log_mean(22.0)) + std_normal_quantile(0.03) * 0.1)
        assert mvn_conditional_centile(oracle_fit, 22.0, y_a, 26.0, 0.50) == pytest.approx(
            61.0, abs=0.05
        )

    def test_oracle_agrees_with_analytic_truth(self, oracle_fit, model):
        for name, prior_tau in (("A", 0.03), ("B", 0.97)):
            y_prev = math.exp(
                float(true_log_mean(22.0)) + std_normal_quantile(prior_tau) * 0.1
            )
            for tau in (0.03, 0.10, 0.50, 0.90, 0.97):
                ours = mvn_conditional_centile(oracle_fit, 22.0, y_prev, 26.0, tau)
                truth = conditional_percentile(model, 22.0, 26.0, y_prev, tau)
                assert abs(ours - truth) < 1e-10

    def test_rho_zero_reduces_to_marginal(self, fitted, spec5):
        indep = MVNFit(
            spec=spec5, mean_coefs=fitted.mean_coefs,
            sigma_hat=fitted.sigma_hat, rho_hat=0.0,
        )
        for tau in (0.1, 0.5, 0.9):
            assert mvn_conditional_centile(indep, 22.0, 70.0, 26.0, tau) == pytest.approx(
                mvn_marginal_centile(indep, 26.0, tau), rel=1e-12
            )

    def test_validation(self, fitted):
        with pytest.raises(ValueError):
            mvn_conditional_centile(fitted, 22.0, -1.0, 26.0, 0.5)
        with pytest.raises(ValueError):
            mvn_conditional_centile(fitted, 18.0, 66.0, 26.0, 0.5)


class TestExport:
    def test_json_fields(self, fitted):
        payload = json.loads(fitted.to_json())
        assert set(payload) == {"knots", "mean_coefs", "sigma_hat", "rho_hat"}
        assert len(payload["mean_coefs"]) == 5
        assert 0.5 < payload["rho_hat"] < 0.7
