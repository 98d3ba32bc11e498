import numpy as np
import pytest
from numpy.testing import assert_allclose

from msvar.priors import (
    DummyObservations,
    MinnesotaConfig,
    build_dummies,
    dummies_to_niw,
    minnesota_niw,
    validate_moments,
)

# the six-variable, four-lag worked configuration with nonzero intercept means
INTERCEPT = np.array([0.15, 0.06, 0.15, 0.0, 0.0, 0.0])
CFG6 = MinnesotaConfig(phi=[0, 0, 0, 1, 1, 1], eps=20.0, lambda1=20.0, lambda2=1.0,
                       tau=np.ones(6), p=4, l=1, intercept_mean=INTERCEPT)
V0_DIAG = np.array([0.047, 0.098, 0.096, 0.092, 0.094, 0.133]) ** 2


class TestBuildDummies:
    def test_worked_configuration_structure(self):
        dm = build_dummies(CFG6)
        assert dm.yhat.shape == (6, 25)
        assert dm.design.shape == (25, 25)
        assert_allclose(dm.yhat[:, 0], 20.0 * INTERCEPT)
        assert_allclose(dm.yhat[:, 1:7], 20.0 * np.diag([0, 0, 0, 1, 1, 1.0]))
        assert_allclose(dm.yhat[:, 7:], 0.0)
        expected_design = 20.0 * np.block([
            [np.ones((1, 1)), np.zeros((1, 24))],
            [np.zeros((24, 1)), np.kron(np.diag([1.0, 2.0, 3.0, 4.0]), np.eye(6))],
        ])
        assert_allclose(dm.design, expected_design)

    def test_zero_lag_decay_weights_lags_equally(self):
        cfg = MinnesotaConfig(phi=[1, 0], eps=5.0, lambda1=3.0, lambda2=0.0,
                              tau=[1.0, 2.0], p=3, l=1)
        dm = build_dummies(cfg)
        lag_block = dm.design[1:, 1:]
        assert_allclose(lag_block, 3.0 * np.kron(np.eye(3), np.diag([1.0, 2.0])))

    def test_minimal_dimensions(self):
        cfg = MinnesotaConfig(phi=[1], eps=0.5, lambda1=2.0, lambda2=1.0, tau=[3.0], p=1, l=1)
        dm = build_dummies(cfg)
        assert_allclose(dm.design, np.diag([0.5, 6.0]))

    def test_rank_deficient_design_rejected(self):
        with pytest.raises(ValueError):
            DummyObservations(np.zeros((1, 2)), np.array([[1.0, 0.0], [1.0, 0.0]]))


class TestDummiesToNiw:
    def test_worked_configuration_means(self):
        prior = dummies_to_niw(build_dummies(CFG6), nu0=8.0, v0=np.diag(V0_DIAG))
        assert_allclose(prior.pi0_mat[:, 0], INTERCEPT, atol=1e-13)
        assert_allclose(np.diag(prior.pi0_mat[:, 1:7]), [0, 0, 0, 1, 1, 1.0], atol=1e-13)
        off = prior.pi0_mat[:, 1:7] - np.diag(np.diag(prior.pi0_mat[:, 1:7]))
        assert_allclose(off, 0.0, atol=1e-13)
        assert_allclose(prior.pi0_mat[:, 7:], 0.0, atol=1e-13)

    def test_intercept_variance(self):
        prior = dummies_to_niw(build_dummies(CFG6), nu0=8.0, v0=np.diag(V0_DIAG))
        for i in range(6):
            assert_allclose(prior.lambda0[0, 0] * V0_DIAG[i], V0_DIAG[i] / CFG6.eps**2,
                            rtol=1e-12)

    def test_lag_decay_ratio(self):
        prior = dummies_to_niw(build_dummies(CFG6), nu0=8.0, v0=np.diag(V0_DIAG))
        lam = np.diag(prior.lambda0)
        for ell in (2, 3, 4):
            assert_allclose(lam[1 + (ell - 1) * 6] / lam[1], ell ** (-2.0 * CFG6.lambda2),
                            rtol=1e-12)

    def test_lambda0_exactly_diagonal_with_reciprocal_identity(self):
        dm = build_dummies(CFG6)
        prior = dummies_to_niw(dm, nu0=8.0, v0=np.diag(V0_DIAG))
        off_diag = prior.lambda0 - np.diag(np.diag(prior.lambda0))
        assert np.max(np.abs(off_diag)) == 0.0
        assert_allclose(1.0 / np.diag(prior.lambda0), np.diag(dm.design) ** 2, rtol=1e-10)


class TestValidateMoments:
    def test_worked_configuration_passes(self):
        prior = minnesota_niw(CFG6, nu0=8.0, v0=np.diag(V0_DIAG))
        report = validate_moments(prior, CFG6, np.sqrt(V0_DIAG))
        assert report.max_violation < 1e-10

    def test_perturbed_scale_flagged(self):
        prior = minnesota_niw(CFG6, nu0=8.0, v0=np.diag(V0_DIAG))
        lam = prior.lambda0.copy()
        lam[3, 3] *= 2.0
        bad = type(prior)(pi0=prior.pi0, lambda0=lam, nu0=prior.nu0, v0=prior.v0)
        report = validate_moments(bad, CFG6, np.sqrt(V0_DIAG))
        assert report.max_violation > 1e-6

    def test_all_stationary_flags(self):
        cfg = MinnesotaConfig(phi=np.zeros(3), eps=10.0, lambda1=5.0, lambda2=1.0,
                              tau=np.ones(3), p=2, l=1,
                              intercept_mean=np.array([0.2, -0.1, 0.05]))
        prior = minnesota_niw(cfg, nu0=5.0, v0=np.eye(3))
        assert_allclose(prior.pi0_mat[:, 0], cfg.intercept_mean, atol=1e-13)
        assert_allclose(prior.pi0_mat[:, 1:], 0.0, atol=1e-13)
        report = validate_moments(prior, cfg, np.ones(3))
        assert report.max_violation < 1e-10

    def test_off_diagonal_variance_formula(self):
        # implied prior variance of (A_ell)_{ij} is (sigma_i / (ell^l2 l1 tau_j))^2
        cfg = MinnesotaConfig(phi=[1, 0], eps=4.0, lambda1=7.0, lambda2=0.8,
                              tau=[1.5, 0.7], p=3, l=1)
        sigma = np.array([0.9, 1.7])
        prior = minnesota_niw(cfg, nu0=5.0, v0=np.diag(sigma**2))
        for ell in range(1, 4):
            for i in range(2):
                for j in range(2):
                    col = 1 + (ell - 1) * 2 + j
                    implied = prior.lambda0[col, col] * sigma[i] ** 2
                    target = (sigma[i] / (ell**0.8 * 7.0 * cfg.tau[j])) ** 2
                    assert_allclose(implied, target, rtol=1e-12)


class TestConfigValidation:
    def test_bad_phi(self):
        with pytest.raises(ValueError):
            MinnesotaConfig(phi=[0.5], eps=1.0, lambda1=1.0, lambda2=0.0, tau=[1.0], p=1, l=1)

    def test_nonpositive_tightness(self):
        with pytest.raises(ValueError):
            MinnesotaConfig(phi=[1], eps=1.0, lambda1=0.0, lambda2=0.0, tau=[1.0], p=1, l=1)
