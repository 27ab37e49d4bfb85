import math

import numpy as np
import pytest

from normgeo.conditions import (
    ConditionReport,
    aniso_re_check,
    phase_transition_n0,
    re_statistic,
    rip_envelope,
    rsc_glm_statistic,
)
from normgeo.errors import BracketError, InputError
from normgeo.geometry import ErrorSetSpec, sample_cap
from normgeo.losses import SquaredLoss, glm_curvature, make_loss
from normgeo.norms import make_norm
from normgeo.randomdesign import CovarianceSpec, DesignSpec, ar1_matrix, sample_design, sigma_sqrt
from normgeo.util import substream


def small_cap(p=4, n_dirs=64, seed=3):
    theta = np.zeros(p)
    theta[0] = 1.0
    es = ErrorSetSpec(theta_star=theta, norm=make_norm("l1", p), beta=2.0)
    return sample_cap(es, n_dirs, seed=seed)


def test_re_statistic_hand_case():
    X = np.array([[2.0, 0.0], [0.0, 0.0]])  # (1/2)||X u||^2 = 2 u1^2
    U = np.array([[1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]])
    rep = re_statistic(X, U)
    assert rep.inf_q == pytest.approx(0.0)
    assert rep.sup_q == pytest.approx(2.0)
    assert rep.rsc_kappa == rep.inf_q
    assert rep.n == 2


def test_re_statistic_validation():
    with pytest.raises(InputError):
        re_statistic(np.eye(3), np.ones((4, 2)))
    with pytest.raises(InputError):
        re_statistic(np.eye(3), np.empty((0, 3)))


def test_re_statistic_identity_concentrates():
    cap = small_cap(p=6, n_dirs=128)
    spec = DesignSpec(n=4000, p=6, family="gaussian-iso", seed=0)
    X = sample_design(spec)
    rep = re_statistic(X, cap)
    assert rep.deviation <= 0.15


def test_rip_envelope_planted_rate():
    # plant deviation 3 w / sqrt(n) exactly and recover slope -1/2 and c = 3
    w = 2.0
    reports = []
    for n in (64, 128, 256, 512, 1024):
        dev = 3.0 * w / math.sqrt(n)
        reports.append(ConditionReport(n=n, inf_q=1.0 - dev, sup_q=1.0 + dev, w_hat=w))
    fit = rip_envelope(reports)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.c == pytest.approx(3.0, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.n_points == 5


def test_rip_envelope_median_over_seeds():
    w = 1.5
    reports = []
    for n in (100, 400):
        for wiggle in (0.9, 1.0, 1.1):
            dev = wiggle * 2.0 * w / math.sqrt(n)
            reports.append(ConditionReport(n=n, inf_q=1.0 - dev, sup_q=1.0 + dev, w_hat=w))
    fit = rip_envelope(reports)
    assert fit.c == pytest.approx(2.0, rel=1e-12)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)


def test_rip_envelope_errors():
    with pytest.raises(InputError):
        rip_envelope([])
    bad = ConditionReport(n=50, inf_q=0.9, sup_q=1.1, w_hat=None)
    with pytest.raises(InputError):
        rip_envelope([bad])
    one = ConditionReport(n=50, inf_q=0.9, sup_q=1.1, w_hat=1.0)
    with pytest.raises(InputError):
        rip_envelope([one])


def test_aniso_re_check_exact_design():
    # X = sqrt(n) * row-replicated Sigma^{1/2} makes (1/n)||Xu||^2 = u'Sigma u
    p = 4
    cov = ar1_matrix(p, 0.6)
    root = sigma_sqrt(cov)
    n = p
    X = math.sqrt(n) * root
    cap = small_cap(p=p, n_dirs=96)
    rep = aniso_re_check(X, cap, cov, envelope_c=1.0, w_hat=2.0, seed=9)
    assert rep.extra["normalized_dev"] <= 1e-10
    assert rep.extra["envelope_ok"] and rep.extra["bracket_ok"]
    assert rep.passed
    lmin = rep.extra["lambda_min_restricted"]
    lmax = rep.extra["lambda_max_restricted"]
    assert lmin <= rep.inf_q + 1e-12 and rep.sup_q <= lmax + 1e-12


def test_aniso_re_check_statistical():
    p = 6
    cov = ar1_matrix(p, 0.5)
    spec = DesignSpec(
        n=3000, p=p, family="gaussian-aniso",
        covariance=CovarianceSpec(kind="ar1", rho=0.5), seed=21,
    )
    X = sample_design(spec)
    cap = small_cap(p=p, n_dirs=128, seed=5)
    rep = aniso_re_check(X, cap, cov, envelope_c=3.0, w_hat=2.0, seed=21)
    assert rep.extra["bracket_ok"]
    assert rep.extra["normalized_dev"] < 0.2


def test_aniso_re_check_validation():
    cap = small_cap()
    X = np.eye(4)
    with pytest.raises(InputError):
        aniso_re_check(X, cap, np.eye(4), envelope_c=0.0, w_hat=1.0)
    with pytest.raises(InputError):
        aniso_re_check(X, cap, np.zeros((4, 4)), envelope_c=1.0, w_hat=1.0)


def test_rsc_squared_large_T_matches_re():
    # with squared loss and T beyond every linear predictor the floor,
    # the exact Bregman divergence and the restricted eigenvalue coincide
    rng = substream(400, 1)
    p = 5
    X = rng.standard_normal((200, p))
    theta = np.zeros(p)
    theta[0] = 0.5
    y = X @ theta + 0.1 * rng.standard_normal(200)
    cap = small_cap(p=p, n_dirs=64, seed=11)
    cur = glm_curvature(SquaredLoss(), T=1e6, psi2=1.0)
    rep = rsc_glm_statistic(SquaredLoss(), X, y, theta, cap, cur)
    re = re_statistic(X, cap)
    assert rep.inf_q == pytest.approx(re.inf_q, rel=1e-9)
    assert rep.rsc_kappa == pytest.approx(re.inf_q, rel=1e-9)
    assert rep.extra["identity_margin"] >= -1e-10
    assert rep.passed


def test_rsc_logistic_positive_floor():
    rng = substream(401, 2)
    p = 4
    n = 400
    X = rng.standard_normal((n, p))
    theta = np.zeros(p)
    theta[0] = 0.5
    loss = make_loss("logistic")
    y = loss.sample_response(X @ theta, rng)
    cap = small_cap(p=p, n_dirs=64, seed=12)
    cur = glm_curvature(loss, T=3.0, psi2=1.0)
    rep = rsc_glm_statistic(loss, X, y, theta, cap, cur)
    assert rep.passed
    assert rep.inf_q > 0
    # the floor really is a lower bound on the exact divergence
    assert rep.rsc_kappa >= rep.inf_q - 1e-10


def test_rsc_validation():
    cap = small_cap()
    cur = glm_curvature(make_loss("logistic"), T=3.0)
    with pytest.raises(InputError):
        rsc_glm_statistic(make_loss("logistic"), np.eye(3), np.ones(3), np.zeros(3), cap, cur)


def test_phase_transition_planted():
    # design built so the statistic is exactly n / 800; the threshold sits
    # just under 0.5 so rounding in unit normalization cannot shift the answer
    cap = small_cap(p=3, n_dirs=8, seed=7)

    def designfn(n, seed):
        # re_statistic divides by the 3 rows, so scale to make it n / 800
        return math.sqrt(3.0 * n / 800.0) * np.eye(3)

    n0 = phase_transition_n0(designfn, lambda: cap, threshold=0.4999, n_range=(8, 4096), n_seeds=3)
    assert n0 == 400


def test_phase_transition_brackets():
    cap = small_cap(p=3, n_dirs=8, seed=7)

    def big(n, seed):
        return 100.0 * math.sqrt(n) * np.eye(3)

    def tiny(n, seed):
        return 1e-6 * math.sqrt(n) * np.eye(3)

    with pytest.raises(BracketError):
        phase_transition_n0(big, lambda: cap, n_range=(8, 64), n_seeds=2)
    with pytest.raises(BracketError):
        phase_transition_n0(tiny, lambda: cap, n_range=(8, 64), n_seeds=2)
    with pytest.raises(InputError):
        phase_transition_n0(big, lambda: cap, threshold=1.5)
    with pytest.raises(InputError):
        phase_transition_n0(big, lambda: cap, n_range=(64, 8))
