import math

import numpy as np
import pytest

from normgeo.errors import DegenerateSetError, DimensionTooLargeError, InputError
from normgeo.geometry import (
    ErrorSetSpec,
    _width_finite_set,
    membership,
    sample_cap,
    sandwich_check,
    width_ball_via_cone,
    width_cap,
    width_cone_analytic,
    width_norm_ball,
)
from normgeo.norms import GroupPartition, SupportSpec, compat_empirical, make_norm

E_ABS_GAUSS = math.sqrt(2.0 / math.pi)          # mean of |N(0,1)|
CHI2_MEAN = math.sqrt(math.pi / 2.0)            # mean of chi with 2 dof
CHI4_MEAN = 0.75 * math.sqrt(2.0 * math.pi)     # mean of chi with 4 dof
# width of a right-angle planar cone intersected with the unit disk:
# P(both coords positive) * E[chi_2] + P(one positive) * E|N(0,1)|
QUARTER_CONE_WIDTH = 0.25 * CHI2_MEAN + 0.5 * E_ABS_GAUSS


def l1_errset(p, beta=2.0, variant="regularized"):
    norm = make_norm("l1", p)
    theta = np.zeros(p)
    theta[0] = 1.0
    return ErrorSetSpec(theta_star=theta, norm=norm, beta=beta, variant=variant)


def test_membership_basics():
    es = l1_errset(3)
    assert membership(es, np.zeros(3))
    assert membership(es, np.array([-1.0, 0.0, 0.0]))
    assert not membership(es, np.array([1.0, 0.0, 0.0]))
    ec = l1_errset(3, variant="constrained")
    assert membership(ec, np.array([-0.5, 0.2, 0.2]))
    assert not membership(ec, np.array([0.0, 0.1, 0.0]))


def test_membership_beta_inf_is_constrained():
    es = ErrorSetSpec(theta_star=np.array([1.0, 0.0]), norm=make_norm("l1", 2),
                      beta=math.inf)
    assert es.variant == "constrained"
    assert es.inv_beta == 0.0


def test_errorset_validation():
    norm = make_norm("l1", 3)
    with pytest.raises(InputError):
        ErrorSetSpec(theta_star=np.zeros(2), norm=norm)
    with pytest.raises(InputError):
        ErrorSetSpec(theta_star=np.zeros(3), norm=norm, beta=1.0)
    with pytest.raises(InputError):
        ErrorSetSpec(theta_star=np.zeros(3), norm=norm, variant="loose")


def test_constrained_subset_of_regularized():
    # every member of E_c is a member of E_r, checked on 1e4 random deltas
    rng = np.random.default_rng(31)
    es_r = l1_errset(6)
    es_c = l1_errset(6, variant="constrained")
    free = rng.standard_normal((5000, 6)) * rng.choice([0.05, 0.5, 2.0], size=(5000, 1))
    # bias half the draws toward the descent cone so members actually occur
    biased = rng.standard_normal((5000, 6)) * 0.2
    biased[:, 0] = -np.abs(rng.standard_normal(5000))
    count = 0
    for d in np.vstack([free, biased]):
        if membership(es_c, d):
            count += 1
            assert membership(es_r, d)
    assert count > 100  # the check actually exercised members


def test_sample_cap_matches_exact_2d_cone():
    # constrained L1 cone at theta*=e1 is exactly {u : u_1 <= -|u_2|}
    es = l1_errset(2, variant="constrained")
    cap = sample_cap(es, 2000, seed=13)
    U = cap.directions
    assert np.all(np.abs(np.linalg.norm(U, axis=1) - 1.0) < 1e-9)
    assert np.all(U[:, 0] <= -np.abs(U[:, 1]) + 1e-9)
    # conversely, interior cone directions must be accepted by membership
    ang = np.linspace(math.pi * 0.77, math.pi * 1.23, 101)
    for a in ang:
        u = np.array([math.cos(a), math.sin(a)])
        assert membership(es, 1e-3 * u)


def test_sample_cap_alphas_are_members():
    es = l1_errset(8)
    cap = sample_cap(es, 500, seed=2)
    assert cap.n_dirs == 500
    assert 0.0 <= cap.rejection_rate < 1.0
    for u, a in zip(cap.directions[:100], cap.alphas[:100]):
        assert membership(es, a * u)


def test_sample_cap_deterministic():
    es = l1_errset(10)
    c1 = sample_cap(es, 300, seed=5)
    c2 = sample_cap(es, 300, seed=5)
    assert np.array_equal(c1.directions, c2.directions)
    assert np.array_equal(c1.alphas, c2.alphas)


def test_sample_cap_degenerate():
    # theta* = 0 gives an error set containing only the origin
    norm = make_norm("l1", 4)
    es = ErrorSetSpec(theta_star=np.zeros(4), norm=norm, beta=2.0)
    with pytest.raises(DegenerateSetError) as exc:
        sample_cap(es, 10, seed=1, max_proposals=20000)
    assert exc.value.n_proposed >= 20000


def test_sample_cap_validation():
    with pytest.raises(InputError):
        sample_cap(l1_errset(4), 0, seed=1)


def test_width_norm_ball_l1_p1():
    est = width_norm_ball(make_norm("l1", 1), 200000, seed=8)
    assert est.mean == pytest.approx(E_ABS_GAUSS, abs=4 * est.stderr)
    assert est.n_mc == 200000


def test_width_norm_ball_l2_p4():
    est = width_norm_ball(make_norm("l2", 4), 200000, seed=9)
    assert est.mean == pytest.approx(CHI4_MEAN, abs=4 * est.stderr)


def test_width_norm_ball_l1_log_growth():
    # w(B_1 dual sup) = E max|g_i| grows like sqrt(2 log p)
    for p in (16, 64, 256):
        est = width_norm_ball(make_norm("l1", p), 20000, seed=10)
        assert est.mean <= math.sqrt(2.0 * math.log(2 * p))
        assert est.mean >= 0.5 * math.sqrt(2.0 * math.log(p))


def test_width_norm_ball_deterministic():
    a = width_norm_ball(make_norm("l1", 5), 5000, seed=3)
    b = width_norm_ball(make_norm("l1", 5), 5000, seed=3)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


def test_width_cap_two_point():
    cap = np.array([[1.0, 0.0], [-1.0, 0.0]])
    est = width_cap(cap, 200000, seed=4)
    assert est.mean == pytest.approx(E_ABS_GAUSS, abs=4 * est.stderr)


def test_width_cap_circle_grid():
    ang = np.linspace(0, 2 * math.pi, 720, endpoint=False)
    grid = np.column_stack([np.cos(ang), np.sin(ang)])
    est = width_cap(grid, 200000, seed=6)
    assert est.mean == pytest.approx(CHI2_MEAN, abs=4 * est.stderr + 1e-3)


def test_width_cap_nested_monotone_same_draws():
    rng = np.random.default_rng(44)
    B = rng.standard_normal((300, 6))
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    A = B[:120]
    wa = width_cap(A, 4000, seed=12)
    wb = width_cap(B, 4000, seed=12)
    assert wb.mean >= wa.mean  # exact with common draws


def test_width_cap_scaling_invariant():
    rng = np.random.default_rng(45)
    U = rng.standard_normal((100, 5))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    scaled = 7.3 * U
    renorm = scaled / np.linalg.norm(scaled, axis=1, keepdims=True)
    a = width_cap(U, 3000, seed=3)
    b = width_cap(renorm, 3000, seed=3)
    assert b.mean == pytest.approx(a.mean, rel=1e-12)


def test_width_set_scaling_exact():
    # w(c A) = c w(A), exact with common draws
    rng = np.random.default_rng(46)
    pts = rng.standard_normal((50, 4))
    a = _width_finite_set(pts, 3000, seed=21)
    b = _width_finite_set(2.5 * pts, 3000, seed=21)
    assert b.mean == pytest.approx(2.5 * a.mean, rel=1e-12)


def test_width_set_scaling_statistical():
    rng = np.random.default_rng(47)
    pts = rng.standard_normal((50, 4))
    a = _width_finite_set(pts, 40000, seed=22)
    b = _width_finite_set(3.0 * pts, 40000, seed=23)
    se = math.sqrt((3.0 * a.stderr) ** 2 + b.stderr**2)
    assert abs(b.mean - 3.0 * a.mean) <= 3.0 * se


def test_width_convex_hull_invariant():
    # adding convex combinations leaves every per-draw supremum unchanged
    rng = np.random.default_rng(48)
    pts = rng.standard_normal((40, 3))
    mids = 0.5 * (pts[:-1] + pts[1:])
    a = _width_finite_set(pts, 3000, seed=30)
    b = _width_finite_set(np.vstack([pts, mids]), 3000, seed=30)
    assert a.mean == b.mean


def test_width_translation_invariant():
    rng = np.random.default_rng(49)
    pts = rng.standard_normal((60, 4))
    b_vec = rng.standard_normal(4)
    n_mc = 40000
    a = _width_finite_set(pts, n_mc, seed=31)
    t = _width_finite_set(pts + b_vec, n_mc, seed=31)
    # with common draws the difference is the mean of <g, b>
    assert abs(t.mean - a.mean) <= 4.0 * np.linalg.norm(b_vec) / math.sqrt(n_mc)


def test_width_rotation_invariant():
    rng = np.random.default_rng(50)
    pts = rng.standard_normal((60, 4))
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    a = _width_finite_set(pts, 60000, seed=32)
    b = _width_finite_set(pts @ q.T, 60000, seed=32)
    assert abs(a.mean - b.mean) <= 5.0 * math.sqrt(a.stderr**2 + b.stderr**2)


def test_width_cone_analytic_values():
    l1 = make_norm("l1", 8)
    assert width_cone_analytic(l1, SupportSpec(s=1)) == pytest.approx(
        math.sqrt(2.0 * math.log(8.0) + 1.25)
    )
    grp = make_norm("group", 12, GroupPartition.equal_blocks(12, 4))
    assert width_cone_analytic(grp, SupportSpec(active_groups=1)) == pytest.approx(
        math.sqrt(2.0 * (4.0 + math.log(2.0)) + 1.0)
    )
    assert width_cone_analytic(make_norm("l2", 49), SupportSpec()) == 7.0


def test_width_cone_analytic_errors():
    l1 = make_norm("l1", 8)
    with pytest.raises(InputError):
        width_cone_analytic(l1, SupportSpec(s=8))
    with pytest.raises(InputError):
        width_cone_analytic(l1, SupportSpec())
    grp = make_norm("group", 12, GroupPartition.equal_blocks(12, 4))
    with pytest.raises(InputError):
        width_cone_analytic(grp, SupportSpec(active_groups=3))


def test_width_ball_via_cone_values():
    assert width_ball_via_cone(make_norm("l1", 256)) == pytest.approx(
        math.sqrt(2.0 * math.log(256.0) + 1.25)
    )
    assert width_ball_via_cone(make_norm("l2", 49)) == 7.0
    grp = make_norm("group", 12, GroupPartition.equal_blocks(12, 4))
    assert width_ball_via_cone(grp) == pytest.approx(math.sqrt(2.0 * (4 + math.log(2)) + 1))


@pytest.mark.parametrize("p", [16, 64])
def test_width_ball_via_cone_dominates_mc(p):
    bound = width_ball_via_cone(make_norm("l1", p))
    est = width_norm_ball(make_norm("l1", p), 40000, seed=14)
    assert bound >= est.mean - 3 * est.stderr


def test_width_ball_via_cone_group_dominates_mc():
    grp = make_norm("group", 16, GroupPartition.equal_blocks(16, 4))
    bound = width_ball_via_cone(grp)
    est = width_norm_ball(grp, 40000, seed=15)
    assert bound >= est.mean - 3 * est.stderr


def test_sandwich_small_p_holds():
    rep = sandwich_check(l1_errset(2), rho=1.0, n_mc=4000, seed=7)
    assert rep.holds
    assert rep.factor == pytest.approx(3.0)
    assert rep.w_constrained.mean <= rep.w_regularized.mean + 1e-12


def test_sandwich_cone_width_matches_quarter_cone_oracle():
    # at theta*=e1 the constrained L1 cone in the plane is a right-angle cone
    rep = sandwich_check(l1_errset(2), rho=1.0, n_mc=60000, seed=19, n_grid=4096)
    est = rep.w_cone_constrained
    assert est.mean == pytest.approx(QUARTER_CONE_WIDTH, abs=4 * est.stderr + 2e-3)


def test_sandwich_errors():
    with pytest.raises(DimensionTooLargeError):
        sandwich_check(l1_errset(9), rho=1.0, n_mc=100, seed=1)
    with pytest.raises(InputError):
        sandwich_check(l1_errset(2, variant="constrained"), rho=1.0, n_mc=100, seed=1)
    with pytest.raises(InputError):
        sandwich_check(l1_errset(2), rho=0.0, n_mc=100, seed=1)


def test_compat_empirical_p3_brute_force():
    # p=3, theta*=e1, beta=2: the error-set cone is {u1<=0, |u2|+|u3| <= 3|u1|}
    # and sup ||u||_1 / ||u||_2 over it equals sqrt(3) at u = -(1,1,1)/sqrt(3)
    norm = make_norm("l1", 3)
    es = l1_errset(3)
    est = compat_empirical(norm, es, 100000, seed=55)

    rng = np.random.default_rng(991)
    U = rng.standard_normal((1000000, 3))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    tgrid = 2.0 ** np.arange(-10, 3)
    theta = es.theta_star
    best = 0.0
    for start in range(0, U.shape[0], 100000):
        blk = U[start : start + 100000]
        ok = np.zeros(blk.shape[0], dtype=bool)
        ru = norm.value_rows(blk)
        for t in tgrid:
            vals = norm.value_rows(theta[None, :] + t * blk)
            ok |= vals <= 1.0 + t * ru / 2.0 + 1e-12
        if ok.any():
            best = max(best, float(ru[ok].max()))
    assert best == pytest.approx(math.sqrt(3.0), abs=1e-3)
    assert abs(est.empirical_sup - best) <= 0.01
    assert est.analytic_bound == 4.0
    assert est.empirical_sup <= est.analytic_bound


def test_compat_empirical_l2_is_one():
    norm = make_norm("l2", 6)
    theta = np.ones(6)
    es = ErrorSetSpec(theta_star=theta, norm=norm, beta=2.0)
    est = compat_empirical(norm, es, 5000, seed=3)
    assert est.empirical_sup == pytest.approx(1.0, abs=1e-12)
    assert est.analytic_bound == 1.0
