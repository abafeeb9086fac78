import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from wrtree.boundary_fields import (
    boundary_value_for_margin,
    critical_field_asymptotic,
    critical_scan,
    discontinuity_certificate,
    dphi,
    f_plus,
    field_table,
    fixed_points_inner,
    fixed_points_outer,
    initial_state,
    inner_map,
    iterate_outer,
    outer_map,
    phi,
    positive_root_exists,
    root_conditional,
    root_law_time_evolved,
    root_neighbour_fields,
    run_recursion,
    subtree_lower_bounds,
)
from wrtree.dynamics import make_kernel
from wrtree.static_model import ModelParams, ParameterError
from wrtree.tree import (
    SpinConfiguration,
    build_truncation,
    constant_configuration,
    subtree_mask,
    subtree_pattern,
)

mpmath.mp.dps = 50


def phi_mp(beta, x):
    return float(mpmath.log(mpmath.cosh(x + beta) / mpmath.cosh(x - beta)) / 2)


def fields(eta, beta=1.0, t=0.5, lam=1.0, bv=0.0):
    st_ = initial_state(eta, ModelParams(eta.truncation.d, beta, lam), make_kernel(t))
    return run_recursion(st_, bv)


def spins(draw_list, n):
    return st.lists(st.sampled_from(draw_list), min_size=n, max_size=n)


# -- phi


def test_phi_examples():
    assert phi(1.3, 0.0) == 0.0
    assert phi(2.0, 50.0) == pytest.approx(2.0, abs=1e-12)
    assert phi(1.0, 1.0) == pytest.approx(0.5 * math.log(math.cosh(2.0)), abs=1e-15)


@pytest.mark.parametrize("beta,x", [(1e3, 1e3), (1e3, -999.0), (0.5, 700.0), (1e3, 0.1),
                                    (3.0, -2.5), (1e-6, 4.0)])
def test_phi_overflow_safe(beta, x):
    assert math.isfinite(phi(beta, x))
    assert phi(beta, x) == pytest.approx(phi_mp(beta, x), rel=1e-12, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 50), st.floats(-100, 100))
def test_phi_odd_bounded_and_derivative(beta, x):
    assert phi(beta, -x) == -phi(beta, x)
    assert abs(phi(beta, x)) <= beta + 1e-14 * max(1.0, abs(x))
    h = 1e-6
    fd = (phi(beta, x + h) - phi(beta, x - h)) / (2 * h)
    assert dphi(beta, x) == pytest.approx(fd, abs=1e-6)


# -- recursion


def test_empty_second_layer_gives_zero_fields():
    st_ = fields(constant_configuration(build_truncation(3, 4), 0), bv=2.0)
    assert not st_.field.any()


def test_homogeneous_collapse_exact():
    d, n, beta, t = 3, 6, 1.7, 0.4
    tr = build_truncation(d, n)
    st_ = fields(constant_configuration(tr, 1), beta, t)
    ht = make_kernel(t).ht
    x = 0.0
    for k in range(n, 0, -1):
        ring = st_.field[tr.ring(k)]
        assert (ring == ring[0]).all()
        assert ring[0] == pytest.approx(x, abs=1e-14)
        x = float(outer_map(x, d, beta, ht))


@settings(max_examples=40, deadline=None)
@given(spins([-1, 0, 1], 10), st.floats(0.1, 4), st.floats(0.05, 3))
def test_fields_match_exhaustive_sum(spin, beta, t):
    tr = build_truncation(2, 2)
    eta = SpinConfiguration(tr, np.array(spin))
    st_ = fields(eta, beta, t)
    parent = oracles.small_tree(2, 2)
    for v in range(1, tr.n_vertices):
        assert st_.field[v] == pytest.approx(oracles.subtree_field(parent, spin, v, beta, t),
                                             abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.floats(0.1, 5), st.floats(0.02, 3), st.data())
def test_field_bound_and_holes(d, beta, t, data):
    tr = build_truncation(d, 3)
    eta = SpinConfiguration(tr, np.array(data.draw(spins([-1, 0, 1], tr.n_vertices))))
    f = fields(eta, beta, t, bv=data.draw(st.floats(-10, 10))).field
    inner = slice(1, tr.ring(3).start)
    assert (np.abs(f[inner]) <= d * beta / 2 + 1e-12).all()
    assert not f[~eta.occupied].any()


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 3), st.floats(0.1, 5), st.floats(0.02, 3), st.data())
def test_monotone_in_sign_flips(d, beta, t, data):
    tr = build_truncation(d, 3)
    spin = np.array(data.draw(spins([-1, 0, 1], tr.n_vertices)))
    minus = np.flatnonzero(spin == -1)
    if minus.size == 0:
        return
    v = int(data.draw(st.sampled_from(minus.tolist())))
    lo = SpinConfiguration(tr, spin)
    hi = lo.with_spin(v, 1)
    bv = data.draw(st.floats(-5, 5))
    assert (fields(hi, beta, t, bv=bv).field >= fields(lo, beta, t, bv=bv).field - 1e-12).all()
    assert (fields(lo, beta, t, bv=bv + 1).field >= fields(lo, beta, t, bv=bv).field - 1e-12).all()


def test_hole_insertion_not_monotone():
    # a minus site under a strong plus subtree still pushes its parent up
    tr = build_truncation(2, 3)
    eta = constant_configuration(tr, 1).with_spin(1, -1)
    a = fields(eta, beta=4.0, t=2.0).field
    b = fields(eta.with_spin(1, 0), beta=4.0, t=2.0).field
    assert a[1] > b[1] == 0


def test_field_table_rows():
    tr = build_truncation(2, 2)
    st_ = fields(constant_configuration(tr, 1))
    rows = field_table(st_)
    assert len(rows) == tr.n_edges
    assert rows[0][:2] == (1, 0)
    assert all(f == st_.field[c] for c, _, f in rows)


# -- root conditional


def test_root_conditional_no_neighbours():
    tr = build_truncation(3, 2)
    eta = SpinConfiguration(tr, np.zeros(tr.n_vertices))
    st_ = fields(eta, lam=1.0)
    assert np.allclose(root_conditional(st_), [1 / 3] * 3, atol=1e-15)
    st_ = fields(eta, lam=4.0)
    assert np.allclose(root_conditional(st_), np.array([4, 1, 4]) / 9, atol=1e-15)


def test_root_conditional_symmetric():
    tr = build_truncation(2, 2)
    # vertex 2 with children (6, 7) mirrors vertex 1 with children (4, 5)
    spin = np.array([0, 1, -1, 0, 1, 0, -1, 0, 1, -1])
    st_ = fields(SpinConfiguration(tr, spin), beta=1.3, t=0.7)
    r = root_conditional(st_)
    assert r[0] == pytest.approx(r[2], abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(spins([-1, 0, 1], 10), st.floats(0.1, 4), st.floats(-2, 2), st.floats(0.05, 3))
def test_root_conditional_exhaustive(spin, beta, log_lam, t):
    tr = build_truncation(2, 2)
    lam = 10**log_lam
    st_ = fields(SpinConfiguration(tr, np.array(spin)), beta, t, lam)
    ref = oracles.root_conditional(oracles.small_tree(2, 2), spin, beta, lam, t)
    assert np.allclose(root_conditional(st_), ref, atol=1e-10)


def test_root_law_time_evolved_is_probability():
    tr = build_truncation(2, 2)
    st_ = fields(constant_configuration(tr, 1), 2.0, 0.3)
    law = root_law_time_evolved(st_)
    assert law.sum() == pytest.approx(1) and (law >= 0).all()


# -- fixed points


def test_outer_figure_parameters():
    ht = make_kernel(0.2).ht
    rep = fixed_points_outer(4, 2.0, ht)
    pos = rep.positive
    assert len(pos) == 1 and rep.attractive[rep.fixed_points.index(pos[0])]
    x, steps = iterate_outer(4, 2.0, ht, tol=1e-13)
    assert abs(x - pos[0]) < 1e-10 and steps < 1000
    for r in rep.fixed_points:
        assert abs(outer_map(r, 4, 2.0, ht) - r) < 1e-10


def test_outer_saturates_at_small_time():
    ht = make_kernel(1e-4).ht
    assert fixed_points_outer(4, 2.0, ht).positive[0] == pytest.approx(4.0, abs=1e-4)


def test_outer_small_beta():
    rep = fixed_points_outer(4, 1e-6, make_kernel(0.5).ht, resolution=1e-7)
    assert 0 < rep.positive[0] < 1e-5


def test_outer_requires_positive_field():
    with pytest.raises(ParameterError):
        fixed_points_outer(3, 1.0, 0.0)


def test_minus_iteration_is_mirror():
    ht = make_kernel(0.6).ht
    assert iterate_outer(3, 2.0, ht, sign=-1)[0] == -iterate_outer(3, 2.0, ht)[0]


def test_inner_figure3_two_roots():
    rep = fixed_points_inner(8, 7, 1.1, 0.0)
    assert len(rep.positive) == 2
    assert rep.attractive == [False, True]
    assert f_plus(8, 7, 1.1, 0.0) == rep.positive[-1]


def dense_grid_roots(g, lo, hi, step=1e-4):
    xs = np.arange(lo, hi + step, step)
    v = g(xs)
    return int(np.sum(np.sign(v[:-1]) * np.sign(v[1:]) < 0))


@pytest.mark.parametrize("t", [0.5, 1.0, 3.0])
def test_inner_figure3_right_panel_against_grid(t):
    ht = make_kernel(t).ht
    rep = fixed_points_inner(8, 7, 1.1, ht)
    count = dense_grid_roots(lambda x: inner_map(x, 8, 7, 1.1, ht) - x, 0, 7 * 1.1 / 2 + 1)
    assert len(rep.fixed_points) == count
    for r in rep.fixed_points:
        assert abs(inner_map(r, 8, 7, 1.1, ht) - r) < 1e-10


@pytest.mark.parametrize("d,s,beta", [(4, 3, 0.5), (6, 4, 0.4), (8, 7, 0.2)])
def test_inner_no_positive_root(d, s, beta):
    assert s * math.tanh(beta / 2) < 1
    rep = fixed_points_inner(d, s, beta, 0.1)
    assert rep.positive == [] and rep.note
    assert not positive_root_exists(d, s, beta, 0.1)


def test_critical_scan_rejects_small_s():
    with pytest.raises(ParameterError):
        critical_scan(4, 2)
    with pytest.raises(ParameterError):
        critical_scan(3, 2)


def test_beta_c_d8_s7():
    cv = critical_scan(8, 7)
    assert cv.beta_c <= 1.1
    assert positive_root_exists(8, 7, cv.beta_c * (1 + 1e-6), 0.0)
    assert not positive_root_exists(8, 7, cv.beta_c * (1 - 1e-6), 0.0)


def test_t_c_decreasing_d4_s3():
    cv = critical_scan(4, 3)
    assert math.isfinite(cv.beta_c)
    betas = cv.beta_c * np.array([1.01, 1.1, 1.5, 2.0, 4.0, 8.0])
    tcs = [cv.t_c(b) for b in betas]
    assert all(b < a for a, b in zip(tcs, tcs[1:]))
    for b, tc in zip(betas, tcs):
        ht = make_kernel(tc).ht
        assert positive_root_exists(4, 3, b, ht * (1 - 1e-6))
        assert not positive_root_exists(4, 3, b, ht * (1 + 1e-6))


@pytest.mark.parametrize("d", [2, 3, 5])
def test_beta_c_fully_occupied(d):
    cv = critical_scan(d, d)
    assert d * math.tanh(cv.beta_c / 2) >= 1 - 1e-8
    assert cv.beta_c == pytest.approx(2 * math.atanh(1 / d), abs=1e-8)


@pytest.mark.parametrize("d,s", [(3, 3), (5, 5), (4, 3), (8, 7)])
def test_asymptotic_critical_field(d, s):
    cv = critical_scan(d, s)
    ratios = []
    for beta in (20.0, 40.0, 100.0, 400.0):
        hc = cv.h_c(beta)
        assert abs(hc - critical_field_asymptotic(beta, s, d)) < 1e-6
        ratios.append(hc / critical_field_asymptotic(beta, s, d) if d > s else
                      hc / ((s - 1) * beta / 2))
    assert abs(ratios[-1] - 1) < 1e-2


# -- certificates


def crit_point(d, s, margin=1.1):
    cv = critical_scan(d, s)
    beta = margin * cv.beta_c
    return beta, margin * cv.t_c(beta)


def test_margin_boundary_matches_materialised_tree():
    d, n, m, beta, t = 3, 3, 4, 2.0, 0.8
    ht = make_kernel(t).ht
    rng = np.random.default_rng(3)
    inside = build_truncation(d, n)
    big = build_truncation(d, n + m)
    spin = np.ones(big.n_vertices, dtype=int)
    spin[: inside.n_vertices] = rng.integers(-1, 2, inside.n_vertices)
    spin[0] = 1
    eta_big = SpinConfiguration(big, spin)
    bv, m_used, _ = boundary_value_for_margin(d, beta, ht, m)
    assert m_used == m
    direct = fields(eta_big, beta, t).field[big.ring(1)]
    collapsed = root_neighbour_fields(eta_big.restrict(n), beta, ht, bv)
    assert np.allclose(direct, collapsed, atol=1e-13)


def test_adaptive_margin_tolerance():
    ht = make_kernel(0.9).ht
    bv, m, fp = boundary_value_for_margin(4, 2.2, ht)
    x = 0.0
    for _ in range(m - 1):
        x = float(outer_map(x, 4, 2.2, ht))
    assert abs(x - fp) < 1e-8
    y = 0.0
    for _ in range(m - 2):
        y = float(outer_map(y, 4, 2.2, ht))
    assert abs(y - fp) >= 1e-8


def test_fully_occupied_d2_is_bad():
    # gap(n) settles slowly for d = 2, so stay well inside the bad region
    beta, t = crit_point(2, 2, 3.0)
    eta = constant_configuration(build_truncation(2, 12), 1)
    cert = discontinuity_certificate(eta, ModelParams(2, beta, 1.0), make_kernel(t), 2, 10)
    assert cert.is_bad and cert.gap >= 2 * cert.f_plus


def test_isolated_root_not_bad():
    tr = build_truncation(3, 6)
    eta = constant_configuration(tr, 0).with_spin(0, 1)
    cert = discontinuity_certificate(eta, ModelParams(3, 3.0, 1.0), make_kernel(0.5), 3, 4)
    assert not cert.is_bad and cert.gap == 0


def test_below_critical_time_not_bad():
    cv = critical_scan(4, 3)
    beta = 1.1 * cv.beta_c
    t = 0.5 * cv.t_c(beta)
    eta = constant_configuration(build_truncation(4, 8), 1)
    cert = discontinuity_certificate(eta, ModelParams(4, beta, 1.0), make_kernel(t), 3, 6)
    assert cert.f_plus is None and not cert.is_bad


def test_certificate_errors():
    tr = build_truncation(3, 5)
    p, k = ModelParams(3, 2.0, 1.0), make_kernel(1.0)
    with pytest.raises(ParameterError):
        discontinuity_certificate(constant_configuration(tr, 0), p, k, 3, 2)
    with pytest.raises(ParameterError):
        discontinuity_certificate(constant_configuration(tr, 1), p, k, 3, 0)
    with pytest.raises(ParameterError):
        discontinuity_certificate(constant_configuration(tr, 1), p, k, 3, 2, m=0)
    with pytest.raises(ParameterError):
        discontinuity_certificate(constant_configuration(tr, 1), p, k, 3, 4)


@pytest.mark.parametrize("appendix_depth,appendix_sign", [(0, -1), (1, -1), (2, -1), (2, 1)])
def test_subtree_gap_above_two_f_plus(appendix_depth, appendix_sign):
    beta, t = crit_point(4, 3)
    tr = build_truncation(4, 10)
    eta = subtree_pattern(tr, 3, appendix_depth=appendix_depth, appendix_sign=appendix_sign)
    cert = discontinuity_certificate(eta, ModelParams(4, beta, 1.0), make_kernel(t), 3, 8)
    assert cert.on_subtree
    assert cert.gap >= 2 * cert.f_plus * 0.95


@pytest.mark.parametrize("appendix_depth", [0, 2])
def test_sandwich_lower_bounds(appendix_depth):
    beta, t = crit_point(4, 3)
    ht = make_kernel(t).ht
    n = 6
    tr = build_truncation(4, n)
    eta = subtree_pattern(tr, 3, appendix_depth=appendix_depth)
    bv, _, _ = boundary_value_for_margin(4, beta, ht)
    f = fields(eta, beta, t, bv=bv).field
    lb = subtree_lower_bounds(4, 3, beta, ht, bv, n)
    mask = subtree_mask(eta, 3)
    for k in range(1, n + 1):
        sl = tr.ring(k)
        assert (f[sl][mask[sl]] >= lb[k] - 1e-12).all()
    assert lb[1] >= f_plus(4, 3, beta, ht) - 1e-9


def test_lambda_independence_bitwise():
    beta, t = crit_point(4, 3)
    tr = build_truncation(4, 8)
    eta = subtree_pattern(tr, 3)
    k = make_kernel(t)
    gaps = {lam: discontinuity_certificate(eta, ModelParams(4, beta, lam), k, 3, 6) for lam in
            (0.1, 1.0, 10.0)}
    assert len({c.gap for c in gaps.values()}) == 1
    assert len({c.is_bad for c in gaps.values()}) == 1
