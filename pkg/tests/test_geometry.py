import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crosscurv.cost_core import make_builtin_cost, make_product_cost
from crosscurv.geometry import (assemble_pseudo_metric, christoffel, cross_curvature,
                                cross_hessian, graph_diagnostics, h_inner, is_null,
                                mixed_riemann, mtw_cross_ratio, mtw_form, sectional_general,
                                symplectic_form)
from crosscurv.regularity import diagonal_cross_curvature

from conftest import ALL_BUILTINS, chart_for, sample_pair

KAPPA = 2.0  # fixed once on the 1-D oracle


# --- pseudo-metric ------------------------------------------------------------

def test_euclid_metric(euclid):
    pm = assemble_pseudo_metric(euclid, [0.1, 0.2], [0.5, -0.3])
    I = np.eye(2)
    np.testing.assert_array_equal(pm.h, 0.5 * np.block([[0 * I, I], [I, 0 * I]]))
    np.testing.assert_allclose(pm.eigenvalues(), [-0.5, -0.5, 0.5, 0.5], atol=1e-15)


def test_one_dim_metric(oned):
    pm = assemble_pseudo_metric(oned, [0.0], [0.0])
    np.testing.assert_allclose(pm.h, [[0, 0.5], [0.5, 0]], atol=1e-15)


def test_sphere_diagonal_metric_is_round(sphere):
    x = np.array([1.1, 0.4])
    g = np.diag([1.0, math.sin(x[0]) ** 2])
    rng = np.random.default_rng(0)
    for _ in range(10):
        p, pb = rng.normal(size=2), rng.normal(size=2)
        v = np.concatenate([p, pb])
        assert h_inner(sphere, x, x, v, v) == pytest.approx(p @ g @ pb, abs=1e-12)


def test_null_examples(euclid, sphere):
    e = euclid
    x, xb = [0.0, 0.0], [0.3, 0.1]
    assert h_inner(e, x, xb, [1, 0, 0, 1], [1, 0, 0, 1]) == 0.0
    assert is_null(e, x, xb, [1, 0], [0, 1])
    assert h_inner(e, x, xb, [1, 0, 1, 0], [1, 0, 1, 0]) == pytest.approx(1.0)
    assert not is_null(e, x, xb, [1, 0], [1, 0])
    # sphere diagonal: g-orthogonal vectors are null
    x = np.array([1.0, 0.3])
    p, pb = np.array([1.0, 0.5]), np.array([-0.5 * math.sin(1.0) ** 2, 1.0])
    assert abs(p @ np.diag([1, math.sin(1.0) ** 2]) @ pb) < 1e-15
    assert is_null(sphere, x, x, p, pb)


@pytest.mark.parametrize("name", ALL_BUILTINS)
def test_eigenvalues_pair_up(name):
    chart = chart_for(name)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x, xb = sample_pair(name, rng)
        ev = np.sort(assemble_pseudo_metric(chart, x, xb).eigenvalues())
        np.testing.assert_allclose(ev, -ev[::-1], atol=1e-9)


# --- Christoffel symbols ------------------------------------------------------------

def test_christoffel_flat(euclid):
    ch = christoffel(euclid, [0.1, 0.3], [1.0, 2.0])
    assert np.all(ch.unbarred == 0) and np.all(ch.barred == 0)


def test_christoffel_one_dim_origin(oned):
    assert christoffel(oned, [0.0], [0.0]).unbarred[0, 0, 0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("name", ALL_BUILTINS)
def test_christoffel_symmetric(name):
    chart = chart_for(name)
    x, xb = sample_pair(name, np.random.default_rng(2))
    ch = christoffel(chart, x, xb)
    np.testing.assert_allclose(ch.unbarred, ch.unbarred.transpose(1, 0, 2), atol=1e-12)
    np.testing.assert_allclose(ch.barred, ch.barred.transpose(1, 0, 2), atol=1e-12)


# --- Riemann tensor ------------------------------------------------------------------

def test_riemann_flat(euclid):
    assert np.all(mixed_riemann(euclid, [0, 0], [1, 1]).R == 0)


def test_riemann_one_dim_origin(oned):
    R = mixed_riemann(oned, [0.0], [0.0]).R
    assert R[0, 0, 0, 0] == pytest.approx(-0.5, abs=1e-14)


@pytest.mark.parametrize("name", ALL_BUILTINS)
def test_riemann_pair_symmetry(name):
    """R_{ij̄k̄ℓ} = R_{k̄ℓij̄}, i.e. R[i,j,k,l] = R[l,k,j,i]."""
    chart = chart_for(name)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, xb = sample_pair(name, rng)
        R = mixed_riemann(chart, x, xb).R
        np.testing.assert_allclose(R, R.transpose(3, 2, 1, 0), atol=1e-9)


def _levi_civita_curvature(chart, x, xb, h=1e-4):
    """Independent oracle: Riemann tensor of h from metric derivatives by finite
    differences of the Christoffel symbols of the full 2n-dimensional metric."""
    n = chart.n
    m = 2 * n
    z0 = np.concatenate([x, xb])

    def metric(z):
        A = chart.jet(z[:n], z[n:], 2)[2][:n, n:]
        g = np.zeros((m, m))
        g[:n, n:] = -0.5 * A
        g[n:, :n] = -0.5 * A.T
        return g

    def dmetric(z):
        J = chart.jet(z[:n], z[n:], 3)[3]
        dg = np.zeros((m, m, m))  # dg[a, b, c] = ∂_c g_ab
        dg[:n, n:, :] = -0.5 * J[:n, n:, :]
        dg[n:, :n, :] = -0.5 * J[n:, :n, :]
        return dg

    def gamma(z):
        ginv = np.linalg.inv(metric(z))
        dg = dmetric(z)
        # Γ^a_{bc} = ½ g^{ad}(∂_b g_dc + ∂_c g_db − ∂_d g_bc)
        t = 0.5 * (np.einsum("dcb->dbc", dg) + dg - np.einsum("bcd->dbc", dg))
        return np.einsum("ad,dbc->abc", ginv, t)

    G = gamma(z0)
    dG = np.zeros((m,) * 4)  # dG[a,b,c,e] = ∂_e Γ^a_{bc}
    for e in range(m):
        dz = np.zeros(m)
        dz[e] = h
        dG[..., e] = (gamma(z0 + dz) - gamma(z0 - dz)) / (2 * h)
    # R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce}Γ^e_{db} − Γ^a_{de}Γ^e_{cb}
    Rup = (np.einsum("adbc->abcd", dG) - np.einsum("acbd->abcd", dG)
           + np.einsum("ace,edb->abcd", G, G) - np.einsum("ade,ecb->abcd", G, G))
    return np.einsum("ae,ebcd->abcd", metric(z0), Rup)


@pytest.mark.parametrize("name", ["sphere_squared", "log_euclid", "hyperbolic_squared"])
def test_full_tensor_matches_levi_civita_oracle(name):
    chart = chart_for(name)
    x, xb = sample_pair(name, np.random.default_rng(4))
    ours = mixed_riemann(chart, x, xb).full()
    oracle = _levi_civita_curvature(chart, x, xb)
    # the oracle's index convention is R(a,b,c,d) = ⟨R(e_c, e_d) e_b, e_a⟩
    scale = np.max(np.abs(oracle))
    np.testing.assert_allclose(ours, oracle, atol=1e-6 * max(1.0, scale))


# --- cross-curvature -------------------------------------------------------------------

def test_cross_one_dim(oned):
    assert cross_curvature(oned, [0.0], [0.0], [1.0], [1.0]) == pytest.approx(0.5, abs=1e-14)


def test_cross_flat(euclid):
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert cross_curvature(euclid, *rng.normal(size=(4, 2))) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_quartic_homogeneity(a, b):
    chart = make_builtin_cost("sphere_squared")
    x, xb = np.array([1.2, 0.1]), np.array([1.6, 0.4])
    p, pb = np.array([0.6, 0.8]), np.array([-0.3, 0.5])
    base = cross_curvature(chart, x, xb, p, pb)
    scaled = cross_curvature(chart, x, xb, a * p, b * pb)
    assert scaled == pytest.approx(a * a * b * b * base, rel=1e-12, abs=1e-15)


def test_sectional_reduces_to_cross(sphere):
    x, xb = np.array([1.2, 0.1]), np.array([1.6, 0.4])
    p, pb = np.array([0.6, 0.8]), np.array([-0.3, 0.5])
    P = np.concatenate([p, 0 * p])
    Q = np.concatenate([0 * pb, pb])
    assert sectional_general(sphere, x, xb, P, Q) == pytest.approx(
        cross_curvature(sphere, x, xb, p, pb), rel=1e-12)
    assert sectional_general(sphere, x, xb, P + Q, P + Q) == pytest.approx(0.0, abs=1e-13)


def test_convex_boundary_identity_hessians():
    c = make_builtin_cost("convex_boundary", 2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = rng.normal(size=2)
        pb = rng.normal(size=2)
        p, pb = p / np.linalg.norm(p), pb / np.linalg.norm(pb)
        P, Q = np.concatenate([p, 0 * p]), np.concatenate([0 * pb, pb])
        assert sectional_general(c, [0, 0], [0, 0], P, Q) == pytest.approx(0.5, abs=1e-13)


def test_convex_boundary_complete_square():
    """At X = X̄ = 0 with ∇f = ∇g = 0, third derivatives vanish and
    c_{ij̄k̄ℓ} = −f_{iℓ} g_{jk}, so R(P, Q, P, Q) for P = p⊕q̄, Q = q⊕p̄ is a
    complete-square expression in the Hessians F, G."""
    a, b = np.array([2.0, 0.5]), np.array([1.5, 3.0])
    c = make_builtin_cost("convex_boundary", 2, {"f_hessian": np.diag(a).tolist(),
                                                  "g_hessian": np.diag(b).tolist()})
    rng = np.random.default_rng(1)
    p, qb, q, pb = rng.normal(size=(4, 2))
    P, Q = np.concatenate([p, qb]), np.concatenate([q, pb])
    # cross block −δ_ij − f_i g_j ⇒ R_{ij̄k̄ℓ} = −½ f_iℓ g_jk
    F, G = np.diag(a), np.diag(b)
    R = -0.5 * np.einsum("il,jk->ijkl", F, G)
    from crosscurv.geometry import MixedRiemann
    expected = MixedRiemann(np.zeros(2), np.zeros(2), R).sectional(P, Q)
    assert sectional_general(c, [0, 0], [0, 0], P, Q) == pytest.approx(expected, rel=1e-12)
    # expanded by hand over the four nonzero index patterns
    val = 0.5 * ((p @ F @ p) * (pb @ G @ pb) + (q @ F @ q) * (qb @ G @ qb)
                 - 2 * (p @ F @ q) * (qb @ G @ pb))
    assert expected == pytest.approx(val, rel=1e-12)


# --- diagonal law --------------------------------------------------------------------

@pytest.mark.parametrize("name,x,k", [
    ("sphere_squared", [1.2, 0.3], 1.0),
    ("sphere_squared", [0.7, -1.0], 1.0),
    ("hyperbolic_squared", [0.1, 0.2], -1.0),
    ("hyperbolic_squared", [-0.4, 0.3], -1.0),
])
def test_diagonal_cross_is_third_of_sectional(name, x, k):
    """On the diagonal, cross-curvature with g-orthonormal p ⟂ p̄ is sec/3."""
    chart = chart_for(name)
    assert diagonal_cross_curvature(chart, x) == pytest.approx(k / 3, abs=1e-10)


# --- products ------------------------------------------------------------------------

def test_product_additivity(oned):
    sph = make_builtin_cost("sphere_squared")
    prod = make_product_cost(sph, oned)
    rng = np.random.default_rng(6)
    for _ in range(20):
        xs, xbs = sample_pair("sphere_squared", rng)
        x1, xb1 = rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)
        p, pb = rng.normal(size=3), rng.normal(size=3)
        total = cross_curvature(prod, np.r_[xs, x1], np.r_[xbs, xb1], p, pb)
        parts = (cross_curvature(sph, xs, xbs, p[:2], pb[:2])
                 + cross_curvature(oned, x1, xb1, p[2:], pb[2:]))
        assert total == pytest.approx(parts, abs=1e-10)


def test_product_null_witness_has_zero_cross(oned):
    prod = make_product_cost(oned, oned)
    x, xb = np.array([0.2, -0.1]), np.array([0.3, 0.4])
    p, pb = np.array([1.3, 0.0]), np.array([0.0, -0.7])
    assert is_null(prod, x, xb, p, pb)
    assert cross_curvature(prod, x, xb, p, pb) == 0.0


# --- MTW form --------------------------------------------------------------------------

def test_kappa_fixed_on_oracle():
    assert mtw_cross_ratio() == pytest.approx(KAPPA, rel=1e-12)


def test_mtw_flat(euclid):
    assert mtw_form(euclid, [0, 0], [1, 2], [1, 2], [3, -1]) == 0.0


@pytest.mark.parametrize("name", ALL_BUILTINS)
def test_mtw_cross_consistency(name):
    chart = chart_for(name)
    rng = np.random.default_rng(7)
    for _ in range(40):
        x, xb = sample_pair(name, rng)
        p, q = rng.normal(size=chart.n), rng.normal(size=chart.n)
        _, Ainv = cross_hessian(chart, x, xb)
        lhs = mtw_form(chart, x, xb, p, q)
        rhs = KAPPA * cross_curvature(chart, x, xb, p, Ainv @ q)
        assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12)


def test_reflector_mtw_value(logc):
    """At x=(0,0), x̄=(1,0) (q* = (−1,0)), p=(1,0), q=(0,1): the reflector
    function equals 2(q*·p)² − |p|²|q*|² = 1 and mtw_form = κ·cross."""
    x, xb = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    p, q = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    val = mtw_form(logc, x, xb, p, q)
    assert val == pytest.approx(2.0, abs=1e-12)
    _, Ainv = cross_hessian(logc, x, xb)
    assert val == pytest.approx(KAPPA * cross_curvature(logc, x, xb, p, Ainv @ q), abs=1e-12)


# --- symplectic / graph diagnostics --------------------------------------------------

def test_symplectic_antisymmetric(sphere):
    om = symplectic_form(sphere, [1.2, 0.1], [1.6, 0.4]).omega
    np.testing.assert_array_equal(om, -om.T)


def test_graph_of_gradient_map_is_lagrangian_spacelike(euclid):
    D2u = 0.5 * np.eye(2)  # u = |x|²/4
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(20):
        x = rng.uniform(-1, 1, 2)
        samples.append((x, x + D2u @ x, np.eye(2) + D2u))
    diag = graph_diagnostics(euclid, samples)
    assert diag.max_omega_defect <= 1e-10
    assert diag.min_h_value == pytest.approx(1.5, abs=1e-10)
    assert diag.used == 20 and diag.rejected == 0


def test_graph_nonsymmetric_has_defect(euclid):
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    diag = graph_diagnostics(euclid, [(np.zeros(2), np.zeros(2), rot)])
    assert diag.max_omega_defect > 0.1


def test_graph_rejects_nonsmooth_samples(sphere):
    samples = [([1.2, 0.1], [1.3, 0.2], None),
               ([1.2, 0.1], [1.3, 0.2], np.full((2, 2), np.nan)),
               ([1.2, 0.1], [1.3, 0.2], np.eye(2))]
    diag = graph_diagnostics(sphere, samples)
    assert diag.used == 1 and diag.rejected == 2
