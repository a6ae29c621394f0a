import math

import numpy as np
import pytest

from crosscurv.cost_core import make_builtin_cost, sphere_embed, sphere_unembed
from crosscurv.errors import NoConvergence, SegmentFailure, SingularJacobian
from crosscurv.geodesics import (CSegment, NewtonConfig, c_exp, c_segment, c_star_exp,
                                 geodesic_residual, horizontal_geodesic, horizontal_residual)
from crosscurv.geometry import h_inner

from conftest import sample_pair


def great_circle_exp(x, v):
    """exp_x(v) on the unit sphere for v in (θ, φ) coordinate components."""
    th, ph = x
    e_th = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)])
    e_ph = np.array([-math.sin(ph), math.cos(ph), 0.0])
    w = v[0] * e_th + v[1] * math.sin(th) * e_ph
    r = np.linalg.norm(w)
    P = sphere_embed(np.asarray(x, float))
    Q = P * math.cos(r) + (w / r) * math.sin(r) if r > 0 else P
    return sphere_unembed(Q, phi_near=ph)


def lowered(x, v):
    return np.array([v[0], math.sin(x[0]) ** 2 * v[1]])


# --- c-exponential ----------------------------------------------------------------

def test_cexp_euclid(euclid):
    x, ps = np.array([0.3, -0.2]), np.array([1.0, 2.0])
    np.testing.assert_allclose(c_exp(euclid, x, ps, x), x + ps, atol=1e-12)
    np.testing.assert_allclose(c_star_exp(euclid, x, ps, x), x + ps, atol=1e-12)


def test_cexp_log_closed_form(logc):
    rng = np.random.default_rng(0)
    for _ in range(30):
        x = rng.uniform(-1, 1, 2)
        qs = rng.normal(size=2)
        qs *= rng.uniform(0.8, 3) / np.linalg.norm(qs)
        target = x - qs / (qs @ qs)
        guess = target + rng.uniform(-0.05, 0.05, 2)
        np.testing.assert_allclose(c_exp(logc, x, qs, guess), target, atol=1e-8)
        np.testing.assert_allclose(c_star_exp(logc, x, qs, guess), target, atol=1e-8)


def test_cexp_sphere_is_riemannian_exp(sphere):
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = np.array([rng.uniform(0.8, 2.3), rng.uniform(-2, 2)])
        v = rng.uniform(-0.4, 0.4, 2)
        target = great_circle_exp(x, v)
        guess = target + rng.uniform(-0.03, 0.03, 2)
        got = c_exp(sphere, x, lowered(x, v), guess)
        np.testing.assert_allclose(got, target, atol=1e-8)
        got = c_star_exp(sphere, x, lowered(x, v), guess)
        np.testing.assert_allclose(got, target, atol=1e-8)


@pytest.mark.parametrize("name", ["euclid_quadratic", "log_euclid", "sphere_squared",
                                  "hyperbolic_squared"])
def test_left_right_inverse(name):
    chart = make_builtin_cost(name, 2)
    rng = np.random.default_rng(2)
    n = chart.n
    for _ in range(20):
        x, xb = sample_pair(name, rng)
        qs = -chart.jet(x, xb, 1)[1][n:]
        guess = x + 0.01 * rng.normal(size=2)
        np.testing.assert_allclose(c_star_exp(chart, xb, qs, guess), x, atol=1e-8)
        ps = -chart.jet(x, xb, 1)[1][:n]
        np.testing.assert_allclose(c_exp(chart, x, ps, xb + 0.01 * rng.normal(size=2)), xb,
                                   atol=1e-8)


def test_newton_errors_carry_iterate():
    deg = make_builtin_cost("convex_boundary", 1)
    with pytest.raises(SingularJacobian) as err:
        c_exp(deg, [1.0], [0.5], [-1.0])
    assert err.value.last_iterate is not None
    with pytest.raises(NoConvergence) as err:
        c_exp(make_builtin_cost("sphere_squared"), [1.5, 0.0], [1.0, 0.5], [1.5, 0.1],
              NewtonConfig(max_iter=1))
    assert err.value.last_iterate is not None


@pytest.mark.parametrize("kw", [{"tol": 0}, {"max_iter": 0}, {"backtrack": 1.0}])
def test_newton_config_validated(kw):
    with pytest.raises(ValueError):
        NewtonConfig(**kw)


# --- c-segments ----------------------------------------------------------------

def test_segment_euclid_linear(euclid):
    seg = c_segment(euclid, [0, 0], [1, 0], [0, 2], 11)
    expected = (1 - seg.ts)[:, None] * np.array([1, 0]) + seg.ts[:, None] * np.array([0, 2])
    np.testing.assert_allclose(seg.samples, expected, atol=1e-12)
    assert geodesic_residual(euclid, seg) <= 1e-10


def test_segment_sphere_is_radial_interpolation(sphere):
    x = np.array([1.3, 0.2])
    v0, v1 = np.array([0.4, 0.3]), np.array([-0.2, 0.6])
    xb0, xb1 = great_circle_exp(x, v0), great_circle_exp(x, v1)
    seg = c_segment(sphere, x, xb0, xb1, 17)
    for t, xb in seg.pairs():
        np.testing.assert_allclose(xb, great_circle_exp(x, (1 - t) * v0 + t * v1), atol=1e-8)


def test_segment_endpoints_and_invariant(logc):
    x = np.array([0.1, 0.2])
    seg = c_segment(logc, x, [0.8, 0.5], [0.5, 0.9], 33)
    np.testing.assert_allclose(seg.samples[0], [0.8, 0.5])
    np.testing.assert_allclose(seg.samples[-1], [0.5, 0.9], atol=1e-10)
    for t, xb in seg.pairs():
        ps = -logc.jet(x, xb, 1)[1][:2]
        np.testing.assert_allclose(ps, (1 - t) * seg.p0 + t * seg.p1, atol=1e-9)


def test_log_segment_lies_on_circle(logc):
    """The projected null geodesic is an arc of the circle through x̄₀, x̄₁ and x."""
    x = np.array([0.0, 0.0])
    seg = c_segment(logc, x, [1.0, 0.2], [0.3, 1.1], 33)
    pts = np.vstack([seg.samples, x])
    # fit x² + y² + Dx + Ey + F = 0 through all points
    M = np.column_stack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
    rhs = -(pts ** 2).sum(axis=1)
    coef, res, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    assert np.max(np.abs(M @ coef - rhs)) <= 1e-9


@pytest.mark.parametrize("name,x,xb0,xb1", [
    ("sphere_squared", [1.3, 0.2], [1.7, 0.5], [1.1, 0.9]),
    ("log_euclid", [0.1, 0.2], [0.8, 0.5], [0.5, 0.9]),
])
def test_residual_converges(name, x, xb0, xb1):
    chart = make_builtin_cost(name, 2)
    # tight Newton tolerance so solve error (amplified by 1/Δt²) stays below the O(Δt²) term
    cfg = NewtonConfig(tol=1e-14)
    res = [geodesic_residual(chart, c_segment(chart, x, xb0, xb1, m, cfg)) for m in (33, 65, 129)]
    assert res[1] <= 1e-4
    assert 3.0 <= res[0] / res[1] <= 5.0 and 3.0 <= res[1] / res[2] <= 5.0


def test_residual_detects_corruption(sphere):
    seg = c_segment(sphere, [1.3, 0.2], [1.7, 0.5], [1.1, 0.9], 65)
    bad = seg.samples.copy()
    bad[30] += 1e-2
    corrupt = CSegment(seg.x, seg.xbar0, seg.xbar1, seg.p0, seg.p1, seg.ts, bad)
    assert geodesic_residual(sphere, corrupt) >= 1e-1


def test_residual_needs_five_samples(sphere):
    with pytest.raises(ValueError):
        geodesic_residual(sphere, c_segment(sphere, [1.3, 0.2], [1.7, 0.5], [1.1, 0.9], 4))


def test_segment_is_null(sphere, logc):
    for chart, x, a, b in ((sphere, [1.3, 0.2], [1.7, 0.5], [1.1, 0.9]),
                           (logc, [0.1, 0.2], [0.8, 0.5], [0.5, 0.9])):
        seg = c_segment(chart, x, a, b, 65)
        dt = seg.ts[1] - seg.ts[0]
        for k in range(1, len(seg.ts) - 1):
            vel = (seg.samples[k + 1] - seg.samples[k - 1]) / (2 * dt)
            v = np.concatenate([np.zeros(2), vel])
            assert abs(h_inner(chart, x, seg.samples[k], v, v)) <= 1e-8 * max(1, vel @ vel)


def test_affine_reparameterisation(sphere):
    x, a, b = [1.3, 0.2], [1.7, 0.5], [1.1, 0.9]
    fwd = c_segment(sphere, x, a, b, 33).samples
    bwd = c_segment(sphere, x, b, a, 33).samples
    np.testing.assert_allclose(fwd, bwd[::-1], atol=1e-8)


def test_segment_custom_grid(sphere):
    ts = np.array([0.0, 0.1, 0.5, 0.55, 1.0])
    seg = c_segment(sphere, [1.3, 0.2], [1.7, 0.5], [1.1, 0.9], ts=ts)
    uni = c_segment(sphere, [1.3, 0.2], [1.7, 0.5], [1.1, 0.9], 21)
    np.testing.assert_allclose(seg.samples[2], uni.samples[10], atol=1e-9)
    with pytest.raises(ValueError):
        c_segment(sphere, [1.3, 0.2], [1.7, 0.5], [1.1, 0.9], ts=[0.1, 0.5])


def test_segment_failure_reports_t(sphere):
    with pytest.raises(SegmentFailure) as err:
        c_segment(sphere, [math.pi / 2, 0.0], [math.pi / 2, 0.5], [1.0, 1.5], 3,
                  NewtonConfig(max_iter=1))
    assert err.value.t == 0.5
    assert isinstance(err.value.cause, NoConvergence)


# --- horizontal geodesics --------------------------------------------------------

def test_horizontal_euclid(euclid):
    ss = np.linspace(-0.5, 0.5, 11)
    for s, xs in horizontal_geodesic(euclid, [0.2, 0.1], [1.0, 1.0], [0.3, -0.4], ss):
        np.testing.assert_allclose(xs, np.array([0.2, 0.1]) + s * np.array([0.3, -0.4]),
                                   atol=1e-12)


def test_horizontal_sphere_diagonal_is_great_circle(sphere):
    x = np.array([1.2, 0.3])
    p = np.array([0.5, -0.7])
    for s, xs in horizontal_geodesic(sphere, x, x, p, np.linspace(-0.4, 0.4, 9)):
        np.testing.assert_allclose(xs, great_circle_exp(x, s * p), atol=1e-8)


@pytest.mark.parametrize("name,x,xb,p", [
    ("log_euclid", [0.1, 0.2], [0.8, 0.5], [0.6, 0.8]),
    ("sphere_squared", [1.2, 0.1], [1.6, 0.4], [0.6, 0.8]),
    ("hyperbolic_squared", [0.1, 0.2], [0.3, -0.1], [0.6, 0.8]),
])
def test_horizontal_velocity_and_residual(name, x, xb, p):
    chart = make_builtin_cost(name, 2)
    h = 1e-4
    pts = dict(horizontal_geodesic(chart, x, xb, p, [-h, 0.0, h]))
    np.testing.assert_allclose(pts[0.0], x, atol=1e-12)
    np.testing.assert_allclose((pts[h] - pts[-h]) / (2 * h), p, atol=1e-6)
    cfg = NewtonConfig(tol=1e-14)
    res = []
    for m in (41, 161):
        ss = np.linspace(-0.2, 0.2, m)
        xs = [v for _, v in horizontal_geodesic(chart, x, xb, p, ss, cfg)]
        res.append(horizontal_residual(chart, xb, ss, xs))
    assert res[1] <= 1e-4
    assert 12 <= res[0] / res[1] <= 20  # O(Δs²)
