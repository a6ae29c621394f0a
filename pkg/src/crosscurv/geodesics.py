"""c-exponential maps and the null geodesics they generate.

A vertical c-segment keeps x fixed and moves x̄(t) so that −Dc(x, x̄(t)) is
affine in t; a horizontal geodesic keeps x̄ fixed and moves x(s) so that
−D̄c(x(s), x̄) is affine in s. Both are geodesics of the pseudo-metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost_core import CostChart
from .errors import (DomainError, NoConvergence, NondegeneracyFailure, SegmentFailure,
                     SingularJacobian)
from .geometry import COND_CAP


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 50
    backtrack: float = 0.5
    max_halvings: int = 40
    cond_cap: float = COND_CAP

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")


DEFAULT_NEWTON = NewtonConfig()


def _grad_and_cross(chart: CostChart, x, xbar):
    n = chart.n
    jet = chart.jet(x, xbar, 2)
    return jet[1][:n], jet[1][n:], jet[2][:n, n:]


def _solve(A, rhs, cfg, last):
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > cfg.cond_cap:
        raise SingularJacobian(f"singular Jacobian (smallest singular value {sv[-1]:.3g})",
                               float(sv[-1]), last)
    return np.linalg.solve(A, rhs)


def _newton(residual_and_jac, in_domain, guess, cfg: NewtonConfig):
    """Damped Newton on F(z) = 0, backtracking on ‖F‖."""
    z = np.array(guess, dtype=float)
    F, J = residual_and_jac(z)
    res = float(np.linalg.norm(F))
    for _ in range(cfg.max_iter):
        if res <= cfg.tol:
            return z
        step = _solve(J, -F, cfg, z)
        alpha = 1.0
        for _ in range(cfg.max_halvings):
            trial = z + alpha * step
            if in_domain(trial):
                F_t, J_t = residual_and_jac(trial)
                res_t = float(np.linalg.norm(F_t))
                if res_t < res:
                    break
            alpha *= cfg.backtrack
        else:
            raise NoConvergence("line search failed to reduce the residual", z, res)
        z, F, J, res = trial, F_t, J_t, res_t
    if res <= cfg.tol:
        return z
    raise NoConvergence(f"no convergence in {cfg.max_iter} iterations (residual {res:.3g})",
                        z, res)


def c_exp(chart: CostChart, x, p_star, guess, cfg: NewtonConfig = DEFAULT_NEWTON) -> np.ndarray:
    """Solve p* + Dc(x, x̄) = 0 for x̄, starting from ``guess``."""
    x = np.asarray(x, dtype=float)
    p_star = np.asarray(p_star, dtype=float)
    chart.check(x, guess)

    def rj(xb):
        g, _, A = _grad_and_cross(chart, x, xb)
        return p_star + g, A

    return _newton(rj, lambda xb: chart.in_domain(x, xb), guess, cfg)


def c_star_exp(chart: CostChart, xbar, q_star, guess, cfg: NewtonConfig = DEFAULT_NEWTON) -> np.ndarray:
    """Solve q* + D̄c(x, x̄) = 0 for x (the c-exponential of the reflected cost)."""
    xbar = np.asarray(xbar, dtype=float)
    q_star = np.asarray(q_star, dtype=float)
    chart.check(guess, xbar)

    def rj(x):
        _, gb, A = _grad_and_cross(chart, x, xbar)
        return q_star + gb, A.T

    return _newton(rj, lambda x: chart.in_domain(x, xbar), guess, cfg)


@dataclass(frozen=True)
class CSegment:
    x: np.ndarray
    xbar0: np.ndarray
    xbar1: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    ts: np.ndarray
    samples: np.ndarray  # (len(ts), n)

    def pairs(self):
        return list(zip(self.ts, self.samples))


def c_segment(chart: CostChart, x, xbar0, xbar1, num_samples: int = 65,
              cfg: NewtonConfig = DEFAULT_NEWTON, ts=None) -> CSegment:
    """x̄(t) with −Dc(x, x̄(t)) = (1−t)p*₀ + t p*₁, by continuation in t.

    ``ts`` overrides the uniform grid; it must be increasing and start at 0.
    """
    if ts is None:
        if num_samples < 2:
            raise ValueError("need at least 2 samples")
        ts = np.linspace(0.0, 1.0, num_samples)
    else:
        ts = np.asarray(ts, dtype=float)
        if ts[0] != 0.0 or np.any(np.diff(ts) <= 0):
            raise ValueError("ts must start at 0 and increase")
        num_samples = len(ts)
    x = np.asarray(x, dtype=float)
    xbar0 = np.asarray(xbar0, dtype=float)
    xbar1 = np.asarray(xbar1, dtype=float)
    n = chart.n
    p0 = -chart.jet(x, xbar0, 1)[1][:n]
    p1 = -chart.jet(x, xbar1, 1)[1][:n]
    out = np.empty((num_samples, n))
    out[0] = xbar0
    for k in range(1, num_samples):
        t = ts[k]
        guess = out[k - 1]
        if k >= 2:
            r = (t - ts[k - 1]) / (ts[k - 1] - ts[k - 2])
            extrap = out[k - 1] + r * (out[k - 1] - out[k - 2])
            if chart.in_domain(x, extrap):
                guess = extrap
        try:
            out[k] = c_exp(chart, x, (1 - t) * p0 + t * p1, guess, cfg)
        except (NoConvergence, NondegeneracyFailure, DomainError) as exc:
            raise SegmentFailure(f"c-segment failed at t={t:.6g}: {exc}", t, exc) from exc
    return CSegment(x, xbar0, xbar1, p0, p1, ts, out)


def _second_order_residual(term, pts, ts):
    dt = ts[1] - ts[0]
    if not np.allclose(np.diff(ts), dt):
        raise ValueError("samples must be on a uniform grid")
    worst = 0.0
    for k in range(1, len(ts) - 1):
        vel = (pts[k + 1] - pts[k - 1]) / (2 * dt)
        acc = (pts[k + 1] - 2 * pts[k] + pts[k - 1]) / dt ** 2
        worst = max(worst, float(np.linalg.norm(term(k, vel, acc))))
    return worst


def geodesic_residual(chart: CostChart, seg: CSegment) -> float:
    """max ‖ẍ^m̄ + c^{m̄i} c_{ij̄k̄} ẋ^j̄ ẋ^k̄‖ over interior samples."""
    if len(seg.ts) < 5:
        raise ValueError("geodesic residual needs at least 5 samples")
    n = chart.n

    def term(k, vel, acc):
        jet = chart.jet(seg.x, seg.samples[k], 3)
        A = jet[2][:n, n:]
        quad = np.einsum("ijk,j,k->i", jet[3][:n, n:, n:], vel, vel)
        return acc + np.linalg.solve(A, quad)

    return _second_order_residual(term, seg.samples, seg.ts)


def horizontal_geodesic(chart: CostChart, x, xbar, p, s_grid,
                        cfg: NewtonConfig = DEFAULT_NEWTON) -> list[tuple[float, np.ndarray]]:
    """x(s) with −D̄c(x(s), x̄) = −D̄c(x, x̄) − s·c_{ij̄}pⁱ; so x(0)=x, ẋ(0)=p."""
    x = np.asarray(x, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    p = np.asarray(p, dtype=float)
    _, gb, A = _grad_and_cross(chart, x, xbar)
    r0, dr = -gb, -(A.T @ p)
    s_grid = np.asarray(s_grid, dtype=float)
    result: dict[int, np.ndarray] = {}
    # continue outward from s = 0 in both directions
    for sign in (1.0, -1.0):
        order = [i for i in np.argsort(sign * s_grid) if sign * s_grid[i] >= 0]
        prev, prev2 = x, None
        for i in order:
            s = s_grid[i]
            if s == 0.0:
                result[i] = x.copy()
                continue
            guess = prev
            if prev2 is not None:
                extrap = 2 * prev - prev2
                if chart.in_domain(extrap, xbar):
                    guess = extrap
            try:
                xs = c_star_exp(chart, xbar, r0 + s * dr, guess, cfg)
            except (NoConvergence, NondegeneracyFailure, DomainError) as exc:
                raise SegmentFailure(f"horizontal geodesic failed at s={s:.6g}: {exc}", s,
                                     exc) from exc
            result[i] = xs
            prev2, prev = prev, xs
    return [(float(s_grid[i]), result[i]) for i in range(len(s_grid))]


def horizontal_residual(chart: CostChart, xbar, ss, xs) -> float:
    """max ‖ẍ^m + c^{m j̄} c_{j̄ik} ẋⁱ ẋᵏ‖ along a horizontal geodesic sample."""
    ss = np.asarray(ss, dtype=float)
    xs = np.asarray(xs, dtype=float)
    if len(ss) < 5:
        raise ValueError("horizontal residual needs at least 5 samples")
    n = chart.n
    xbar = np.asarray(xbar, dtype=float)

    def term(k, vel, acc):
        jet = chart.jet(xs[k], xbar, 3)
        A = jet[2][:n, n:]
        quad = np.einsum("ikj,i,k->j", jet[3][:n, :n, n:], vel, vel)
        return acc + np.linalg.solve(A.T, quad)

    return _second_order_residual(term, xs, ss)
