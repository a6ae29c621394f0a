"""Sampling-based regularity checks for a cost.

Everything here is evidence from finitely many samples, never a proof:
classification by the sign of the cross-curvature on null planes, the
double-mountain-above-sliding-mountain test, contact-set connectivity and
the constants of the local quantitative estimate.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .cost_core import CostChart, DomainSpec
from .errors import DomainError, NondegeneracyFailure, RegularityRefused, SegmentFailure
from .geodesics import DEFAULT_NEWTON, NewtonConfig, c_exp, c_segment, horizontal_geodesic
from .geometry import cross_hessian, mixed_riemann

A3S, A3W, VIOLATED = "A3s", "A3w", "violated"


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# ---------------------------------------------------------------------------
# classification

@dataclass
class RegularityReport:
    samples: int
    failures: int
    min_value: float
    classification: str
    witness: dict | None
    tol: float

    def to_dict(self) -> dict:
        return asdict(self)


def null_directions(n: int, count: int, rng: np.random.Generator):
    """Pairs (p, q) of unit vectors with q·p = 0."""
    if n == 1:
        return []
    if n == 2:
        out = []
        offset = rng.uniform(0, math.pi / count)
        for k in range(count):
            a = offset + math.pi * k / count
            p = np.array([math.cos(a), math.sin(a)])
            out.append((p, np.array([-p[1], p[0]])))
        return out
    # coordinate pairs catch degenerate planes of split costs (products),
    # which random directions hit with probability zero
    eye = np.eye(n)
    out = [(eye[i], eye[j]) for i in range(n) for j in range(n) if i != j]
    for _ in range(count):
        p = rng.normal(size=n)
        p /= np.linalg.norm(p)
        q = rng.normal(size=n)
        q -= (q @ p) * p
        out.append((p, q / np.linalg.norm(q)))
    return out


def classify_value(min_value: float, tol: float) -> str:
    if min_value > tol:
        return A3S
    if min_value < -tol:
        return VIOLATED
    return A3W


def _with_vertices(box, pts: np.ndarray) -> np.ndarray:
    corners = np.array(list(itertools.product(*box)), float)
    return np.vstack([corners, pts])


def sample_pairs(chart: CostChart, domain: DomainSpec, points_per_side: int,
                 rng: np.random.Generator, include_diagonal: bool = True):
    # box vertices are always included: extremes of the normalised value
    # tend to sit on the boundary, and this keeps the minimum stable
    xs = _with_vertices(domain.source_box, domain.sample(rng, "source", points_per_side))
    xbs = _with_vertices(domain.target_box, domain.sample(rng, "target", points_per_side))
    pairs = [(x, xb) for x in xs for xb in xbs]
    if include_diagonal:
        pairs += [(x, x.copy()) for x in xs]
    return [(x, xb) for x, xb in pairs if chart.in_domain(x, xb)]


def classify_regularity(chart: CostChart, domain: DomainSpec | None = None,
                        points_per_side: int = 8, directions_per_point: int = 12,
                        tol: float = 1e-8, seed: int = 0, workers: int = 1,
                        include_diagonal: bool = True) -> RegularityReport:
    """Minimum of cross(p, p̄)/(|p|²|p̄|²) over sampled null planes.

    Null planes use p a unit vector, q a unit covector with q·p = 0 and
    p̄ = c^{·e} q_e, so that c_{ij̄} pⁱ p̄ʲ = p·q = 0 exactly.
    """
    domain = domain or chart.domain
    rng = np.random.default_rng(seed)
    pairs = sample_pairs(chart, domain, points_per_side, rng, include_diagonal)
    dirs = null_directions(chart.n, directions_per_point, rng)

    def work(pair):
        x, xb = pair
        try:
            R = mixed_riemann(chart, x, xb)
            _, Ainv = cross_hessian(chart, x, xb)
        except NondegeneracyFailure:
            return None
        best = (math.inf, None)
        for p, q in dirs:
            pb = Ainv @ q
            val = R.cross(p, pb) / ((p @ p) * (pb @ pb))
            if val < best[0]:
                best = (val, (p, pb))
        return best

    results = _map(work, pairs, workers)
    failures = sum(r is None for r in results)
    min_val, witness = math.inf, None
    for (x, xb), r in zip(pairs, results):
        if r is not None and r[1] is not None and r[0] < min_val:
            min_val = r[0]
            p, pb = r[1]
            witness = {"x": x.tolist(), "xbar": xb.tolist(), "p": p.tolist(), "pbar": pb.tolist()}
    return RegularityReport(len(pairs), failures, float(min_val),
                            classify_value(min_val, tol), witness, tol)


# ---------------------------------------------------------------------------
# fourth-derivative identity

_W5 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _mixed_fourth(chart, x, xbar, p, pbar, h, cfg):
    offs = np.arange(-2, 3) * h
    curve = [xs for _, xs in horizontal_geodesic(chart, x, xbar, p, offs, cfg)]
    X = np.array(curve)[:, None, :]
    XB = (xbar[None, :] + offs[:, None] * pbar[None, :])[None, :, :]
    if not np.all(chart.in_domain(X, XB)):
        raise DomainError("fourth-derivative stencil leaves the domain", x, xbar)
    F = chart.eval_many(X, XB)
    return float(_W5 @ F @ _W5) / h ** 4


def cross_curvature_via_fd(chart: CostChart, x, xbar, p, pbar, h: float = 0.05,
                           rel_tol: float = 0.1, abs_floor: float = 1e-7,
                           cfg: NewtonConfig = DEFAULT_NEWTON) -> float:
    """Cross-curvature from −½ ∂⁴/∂s²∂t² c(x(s), x̄ + t p̄) at s = t = 0.

    x(s) is the horizontal geodesic with ẋ(0) = p. Steps h and h/2 are
    compared (abort above ``rel_tol`` relative disagreement) and combined by
    Richardson extrapolation. ``h`` is scaled by the chart's feature scale.
    """
    x, xbar = np.asarray(x, float), np.asarray(xbar, float)
    p, pbar = np.asarray(p, float), np.asarray(pbar, float)
    if chart.feature_scale is not None:
        h *= chart.feature_scale(x, xbar)
    a = _mixed_fourth(chart, x, xbar, p, pbar, h, cfg)
    b = _mixed_fourth(chart, x, xbar, p, pbar, h / 2, cfg)
    if abs(a - b) > max(rel_tol * max(abs(a), abs(b)), abs_floor):
        raise ArithmeticError(f"step refinement disagrees: {a:.6g} vs {b:.6g}")
    return -0.5 * (16.0 * b - a) / 15.0


# ---------------------------------------------------------------------------
# sliding mountain / contact sets

@dataclass
class SlidingReport:
    max_violation: float
    argmax: tuple[float, list] | None
    skipped: int
    ts: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)  # (len(ts), len(ys)); NaN where skipped

    def to_dict(self) -> dict:
        return {"max_violation": self.max_violation,
                "argmax": None if self.argmax is None else
                {"t": self.argmax[0], "y": self.argmax[1]},
                "skipped": self.skipped}


def _segment(chart, x, xb0, xb1, ts, cfg):
    seg = c_segment(chart, x, xb0, xb1, cfg=cfg, ts=ts)
    return seg.samples


def mountain_grid(chart: CostChart, x, xb0, xb1, ys, ts, cfg=DEFAULT_NEWTON):
    """f(t, y) = −c(y, x̄(t)) + c(x, x̄(t)) along the c-segment; NaN columns are
    points y leaving the domain for some t."""
    x = np.asarray(x, float)
    ts = np.asarray(ts, float)
    ys = np.atleast_2d(np.asarray(ys, float))
    xbs = _segment(chart, x, np.asarray(xb0, float), np.asarray(xb1, float), ts, cfg)
    cy = chart.eval_many(ys[None, :, :], xbs[:, None, :])
    cx = chart.eval_many(x[None, :], xbs)
    f = -cy + cx[:, None]
    bad = np.any(np.isnan(f), axis=0)
    f[:, bad] = np.nan
    return f, xbs


def sliding_mountain_check(chart: CostChart, x, xb0, xb1, ys, ts=None,
                           cfg: NewtonConfig = DEFAULT_NEWTON) -> SlidingReport:
    """max over (t, y) of f(t, y) − max{f(0, y), f(1, y)}."""
    ts = np.linspace(0, 1, 17) if ts is None else np.asarray(ts, float)
    if ts[0] != 0.0 or ts[-1] != 1.0:
        raise ValueError("t grid must run from 0 to 1")
    ys = np.atleast_2d(np.asarray(ys, float))
    f, _ = mountain_grid(chart, x, xb0, xb1, ys, ts, cfg)
    ok = ~np.isnan(f[0])
    if not ok.any():
        return SlidingReport(-math.inf, None, len(ys), ts, ys, f)
    excess = f[:, ok] - np.maximum(f[0, ok], f[-1, ok])[None, :]
    k = np.unravel_index(np.argmax(excess), excess.shape)
    y_idx = np.flatnonzero(ok)[k[1]]
    return SlidingReport(float(excess[k]), (float(ts[k[0]]), ys[y_idx].tolist()),
                         int((~ok).sum()), ts, ys, f)


@dataclass
class ContactReport:
    passed: bool
    max_deficit: float
    heights: tuple[float, float]
    skipped: int


def contact_connectivity_check(chart: CostChart, x, xb0, xb1, ys, ts=None, tol: float = 1e-8,
                               cfg: NewtonConfig = DEFAULT_NEWTON) -> ContactReport:
    """Two mountains with foci x̄₀, x̄₁ both touching u at x (λ_i = c(x, x̄_i));
    every x̄(t) on the c-segment must support u at x as well."""
    x = np.asarray(x, float)
    lam0, lam1 = chart(x, xb0), chart(x, xb1)
    ts = np.linspace(0, 1, 17) if ts is None else np.asarray(ts, float)
    ys = np.atleast_2d(np.asarray(ys, float))
    f, _ = mountain_grid(chart, x, xb0, xb1, ys, ts, cfg)
    ok = ~np.isnan(f[0])
    # u(y) = max(λ₀ − c(y, x̄₀), λ₁ − c(y, x̄₁)) = max(f(0, y), f(1, y)); u(x) = 0
    u = np.maximum(f[0, ok], f[-1, ok])
    deficit = float(np.max(f[:, ok] - u[None, :])) if ok.any() else -math.inf
    return ContactReport(deficit <= tol, deficit, (lam0, lam1), int((~ok).sum()))


def write_mountain_csv(report: SlidingReport, path) -> None:
    """One row per (t, y) sample: t, y coordinates, f(t, y)."""
    n = report.ys.shape[1]
    rows = [[t, *y, report.f[i, j]] for i, t in enumerate(report.ts)
            for j, y in enumerate(report.ys)]
    header = ",".join(["t"] + [f"y{k}" for k in range(n)] + ["f"])
    np.savetxt(path, np.array(rows), delimiter=",", header=header, comments="", fmt="%.17g")


def critical_point_convexity(chart: CostChart, x, y, xb0, xb1, ts=None, fd_step: float = 1e-3,
                             cfg: NewtonConfig = DEFAULT_NEWTON) -> list[tuple[float, float]]:
    """Interior critical points t₀ of f(t) = −c(y, x̄(t)) + c(x, x̄(t)) and f̈(t₀).

    ḟ uses ẋ̄ = −[c_{ij̄}]⁻¹ (p*₁ − p*₀) from differentiating −Dc(x, x̄(t)) = p*(t).
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    xb0, xb1 = np.asarray(xb0, float), np.asarray(xb1, float)
    n = chart.n
    p0 = -chart.jet(x, xb0, 1)[1][:n]
    p1 = -chart.jet(x, xb1, 1)[1][:n]
    ts = np.linspace(0, 1, 33) if ts is None else np.asarray(ts, float)
    xbs = _segment(chart, x, xb0, xb1, ts, cfg)

    def xbar_at(t, guess):
        return c_exp(chart, x, (1 - t) * p0 + t * p1, guess, cfg)

    def fdot(t, xb):
        jx = chart.jet(x, xb, 2)
        A = jx[2][:n, n:]
        vel = -np.linalg.solve(A, p1 - p0)
        gy = chart.jet(y, xb, 1)[1][n:]
        return float((-gy + jx[1][n:]) @ vel)

    def f(xb):
        return -chart(y, xb) + chart(x, xb)

    vals = [fdot(t, xb) for t, xb in zip(ts, xbs)]
    out = []
    for k in range(len(ts) - 1):
        a, b = vals[k], vals[k + 1]
        if k > 0 and a == 0.0:
            t0, xb = ts[k], xbs[k]
        elif a * b < 0:
            lo, hi, flo = ts[k], ts[k + 1], a
            xb = xbs[k]
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                xb = xbar_at(mid, xb)
                fm = fdot(mid, xb)
                if fm == 0.0 or hi - lo < 1e-12:
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            t0 = mid
        else:
            continue
        if not fd_step < t0 < 1 - fd_step:
            continue
        fm = f(xbar_at(t0 - fd_step, xb))
        fp = f(xbar_at(t0 + fd_step, xb))
        out.append((float(t0), (fp - 2 * f(xb) + fm) / fd_step ** 2))
    return out


def load_hyperbolic_witness() -> dict:
    """Stored configuration where the sliding-mountain inequality fails."""
    text = resources.files("crosscurv").joinpath("data/hyperbolic_witness.json").read_text()
    return json.loads(text)


def search_violation(chart: CostChart, seed: int = 7, trials: int = 300, radius: float = 0.6,
                     spread: float = 0.5, ys_per_trial: int = 24,
                     cfg: NewtonConfig = DEFAULT_NEWTON) -> dict:
    """Seeded random search for a sliding-mountain violation.

    Draws x in a disk of ``radius``, foci within ``spread`` of x and test
    points y around x; returns the best configuration found.
    """
    rng = np.random.default_rng(seed)
    n = chart.n
    best = {"violation": -math.inf}
    ts = np.linspace(0, 1, 9)
    for _ in range(trials):
        x = rng.uniform(-radius, radius, n)
        xb0 = x + rng.uniform(-spread, spread, n)
        xb1 = x + rng.uniform(-spread, spread, n)
        ys = x + rng.uniform(-spread, spread, (ys_per_trial, n))
        if not (chart.in_domain(x, xb0) and chart.in_domain(x, xb1)):
            continue
        try:
            rep = sliding_mountain_check(chart, x, xb0, xb1, ys, ts, cfg)
        except (SegmentFailure, DomainError):
            continue
        if rep.argmax is not None and rep.max_violation > best["violation"]:
            best = {"violation": rep.max_violation, "x": x.tolist(), "xbar0": xb0.tolist(),
                    "xbar1": xb1.tolist(), "y": rep.argmax[1], "t": rep.argmax[0],
                    "seed": seed}
    return best


# ---------------------------------------------------------------------------
# quantitative constants

@dataclass
class ConstantsEstimate:
    C0: float
    norm_DDbar: float
    norm_DDbar_inv: float
    norm_C2: float
    norm_C3: float
    C1: float
    samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_constants(chart: CostChart, domain: DomainSpec | None = None,
                       points_per_side: int = 6, directions_per_point: int = 12,
                       seed: int = 0, tol: float = 1e-8, workers: int = 1,
                       allow_weak: bool = False) -> ConstantsEstimate:
    """C₀, C₁ and sampled norms over a box; refuses unless the box samples A3s.

    ``allow_weak`` also accepts A3w, with C₀ = 0: the estimate then reduces
    to the plain maximum principle.
    """
    domain = domain or chart.domain
    rep = classify_regularity(chart, domain, points_per_side, directions_per_point, tol, seed,
                              workers)
    ok = rep.classification == A3S or (allow_weak and rep.classification == A3W)
    if not ok:
        raise RegularityRefused(
            f"cost classified {rep.classification} (min normalised null cross-curvature "
            f"{rep.min_value:.3g}); the local estimate needs strict regularity")
    C0 = 0.5 * rep.min_value if rep.classification == A3S else 0.0
    pairs = sample_pairs(chart, domain, points_per_side, np.random.default_rng(seed))
    nA = nAinv = c2 = c3 = 0.0
    n = chart.n
    for x, xb in pairs:
        jet = chart.jet(x, xb, 3)
        A = jet[2][:n, n:]
        nA = max(nA, float(np.linalg.norm(A, 2)))
        nAinv = max(nAinv, float(np.linalg.norm(np.linalg.inv(A), 2)))
        m2 = max(float(np.max(np.abs(t))) for t in jet[:3])
        c2 = max(c2, m2)
        c3 = max(c3, m2, float(np.max(np.abs(jet[3]))))
    C1 = C0 * (2 * nA) ** -2 * nAinv ** -2
    return ConstantsEstimate(C0, nA, nAinv, c2, c3, C1, len(pairs))


def _ball_grid(x, radius, per_axis):
    n = len(x)
    axes = [np.linspace(-radius, radius, per_axis)] * n
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    pts = pts[np.linalg.norm(pts, axis=1) <= radius + 1e-15]
    return x[None, :] + pts


def local_estimate_check(chart: CostChart, x, xb0, xb1, consts: ConstantsEstimate,
                         y_radius: float, y_per_axis: int = 11, ts=None,
                         cfg: NewtonConfig = DEFAULT_NEWTON) -> float:
    """max of f(t,y) + C₁t(1−t)|x̄₁−x̄₀|²|y−x|² − ‖c‖_{C³}|y−x|³ − max{f(0,y), f(1,y)}.

    A value ≤ 0 means the local estimate held at every sample.
    """
    x = np.asarray(x, float)
    xb0, xb1 = np.asarray(xb0, float), np.asarray(xb1, float)
    ts = np.linspace(0, 1, 17) if ts is None else np.asarray(ts, float)
    ys = _ball_grid(x, y_radius, y_per_axis)
    f, _ = mountain_grid(chart, x, xb0, xb1, ys, ts, cfg)
    ok = ~np.isnan(f[0])
    r = np.linalg.norm(ys[ok] - x, axis=1)
    gain = consts.C1 * (ts * (1 - ts))[:, None] * float(np.sum((xb1 - xb0) ** 2)) * r[None, :] ** 2
    lhs = f[:, ok] + gain - consts.norm_C3 * r[None, :] ** 3
    return float(np.max(lhs - np.maximum(f[0, ok], f[-1, ok])[None, :]))


def r0_proxy(chart: CostChart, x, xb0, xb1, consts: ConstantsEstimate, start: float = 0.4,
             shrink: float = 0.5, tol: float = 1e-6, max_steps: int = 12, **kw) -> float:
    """Largest tested radius (start·shrinkᵏ) at which the local estimate holds."""
    r = start
    for _ in range(max_steps):
        try:
            if local_estimate_check(chart, x, xb0, xb1, consts, r, **kw) <= tol:
                return r
        except (SegmentFailure, DomainError):
            pass
        r *= shrink
    return 0.0


# ---------------------------------------------------------------------------
# law of cosines

def _g_frame(chart: CostChart, x):
    """Metric g = −c_{ij̄}(x, x) and a g-orthonormal frame (as columns)."""
    n = chart.n
    if n < 2:
        raise ValueError("need n >= 2 for a two-plane")
    g = -chart.jet(x, x, 2)[2][:n, n:]
    g = 0.5 * (g + g.T)
    L = np.linalg.cholesky(g)  # g = L Lᵀ; columns of L⁻ᵀ are g-orthonormal
    return g, np.linalg.inv(L).T


def diagonal_cross_curvature(chart: CostChart, x, via_fd: bool = False) -> float:
    """Cross-curvature at (x, x) for g-orthonormal p ⟂ p̄ (a null pair on the diagonal)."""
    x = np.asarray(x, float)
    _, frame = _g_frame(chart, x)
    p, pbar = frame[:, 0], frame[:, 1]
    if via_fd:
        return cross_curvature_via_fd(chart, x, x, p, pbar)
    return mixed_riemann(chart, x, x).cross(p, pbar)


def law_of_cosines_fit(chart: CostChart, x, theta: float = math.pi / 2, s_max: float = 0.1,
                       grid: int = 9, cfg: NewtonConfig = DEFAULT_NEWTON) -> float:
    """Curvature k from d² = s² + t² − 2st cosθ − (k/3)s²t² sin²θ + …, with c = d²/2.

    Two unit-speed geodesics leave x at angle θ (unit and angle measured in
    g = −c_{ij̄}(x, x)); the s²t² coefficient comes from a least-squares fit
    over monomials sᵃtᵇ with a, b ≥ 1, a + b ≤ 6.
    """
    x = np.asarray(x, float)
    g, frame = _g_frame(chart, x)
    e1, f1 = frame[:, 0], frame[:, 1]
    e2 = math.cos(theta) * e1 + math.sin(theta) * f1
    ss = np.linspace(-s_max, s_max, grid)

    def geodesic(v):
        out, guess = [], x
        for s in ss:  # c-exp of the lowered vector is the Riemannian exponential
            guess = c_exp(chart, x, s * (g @ v), guess if s != ss[0] else x + s * v, cfg)
            out.append(guess)
        return np.array(out)

    xs, xbs = geodesic(e1), geodesic(e2)
    S, T = np.meshgrid(ss, ss, indexing="ij")
    D = 2 * chart.eval_many(xs[:, None, :], xbs[None, :, :]) - (S ** 2 + T ** 2
                                                                - 2 * S * T * math.cos(theta))
    powers = [(a, b) for a in range(1, 6) for b in range(1, 6) if a + b <= 6]
    M = np.stack([(S ** a * T ** b).ravel() for a, b in powers], axis=1)
    coef, *_ = np.linalg.lstsq(M, D.ravel(), rcond=None)
    c22 = coef[powers.index((2, 2))]
    return float(c22 / (-math.sin(theta) ** 2 / 3.0))
