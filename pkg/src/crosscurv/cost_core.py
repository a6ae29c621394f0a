"""Cost charts: a cost c(x, x̄) on a pair of coordinate charts plus its derivatives.

Coordinates are ordered ``z = (x^1..x^n, x̄^1..x̄^n)`` throughout, and the
derivative tensors returned by :meth:`CostChart.jet` are indexed that way,
so ``jet[2][i, n + j]`` is c_{i j̄}. Indices are 0-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import dual as dm
from .errors import CostSpecError, DomainError

MAX_ORDER = 4
EPS = np.finfo(float).eps

BUILTIN_KINDS = (
    "euclid_quadratic",
    "log_euclid",
    "sphere_squared",
    "hyperbolic_squared",
    "one_dim_family",
    "convex_boundary",
)

SPHERE_THETA_MIN = 0.15
DEFAULT_CUT_MARGIN = 0.1
POINCARE_RADIUS_CAP = 0.95


@dataclass(frozen=True)
class MultiIndex:
    """Which partials to take: unbarred (source) and barred (target) indices."""

    unbarred: tuple[int, ...] = ()
    barred: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "unbarred", tuple(int(i) for i in self.unbarred))
        object.__setattr__(self, "barred", tuple(int(i) for i in self.barred))
        if self.order > MAX_ORDER:
            raise ValueError(f"total order {self.order} exceeds {MAX_ORDER}")

    @property
    def order(self) -> int:
        return len(self.unbarred) + len(self.barred)

    def flat(self, n: int) -> tuple[int, ...]:
        for i in self.unbarred + self.barred:
            if not 0 <= i < n:
                raise ValueError(f"index {i} out of range for n={n}")
        return self.unbarred + tuple(n + j for j in self.barred)


@dataclass(frozen=True)
class DomainSpec:
    """Coordinate boxes for each side plus the singular-set exclusion radius."""

    source_box: tuple[tuple[float, float], ...] | None = None
    target_box: tuple[tuple[float, float], ...] | None = None
    cut_margin: float = DEFAULT_CUT_MARGIN

    def __post_init__(self):
        if not self.cut_margin > 0:
            raise CostSpecError("cut_margin must be positive")
        for box in (self.source_box, self.target_box):
            if box is not None:
                for lo, hi in box:
                    if not lo < hi:
                        raise CostSpecError(f"empty box interval [{lo}, {hi}]")

    @classmethod
    def from_config(cls, cfg: Mapping | None, n: int) -> "DomainSpec":
        if not cfg:
            return cls()
        box = cfg.get("box")
        src = tgt = None
        if isinstance(box, Mapping):
            src, tgt = box.get("source"), box.get("target")
        elif box is not None:
            src = tgt = box
        for b in (src, tgt):
            if b is not None and len(b) != n:
                raise CostSpecError(f"box needs {n} intervals, got {len(b)}")
        return cls(
            source_box=None if src is None else tuple(tuple(map(float, iv)) for iv in src),
            target_box=None if tgt is None else tuple(tuple(map(float, iv)) for iv in tgt),
            cut_margin=float(cfg.get("cut_margin", DEFAULT_CUT_MARGIN)),
        )

    def in_boxes(self, x: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        ok = np.ones(np.broadcast_shapes(x.shape[:-1], xbar.shape[:-1]), dtype=bool)
        for box, pts in ((self.source_box, x), (self.target_box, xbar)):
            if box is None:
                continue
            lo = np.array([iv[0] for iv in box])
            hi = np.array([iv[1] for iv in box])
            ok &= np.all((pts >= lo) & (pts <= hi), axis=-1)
        return ok

    def sample(self, rng: np.random.Generator, side: str, size: int) -> np.ndarray:
        box = self.source_box if side == "source" else self.target_box
        if box is None:
            raise ValueError(f"no {side} box to sample from")
        lo = np.array([iv[0] for iv in box])
        hi = np.array([iv[1] for iv in box])
        return lo + (hi - lo) * rng.random((size, len(box)))


def _components(pts: np.ndarray) -> list:
    return [pts[..., k] for k in range(pts.shape[-1])]


@dataclass(frozen=True, eq=False)
class CostChart:
    """A cost on a pair of n-dimensional charts.

    ``fn(x, xbar)`` receives lists of n coordinate components (floats, numpy
    arrays or :class:`~crosscurv.dual.Dual` numbers) and must be written with
    the operators and functions from :mod:`crosscurv.dual`. ``allowed`` gives
    the singular-set exclusion in the same calling convention and returns a
    boolean (array).
    """

    n: int
    fn: Callable
    name: str = "custom"
    mode: str = "dual"
    allowed: Callable | None = None
    domain: DomainSpec = field(default_factory=DomainSpec)
    params: Mapping = field(default_factory=dict)
    jet_override: Callable | None = None
    fd_scale: float | Callable = 1.0
    feature_scale: Callable | None = None

    def __post_init__(self):
        if self.n < 1:
            raise CostSpecError("chart dimension n must be >= 1")
        if self.mode not in ("analytic", "dual", "fd"):
            raise CostSpecError(f"unknown derivative mode {self.mode!r}")

    # -- domain -------------------------------------------------------------
    def in_domain(self, x, xbar):
        """Vectorised membership test; trailing axis holds coordinates."""
        x = np.asarray(x, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        if x.shape[-1] != self.n or xbar.shape[-1] != self.n:
            raise ValueError(f"expected {self.n} coordinates per point")
        ok = np.all(np.isfinite(x), axis=-1) & np.all(np.isfinite(xbar), axis=-1)
        ok = ok & self.domain.in_boxes(x, xbar)
        if self.allowed is not None:
            with np.errstate(invalid="ignore", divide="ignore"):
                ok = ok & np.asarray(self.allowed(_components(x), _components(xbar)), dtype=bool)
        return bool(ok) if np.ndim(ok) == 0 else ok

    def check(self, x, xbar):
        if not self.in_domain(x, xbar):
            raise DomainError(f"({list(np.ravel(x))}, {list(np.ravel(xbar))}) outside the "
                              f"domain of {self.name}", x, xbar)

    # -- values ---------------------------------------------------------------
    def __call__(self, x, xbar) -> float:
        self.check(x, xbar)
        x = np.asarray(x, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        return float(self.fn(list(x), list(xbar)))

    def eval_many(self, x, xbar) -> np.ndarray:
        """Evaluate on broadcast point arrays; out-of-domain entries are NaN."""
        x = np.asarray(x, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], xbar.shape[:-1])
        x = np.broadcast_to(x, shape + (self.n,))
        xbar = np.broadcast_to(xbar, shape + (self.n,))
        mask = np.broadcast_to(self.in_domain(x, xbar), shape)
        out = np.full(shape, np.nan)
        if np.any(mask):
            vals = self.fn(_components(x[mask]), _components(xbar[mask]))
            out[mask] = np.broadcast_to(np.asarray(vals, dtype=float), out[mask].shape)
        return out

    # -- derivatives ----------------------------------------------------------
    def jet(self, x, xbar, order: int = MAX_ORDER) -> list[np.ndarray]:
        """Derivative tensors ``[c, Dc, D²c, ...]`` in the joint coordinates z."""
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"order must be in [0, {MAX_ORDER}]")
        x = np.asarray(x, dtype=float).reshape(self.n)
        xbar = np.asarray(xbar, dtype=float).reshape(self.n)
        self.check(x, xbar)
        if self.jet_override is not None:
            return self.jet_override(x, xbar, order)
        if self.mode == "fd":
            return fd_jet(self, x, xbar, order)
        n = self.n
        return dm.derivative_tensors(lambda z: self.fn(z[:n], z[n:]),
                                     np.concatenate([x, xbar]), order)

    def mixed_partial(self, x, xbar, idx: MultiIndex) -> float:
        flat = idx.flat(self.n)
        tensors = self.jet(x, xbar, idx.order)
        return float(tensors[idx.order][flat]) if flat else float(tensors[0])

    def with_domain(self, domain: DomainSpec) -> "CostChart":
        return CostChart(self.n, self.fn, self.name, self.mode, self.allowed, domain,
                         self.params, self.jet_override, self.fd_scale,
                         self.feature_scale)


# ---------------------------------------------------------------------------
# finite differences (black-box costs)

# Base step eps^(1/(order + offset)) times the coordinate scale; offset 3.5 balances
# roundoff against the h^4 error left after one Richardson step.
FD_EXPONENT_OFFSET = 3.5


def _fd_scale(chart: CostChart, x: np.ndarray, xbar: np.ndarray) -> float:
    if callable(chart.fd_scale):
        return float(chart.fd_scale(x, xbar))
    return chart.fd_scale * max(1.0, float(np.max(np.abs(np.concatenate([x, xbar])))))


def _fd_step(order: int, scale: float) -> float:
    return EPS ** (1.0 / (order + FD_EXPONENT_OFFSET)) * scale


def fd_jet(chart: CostChart, x: np.ndarray, xbar: np.ndarray, order: int) -> list[np.ndarray]:
    """Nested central differences with one Richardson step (h and 2h)."""
    n = chart.n
    m = 2 * n
    z0 = np.concatenate([x, xbar])
    points = [z0]
    plan = []  # (multi-index, step, slice into points, coefficients)
    scale = _fd_scale(chart, x, xbar)
    for r in range(1, order + 1):
        h = _fd_step(r, scale)
        for idx in itertools.combinations_with_replacement(range(m), r):
            for step in (h, 2 * h):
                start = len(points)
                coeffs = []
                for signs in itertools.product((1.0, -1.0), repeat=r):
                    dz = np.zeros(m)
                    for s, i in zip(signs, idx):
                        dz[i] += s * step
                    points.append(z0 + dz)
                    coeffs.append(np.prod(signs) / (2 * step) ** r)
                plan.append((idx, step, start, np.array(coeffs)))
    pts = np.array(points)
    xs, xbs = pts[:, :n], pts[:, n:]
    if not np.all(chart.in_domain(xs, xbs)):
        raise DomainError("finite-difference stencil leaves the domain", x, xbar)
    vals = np.asarray(chart.fn(_components(xs), _components(xbs)), dtype=float)
    vals = np.broadcast_to(vals, (len(points),))
    tensors = [np.asarray(vals[0])]
    estimates: dict = {}
    for idx, step, start, coeffs in plan:
        estimates.setdefault(idx, []).append(float(coeffs @ vals[start:start + len(coeffs)]))
    for r in range(1, order + 1):
        t = np.zeros((m,) * r)
        for idx in itertools.combinations_with_replacement(range(m), r):
            d_h, d_2h = estimates[idx]
            val = (4.0 * d_h - d_2h) / 3.0
            for perm in set(itertools.permutations(idx)):
                t[perm] = val
        tensors.append(t)
    return tensors


def make_blackbox_cost(fn: Callable, n: int, allowed: Callable | None = None,
                       domain: DomainSpec | None = None, name: str = "blackbox",
                       scale: float | Callable = 1.0) -> CostChart:
    """Wrap a user cost; derivatives come from finite differences.

    ``fn(x, xbar)`` gets lists of coordinate components which may be numpy
    arrays (all stencil points are evaluated in one call).
    """
    return CostChart(n=n, fn=fn, name=name, mode="fd", allowed=allowed,
                     domain=domain or DomainSpec(), fd_scale=scale)


def as_blackbox(chart: CostChart) -> CostChart:
    """The same cost with derivatives taken by finite differences."""
    scale = chart.feature_scale if chart.feature_scale is not None else 1.0
    return CostChart(n=chart.n, fn=chart.fn, name=f"{chart.name}[fd]", mode="fd",
                     allowed=chart.allowed, domain=chart.domain, params=chart.params,
                     fd_scale=scale, feature_scale=chart.feature_scale)


# ---------------------------------------------------------------------------
# built-in costs

def _sqnorm(v):
    out = v[0] * v[0]
    for a in v[1:]:
        out = out + a * a
    return out


def _diff(x, xbar):
    return [a - b for a, b in zip(x, xbar)]


def _euclid_jet(n):
    def jet(x, xbar, order):
        m = 2 * n
        d = x - xbar
        out = [np.asarray(0.5 * float(d @ d))]
        if order >= 1:
            out.append(np.concatenate([d, -d]))
        if order >= 2:
            eye = np.eye(n)
            out.append(np.block([[eye, -eye], [-eye, eye]]))
        for r in range(3, order + 1):
            out.append(np.zeros((m,) * r))
        return out
    return jet


def euclid_quadratic(n: int, domain: DomainSpec | None = None) -> CostChart:
    return CostChart(n=n, fn=lambda x, xb: 0.5 * _sqnorm(_diff(x, xb)),
                     name="euclid_quadratic", mode="analytic",
                     domain=domain or DomainSpec(), jet_override=_euclid_jet(n))


def log_euclid(n: int, domain: DomainSpec | None = None) -> CostChart:
    domain = domain or DomainSpec()
    delta = domain.cut_margin

    def fn(x, xb):
        return -0.5 * dm.log(_sqnorm(_diff(x, xb)))

    def allowed(x, xb):
        return _sqnorm(_diff(x, xb)) >= delta * delta

    def feature(x, xb):
        return min(1.0, 0.5 * float(np.linalg.norm(x - xb)))

    return CostChart(n=n, fn=fn, name="log_euclid", mode="dual", allowed=allowed,
                     domain=domain, params={"cut_margin": delta}, feature_scale=feature)


def sphere_cos_distance(x, xb):
    """Cosine of the great-circle distance in (θ, φ) coordinates."""
    th, ph = x
    tb, pb = xb
    return dm.sin(th) * dm.sin(tb) * dm.cos(ph - pb) + dm.cos(th) * dm.cos(tb)


def sphere_embed(pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    th, ph = pts[..., 0], pts[..., 1]
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


def sphere_unembed(v, phi_near=None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    th = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
    ph = np.arctan2(v[..., 1], v[..., 0])
    if phi_near is not None:
        ph = ph + 2 * np.pi * np.round((np.asarray(phi_near) - ph) / (2 * np.pi))
    return np.stack([th, ph], axis=-1)


def sphere_distance(x, xb) -> np.ndarray:
    u = sphere_cos_distance(_components(np.asarray(x, float)), _components(np.asarray(xb, float)))
    return np.arccos(np.clip(u, -1.0, 1.0))


def sphere_squared(n: int = 2, domain: DomainSpec | None = None,
                   theta_min: float = SPHERE_THETA_MIN) -> CostChart:
    if n != 2:
        raise CostSpecError("sphere_squared is charted in (θ, φ) and needs n = 2")
    domain = domain or DomainSpec()
    delta = domain.cut_margin
    cos_max_dist = math.cos(math.pi - delta)

    def fn(x, xb):
        return dm.arccos_sq_half(sphere_cos_distance(x, xb))

    def allowed(x, xb):
        lo, hi = theta_min, math.pi - theta_min
        ok = (x[0] >= lo) & (x[0] <= hi) & (xb[0] >= lo) & (xb[0] <= hi)
        return ok & (sphere_cos_distance(x, xb) >= cos_max_dist)

    def feature(x, xb):
        d = float(sphere_distance(x, xb))
        return min(1.0, 0.5 * (math.pi - d), math.sin(x[0]), math.sin(xb[0]))

    return CostChart(n=2, fn=fn, name="sphere_squared", mode="dual", allowed=allowed,
                     domain=domain, params={"theta_min": theta_min, "cut_margin": delta},
                     feature_scale=feature)


def poincare_cosh_distance(z, w):
    num = 2.0 * _sqnorm(_diff(z, w))
    return 1.0 + num / ((1.0 - _sqnorm(z)) * (1.0 - _sqnorm(w)))


def hyperbolic_distance(z, w) -> np.ndarray:
    v = poincare_cosh_distance(_components(np.asarray(z, float)), _components(np.asarray(w, float)))
    return np.arccosh(np.maximum(v, 1.0))


def hyperbolic_squared(n: int = 2, domain: DomainSpec | None = None,
                       radius_cap: float = POINCARE_RADIUS_CAP) -> CostChart:
    domain = domain or DomainSpec()
    r2 = radius_cap * radius_cap

    def fn(x, xb):
        return dm.arccosh_sq_half(poincare_cosh_distance(x, xb))

    def allowed(x, xb):
        return (_sqnorm(x) <= r2) & (_sqnorm(xb) <= r2)

    def feature(x, xb):
        return min(1.0, 1.0 - float(np.linalg.norm(x)), 1.0 - float(np.linalg.norm(xb)))

    return CostChart(n=n, fn=fn, name="hyperbolic_squared", mode="dual", allowed=allowed,
                     domain=domain, params={"radius_cap": radius_cap}, feature_scale=feature)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _univariate_derivs(f: Callable, x0, order: int) -> list:
    """[f, f', ..., f^(order)] at x0 via nested duals with scalar seeds."""
    var = x0
    for _ in range(order):
        var = dm.Dual(var, 1.0)
    out = f(var)
    return [dm._component(out, range(1, r + 1), order) for r in range(order + 1)]


_LAMBDA_NAMESPACE = {"exp": dm.exp, "sin": dm.sin, "cos": dm.cos, "log": dm.log,
                     "sqrt": dm.sqrt, "pi": math.pi}


def _parse_lambda(spec) -> Callable:
    if callable(spec):
        return spec
    if isinstance(spec, str):
        try:
            code = compile(spec, "<lambda spec>", "eval")
        except SyntaxError as exc:
            raise CostSpecError(f"cannot parse lambda expression {spec!r}") from exc
        bad = set(code.co_names) - set(_LAMBDA_NAMESPACE) - {"s", "t"}
        if bad:
            raise CostSpecError(f"unknown names in lambda expression: {sorted(bad)}")

        def lam(s, t):
            return eval(code, {"__builtins__": {}}, dict(_LAMBDA_NAMESPACE, s=s, t=t))
        return lam
    raise CostSpecError("lambda must be a callable or an expression in s and t")


def one_dim_family(lam, branch: str = "upper", x0: float = 0.0, xbar0: float = 0.0,
                   domain: DomainSpec | None = None) -> CostChart:
    """c(x, x̄) = ∓ ∫_{x0}^{x} ∫_{x̄0}^{x̄} exp(±λ(s, t)) ds dt  (n = 1).

    ``branch="upper"`` takes the top signs, so c_{1 1̄} = -exp(λ).
    """
    lam = _parse_lambda(lam)
    if branch not in ("upper", "lower"):
        raise CostSpecError("branch must be 'upper' or 'lower'")
    sg = 1.0 if branch == "upper" else -1.0

    def E(s, t):
        return dm.exp(sg * lam(s, t))

    def fn(x, xb):
        x, xb = np.asarray(x[0], float), np.asarray(xb[0], float)
        hx, hb = 0.5 * (x - x0), 0.5 * (xb - xbar0)
        s = x0 + hx[..., None, None] * (_GL_NODES[:, None] + 1.0)
        t = xbar0 + hb[..., None, None] * (_GL_NODES[None, :] + 1.0)
        vals = np.asarray(E(s, t), float) * _GL_WEIGHTS[:, None] * _GL_WEIGHTS[None, :]
        return -sg * hx * hb * vals.sum(axis=(-1, -2))

    def jet(x, xb, order):
        xv, tv = float(x[0]), float(xb[0])
        mixed = dm.derivative_tensors(lambda z: E(z[0], z[1]), [xv, tv], max(order - 2, 0))
        # pure derivatives: integrate derivatives of E along the other variable
        hb = 0.5 * (tv - xbar0)
        t_nodes = xbar0 + hb * (_GL_NODES + 1.0)
        ds = _univariate_derivs(lambda s: E(s, t_nodes), xv, max(order - 1, 0))
        hx = 0.5 * (xv - x0)
        s_nodes = x0 + hx * (_GL_NODES + 1.0)
        dt = _univariate_derivs(lambda t: E(s_nodes, t), tv, max(order - 1, 0))

        def pure_x(a):  # c_{x^a}, a >= 1
            return -sg * hb * float(np.sum(np.broadcast_to(ds[a - 1], _GL_NODES.shape) * _GL_WEIGHTS))

        def pure_t(b):
            return -sg * hx * float(np.sum(np.broadcast_to(dt[b - 1], _GL_NODES.shape) * _GL_WEIGHTS))

        def entry(a, b):
            if a == 0 and b == 0:
                return float(fn([xv], [tv]))
            if b == 0:
                return pure_x(a)
            if a == 0:
                return pure_t(b)
            r = a + b - 2
            t = mixed[r]
            return -sg * float(t[(0,) * (a - 1) + (1,) * (b - 1)] if r else t)

        out = []
        for r in range(order + 1):
            t = np.zeros((2,) * r)
            for idx in itertools.product((0, 1), repeat=r):
                b = sum(idx)
                t[idx] = entry(r - b, b)
            out.append(t if r else np.asarray(t))
        return out

    return CostChart(n=1, fn=fn, name="one_dim_family", mode="dual",
                     domain=domain or DomainSpec(), jet_override=jet,
                     params={"branch": branch, "x0": x0, "xbar0": xbar0})


def _quadratic(hessian, grad=None, offset=0.0) -> Callable:
    A = np.asarray(hessian, dtype=float)
    b = np.zeros(len(A)) if grad is None else np.asarray(grad, dtype=float)
    if A.shape != (len(b), len(b)) or not np.allclose(A, A.T):
        raise CostSpecError("graph Hessian must be a symmetric square matrix")

    def f(X):
        out = offset
        for i in range(len(b)):
            out = out + b[i] * X[i]
            for j in range(len(b)):
                if A[i, j] != 0.0:
                    out = out + 0.5 * A[i, j] * X[i] * X[j]
        return out
    return f


def convex_boundary(f: Callable, g: Callable, n: int,
                    domain: DomainSpec | None = None) -> CostChart:
    """|x - x̄|²/2 between graph points (X, f(X)) and (X̄, g(X̄)) in R^{n+1}."""

    def fn(x, xb):
        h = f(x) - g(xb)
        return 0.5 * _sqnorm(_diff(x, xb)) + 0.5 * h * h

    return CostChart(n=n, fn=fn, name="convex_boundary", mode="dual",
                     domain=domain or DomainSpec())


# ---------------------------------------------------------------------------
# composites and configuration

def make_product_cost(plus: CostChart, minus: CostChart) -> CostChart:
    """c₊(x₊, x̄₊) + c₋(x₋, x̄₋) on the product of the charts."""
    n1, n2 = plus.n, minus.n
    n = n1 + n2
    # joint index of factor variable k in the product's z ordering
    map_plus = [k if k < n1 else n + (k - n1) for k in range(2 * n1)]
    map_minus = [n1 + k if k < n2 else n + n1 + (k - n2) for k in range(2 * n2)]

    def fn(x, xb):
        return plus.fn(list(x[:n1]), list(xb[:n1])) + minus.fn(list(x[n1:]), list(xb[n1:]))

    def allowed(x, xb):
        return np.logical_and(plus.in_domain(np.stack(x[:n1], -1), np.stack(xb[:n1], -1)),
                              minus.in_domain(np.stack(x[n1:], -1), np.stack(xb[n1:], -1)))

    def jet(x, xb, order):
        jp = plus.jet(x[:n1], xb[:n1], order)
        jm = minus.jet(x[n1:], xb[n1:], order)
        out = [np.asarray(float(jp[0]) + float(jm[0]))]
        for r in range(1, order + 1):
            t = np.zeros((2 * n,) * r)
            for part, mapping in ((jp[r], map_plus), (jm[r], map_minus)):
                for idx in itertools.product(range(len(mapping)), repeat=r):
                    t[tuple(mapping[i] for i in idx)] = part[idx]
            out.append(t)
        return out

    modes = {plus.mode, minus.mode}
    mode = "fd" if "fd" in modes else ("dual" if "dual" in modes else "analytic")
    return CostChart(n=n, fn=fn, name=f"product({plus.name},{minus.name})", mode=mode,
                     allowed=allowed, jet_override=jet,
                     params={"factors": (plus.name, minus.name), "split": n1})


_PARAM_KEYS = {
    "euclid_quadratic": set(),
    "log_euclid": set(),
    "sphere_squared": {"theta_min"},
    "hyperbolic_squared": {"radius_cap"},
    "one_dim_family": {"lambda", "branch", "x0", "xbar0"},
    "convex_boundary": {"f_hessian", "f_grad", "f_offset", "g_hessian", "g_grad", "g_offset"},
    "product": {"factors"},
}


def make_builtin_cost(kind: str, n: int = 2, params: Mapping | None = None,
                      domain: DomainSpec | None = None) -> CostChart:
    params = dict(params or {})
    unknown = set(params) - _PARAM_KEYS.get(kind, set(params))
    if unknown:
        raise CostSpecError(f"unknown parameters for {kind}: {sorted(unknown)}")
    if n < 1:
        raise CostSpecError("n must be >= 1")
    if kind == "euclid_quadratic":
        return euclid_quadratic(n, domain)
    if kind == "log_euclid":
        return log_euclid(n, domain)
    if kind == "sphere_squared":
        return sphere_squared(n, domain, theta_min=float(params.get("theta_min", SPHERE_THETA_MIN)))
    if kind == "hyperbolic_squared":
        return hyperbolic_squared(n, domain,
                                  radius_cap=float(params.get("radius_cap", POINCARE_RADIUS_CAP)))
    if kind == "one_dim_family":
        if n != 1:
            raise CostSpecError("one_dim_family is one-dimensional (n = 1)")
        lam = params.get("lambda", "s*t")
        return one_dim_family(lam, branch=params.get("branch", "upper"),
                              x0=float(params.get("x0", 0.0)),
                              xbar0=float(params.get("xbar0", 0.0)), domain=domain)
    if kind == "convex_boundary":
        try:
            f = _quadratic(params.get("f_hessian", np.eye(n)), params.get("f_grad"),
                           float(params.get("f_offset", 0.0)))
            g = _quadratic(params.get("g_hessian", np.eye(n)), params.get("g_grad"),
                           float(params.get("g_offset", 0.0)))
        except (TypeError, ValueError) as exc:
            raise CostSpecError(f"invalid convex_boundary parameters: {exc}") from exc
        return convex_boundary(f, g, n, domain)
    if kind == "product":
        factors = params.get("factors")
        if not factors or len(factors) != 2:
            raise CostSpecError("product needs params.factors = [spec, spec]")
        chart = make_product_cost(cost_from_config(factors[0]), cost_from_config(factors[1]))
        if n != chart.n:
            raise CostSpecError(f"product of the given factors has n = {chart.n}, not {n}")
        return chart if domain is None else chart.with_domain(domain)
    raise CostSpecError(f"unknown cost kind {kind!r}")


def cost_from_config(cfg: Mapping) -> CostChart:
    """Build a chart from ``{"kind", "n", "params", "domain"}``."""
    if "kind" not in cfg:
        raise CostSpecError("cost spec needs a 'kind'")
    unknown = set(cfg) - {"kind", "n", "params", "domain"}
    if unknown:
        raise CostSpecError(f"unknown cost spec keys: {sorted(unknown)}")
    kind = cfg["kind"]
    if kind == "product" and "n" not in cfg:
        factors = (cfg.get("params") or {}).get("factors") or []
        default_n = sum(int(f.get("n", 1 if f.get("kind") == "one_dim_family" else 2))
                        for f in factors)
    else:
        default_n = 1 if kind == "one_dim_family" else 2
    n = int(cfg.get("n", default_n))
    domain = DomainSpec.from_config(cfg.get("domain"), n)
    return make_builtin_cost(kind, n, cfg.get("params"), domain)
