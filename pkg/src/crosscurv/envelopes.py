"""c-convex envelopes and semidiscrete transport on a raster.

Sign convention: a mountain with focus x̄ and height λ is y ↦ λ − c(y, x̄);
an envelope is the pointwise max of finitely many mountains, so a
semidiscrete potential is u(x) = max_i (λ_i − c(x, x̄_i)).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .cost_core import (CostChart, DomainSpec, make_builtin_cost, sphere_distance)

CHUNK = 1 << 15


def _pairwise_cost(chart: CostChart, X: np.ndarray, XB: np.ndarray, workers: int = 1) -> np.ndarray:
    """c(X_a, XB_b) as an (len(X), len(XB)) matrix, +inf where undefined.

    Rows are split into fixed chunks so results do not depend on ``workers``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    XB = np.atleast_2d(np.asarray(XB, dtype=float))
    out = np.empty((len(X), len(XB)))

    def work(lo):
        hi = min(lo + CHUNK, len(X))
        block = chart.eval_many(X[lo:hi, None, :], XB[None, :, :])
        out[lo:hi] = np.where(np.isnan(block), np.inf, block)

    starts = range(0, len(X), CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    return out


@dataclass(frozen=True)
class Mountain:
    focus: np.ndarray
    height: float

    def eval(self, chart: CostChart, y) -> np.ndarray:
        """λ − c(y, x̄); −inf where (y, x̄) is outside the domain."""
        y = np.asarray(y, dtype=float)
        vals = chart.eval_many(y, np.asarray(self.focus, dtype=float))
        return np.where(np.isnan(vals), -np.inf, self.height - vals)


@dataclass(frozen=True)
class Envelope:
    mountains: tuple[Mountain, ...]

    def __post_init__(self):
        object.__setattr__(self, "mountains", tuple(self.mountains))
        if not self.mountains:
            raise ValueError("an envelope needs at least one mountain")

    @classmethod
    def from_arrays(cls, foci, heights) -> "Envelope":
        foci = np.atleast_2d(np.asarray(foci, dtype=float))
        return cls(tuple(Mountain(f, float(h)) for f, h in zip(foci, heights)))

    @property
    def foci(self) -> np.ndarray:
        return np.array([m.focus for m in self.mountains])

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.mountains])

    def scores(self, chart: CostChart, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self.heights[None, :] - _pairwise_cost(chart, y, self.foci)

    def eval(self, chart: CostChart, y) -> np.ndarray:
        """max over admissible mountains; raises if none is admissible at some y."""
        s = self.scores(chart, y)
        u = s.max(axis=1)
        if np.any(np.isneginf(u)):
            raise ValueError("no admissible mountain at some query points")
        return u

    def active(self, chart: CostChart, y) -> np.ndarray:
        """Index of the maximising mountain (lowest index on ties)."""
        return np.argmax(self.scores(chart, y), axis=1)


def c_transform(chart: CostChart, sites, values, query, direction: str = "c") -> np.ndarray:
    """Discrete c-transform sup_k (−c − v_k).

    ``direction="c"``: sites are targets, queries are sources, result v^c(x).
    ``direction="c*"``: sites are sources, queries are targets.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    values = np.asarray(values, dtype=float)
    query = np.asarray(query, dtype=float)
    single = query.ndim == 1
    query = np.atleast_2d(query)
    if direction == "c":
        C = _pairwise_cost(chart, query, sites)
    elif direction == "c*":
        C = _pairwise_cost(chart, sites, query).T
    else:
        raise ValueError("direction must be 'c' or 'c*'")
    out = np.max(-C - values[None, :], axis=1)
    if np.any(np.isneginf(out)):
        raise ValueError("no admissible site for some query point")
    return out[0] if single else out


def duality_check(chart: CostChart, envelope: Envelope, source_grid, target_sites=None) -> float:
    """sup-norm gap between u and its double transform on the source grid."""
    grid = np.atleast_2d(np.asarray(source_grid, dtype=float))
    sites = envelope.foci if target_sites is None else np.vstack(
        [np.atleast_2d(np.asarray(target_sites, dtype=float)), envelope.foci])
    u = envelope.eval(chart, grid)
    v = c_transform(chart, grid, u, sites, direction="c*")
    uu = c_transform(chart, sites, v, grid, direction="c")
    return float(np.max(np.abs(uu - u)))


def contact_set(chart: CostChart, envelope: Envelope, x, candidates, grid,
                tol: float = 1e-9) -> list[int]:
    """Indices of candidate foci x̄ supporting u at x:
    u(y) + c(y, x̄) ≥ u(x) + c(x, x̄) − tol for every grid point y."""
    x = np.asarray(x, dtype=float)
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    ux = float(envelope.eval(chart, x[None, :])[0])
    uy = envelope.eval(chart, grid)
    cx = _pairwise_cost(chart, x[None, :], cands)[0]
    cy = _pairwise_cost(chart, grid, cands)
    out = []
    for k in range(len(cands)):
        if not np.isfinite(cx[k]):
            continue
        ok = np.isfinite(cy[:, k])
        if np.all(uy[ok] + cy[ok, k] >= ux + cx[k] - tol):
            out.append(k)
    return out


# ---------------------------------------------------------------------------
# semidiscrete transport

@dataclass(frozen=True, eq=False)
class SemidiscreteProblem:
    chart: CostChart
    box: tuple[tuple[float, float], ...]
    shape: tuple[int, ...]
    points: np.ndarray  # (N, n) cell centres, C order over ``shape``
    weights: np.ndarray  # (N,) ρ × cell volume, sums to 1
    targets: np.ndarray  # (k, n)
    eps: np.ndarray  # (k,)
    wrap: tuple[bool, ...] = ()
    name: str = "semidiscrete"

    def __post_init__(self):
        w, eps = self.weights, self.eps
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("density weights must be non-negative and sum to 1")
        if np.any(eps <= 0) or abs(eps.sum() - 1.0) > 1e-9:
            raise ValueError("target weights must be positive and sum to 1")
        if len(self.targets) != len(eps):
            raise ValueError("one weight per target")
        if not self.wrap:
            object.__setattr__(self, "wrap", (False,) * len(self.shape))


def grid_points(box, shape) -> np.ndarray:
    axes = [lo + (np.arange(m) + 0.5) * (hi - lo) / m for (lo, hi), m in zip(box, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def make_problem(chart: CostChart, box, shape, density: Callable | np.ndarray, targets, eps=None,
                 volume: Callable | None = None, wrap=(), name="semidiscrete") -> SemidiscreteProblem:
    """Midpoint-rule discretisation of ρ on a box; ``volume`` is the metric factor."""
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    shape = tuple(int(m) for m in shape)
    pts = grid_points(box, shape)
    cell = np.prod([(hi - lo) / m for (lo, hi), m in zip(box, shape)])
    rho = density(pts) if callable(density) else np.asarray(density, dtype=float).ravel()
    vol = volume(pts) if volume is not None else 1.0
    w = np.asarray(rho * vol * cell, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValueError("density must be finite, non-negative and not identically zero")
    w = w / w.sum()
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    k = len(targets)
    eps = np.full(k, 1.0 / k) if eps is None else np.asarray(eps, dtype=float)
    return SemidiscreteProblem(chart, box, shape, pts, w, targets, eps / eps.sum(),
                               tuple(wrap), name)


@dataclass(frozen=True)
class AscentConfig:
    mass_tol: float = 1e-3
    max_iter: int = 2000
    step0: float = 1.0
    armijo: float = 1e-4
    shrink: float = 0.5
    grow: float = 2.0
    max_shrinks: int = 60
    sweep_every: int = 10
    max_idle_sweeps: int = 5
    workers: int = 1


@dataclass(frozen=True, eq=False)
class SemidiscreteSolution:
    problem: SemidiscreteProblem
    lam: np.ndarray
    labels: np.ndarray  # (N,), -1 outside the support
    masses: np.ndarray
    dual_value: float
    converged: bool
    iterations: int
    log: tuple = ()
    flags: tuple[str, ...] = ()

    @property
    def label_grid(self) -> np.ndarray:
        return self.labels.reshape(self.problem.shape)

    def max_mass_error(self) -> float:
        return float(np.max(np.abs(self.masses - self.problem.eps)))


class _Dual:
    """Evaluates G(λ), labels and masses for a fixed cost matrix."""

    def __init__(self, problem: SemidiscreteProblem, workers: int):
        self.problem = problem
        self.support = np.flatnonzero(problem.weights > 0)
        self.w = problem.weights[self.support]
        self.C = _pairwise_cost(problem.chart, problem.points[self.support], problem.targets,
                                workers)
        if np.any(np.all(np.isinf(self.C), axis=1)):
            raise ValueError("some support cells have no admissible target")
        self.workers = workers

    def __call__(self, lam):
        k = len(lam)
        n = len(self.w)
        starts = list(range(0, n, CHUNK))

        def work(lo):
            hi = min(lo + CHUNK, n)
            s = lam[None, :] - self.C[lo:hi]
            lab = np.argmax(s, axis=1)
            best = s[np.arange(hi - lo), lab]
            w = self.w[lo:hi]
            return lab, np.bincount(lab, weights=w, minlength=k), float(w @ best)

        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                parts = list(pool.map(work, starts))
        else:
            parts = [work(lo) for lo in starts]
        labels = np.concatenate([p[0] for p in parts])
        masses = np.zeros(k)
        integral = 0.0
        for p in parts:  # fixed order keeps sums reproducible
            masses += p[1]
            integral += p[2]
        return float(self.problem.eps @ lam - integral), labels, masses


def _coordinate_sweep(dual: _Dual, lam: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Exact maximisation of G along each λ_i in turn.

    With the others fixed, cell x joins Ω_i once λ_i rises past the threshold
    max_{j≠i}(λ_j − c_xj) + c_xi, so ρ[Ω_i] as a function of λ_i is a
    weighted empirical distribution and G is maximised at its ε_i-quantile.
    """
    lam = lam.copy()
    for i in range(len(lam)):
        s = lam[None, :] - dual.C
        own = s[:, i].copy()
        s[:, i] = -np.inf
        with np.errstate(invalid="ignore"):
            thr = s.max(axis=1) - own + lam[i]  # λ_i beyond which x lies in Ω_i
        order = np.argsort(thr, kind="stable")
        t, cw = thr[order], np.cumsum(dual.w[order])
        k = int(np.searchsorted(cw, eps[i]))
        if k < len(cw) - 1 and abs(cw[k] - eps[i]) < abs((cw[k - 1] if k else 0.0) - eps[i]):
            k += 1
        lo = t[k - 1] if k > 0 else -np.inf
        hi = t[k] if k < len(t) else np.inf
        if np.isfinite(lo) and np.isfinite(hi):
            lam[i] = 0.5 * (lo + hi)
        elif np.isfinite(lo) or np.isfinite(hi):
            lam[i] = lo + 1.0 if np.isfinite(lo) else hi - 1.0
    return lam - lam[0]


def solve_semidiscrete(problem: SemidiscreteProblem, cfg: AscentConfig = AscentConfig()
                       ) -> SemidiscreteSolution:
    """Gradient ascent with Armijo backtracking on the concave dual.

    G is piecewise linear on a grid, so plain gradient steps can zigzag;
    when the line search stalls or ``sweep_every`` iterations pass without
    convergence, an exact coordinate-maximisation sweep (also an ascent
    step) is taken instead.
    """
    dual = _Dual(problem, cfg.workers)
    eps = problem.eps
    lam = np.zeros(len(eps))
    G, labels, masses = dual(lam)
    step = cfg.step0
    log = []
    flags = []
    converged = False
    it = 0
    best_err, idle_sweeps = np.inf, 0
    best = (np.inf, lam, G, labels, masses)
    for it in range(cfg.max_iter):
        grad = eps - masses
        err = float(np.max(np.abs(grad)))
        log.append((it, G, err, step))
        if err < best[0]:
            best = (err, lam, G, labels, masses)
        if err <= cfg.mass_tol:
            converged = True
            break
        if idle_sweeps >= cfg.max_idle_sweeps:
            flags.append("mass tolerance finer than the grid resolves (sweeps stopped improving)")
            break
        g2 = float(grad @ grad)
        stalled = False
        for _ in range(cfg.max_shrinks):
            trial = lam + step * grad
            trial = trial - trial[0]
            G_t, lab_t, m_t = dual(trial)
            if G_t >= G + cfg.armijo * step * g2:
                break
            step *= cfg.shrink
        else:
            stalled = True
        if stalled or (it + 1) % cfg.sweep_every == 0:
            trial = _coordinate_sweep(dual, lam if stalled else trial, eps)
            G_s, lab_s, m_s = dual(trial)
            sweep_err = float(np.max(np.abs(eps - m_s)))
            idle_sweeps = idle_sweeps + 1 if sweep_err >= best_err else 0
            best_err = min(best_err, sweep_err)
            if G_s >= max(G, G if stalled else G_t):
                G_t, lab_t, m_t, stalled = G_s, lab_s, m_s, False
                step = cfg.step0
            elif stalled:
                flags.append(f"line search stalled at iteration {it}")
                break
            else:
                trial = lam + step * grad
                trial = trial - trial[0]
        assert G_t >= G, "dual objective decreased on an accepted step"
        lam, G, labels, masses = trial, G_t, lab_t, m_t
        step *= cfg.grow
    else:
        it = cfg.max_iter
    if not converged:
        flags.append("iteration cap reached" if it >= cfg.max_iter else "not converged")
        _, lam, G, labels, masses = best  # report the iterate closest to the target masses
    if np.any(masses == 0):
        flags.append("empty region with positive target weight")
    full = np.full(len(problem.weights), -1, dtype=int)
    full[dual.support] = labels
    return SemidiscreteSolution(problem, lam, full, masses, G, converged, it, tuple(log),
                                tuple(flags))


def connected_components(solution: SemidiscreteSolution, region: int, adjacency: int = 4) -> int:
    """Number of connected pieces of the cells labelled ``region`` (0-based)."""
    mask = solution.label_grid == region
    if not mask.any():
        return 0
    if adjacency == 4:
        structure = ndimage.generate_binary_structure(mask.ndim, 1)
    elif adjacency == 8:
        structure = ndimage.generate_binary_structure(mask.ndim, mask.ndim)
    else:
        raise ValueError("adjacency must be 4 or 8")
    lab, count = ndimage.label(mask, structure=structure)
    wrap = solution.problem.wrap
    if not any(wrap):
        return int(count)
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for axis, periodic in enumerate(wrap):
        if not periodic:
            continue
        first = np.take(lab, 0, axis=axis)
        last = np.take(lab, -1, axis=axis)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                parent[find(a)] = find(b)
    return len({find(a) for a in range(1, count + 1)})


# ---------------------------------------------------------------------------
# diagnostics

@dataclass(frozen=True)
class HolderReport:
    exponent: float
    log_dx: np.ndarray
    log_dxbar: np.ndarray
    warning: str | None = None
    envelope_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    envelope_y: np.ndarray = field(default_factory=lambda: np.empty(0))


def holder_diagnostic(sources, images, num_pairs: int = 4000, bins: int = 12,
                      seed: int = 0, min_scale: float | None = None,
                      max_scale: float | None = None) -> HolderReport:
    """Fit α in |Δx̄| ≲ |Δx|^α from samples of a map x ↦ x̄.

    Pairs are half uniform, half near neighbours (so small separations are
    represented); they are binned by log|Δx|, a line is fitted through the
    largest log|Δx̄| in each bin (the upper envelope), and its slope is α.
    """
    X = np.atleast_2d(np.asarray(sources, dtype=float))
    Y = np.atleast_2d(np.asarray(images, dtype=float))
    if len(X) < 20:
        raise ValueError("holder_diagnostic needs at least 20 samples")
    rng = np.random.default_rng(seed)
    half = num_pairs // 2
    i = rng.integers(0, len(X), num_pairs)
    j = rng.integers(0, len(X), num_pairs)
    kmax = min(64, len(X) - 1)
    _, nbrs = cKDTree(X).query(X[i[half:]], k=kmax + 1)
    j[half:] = nbrs[np.arange(len(nbrs)), rng.integers(1, kmax + 1, len(nbrs))]
    dx = np.linalg.norm(X[i] - X[j], axis=1)
    dy = np.linalg.norm(Y[i] - Y[j], axis=1)
    keep = dx > (min_scale if min_scale is not None else 0.0)
    if max_scale is not None:
        keep &= dx <= max_scale
    dx, dy = dx[keep], dy[keep]
    ldx = np.log(dx)
    with np.errstate(divide="ignore"):
        ldy = np.log(dy)
    warning = None
    n_images = len(np.unique(np.round(Y, 12), axis=0))
    if n_images <= max(10, len(X) // 100):
        warning = f"map takes only {n_images} distinct values; exponent reflects discreteness"
    edges = np.quantile(ldx, np.linspace(0, 1, bins + 1))
    xs, ys = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (ldx >= lo) & (ldx <= hi) & np.isfinite(ldy)
        if sel.any():
            k = np.argmax(np.where(sel, ldy, -np.inf))
            xs.append(ldx[k])
            ys.append(ldy[k])
    if len(xs) < 2:
        return HolderReport(0.0, ldx, ldy, warning or "map is constant on the samples")
    slope = float(np.polyfit(xs, ys, 1)[0])
    return HolderReport(slope, ldx, ldy, warning, np.array(xs), np.array(ys))


def solution_map_samples(solution: SemidiscreteSolution):
    """(cell centre, assigned target) pairs over the support."""
    sel = solution.labels >= 0
    return solution.problem.points[sel], solution.problem.targets[solution.labels[sel]]


@dataclass(frozen=True)
class CutLocusReport:
    margin: float
    flagged: bool
    threshold: float


def cut_locus_margin(solution: SemidiscreteSolution, threshold: float = 0.1) -> CutLocusReport:
    """min over support cells of π − d(x, x̄_label(x)) on the round sphere."""
    chart = solution.problem.chart
    if chart.name != "sphere_squared":
        raise ValueError("cut_locus_margin applies to sphere_squared only")
    pts, tg = solution_map_samples(solution)
    margin = float(np.min(math.pi - sphere_distance(pts, tg)))
    return CutLocusReport(margin, margin <= threshold, threshold)


# ---------------------------------------------------------------------------
# Three-target disk configurations (the figure1-* presets): uniform disk,
# three equal-weight targets on a geodesic through its centre, spaced
# 0.6 × the disk radius.

FIGURE1_SPACING = 0.6


def figure1_plane(resolution: int = 512, radius: float = 1.0) -> SemidiscreteProblem:
    chart = make_builtin_cost("euclid_quadratic", n=2)
    box = [(-radius, radius)] * 2
    a = FIGURE1_SPACING * radius
    targets = [(-a, 0.0), (0.0, 0.0), (a, 0.0)]

    def density(p):
        return (np.sum(p * p, axis=1) <= radius * radius).astype(float)

    return make_problem(chart, box, (resolution, resolution), density, targets,
                        name="figure1-plane")


def figure1_sphere(resolution: int = 512, radius: float = 1.0) -> SemidiscreteProblem:
    chart = make_builtin_cost("sphere_squared")
    centre = np.array([math.pi / 2, 0.0])
    box = [(math.pi / 2 - radius, math.pi / 2 + radius), (-math.pi / 2, math.pi / 2)]
    a = FIGURE1_SPACING * radius
    targets = [(math.pi / 2, -a), (math.pi / 2, 0.0), (math.pi / 2, a)]

    def density(p):
        return (sphere_distance(p, centre) <= radius).astype(float)

    return make_problem(chart, box, (resolution, resolution), density, targets,
                        volume=lambda p: np.sin(p[:, 0]), name="figure1-sphere")


def figure1_hyperbolic(resolution: int = 512, radius: float = 3.5) -> SemidiscreteProblem:
    """Disk of hyperbolic radius ``radius`` about the origin of the Poincaré disk."""
    chart = make_builtin_cost("hyperbolic_squared", n=2)
    r = math.tanh(radius / 2)
    box = [(-r, r)] * 2
    rt = math.tanh(FIGURE1_SPACING * radius / 2)
    targets = [(-rt, 0.0), (0.0, 0.0), (rt, 0.0)]

    def density(p):
        return (np.sum(p * p, axis=1) <= r * r).astype(float)

    def volume(p):
        return 4.0 / (1.0 - np.sum(p * p, axis=1)) ** 2

    return make_problem(chart, box, (resolution, resolution), density, targets,
                        volume=volume, name="figure1-hyperbolic")


FIGURE1 = {"plane": figure1_plane, "sphere": figure1_sphere, "hyperbolic": figure1_hyperbolic}


# ---------------------------------------------------------------------------
# I/O

def _fmt(v: float) -> str:
    return "%.17g" % v


def partition_csv(solution: SemidiscreteSolution) -> str:
    buf = io.StringIO()
    n = solution.problem.points.shape[1]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(n)] + ["label"])
    for p, lab in zip(solution.problem.points, solution.labels):
        w.writerow([_fmt(v) for v in p] + [int(lab)])
    return buf.getvalue()


def solution_summary(solution: SemidiscreteSolution, adjacency: int = 4) -> dict:
    k = len(solution.lam)
    return {
        "name": solution.problem.name,
        "shape": list(solution.problem.shape),
        "targets": solution.problem.targets.tolist(),
        "target_weights": solution.problem.eps.tolist(),
        "lambda": solution.lam.tolist(),
        "masses": solution.masses.tolist(),
        "max_mass_error": solution.max_mass_error(),
        "dual_value": solution.dual_value,
        "converged": solution.converged,
        "iterations": solution.iterations,
        "components": [connected_components(solution, i, adjacency) for i in range(k)],
        "flags": list(solution.flags),
    }


def read_density_csv(path) -> tuple[np.ndarray, tuple[tuple[float, float], ...]]:
    """Density raster: header ``nx,ny,x0,x1,y0,y1`` then ``nx`` rows of ``ny`` values.

    Row i holds the cells with first coordinate index i, matching
    :func:`grid_points` ordering.
    """
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 6:
            raise ValueError("density header must be nx,ny,x0,x1,y0,y1")
        nx, ny = int(header[0]), int(header[1])
        x0, x1, y0, y1 = map(float, header[2:])
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (nx, ny):
        raise ValueError(f"density body has shape {data.shape}, header says {(nx, ny)}")
    if np.any(data < 0) or not np.all(np.isfinite(data)):
        raise ValueError("density values must be finite and non-negative")
    return data, ((x0, x1), (y0, y1))
