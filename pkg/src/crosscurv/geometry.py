"""Pseudo-Riemannian geometry of a cost on the product N ⊂ M × M̄.

The metric pairs tangent vectors p ⊕ p̄ at (x, x̄) through the cross Hessian
c_{ij̄}. Only the mixed pattern R_{ij̄k̄ℓ} of its curvature tensor is ever
nonzero (up to index symmetries), so that is what :class:`MixedRiemann`
stores. Vectors on N are 2n-vectors ordered (unbarred, barred).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .cost_core import CostChart, make_builtin_cost
from .errors import NondegeneracyFailure

COND_CAP = 1e8


def _pair(x, xbar):
    return np.asarray(x, dtype=float), np.asarray(xbar, dtype=float)


def cross_hessian(chart: CostChart, x, xbar, cond_cap: float = COND_CAP, jet=None):
    """Return (A, A⁻¹) with A[i, j] = c_{ij̄}; raises when (A2) fails."""
    n = chart.n
    if jet is None:
        jet = chart.jet(x, xbar, 2)
    A = np.array(jet[2][:n, n:])
    sv = np.linalg.svd(A, compute_uv=False)
    smin, smax = float(sv[-1]), float(sv[0])
    cond = np.inf if smin == 0.0 else smax / smin
    if not np.isfinite(cond) or cond > cond_cap:
        raise NondegeneracyFailure(
            f"cross Hessian degenerate at ({np.ravel(x)}, {np.ravel(xbar)}): "
            f"smallest singular value {smin:.3g}, condition {cond:.3g}", smin, cond)
    return A, np.linalg.inv(A)


@dataclass(frozen=True)
class PseudoMetricAtPoint:
    x: np.ndarray
    xbar: np.ndarray
    h: np.ndarray

    def inner(self, v1, v2) -> float:
        return float(np.asarray(v1) @ self.h @ np.asarray(v2))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.h)


def assemble_pseudo_metric(chart: CostChart, x, xbar, cond_cap: float = COND_CAP):
    x, xbar = _pair(x, xbar)
    A, _ = cross_hessian(chart, x, xbar, cond_cap)
    n = chart.n
    h = np.zeros((2 * n, 2 * n))
    h[:n, n:] = -0.5 * A
    h[n:, :n] = -0.5 * A.T
    return PseudoMetricAtPoint(x, xbar, h)


def h_inner(chart: CostChart, x, xbar, v1, v2) -> float:
    x, xbar = _pair(x, xbar)
    n = chart.n
    A = chart.jet(x, xbar, 2)[2][:n, n:]
    v1, v2 = np.asarray(v1, float), np.asarray(v2, float)
    return float(-0.5 * (v1[:n] @ A @ v2[n:] + v2[:n] @ A @ v1[n:]))


def is_null(chart: CostChart, x, xbar, p, pbar, tol: float = 1e-9) -> bool:
    """p ⊕ p̄ is null iff c_{ij̄} pⁱ p̄ʲ vanishes (relative to the sizes involved)."""
    x, xbar = _pair(x, xbar)
    n = chart.n
    A = chart.jet(x, xbar, 2)[2][:n, n:]
    p, pbar = np.asarray(p, float), np.asarray(pbar, float)
    bound = tol * np.linalg.norm(p) * np.linalg.norm(pbar) * np.linalg.norm(A, 2)
    return bool(abs(p @ A @ pbar) <= bound)


@dataclass(frozen=True)
class ChristoffelAtPoint:
    unbarred: np.ndarray  # [i, j, m] = Γ_{ij}^m
    barred: np.ndarray  # [i, j, m] = Γ_{īj̄}^m̄


def christoffel(chart: CostChart, x, xbar, cond_cap: float = COND_CAP) -> ChristoffelAtPoint:
    x, xbar = _pair(x, xbar)
    n = chart.n
    jet = chart.jet(x, xbar, 3)
    _, Ainv = cross_hessian(chart, x, xbar, cond_cap, jet)
    D3 = jet[3]
    # Γ_{ij}^m = c^{mk̄} c_{k̄ij}, where c^{mk̄} = Ainv[k, m]
    gam = np.einsum("km,ijk->ijm", Ainv, D3[:n, :n, n:])
    # Γ_{īj̄}^m̄ = c^{m̄k} c_{kīj̄}, where c^{m̄k} = Ainv[m, k]
    gambar = np.einsum("mk,kij->ijm", Ainv, D3[:n, n:, n:])
    return ChristoffelAtPoint(gam, gambar)


@dataclass(frozen=True)
class MixedRiemann:
    """Curvature at (x, x̄); ``R[i, j, k, l]`` holds R_{ij̄k̄ℓ}."""

    x: np.ndarray
    xbar: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def cross(self, p, pbar) -> float:
        """Σ R_{ij̄kℓ̄} pⁱ p̄ʲ pᵏ p̄ˡ, using R_{ij̄kℓ̄} = −R_{ij̄ℓ̄k}."""
        p, pbar = np.asarray(p, float), np.asarray(pbar, float)
        return float(-np.einsum("ijlk,i,j,l,k->", self.R, p, pbar, pbar, p))

    def full(self) -> np.ndarray:
        """The curvature tensor on all 2n coordinates."""
        n = self.n
        u, b = slice(0, n), slice(n, 2 * n)
        F = np.zeros((2 * n,) * 4)
        F[u, b, b, u] = self.R
        F[b, u, b, u] = -self.R.transpose(1, 0, 2, 3)
        F[u, b, u, b] = -self.R.transpose(0, 1, 3, 2)
        F[b, u, u, b] = self.R.transpose(1, 0, 3, 2)
        return F

    def sectional(self, P, Q) -> float:
        P, Q = np.asarray(P, float), np.asarray(Q, float)
        return float(np.einsum("abcd,a,b,c,d->", self.full(), P, Q, P, Q))


def mixed_riemann(chart: CostChart, x, xbar, cond_cap: float = COND_CAP) -> MixedRiemann:
    x, xbar = _pair(x, xbar)
    n = chart.n
    jet = chart.jet(x, xbar, 4)
    _, Ainv = cross_hessian(chart, x, xbar, cond_cap, jet)
    D3, D4 = jet[3], jet[4]
    # 2R_{ij̄k̄ℓ} = c_{ij̄k̄ℓ} − c_{ℓif̄} c^{f̄a} c_{aj̄k̄}
    lead = D4[:n, n:, n:, :n]
    corr = np.einsum("lif,fa,ajk->ijkl", D3[:n, :n, n:], Ainv, D3[:n, n:, n:])
    return MixedRiemann(x, xbar, 0.5 * (lead - corr))


def cross_curvature(chart: CostChart, x, xbar, p, pbar, cond_cap: float = COND_CAP) -> float:
    """Unnormalised cross-curvature of the plane spanned by p ⊕ 0 and 0 ⊕ p̄."""
    return mixed_riemann(chart, x, xbar, cond_cap).cross(p, pbar)


def sectional_general(chart: CostChart, x, xbar, P, Q, cond_cap: float = COND_CAP) -> float:
    """R(P, Q, P, Q) for arbitrary 2n-vectors P, Q."""
    return mixed_riemann(chart, x, xbar, cond_cap).sectional(P, Q)


def mtw_form(chart: CostChart, x, xbar, p, q, cond_cap: float = COND_CAP) -> float:
    """Σ (−c_{ijk̄ℓ̄} + c_{ijā} c^{āb} c_{bk̄ℓ̄}) c^{k̄e} c^{ℓ̄f} p_i p_j q_e q_f."""
    x, xbar = _pair(x, xbar)
    n = chart.n
    jet = chart.jet(x, xbar, 4)
    _, Ainv = cross_hessian(chart, x, xbar, cond_cap, jet)
    D3, D4 = jet[3], jet[4]
    T = -D4[:n, :n, n:, n:] + np.einsum(
        "ija,ab,bkl->ijkl", D3[:n, :n, n:], Ainv, D3[:n, n:, n:])
    p, q = np.asarray(p, float), np.asarray(q, float)
    r = Ainv @ q  # r^k̄ = c^{k̄e} q_e
    return float(np.einsum("ijkl,i,j,k,l->", T, p, p, r, r))


def mtw_cross_ratio() -> float:
    """The constant κ with mtw_form(p, q) = κ · cross_curvature(p, c^{·e} q_e).

    Fixed on the one-dimensional cost with λ(s, t) = st at the origin, where
    every term is known in closed form.
    """
    chart = make_builtin_cost("one_dim_family", n=1, params={"lambda": "s*t"})
    x = xbar = np.zeros(1)
    q = np.array([1.0])
    _, Ainv = cross_hessian(chart, x, xbar)
    return mtw_form(chart, x, xbar, [1.0], q) / cross_curvature(chart, x, xbar, [1.0], Ainv @ q)


@dataclass(frozen=True)
class SymplecticAtPoint:
    x: np.ndarray
    xbar: np.ndarray
    omega: np.ndarray

    def __call__(self, v1, v2) -> float:
        return float(np.asarray(v1) @ self.omega @ np.asarray(v2))


def symplectic_form(chart: CostChart, x, xbar, cond_cap: float = COND_CAP) -> SymplecticAtPoint:
    x, xbar = _pair(x, xbar)
    n = chart.n
    A, _ = cross_hessian(chart, x, xbar, cond_cap)
    om = np.zeros((2 * n, 2 * n))
    om[:n, n:] = 0.5 * A
    om[n:, :n] = -0.5 * A.T
    return SymplecticAtPoint(x, xbar, om)


class GraphDiagnostics(NamedTuple):
    max_omega_defect: float
    min_h_value: float
    used: int
    rejected: int


def graph_diagnostics(chart: CostChart, samples: Iterable[Sequence]) -> GraphDiagnostics:
    """Check whether the graph of a map F is Lagrangian and spacelike.

    ``samples`` yields (x, F(x), DF(x)); entries with ``DF=None``, non-finite
    values or outside the domain are counted as rejected (not smooth there).
    ``min_h_value`` is the smallest eigenvalue of the metric restricted to
    the graph tangents, i.e. min over unit v of h((v, DFv), (v, DFv)).
    """
    defect, hmin = 0.0, np.inf
    used = rejected = 0
    n = chart.n
    for x, Fx, DF in samples:
        if DF is None:
            rejected += 1
            continue
        x, Fx, DF = np.asarray(x, float), np.asarray(Fx, float), np.asarray(DF, float)
        if DF.shape != (n, n) or not (np.all(np.isfinite(DF)) and np.all(np.isfinite(Fx))) \
                or not chart.in_domain(x, Fx):
            rejected += 1
            continue
        G = np.vstack([np.eye(n), DF])  # columns span the graph tangent space
        om = symplectic_form(chart, x, Fx).omega
        h = assemble_pseudo_metric(chart, x, Fx).h
        defect = max(defect, float(np.max(np.abs(G.T @ om @ G))))
        M = G.T @ h @ G
        hmin = min(hmin, float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]))
        used += 1
    return GraphDiagnostics(defect, float(hmin), used, rejected)
