"""Nested forward-mode dual numbers.

A depth-k number is ``Dual(real, eps)`` where both parts are depth-(k-1)
numbers (or plain floats / numpy arrays, treated as constants). Each nesting
level carries one infinitesimal, so k levels give every mixed partial up to
order k. Leaves may be numpy arrays: seeding level ``l`` with a one-hot array
along axis ``l - 1`` yields whole derivative tensors from a single evaluation
(see :func:`derivative_tensors`).

Elementary functions in this module accept floats, arrays and Duals alike, so
cost functions written against them can be evaluated on grids and
differentiated with the same code.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class Dual:
    __slots__ = ("real", "eps")
    # Make numpy defer to our reflected operators instead of broadcasting
    # over an object array.
    __array_ufunc__ = None

    def __init__(self, real, eps):
        self.real = real
        self.eps = eps

    def __repr__(self):
        return f"Dual({self.real!r}, {self.eps!r})"

    def __neg__(self):
        return Dual(-self.real, -self.eps)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.real + other.real, self.eps + other.eps)
        return Dual(self.real + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.real - other.real, self.eps - other.eps)
        return Dual(self.real - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.real, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.real * other.real,
                        self.real * other.eps + self.eps * other.real)
        return Dual(self.real * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * reciprocal(other)
        return Dual(self.real / other, self.eps / other)

    def __rtruediv__(self, other):
        return other * reciprocal(self)

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            return exp(exponent * log(self))
        if float(exponent).is_integer() and exponent >= 0:
            k = int(exponent)
            if k == 0:
                return 1.0
            out = self
            for _ in range(k - 1):
                out = out * self
            return out
        return power(self, exponent)

    # Comparisons look at the base value only (used for branch decisions).
    def _base(self):
        r = self.real
        while isinstance(r, Dual):
            r = r.real
        return r

    def __lt__(self, other):
        return self._base() < _base(other)

    def __le__(self, other):
        return self._base() <= _base(other)

    def __gt__(self, other):
        return self._base() > _base(other)

    def __ge__(self, other):
        return self._base() >= _base(other)


def _base(x):
    return x._base() if isinstance(x, Dual) else x


def base_value(x):
    """Strip all infinitesimal parts."""
    return _base(x)


class Primitive:
    """Scalar function lifted to nested duals from its derivative sequence.

    ``deriv(k, x)`` must return the k-th derivative at plain (float/array)
    arguments.
    """

    def __init__(self, name: str, deriv: Callable[[int, object], object]):
        self.name = name
        self.deriv = deriv

    def _apply(self, k, x):
        if isinstance(x, Dual):
            return Dual(self._apply(k, x.real), self._apply(k + 1, x.real) * x.eps)
        return self.deriv(k, x)

    def __call__(self, x):
        return self._apply(0, x)

    def __repr__(self):
        return f"Primitive({self.name})"


def _exp_deriv(k, x):
    return np.exp(x)


def _sin_deriv(k, x):
    return np.sin(x + 0.5 * math.pi * (k % 4)) if k % 4 else np.sin(x)


def _cos_deriv(k, x):
    return np.cos(x + 0.5 * math.pi * (k % 4)) if k % 4 else np.cos(x)


def _sin_deriv_exact(k, x):
    r = k % 4
    return (np.sin(x), np.cos(x), -np.sin(x), -np.cos(x))[r]


def _cos_deriv_exact(k, x):
    r = k % 4
    return (np.cos(x), -np.sin(x), -np.cos(x), np.sin(x))[r]


def _log_deriv(k, x):
    if k == 0:
        return np.log(x)
    return (-1.0) ** (k - 1) * math.factorial(k - 1) / np.power(x, k)


def _power_deriv(a):
    def deriv(k, x):
        coeff = 1.0
        for j in range(k):
            coeff *= a - j
        return coeff * np.power(x, a - k)
    return deriv


exp = Primitive("exp", _exp_deriv)
sin = Primitive("sin", _sin_deriv_exact)
cos = Primitive("cos", _cos_deriv_exact)
log = Primitive("log", _log_deriv)
reciprocal = Primitive("reciprocal", _power_deriv(-1.0))
sqrt = Primitive("sqrt", _power_deriv(0.5))


def power(x, a: float):
    return Primitive(f"pow{a}", _power_deriv(float(a)))(x)


# arccos(u)^2 / 2 is analytic at u = 1 (the diagonal of the sphere cost) even
# though arccos is not. Around u = 1 it has the series sum a_j (1-u)^j with
# a_1 = 1 and a_{m+1} = a_m m^2 / ((m+1)(2m+1)); the radius of convergence is
# 2 (singular only at the antipode u = -1). Away from u = 1 the derivatives
# follow from the ODE (1-u^2) y'' - u y' = 1 differentiated n times:
#   (1-u^2) y^(n+2) = [n == 0] + (2n+1) u y^(n+1) + n^2 y^(n).
_N_SERIES = 64
_SERIES = np.zeros(_N_SERIES)
_SERIES[1] = 1.0
for _m in range(1, _N_SERIES - 1):
    _SERIES[_m + 1] = _SERIES[_m] * _m * _m / ((_m + 1) * (2 * _m + 1))
del _m


def _series_deriv_w(k, w):
    """k-th derivative in w of sum a_j w^j."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    # Horner on the differentiated series.
    for j in range(_N_SERIES - 1, k - 1, -1):
        coeff = _SERIES[j] * math.factorial(j) / math.factorial(j - k)
        out = out * w + coeff
    return out


def _acos_sq_half_deriv(k, u):
    u = np.asarray(u, dtype=float)
    w = 1.0 - u
    near = np.abs(w) < 0.5
    out = np.empty_like(u)
    if np.any(near):
        out[near] = (-1.0) ** k * _series_deriv_w(k, w[near])
    far = ~near
    if np.any(far):
        uf = u[far]
        one_m = 1.0 - uf * uf
        a = np.arccos(np.clip(uf, -1.0, 1.0))
        ys = [0.5 * a * a, -a / np.sqrt(one_m)]
        for m in range(0, k - 1):
            rhs = (2 * m + 1) * uf * ys[m + 1] + m * m * ys[m]
            if m == 0:
                rhs = rhs + 1.0
            ys.append(rhs / one_m)
        out[far] = ys[k]
    return out if out.ndim else float(out)


def _acosh_sq_half_deriv(k, v):
    v = np.asarray(v, dtype=float)
    w = 1.0 - v
    near = np.abs(w) < 0.5
    out = np.empty_like(v)
    if np.any(near):
        # arccosh(v)^2 = -arccos(v)^2 by analytic continuation past v = 1.
        out[near] = -((-1.0) ** k) * _series_deriv_w(k, w[near])
    far = ~near
    if np.any(far):
        vf = v[far]
        vm = vf * vf - 1.0
        a = np.arccosh(vf)
        ys = [0.5 * a * a, a / np.sqrt(vm)]
        for m in range(0, k - 1):
            rhs = -(2 * m + 1) * vf * ys[m + 1] - m * m * ys[m]
            if m == 0:
                rhs = rhs + 1.0
            ys.append(rhs / vm)
        out[far] = ys[k]
    return out if out.ndim else float(out)


arccos_sq_half = Primitive("arccos_sq_half", _acos_sq_half_deriv)
arccosh_sq_half = Primitive("arccosh_sq_half", _acosh_sq_half_deriv)


def _component(node, levels: Sequence[int], depth: int):
    """Pick the part of a depth-``depth`` number for a set of eps levels."""
    for level in range(depth, 0, -1):
        if isinstance(node, Dual):
            node = node.eps if level in levels else node.real
        elif level in levels:
            return 0.0
    while isinstance(node, Dual):
        node = node.real
    return node


def derivative_tensors(fn: Callable, z: Sequence[float], order: int) -> list[np.ndarray]:
    """All partial-derivative tensors of ``fn`` at ``z`` up to ``order``.

    ``fn`` takes a list of m scalar-like arguments. Returns
    ``[f, Df, D2f, ...]`` with ``D^r f`` of shape ``(m,) * r``.
    """
    z = [float(v) for v in z]
    m = len(z)
    if order == 0:
        return [np.asarray(float(fn(z)))]
    args = []
    for d in range(m):
        var = z[d]
        for level in range(1, order + 1):
            shape = [1] * order
            shape[level - 1] = m
            seed = np.zeros(shape)
            idx = [0] * order
            idx[level - 1] = d
            seed[tuple(idx)] = 1.0
            var = Dual(var, seed)
        args.append(var)
    out = fn(args)
    full = (m,) * order
    tensors = []
    for r in range(order + 1):
        comp = np.broadcast_to(np.asarray(_component(out, range(1, r + 1), order), dtype=float), full)
        tensors.append(np.array(comp[(Ellipsis,) + (0,) * (order - r)]))
    return tensors
