"""Forcing terms ``f_x(t)`` of renewal equations.

A :class:`Forcing` is a single function of time; a :class:`ForcingFamily`
assigns one to every state word, which realises ``x -> f_x(t)`` as a
locally constant function for each ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import PreconditionError

KINDS = ("step", "exp-step", "box", "tabulated", "callable")


@dataclass(frozen=True, eq=False)
class Forcing:
    """One forcing function.

    ``step``      ``1[t >= 0]``
    ``exp-step``  ``exp(-beta t) 1[t >= 0]`` with ``beta >= 0``
    ``box``       ``1[lo <= t < hi]``
    ``tabulated`` linear interpolation of ``values`` on ``grid``, zero outside
    ``callable``  ``fn(t)`` vectorised; ``support`` gives ``(lo, hi)`` if known
    """

    kind: str
    beta: float = 0.0
    lo: float = 0.0
    hi: float = math.inf
    grid: tuple = ()
    values: tuple = ()
    fn: object = None
    support: tuple = (-math.inf, math.inf)
    monotone: bool | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError("unknown forcing kind %r" % self.kind)
        if self.kind == "exp-step" and self.beta < 0:
            raise PreconditionError("exp-step needs beta >= 0")
        if self.kind == "box" and not self.lo < self.hi:
            raise PreconditionError("box needs lo < hi")
        if self.kind == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
                raise PreconditionError("tabulated forcing needs an increasing grid")
            if len(self.values) != g.size:
                raise PreconditionError("tabulated forcing: grid and values differ in length")
        if self.kind == "callable" and not callable(self.fn):
            raise PreconditionError("callable forcing needs fn")

    @classmethod
    def step(cls):
        return cls("step", monotone=True)

    @classmethod
    def exp_step(cls, beta):
        return cls("exp-step", beta=float(beta), monotone=True)

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=float(lo), hi=float(hi), monotone=False)

    @classmethod
    def tabulated(cls, grid, values, monotone=None):
        return cls("tabulated", grid=tuple(map(float, grid)), values=tuple(map(float, values)),
                   monotone=monotone)

    @classmethod
    def from_callable(cls, fn, support=(-math.inf, math.inf), monotone=None):
        return cls("callable", fn=fn, support=tuple(support), monotone=monotone)

    def describe(self):
        if self.kind == "exp-step":
            return "exp-step(beta=%r)" % self.beta
        if self.kind == "box":
            return "box[%r,%r)" % (self.lo, self.hi)
        return self.kind

    @property
    def support_lo(self):
        """Infimum of the support (``f = 0`` strictly below it)."""
        if self.kind in ("step", "exp-step"):
            return 0.0
        if self.kind == "box":
            return self.lo
        if self.kind == "tabulated":
            return self.grid[0]
        return float(self.support[0])

    @property
    def support_hi(self):
        if self.kind == "box":
            return self.hi
        if self.kind == "tabulated":
            return self.grid[-1]
        if self.kind == "callable":
            return float(self.support[1])
        return math.inf

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "step":
            return (t >= 0).astype(float)
        if self.kind == "exp-step":
            return np.where(t >= 0, np.exp(-self.beta * np.maximum(t, 0.0)), 0.0)
        if self.kind == "box":
            return ((t >= self.lo) & (t < self.hi)).astype(float)
        if self.kind == "tabulated":
            return np.interp(t, self.grid, self.values, left=0.0, right=0.0)
        out = np.asarray(self.fn(t), dtype=float)
        lo, hi = self.support
        return np.where((t >= lo) & (t <= hi), out, 0.0)

    def tilted(self, t, delta):
        """``exp(-delta t) f(t)`` computed without overflow on the support."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exp-step":
            return np.where(t >= 0, np.exp(-(self.beta + delta) * np.maximum(t, 0.0)), 0.0)
        f = self(t)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.where(f != 0, f * np.exp(-delta * t), 0.0)
        return out

    def laplace(self, w):
        """``int exp(w T) f(T) dT`` for complex ``w`` where it converges."""
        w = complex(w)
        if self.kind == "step":
            if w.real >= 0:
                raise PreconditionError("Laplace transform of step needs Re w < 0")
            return -1.0 / w
        if self.kind == "exp-step":
            if w.real >= self.beta:
                raise PreconditionError("Laplace transform of exp-step needs Re w < beta")
            return 1.0 / (self.beta - w)
        if self.kind == "box":
            if w == 0:
                return self.hi - self.lo
            if math.isinf(self.hi):
                if w.real >= 0:
                    raise PreconditionError("Laplace transform of half-line box needs Re w < 0")
                return -np.exp(w * self.lo) / w
            return (np.exp(w * self.hi) - np.exp(w * self.lo)) / w
        if self.kind == "tabulated":
            g = np.asarray(self.grid)
            v = np.asarray(self.values)
            return _exp_linear_integral(g, v, w)
        return _quad_complex(lambda T: np.exp(w * T) * self(T), *self._quad_range())

    def tilted_integral(self, delta, absolute=True):
        """``int exp(-delta T) |f(T)| dT`` (or without ``|.|``); ``inf`` if divergent."""
        if self.kind == "step":
            return 1.0 / delta if delta > 0 else math.inf
        if self.kind == "exp-step":
            return 1.0 / (self.beta + delta) if self.beta + delta > 0 else math.inf
        if self.kind == "box":
            if math.isinf(self.hi):
                return math.exp(-delta * self.lo) / delta if delta > 0 else math.inf
            if delta == 0:
                return self.hi - self.lo
            return (math.exp(-delta * self.lo) - math.exp(-delta * self.hi)) / delta
        if self.kind == "tabulated":
            g = np.asarray(self.grid)
            v = np.asarray(self.values)
            v = np.abs(v) if absolute else v
            return float(_exp_linear_integral(g, v, -delta).real)
        fn = (lambda T: np.abs(self.tilted(T, delta))) if absolute else (lambda T: self.tilted(T, delta))
        return _improper(fn, *self._quad_range())

    def _quad_range(self):
        return float(self.support[0]), float(self.support[1])

    def dri_gap(self, delta, h, window):
        """Upper minus lower step sums of ``exp(-delta t)|f(t)|`` on mesh ``h``.

        A finite-window heuristic for direct Riemann integrability: the gap
        must shrink with ``h``.
        """
        lo, hi = window
        n = max(1, int(math.ceil((hi - lo) / h)))
        edges = lo + h * np.arange(n + 1)
        sub = np.linspace(0.0, 1.0, 17)
        pts = edges[:-1, None] + h * sub[None, :]
        vals = np.abs(self.tilted(pts.ravel(), delta)).reshape(pts.shape)
        return float(h * (vals.max(axis=1) - vals.min(axis=1)).sum())


def _exp_linear_integral(g, v, w):
    """``int exp(w T) p(T) dT`` with ``p`` the piecewise-linear interpolant."""
    t0, t1 = g[:-1], g[1:]
    v0, v1 = v[:-1], v[1:]
    hstep = t1 - t0
    if w == 0:
        return complex(np.sum(0.5 * hstep * (v0 + v1)))
    x = w * hstep
    e0 = np.exp(w * t0)
    # exact cell integral: phi1(x) = int_0^1 e^{xs} ds = (e^x - 1)/x and
    # phi2(x) = int_0^1 (1 - s) e^{xs} ds = (e^x - 1 - x)/x^2
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    phi1 = np.where(small, 1 + x / 2 + x**2 / 6, np.expm1(xs) / xs)
    phi2 = np.where(small, 0.5 + x / 6 + x**2 / 24, (np.expm1(xs) - xs) / xs**2)
    return complex(np.sum(e0 * hstep * (v1 * phi1 + (v0 - v1) * phi2)))


def _quad_complex(fn, lo, hi):
    re = _improper(lambda T: np.real(fn(T)), lo, hi)
    im = _improper(lambda T: np.imag(fn(T)), lo, hi)
    return complex(re, im)


def _improper(fn, lo, hi, rtol=1e-10, max_doublings=12):
    """Integral over ``(lo, hi)``; infinite ends are probed by doubling windows."""
    def q(a, b):
        return integrate.quad(lambda T: float(fn(np.array([T]))[0]), a, b, limit=400)[0]

    if math.isfinite(lo) and math.isfinite(hi):
        return q(lo, hi)
    a = lo if math.isfinite(lo) else (min(hi, 0.0) - 1.0 if math.isfinite(hi) else -1.0)
    b = hi if math.isfinite(hi) else (max(lo, 0.0) + 1.0 if math.isfinite(lo) else 1.0)
    total = q(a, b)
    width = 1.0
    for _ in range(max_doublings):
        add = 0.0
        if not math.isfinite(lo):
            add += q(a - width, a)
            a -= width
        if not math.isfinite(hi):
            add += q(b, b + width)
            b += width
        total += add
        if abs(add) <= rtol * max(abs(total), 1e-300):
            return total
        width *= 2.0
    return math.inf


@dataclass(frozen=True, eq=False)
class ForcingFamily:
    """Per-state forcings; ``default`` covers states not listed in ``by_state``."""

    default: Forcing
    by_state: dict = field(default_factory=dict)
    monotone: bool | None = None
    holder_bound: float = 0.0

    @classmethod
    def uniform(cls, forcing):
        return cls(forcing, {}, forcing.monotone)

    def for_state(self, word):
        return self.by_state.get(tuple(word), self.default)

    def forcings(self, states):
        return [self.for_state(tuple(int(e) for e in w)) for w in states]

    @property
    def is_uniform(self):
        return not self.by_state

    def describe(self):
        if self.is_uniform:
            return self.default.describe()
        return "per-state(%d overrides of %s)" % (len(self.by_state), self.default.describe())

    def evaluate(self, states, t):
        """Table ``f_x(t)`` of shape ``(len(t), n_states)``."""
        t = np.asarray(t, dtype=float)
        return np.stack([f(t) for f in self.forcings(states)], axis=1)

    def evaluate_tilted(self, states, t, delta):
        t = np.asarray(t, dtype=float)
        return np.stack([f.tilted(t, delta) for f in self.forcings(states)], axis=1)

    def support_lo(self, states):
        return min(f.support_lo for f in self.forcings(states))
