"""Key renewal theorem for discrete delay distributions.

``Z = Z * F + z`` is solved as ``Z = U * z`` with the renewal measure
``U = sum_n F^{*n}`` kept as exact atoms, so no delay is ever snapped to a
grid. The shift embedding turns the same problem into a renewal function on
the full ``M``-shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import NonConvergenceError, PreconditionError, ResourceCapError
from .forcing import Forcing, ForcingFamily
from .lattice import real_span
from .potential import letter_values
from .renewal import RenewalProblem, _ell_sum
from .resolvent import PotentialFamily
from .shift import TruncatedShift

TAIL_THRESHOLD = 1e-10


@dataclass(frozen=True)
class DiscreteDistribution:
    """Masses ``p_i`` at delays ``s_i``.

    ``tail_mass`` is mass cut off and not yet renormalised; ``perturbation``
    records mass that was cut off and then renormalised away.
    """

    p: tuple
    s: tuple
    tail_mass: float = 0.0
    perturbation: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if p.ndim != 1 or p.shape != s.shape or p.size == 0:
            raise PreconditionError("p and s must be equal-length nonempty lists")
        if np.any(p <= 0) or np.any(p > 1):
            raise PreconditionError("masses must lie in (0, 1]")
        if abs(p.sum() - (1.0 - self.tail_mass)) > 1e-12:
            raise PreconditionError("masses sum to %r, expected %r" % (p.sum(), 1.0 - self.tail_mass))
        if np.any(s < 0) or not np.any(s > 0):
            raise PreconditionError("delays must be >= 0 with at least one > 0")

    @classmethod
    def from_sequence(cls, masses, delays, tail_tol=TAIL_THRESHOLD, max_atoms=10**6):
        """Truncate infinite iterables once the remaining mass is ``<= tail_tol``,
        then renormalise, recording the cut mass as ``perturbation``."""
        p, s, acc = [], [], 0.0
        for pi, si in zip(masses, delays):
            p.append(float(pi))
            s.append(float(si))
            acc += pi
            if 1.0 - acc <= tail_tol:
                break
            if len(p) >= max_atoms:
                raise ResourceCapError("distribution needs more than %d atoms" % max_atoms)
        else:
            if 1.0 - acc > tail_tol:
                raise PreconditionError("sequence ended with tail mass %g" % (1.0 - acc))
        p = np.asarray(p) / acc
        return cls(tuple(p), tuple(s), 0.0, perturbation=1.0 - acc)

    @property
    def mean(self):
        return float(np.dot(self.p, self.s))

    @property
    def span(self):
        return real_span([v for v in self.s if v > 0])

    @property
    def is_lattice(self):
        return self.span.discrete


@dataclass(frozen=True)
class RenewalMeasure:
    positions: np.ndarray
    masses: np.ndarray
    convolutions: int
    window: float

    def mass_on(self, lo, hi):
        sel = (self.positions >= lo) & (self.positions <= hi)
        return float(self.masses[sel].sum())


def renewal_measure(dist, window, mass_tol=1e-14, max_conv=10**6, key_scale=1e9):
    """Atoms of ``sum_n F^{*n}`` on ``[0, window]``.

    Convolution powers stop once ``F^{*n}`` has mass ``< mass_tol`` on the
    window. Positions closer than ``1/key_scale`` are merged.
    """
    p = np.asarray(dist.p)
    s = np.asarray(dist.s)
    pos, mass = np.zeros(1), np.ones(1)
    all_pos, all_mass = [pos], [mass]
    edge = window + max(1.0, abs(window)) / key_scale  # atoms at the edge may round past it
    n = 0
    while True:
        n += 1
        if n > max_conv:
            raise NonConvergenceError("renewal measure needs more than %d convolutions" % max_conv)
        new_pos = (pos[:, None] + s[None, :]).ravel()
        new_mass = (mass[:, None] * p[None, :]).ravel()
        keep = new_pos <= edge
        new_pos, new_mass = new_pos[keep], new_mass[keep]
        if new_pos.size == 0 or new_mass.sum() < mass_tol:
            break
        keys = np.round(new_pos * key_scale).astype(np.int64)
        uniq, inv = np.unique(keys, return_inverse=True)
        mass = np.bincount(inv, weights=new_mass)
        first = np.zeros(uniq.size, dtype=np.int64)
        first[inv[::-1]] = np.arange(inv.size)[::-1]
        pos = new_pos[first]
        all_pos.append(pos)
        all_mass.append(mass)
    P = np.concatenate(all_pos)
    W = np.concatenate(all_mass)
    keys = np.round(P * key_scale).astype(np.int64)
    uniq, inv = np.unique(keys, return_inverse=True)
    masses = np.bincount(inv, weights=W)
    first = np.zeros(uniq.size, dtype=np.int64)
    first[inv[::-1]] = np.arange(inv.size)[::-1]
    return RenewalMeasure(P[first], masses, n - 1, float(window))


def _convolve(U, z, ts, budget=2 * 10**7, snap=1e-9):
    """``sum_j m_j z(t - x_j)``; arguments within ``snap`` of a jump of ``z``
    are moved onto it, so rounding in atom positions cannot pick the wrong
    side of a discontinuity."""
    ts = np.asarray(ts, dtype=float)
    jumps = [v for v in (z.support_lo, z.support_hi) if math.isfinite(v)]
    out = np.empty(ts.size)
    chunk = max(1, budget // max(1, U.positions.size))
    for i in range(0, ts.size, chunk):
        tt = ts[i:i + chunk]
        arg = tt[:, None] - U.positions[None, :]
        for j in jumps:
            arg[np.abs(arg - j) <= snap * max(1.0, abs(j))] = j
        out[i:i + chunk] = z(arg) @ U.masses
    return out


@dataclass(frozen=True)
class KeyRenewalSolution:
    t: np.ndarray
    Z: np.ndarray
    residual: float
    mean: float
    measure: RenewalMeasure
    left_value: float


def solve_key_renewal(dist, z, ts, left_pad=None, mass_tol=1e-14):
    """``Z = U * z`` on the points ``ts`` with a residual check of ``Z = Z * F + z``.

    ``z`` needs finite left support; atoms beyond ``max(ts) - lo`` cannot
    reach the window and are never generated.
    """
    if not isinstance(z, Forcing):
        raise PreconditionError("z must be a Forcing")
    ts = np.asarray(ts, dtype=float)
    lo = z.support_lo
    if not math.isfinite(lo):
        if left_pad is None:
            raise PreconditionError("window too small: z has unbounded left support; give left_pad")
        lo = ts.min() - left_pad
    U = renewal_measure(dist, ts.max() - lo, mass_tol=mass_tol)
    Z = _convolve(U, z, ts)
    back = sum(p * _convolve(U, z, ts - s) for p, s in zip(dist.p, dist.s))
    resid = np.abs(Z - back - z(ts))
    residual = float(resid.max() / max(1.0, np.abs(Z).max()))
    return KeyRenewalSolution(ts, Z, residual, dist.mean, U, float(Z[np.argmin(ts)]))


@dataclass(frozen=True)
class KeyAsymptotics:
    lattice: bool
    span: float | None
    limit_i: float  # (1/mean) int z
    limit_ii: np.ndarray | None  # per t in the solution
    tail_t: float
    tail_value: float
    gap: float  # relative gap of the tail value to the applicable limit
    cesaro: float
    cesaro_gap: float
    trend: tuple  # gaps at t_end/4, t_end/2, t_end


def key_asymptotics(dist, solution, z):
    t, Z = solution.t, solution.Z
    mean = dist.mean
    limit_i = z.tilted_integral(0.0, absolute=False) / mean
    span = dist.span
    lim = None
    if span.discrete:
        a = span.span
        lim = np.array([a / mean * _ell_sum(z, a, 0.0, tv, 1e-14, 10**6) for tv in t])
    target = lim if lim is not None else np.full(t.size, limit_i)

    def gap(i):
        return abs(Z[i] / target[i] - 1.0) if target[i] != 0 else abs(Z[i])

    end = int(np.argmax(t))
    marks = [int(np.argmin(np.abs(t - t[end] * f))) for f in (0.25, 0.5, 1.0)]
    sel = t >= 0
    ces = float(trapezoid(Z[sel], t[sel]) / t[sel].max()) if sel.sum() > 1 else math.nan
    return KeyAsymptotics(span.discrete, span.span, float(limit_i), lim, float(t[end]),
                          float(Z[end]), gap(end), ces, abs(ces / limit_i - 1.0),
                          tuple(gap(i) for i in marks))


def embed_as_shift(dist, z, delta=0.0):
    """Renewal problem on the full ``M``-shift with ``eta = log(p e^{delta s})``,
    ``xi = s``, ``chi = 1`` and forcing ``e^{delta t} z(t)``.

    With ``delta = 0`` (the default) the tilted renewal function is ``Z``.
    """
    if dist.tail_mass > TAIL_THRESHOLD or dist.perturbation > TAIL_THRESHOLD:
        raise PreconditionError("truncation tail above threshold %g" % TAIL_THRESHOLD)
    p = np.asarray(dist.p)
    s = np.asarray(dist.s)
    shift = TruncatedShift.full(p.size)
    eta = letter_values(shift, np.log(p) + delta * s, name="log(p e^{delta s})")
    xi = letter_values(shift, s, name="s")
    if delta == 0.0:
        f = z
    else:
        f = Forcing.from_callable(lambda t: np.exp(delta * t) * z(t), (z.support_lo, z.support_hi),
                                  monotone=None)
    fam = PotentialFamily(eta, xi)
    return RenewalProblem(fam, 1.0, ForcingFamily.uniform(f))
