"""The family ``eta + z xi``: critical exponent, resolvent, pole and residue."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NearPoleError, NonConvergenceError, PreconditionError
from .potential import DepthPotential
from .transfer import DENSE_CAP, build_matrix, integrate, leading_eigendata, state_table

COND_LIMIT = 1e10


@dataclass(eq=False)
class PotentialFamily:
    """``eta + t xi`` with ``xi >= 0`` not identically zero.

    ``t_star`` is the declared summability threshold; evaluations at
    ``Re z >= t_star`` are refused.
    """

    eta: DepthPotential
    xi: DepthPotential
    t_star: float = math.inf
    eig_tol: float = 1e-14
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.eta.is_complex or self.xi.is_complex:
            raise PreconditionError("eta and xi must be real")
        if self.eta.shift != self.xi.shift:
            raise PreconditionError("eta and xi live on different shifts")
        if np.any(self.xi.values < 0):
            raise PreconditionError("xi must be non-negative")
        if not np.any(self.xi.values > 0):
            raise PreconditionError("xi must not vanish identically")
        k = max(self.eta.depth, self.xi.depth)
        self.eta = self.eta.lift(k)
        self.xi = self.xi.lift(k)

    @property
    def shift(self):
        return self.eta.shift

    @property
    def depth(self):
        return self.eta.depth

    def _check_domain(self, z):
        if complex(z).real >= self.t_star:
            raise PreconditionError("Re z = %g is not below t_star = %g" % (complex(z).real, self.t_star))

    def at(self, z):
        self._check_domain(z)
        z = complex(z)
        if z.imag == 0:
            z = z.real
        return self.eta + self.xi * z

    def matrix(self, z):
        return build_matrix(self.at(z)).matrix

    def eigendata(self, t):
        t = float(t)
        if t not in self._cache:
            self._cache[t] = leading_eigendata(self.at(t), tol=self.eig_tol, gibbs_lmax=0)
        return self._cache[t]

    def pressure(self, t):
        return self.eigendata(t).pressure

    def scaled(self, c):
        """The family ``(eta, c xi)``; its critical exponent is ``delta / c``."""
        return PotentialFamily(self.eta, self.xi * c, self.t_star * c if math.isfinite(self.t_star) else math.inf,
                               self.eig_tol)


@dataclass(frozen=True)
class DeltaSolution:
    delta: float
    bracket: tuple
    pressure_residual: float
    derivative: float
    spec: object = field(repr=False, compare=False)


def solve_delta(fam, tol=1e-11, bracket=(-1.0, 1.0), max_expand=60):
    """Root ``t = -delta`` of the nondecreasing map ``t -> P(eta + t xi)``."""
    lo, hi = map(float, bracket)
    if math.isfinite(fam.t_star):
        hi = min(hi, fam.t_star - 1e-9)
        lo = min(lo, hi - 1.0)
    width = max(hi - lo, 1.0)
    p_lo, p_hi = fam.pressure(lo), fam.pressure(hi)
    for _ in range(max_expand):
        if p_lo <= 0.0 <= p_hi:
            break
        if p_lo > 0.0:
            hi, p_hi = lo, p_lo
            lo -= width
            p_lo = fam.pressure(lo)
        else:
            new_hi = hi + width
            if math.isfinite(fam.t_star):
                new_hi = min(new_hi, 0.5 * (hi + fam.t_star))
            lo, p_lo = hi, p_hi
            hi = new_hi
            p_hi = fam.pressure(hi)
        width *= 2.0
    else:
        raise NonConvergenceError("no root in searched range [%g, %g]" % (lo, hi))
    if p_lo == 0.0:
        t0 = lo
    elif p_hi == 0.0:
        t0 = hi
    else:
        t0 = brentq(fam.pressure, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    spec = fam.eigendata(t0)
    deriv = integrate(spec, fam.xi, "mu")
    # secant polish against the exact derivative
    for _ in range(5):
        if abs(spec.pressure) < tol:
            break
        t0 -= spec.pressure / deriv
        spec = fam.eigendata(t0)
        deriv = integrate(spec, fam.xi, "mu")
    if abs(spec.pressure) >= tol:
        raise NonConvergenceError("pressure residual %.3g above tolerance" % abs(spec.pressure))
    if deriv <= tol:
        raise PreconditionError("degenerate family: dP/dt = %g" % deriv)
    if t0 >= fam.t_star:
        raise PreconditionError("-delta = %g is not below t_star" % t0)
    return DeltaSolution(-t0, (lo, hi), abs(spec.pressure), float(deriv), spec)


@dataclass(frozen=True)
class PressureCurve:
    t: np.ndarray
    pressure: np.ndarray
    derivative: np.ndarray
    finite_difference: np.ndarray


def pressure_curve(fam, ts, fd_step=1e-4):
    ts = np.asarray(ts, dtype=float)
    P, dP, fd = [], [], []
    for t in ts:
        spec = fam.eigendata(t)
        P.append(spec.pressure)
        dP.append(integrate(spec, fam.xi, "mu"))
        if t + fd_step < fam.t_star:
            fd.append((fam.pressure(t + fd_step) - fam.pressure(t - fd_step)) / (2 * fd_step))
        else:
            fd.append(math.nan)
    return PressureCurve(ts, np.array(P), np.array(dP), np.array(fd))


@dataclass(frozen=True)
class ResolventResult:
    w: np.ndarray
    cond: float
    spectral_radius: float | None
    neumann_gap: float | None


def _chi_table(fam, chi):
    return np.asarray(state_table(fam.at(0.0), chi), dtype=complex)


def resolvent_apply(fam, z, chi, cond_limit=COND_LIMIT, neumann=True):
    """Solve ``(I - L_{eta + z xi}) w = chi``."""
    L = fam.matrix(z)
    b = _chi_table(fam, chi)
    A = np.eye(L.shape[0]) - L
    cond = float(np.linalg.cond(A))
    if not math.isfinite(cond) or cond > cond_limit:
        raise NearPoleError("z = %s at or near pole (cond %.3g)" % (complex(z), cond))
    w = np.linalg.solve(A, b)
    rho = gap = None
    if L.shape[0] <= DENSE_CAP:
        rho = float(np.abs(np.linalg.eigvals(L)).max())
        if neumann and rho < 1.0:
            gap = _neumann_gap(L, b, w, rho)
    return ResolventResult(w, cond, rho, gap)


def _neumann_gap(L, b, w, rho, max_terms=100_000):
    n_terms = max_terms if rho == 0.0 else min(max_terms, int(math.ceil(math.log(1e-17) / math.log(rho))) + 50)
    acc = b.copy()
    term = b.copy()
    for _ in range(n_terms):
        term = L @ term
        acc += term
        if np.abs(term).max() <= 1e-18 * max(1.0, np.abs(acc).max()):
            break
    return float(np.abs(w - acc).max() / max(1.0, np.abs(w).max()))


def residue_formula(fam, sol, chi):
    """``-(nu(chi) / int xi dmu) h`` for the eigendata at ``-delta``."""
    spec = sol.spec
    if spec.potential.depth != fam.depth or not np.allclose(
            spec.potential.values, fam.at(-sol.delta).values, rtol=0, atol=1e-12):
        raise PreconditionError("stale eigendata: solution does not belong to this family")
    chi_t = np.asarray(state_table(fam.at(0.0), chi), dtype=float)
    return -(spec.nu @ chi_t) / sol.derivative * spec.h


def contour_integral(fam, chi, center, radius, nodes=32, power=0):
    """``(1/2 pi i) oint (z - center)^power R(z) chi dz`` by the trapezoid rule."""
    phases = np.exp(2j * math.pi * (np.arange(nodes) + 0.5) / nodes)
    acc = 0.0
    norms = []
    for ph in phases:
        z = center + radius * ph
        w = resolvent_apply(fam, z, chi, neumann=False).w
        norms.append(float(np.abs(w).max()))
        # dz = i r ph dtheta, so (1/2 pi i) dz = r ph dtheta / 2 pi
        acc = acc + (radius * ph) ** power * w * radius * ph
    return acc / nodes, np.array(norms)


@dataclass(frozen=True)
class PoleProbe:
    residue: np.ndarray
    formula: np.ndarray | None
    rel_error: float | None
    first_moment: float
    max_norm: float
    radius: float
    nodes: int


def pole_probe(fam, sol, chi, radius=None, nodes=32, center=None):
    """Numeric residue of the resolvent on ``|z - center| = radius``.

    ``center`` defaults to the pole ``-delta``; the first moment
    ``oint (z - center) R dz`` must vanish for a simple pole.
    """
    at_pole = center is None
    center = -sol.delta if at_pole else complex(center)
    if radius is None:
        radius = min(0.1, (fam.t_star + sol.delta) / 4) if math.isfinite(fam.t_star) else 0.1
    if (complex(center).real + radius) >= fam.t_star:
        raise PreconditionError("probe circle crosses t_star")
    res, norms = contour_integral(fam, chi, center, radius, nodes)
    mom, _ = contour_integral(fam, chi, center, radius, nodes, power=1)
    formula = rel = None
    if at_pole:
        formula = residue_formula(fam, sol, chi)
        scale = np.abs(formula).max()
        rel = float(np.abs(res - formula).max() / scale) if scale > 0 else float(np.abs(res).max())
    return PoleProbe(res, formula, rel, float(np.abs(mom).max()), float(norms.max()), radius, nodes)


def richardson_residue(fam, sol, chi, offsets=(1e-2, 5e-3, 2.5e-3)):
    """Extrapolate ``(z + delta) R(z) chi`` to ``z = -delta`` along the real axis.

    Offsets must halve so that the two-step Richardson table cancels the
    linear and quadratic error terms.
    """
    vals = [(-e) * resolvent_apply(fam, -sol.delta - e, chi, neumann=False).w.real for e in offsets]
    r1 = [2 * vals[i + 1] - vals[i] for i in range(2)]
    return (4 * r1[1] - r1[0]) / 3


@dataclass(frozen=True)
class PeriodicityReport:
    periodic_error: float
    thetas: np.ndarray
    line_conditions: np.ndarray
    nonsingular: bool
    singular_at_zero: bool


def lattice_periodicity_check(fam, sol, chi, thetas=None, offset=0.5, cond_limit=COND_LIMIT):
    """Check ``R(z + 2 pi i) = R(z)`` and solvability on ``Re z = -delta``."""
    xi = fam.xi.values
    if np.any(np.abs(xi - np.round(xi)) > 1e-12):
        raise PreconditionError("lattice periodicity check needs integer-valued xi")
    if thetas is None:
        thetas = np.linspace(0.1, 2 * math.pi - 0.1, 16)
    thetas = np.asarray(thetas, dtype=float)
    err = 0.0
    for th in thetas:
        z = -sol.delta - offset + 1j * th
        a = resolvent_apply(fam, z, chi, neumann=False).w
        b = resolvent_apply(fam, z + 2j * math.pi, chi, neumann=False).w
        err = max(err, float(np.abs(a - b).max() / max(1.0, np.abs(a).max())))
    conds = []
    for th in thetas:
        A = np.eye(fam.matrix(-sol.delta).shape[0]) - fam.matrix(-sol.delta + 1j * th)
        conds.append(float(np.linalg.cond(A)))
    conds = np.array(conds)
    A0 = np.eye(fam.matrix(-sol.delta).shape[0]) - fam.matrix(-sol.delta)
    c0 = float(np.linalg.cond(A0))
    return PeriodicityReport(err, thetas, conds, bool(np.all(conds < cond_limit)),
                             bool(not math.isfinite(c0) or c0 > cond_limit))
