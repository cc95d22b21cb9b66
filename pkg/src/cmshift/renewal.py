"""Renewal functions ``N(t, x)`` over a Markov shift.

    N(t, x) = sum_n sum_{sigma^n y = x} chi(y) f_y(t - S_n xi(y)) exp(S_n eta(y))

satisfies ``N(t, x) = sum_{sigma y = x} N(t - xi(y), y) exp(eta(y)) + chi(x) f_x(t)``.
All numerics run on the tilted function ``exp(-delta t) N(t, x)``, which is
bounded; functions of ``x`` are tabulated on state words.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid

from .errors import NonConvergenceError, PreconditionError, ResourceCapError
from .forcing import ForcingFamily
from .lattice import SpanReport, in_lattice, real_span
from .potential import DepthPotential, birkhoff_sums, state_length
from .resolvent import PotentialFamily, resolvent_apply, solve_delta
from .shift import enumerate_periodic_orbits
from .transfer import integrate, leading_eigendata, state_table


@dataclass(frozen=True, eq=False)
class LatticeStructure:
    """``xi - zeta = psi - psi o sigma`` with ``zeta`` valued in ``a Z``."""

    zeta: DepthPotential
    psi: np.ndarray
    a: float


@dataclass(frozen=True)
class DecayParams:
    """Declared ``exp(-t delta) N_abs(t, x) <= c_tilde exp(s t)`` for ``t <= t0``."""

    s: float
    t0: float
    c_tilde: float


@dataclass(eq=False)
class RenewalProblem:
    fam: PotentialFamily
    chi: np.ndarray
    forcing: ForcingFamily
    sol: object = None
    lattice: LatticeStructure | None = None
    decay: DecayParams | None = None
    c_bound: float | None = None

    def __post_init__(self):
        self.chi = np.asarray(state_table(self.fam.at(0.0), self.chi), dtype=float)
        if np.any(self.chi < 0):
            raise PreconditionError("chi must be non-negative")
        if self.sol is None:
            self.sol = solve_delta(self.fam)

    @property
    def delta(self):
        return self.sol.delta

    @property
    def shift(self):
        return self.fam.shift

    @property
    def s(self):
        return state_length(self.fam.depth)

    @property
    def states(self):
        return self.shift.words_array(self.s)

    def transitions(self):
        """``(target, source, log_weight, delay)`` for every ``y = e x``."""
        s = self.s
        words = self.shift.words_array(s + 1)
        target = self.shift.index_of(words[:, 1:])
        source = self.shift.index_of(words[:, :s])
        eta = self.fam.eta.read(words)
        xi = self.fam.xi.read(words)
        return target, source, eta, xi

    def forcing_table(self, t, tilted=True, absolute=False):
        tab = (self.forcing.evaluate_tilted(self.states, t, self.delta) if tilted
               else self.forcing.evaluate(self.states, t))
        if absolute:
            tab = np.abs(tab)
        return tab * self.chi[None, :]


@dataclass(frozen=True)
class RenewalGrid:
    t_min: float
    step: float
    n: int

    @classmethod
    def span(cls, t_min, t_max, step):
        if step <= 0 or t_max <= t_min:
            raise PreconditionError("grid needs step > 0 and t_max > t_min")
        n = int(round((t_max - t_min) / step)) + 1
        return cls(float(t_min), float(step), n)

    @property
    def t(self):
        return self.t_min + self.step * np.arange(self.n)

    @property
    def t_max(self):
        return self.t_min + self.step * (self.n - 1)


@dataclass(frozen=True, eq=False)
class RenewalSolution:
    grid: RenewalGrid
    tilted: np.ndarray  # (n_t, n_states): exp(-delta t) N(t, x)
    delta: float
    states: np.ndarray
    residual: float
    iterations: int
    method: str
    interpolation: str
    left_budget: float | None
    depth: int

    @property
    def t(self):
        return self.grid.t

    @property
    def N(self):
        with np.errstate(over="ignore"):
            return self.tilted * np.exp(self.delta * self.t)[:, None]

    def at(self, t):
        """Tilted values at the grid point nearest ``t``."""
        i = int(round((t - self.grid.t_min) / self.grid.step))
        if not 0 <= i < self.grid.n:
            raise PreconditionError("t = %g outside the solution grid" % t)
        return self.tilted[i]


class _ShiftOperator:
    """``(R g)(t, x) = sum_{sigma y = x} w(y) g(t - xi(y), y)`` on a grid."""

    def __init__(self, prob, grid, interpolation, exact_only=False):
        target, source, eta, xi = prob.transitions()
        w = np.exp(eta - prob.delta * xi)
        units = xi / grid.step
        q = np.floor(units + 1e-9).astype(np.int64)
        r = units - q
        r[np.abs(r) < 1e-9] = 0.0
        if exact_only and np.any(r > 0):
            raise PreconditionError("grid step %g does not divide the delays" % grid.step)
        if np.any(r > 0) and interpolation != "linear":
            raise PreconditionError("unsupported interpolation %r" % interpolation)
        n_states = prob.states.shape[0]
        self.groups = []
        # group transitions by identical delay so each group is one sparse map
        keys = np.round(units, 9)
        for key in np.unique(keys):
            sel = keys == key
            W = sparse.csr_matrix((w[sel], (target[sel], source[sel])), shape=(n_states, n_states))
            self.groups.append((int(q[sel][0]), float(r[sel][0]), W.T.tocsr()))
        self.q_min = min(g[0] for g in self.groups)
        self.q_max = max(g[0] + (1 if g[1] > 0 else 0) for g in self.groups)
        self.exact = all(g[1] == 0 for g in self.groups)

    def apply_rows(self, X, lo, hi):
        """Rows ``lo:hi`` of ``R X`` (reads below row 0 count as zero)."""
        out = np.zeros((hi - lo, X.shape[1]))
        for q, r, WT in self.groups:
            out += (1.0 - r) * _rows(X, lo - q, hi - q) @ WT
            if r > 0:
                out += r * _rows(X, lo - q - 1, hi - q - 1) @ WT
        return out


def _rows(X, lo, hi):
    if lo >= 0:
        return X[lo:hi]
    pad = np.zeros((min(-lo, hi - lo), X.shape[1]))
    if hi <= 0:
        return pad
    return np.vstack([pad, X[0:hi]])


def renewal_fixed_point(prob, grid, tol=1e-14, max_iter=100_000, interpolation="linear",
                        absolute=False):
    """Solve the tilted renewal equation on ``grid``.

    When every delay spans at least one grid step the fixed point is reached
    by marching forward in blocks of ``q_min`` steps (each block only reads
    earlier rows); otherwise Jacobi sweeps run until the sup-change is
    below ``tol``.
    """
    op = _ShiftOperator(prob, grid, interpolation, exact_only=prob.lattice is not None)
    F = prob.forcing_table(grid.t, absolute=absolute)
    X = np.zeros_like(F)
    if op.q_min >= 1:
        B = op.q_min
        for lo in range(0, grid.n, B):
            hi = min(lo + B, grid.n)
            X[lo:hi] = op.apply_rows(X, lo, hi) + F[lo:hi]
        iterations, method = 1, "march"
    else:
        for it in range(1, max_iter + 1):
            new = op.apply_rows(X, 0, grid.n) + F
            change = np.abs(new - X).max()
            X = new
            if change <= tol * max(1.0, np.abs(X).max()):
                break
        else:
            raise NonConvergenceError("renewal iteration did not converge (change %.3g)" % change, last=X)
        iterations, method = it, "jacobi"
    resid = np.abs(X - op.apply_rows(X, 0, grid.n) - F)
    interior = resid[min(op.q_max, grid.n - 1):]
    residual = float(interior.max() / max(1.0, np.abs(X).max())) if interior.size else 0.0
    return RenewalSolution(grid, X, prob.delta, prob.states, residual, iterations, method,
                           "exact" if op.exact else interpolation, _left_budget(prob, grid),
                           prob.fam.depth)


def _left_budget(prob, grid):
    lo = prob.forcing.support_lo(prob.states)
    if grid.t_min <= lo:
        return 0.0  # xi >= 0 and f vanishes below lo, so N does too
    if prob.decay is not None:
        return prob.decay.c_tilde * math.exp(prob.decay.s * grid.t_min)
    return None


@dataclass(frozen=True)
class OracleValue:
    value: float
    tail_bound: float | None
    certificate: str


def renewal_oracle(prob, t, x, n_max, absolute=False):
    """Direct double sum over ``n <= n_max`` and all ``n``-preimages of ``x``.

    Preimages are grown by prepending letters. When every forcing vanishes
    below some ``lo`` and ``xi >= 0``, branches with ``S_n xi > t - lo`` are
    dropped, which changes nothing since their extensions vanish too.
    """
    shift = prob.shift
    s = prob.s
    k = prob.fam.depth
    x = tuple(int(e) for e in x)
    if len(x) != s:
        raise PreconditionError("anchor must be a state word of length %d" % s)
    shift.check_word(x)
    forcings = prob.forcing.forcings(prob.states)
    lo = prob.forcing.support_lo(prob.states)
    prune = math.isfinite(lo)
    ys = np.array([x], dtype=np.int64)
    Sxi = np.zeros(1)
    Seta = np.zeros(1)
    total = 0.0
    for n in range(n_max + 1):
        if n > 0:
            firsts = ys[:, 0] - 1
            rows, cols = np.nonzero(shift.incidence[:, firsts].T)
            if rows.size > shift.word_cap:
                raise ResourceCapError("oracle tree exceeds the word cap at depth %d" % n)
            ys = np.hstack([(cols + 1)[:, None].astype(np.int64), ys[rows]])
            Sxi = Sxi[rows] + prob.fam.xi.read(ys[:, :k])
            Seta = Seta[rows] + prob.fam.eta.read(ys[:, :k])
            if prune:
                keep = Sxi <= t - lo
                ys, Sxi, Seta = ys[keep], Sxi[keep], Seta[keep]
            if ys.shape[0] == 0:
                break
        st = shift.index_of(ys[:, :s])
        vals = np.empty(ys.shape[0])
        for j in np.unique(st):
            sel = st == j
            vals[sel] = forcings[j](t - Sxi[sel])
        if absolute:
            vals = np.abs(vals)
        total += float(np.sum(prob.chi[st] * vals * np.exp(Seta)))
    bound, cert = _oracle_tail(prob, t, n_max)
    if ys.shape[0] == 0 and prune:
        bound, cert = 0.0, "support"
    return OracleValue(float(total), bound, cert)


def _oracle_tail(prob, t, n_max):
    lo = prob.forcing.support_lo(prob.states)
    xi_min = float(prob.fam.xi.values.min())
    if math.isfinite(lo) and xi_min > 0 and (n_max + 1) * xi_min > t - lo:
        return 0.0, "support"
    spec = leading_eigendata(prob.fam.eta, gibbs_lmax=0)
    if spec.pressure >= 0:
        return None, "no certificate"
    L = spec.transfer.matrix
    sup_f = _sup_forcing(prob)
    norms = []
    v = np.ones(L.shape[0])
    for _ in range(n_max + 1):
        v = L @ v
    # ||L^(n_max+1+j) 1||, j < m, with m the first block length that contracts
    m_norm, m = None, None
    w = np.ones(L.shape[0])
    for j in range(1, 201):
        w = L @ w
        if w.max() < 1.0:
            m_norm, m = w.max(), j
            break
    if m is None:
        return None, "no certificate"
    for _ in range(m):
        norms.append(v.max())
        v = L @ v
    return float(sup_f * prob.chi.max() * sum(norms) / (1.0 - m_norm)), "geometric"


def _sup_forcing(prob):
    sup = 0.0
    for f in prob.forcing.forcings(prob.states):
        if f.kind in ("step", "exp-step", "box"):
            sup = max(sup, 1.0)
        elif f.kind == "tabulated":
            sup = max(sup, float(np.abs(f.values).max()))
        else:
            return math.inf
    return sup


@dataclass(frozen=True)
class ConditionResult:
    ok: bool
    value: object
    note: str = ""


@dataclass(frozen=True)
class ConditionReport:
    A: ConditionResult
    B: ConditionResult
    C: ConditionResult
    D: ConditionResult

    @property
    def ok(self):
        return all(c.ok for c in (self.A, self.B, self.C, self.D))


def check_conditions(prob, grid):
    """Diagnostics for the four standing conditions; never raises."""
    sol = prob.sol
    a_ok = sol.derivative > 0 and -sol.delta < prob.fam.t_star
    A = ConditionResult(a_ok, {"delta": sol.delta, "derivative": sol.derivative,
                               "pressure_residual": sol.pressure_residual})
    ints = np.array([f.tilted_integral(prob.delta) for f in prob.forcing.forcings(prob.states)])
    bad = np.flatnonzero(~np.isfinite(ints))
    B = ConditionResult(bad.size == 0, ints,
                        "" if bad.size == 0 else "divergent at state %s"
                        % (tuple(int(e) for e in prob.states[bad[0]]),))
    try:
        absol = renewal_fixed_point(prob, grid, absolute=True)
    except Exception as exc:  # diagnostics never abort
        fail = ConditionResult(False, None, "fixed point failed: %s" % exc)
        return ConditionReport(A, B, fail, fail)
    c_hat = float(absol.tilted.max())
    C = ConditionResult(prob.c_bound is None or c_hat <= prob.c_bound, c_hat,
                        "max of exp(-t delta) N_abs over the grid")
    t0 = prob.decay.t0 if prob.decay else 0.0
    s_req = prob.decay.s if prob.decay else 0.0
    # undeclared: vanishing strictly left of 0 certifies every rate
    sel = absol.t <= t0 if prob.decay else absol.t < t0
    left = absol.tilted[sel].max(axis=1) if sel.any() else np.zeros(0)
    pos = left > 0
    if not pos.any():
        D = ConditionResult(True, math.inf, "N_abs vanishes left of t0 = %g" % t0)
    elif pos.sum() < 2:
        D = ConditionResult(False, None, "too few left-tail points to fit a rate")
    else:
        rate = float(np.polyfit(absol.t[sel][pos], np.log(left[pos]), 1)[0])
        D = ConditionResult(rate >= s_req and rate > 0, rate, "fitted left-tail rate")
    return ConditionReport(A, B, C, D)


@dataclass(frozen=True)
class LatticeReport:
    ok: bool
    coboundary_error: float
    zeta_in_lattice: bool
    periodic_in_lattice: bool
    span: SpanReport
    maximal: bool


def verify_lattice(xi, candidate, p_max=8, tol=1e-10):
    """Check a lattice structure for ``xi`` exactly on words and periodic orbits."""
    shift = xi.shift
    s = state_length(xi.depth)
    psi = np.asarray(candidate.psi, dtype=float)
    if candidate.zeta.depth > s + 1 or psi.shape != (shift.words_array(s).shape[0],):
        raise PreconditionError("lattice candidate depth does not match xi")
    words = shift.words_array(s + 1)
    diff = (xi.read(words) - candidate.zeta.read(words)
            - psi[shift.index_of(words[:, :s])] + psi[shift.index_of(words[:, 1:])])
    cob = float(np.abs(diff).max())
    a = float(candidate.a)
    zeta_ok = all(in_lattice(v, a, tol) for v in candidate.zeta.values)
    sums = periodic_sums(xi, p_max)
    per_ok = all(in_lattice(v, a, tol) for v in sums)
    span = real_span(sums, tol=tol)
    maximal = span.discrete and abs(span.span - a) <= tol * max(1.0, a)
    return LatticeReport(cob <= 1e-12 and zeta_ok and per_ok and maximal, cob, zeta_ok, per_ok,
                         span, maximal)


def periodic_sums(f, p_max):
    """``S_p f`` at every periodic point of period ``p <= p_max``."""
    out = []
    for p in range(1, p_max + 1):
        orbits = enumerate_periodic_orbits(f.shift, p)
        if not orbits:
            continue
        reps = -(-(p + f.depth) // p)
        ext = np.array([o.word * reps for o in orbits], dtype=np.int64)
        out.extend(birkhoff_sums(f, ext, p).real.tolist())
    return out


def trivial_lattice(xi, p_max=8):
    """Candidate ``zeta = xi``, ``psi = 0`` with ``a`` the span of ``xi``'s values."""
    span = real_span(xi.values)
    if not span.discrete:
        raise PreconditionError("xi values generate no discrete group")
    n = xi.shift.words_array(state_length(xi.depth)).shape[0]
    return LatticeStructure(xi, np.zeros(n), span.span)


# ---------------------------------------------------------------- asymptotics

@dataclass(frozen=True)
class NonLatticeAsymptote:
    G: float
    U: np.ndarray
    h: np.ndarray
    inner: np.ndarray


def _g_constant(prob):
    spec = prob.sol.spec
    inner = np.array([f.tilted_integral(prob.delta, absolute=False)
                      for f in prob.forcing.forcings(prob.states)])
    used = prob.chi > 0
    if not np.all(np.isfinite(inner[used])):
        raise PreconditionError("divergent inner integral: Condition (B) fails")
    inner = np.where(used, inner, 0.0)
    G = float(np.sum(spec.nu * prob.chi * inner) / prob.sol.derivative)
    return G, spec.h, inner


def asymptotic_constant_nonlattice(prob):
    if prob.lattice is not None:
        raise PreconditionError("problem carries a lattice structure")
    G, h, inner = _g_constant(prob)
    return NonLatticeAsymptote(G, G * h, h, inner)


def cesaro_limit(prob):
    """``G h`` regardless of the lattice dichotomy."""
    G, h, _ = _g_constant(prob)
    return G * h


@dataclass(frozen=True)
class LatticeAsymptote:
    t: np.ndarray
    G_tilde: np.ndarray  # (n_t, n_states)
    h: np.ndarray  # h for eta - delta zeta
    zeta_mean: float  # int zeta d mu for eta - delta zeta
    pressure_zeta: float

    @property
    def tilted(self):
        """Predicted ``exp(-t delta) N(t, x)``."""
        return self.G_tilde * self.h[None, :]


def asymptote_lattice(prob, ts, rel=1e-14, max_terms=10**6):
    lat = prob.lattice
    if lat is None:
        raise PreconditionError("asymptote_lattice needs a verified lattice structure")
    delta, a = prob.delta, float(lat.a)
    zeta = lat.zeta.lift(prob.fam.depth) if lat.zeta.depth < prob.fam.depth else lat.zeta
    spec = leading_eigendata(prob.fam.eta - zeta * delta, tol=1e-14, gibbs_lmax=0)
    zmean = integrate(spec, zeta, "mu")
    psi = np.asarray(lat.psi, dtype=float)
    forcings = prob.forcing.forcings(prob.states)
    ts = np.asarray(ts, dtype=float)
    out = np.zeros((ts.size, psi.size))
    for xi_ in range(psi.size):
        c = a * np.mod((ts + psi[xi_]) / a, 1.0)
        acc = np.zeros(ts.size)
        for y in np.flatnonzero(prob.chi > 0):
            lsum = np.array([_ell_sum(forcings[y], a, delta, cv - psi[y], rel, max_terms) for cv in c])
            acc += prob.chi[y] * spec.nu[y] * lsum
        out[:, xi_] = acc * np.exp(-c * delta) * a * math.exp(delta * psi[xi_]) / zmean
    return LatticeAsymptote(ts, out, spec.h, float(zmean), spec.pressure)


def _ell_sum(f, a, delta, shift, rel, max_terms, chunk=256):
    """``sum_l exp(-a l delta) f(a l + shift)`` summed outward until negligible.

    Terms are written as ``exp(delta shift) * ftilde(a l + shift)`` so large
    ``l`` never overflows.
    """
    lo_sup, hi_sup = f.support_lo, f.support_hi
    start = math.ceil((lo_sup - shift) / a) if math.isfinite(lo_sup) else 0
    total = 0.0

    def block(ls):
        return float(np.sum(f.tilted(a * ls + shift, delta)))

    # rightward
    l0, n = start, 0
    while True:
        ls = np.arange(l0, l0 + chunk)
        part = block(ls)
        total += part
        n += chunk
        l0 += chunk
        if math.isfinite(hi_sup) and a * l0 + shift > hi_sup:
            break
        if abs(part) <= rel * abs(total) or (total == 0.0 and part == 0.0 and n > chunk):
            break
        if n > max_terms:
            raise NonConvergenceError("lattice l-sum does not converge rightward")
    if not math.isfinite(lo_sup):
        l0, n = start - chunk, 0
        while True:
            part = block(np.arange(l0, l0 + chunk))
            total += part
            n += chunk
            l0 -= chunk
            if abs(part) <= rel * abs(total):
                break
            if n > max_terms:
                raise NonConvergenceError("lattice l-sum does not converge leftward")
    return total * math.exp(delta * shift)


def cesaro_average(prob, solution, t_max):
    """``(1/t_max) int_0^t_max exp(-T delta) N(T, x) dT`` by the trapezoid rule."""
    if prob.lattice is not None and solution.grid.step > prob.lattice.a / 8:
        raise PreconditionError("grid too coarse for the lattice Cesàro average")
    t = solution.t
    sel = (t >= -1e-12) & (t <= t_max + 1e-12)
    if t[sel].size < 2 or abs(t[sel][-1] - t_max) > 1e-9 * max(1.0, t_max) or t[sel][0] > 1e-12:
        raise PreconditionError("solution must cover [0, t_max] on grid points")
    return trapezoid(solution.tilted[sel], t[sel], axis=0) / t_max


@dataclass(frozen=True)
class LaplaceProbe:
    z: np.ndarray
    integral: np.ndarray  # (n_z, n_states)
    operator: np.ndarray
    tail: np.ndarray  # extrapolated contribution beyond t_max
    U: np.ndarray
    extrapolated: np.ndarray | None  # z L(z) extrapolated to z = 0


def laplace_probe(prob, solution, zs, rule="trapezoid", period=None):
    """``L(z, x) = int exp(z T) exp(-T delta) N(T, x) dT`` two ways.

    The integral form uses the solution grid (``rule`` is ``trapezoid`` or
    ``hold``; ``hold`` treats the untilted ``N`` as constant on each cell, which
    is exact for lattice step forcings) plus a tail beyond the window,
    continued periodically with ``period`` or else as a constant. The operator
    form is ``(I - L_{eta + (z - delta) xi})^-1 (chi F(z))`` with ``F`` the
    Laplace transform of the forcing at ``z - delta``.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    if np.any(zs.real >= 0):
        raise PreconditionError("laplace probe needs Re z < 0")
    if prob.decay is not None and np.any(zs.real <= -prob.decay.s):
        raise PreconditionError("laplace probe needs Re z > -s")
    if period is None and prob.lattice is not None:
        period = prob.lattice.a
    t, X, d = solution.t, solution.tilted, prob.delta
    dt = solution.grid.step
    forcings = prob.forcing.forcings(prob.states)
    ints, ops, tails = [], [], []
    for z in zs:
        ints_z = _window_integral(t, X, z, d, dt, rule)
        if period is not None:
            m = int(round(period / dt))
            W = _window_integral(t[-m - 1:], X[-m - 1:], z, d, dt, rule)
            tail = W * np.exp(z * period) / (1 - np.exp(z * period))
        else:
            tail = X[-1] * np.exp(z * t[-1]) / (-z)
        ints.append(ints_z + tail)
        tails.append(tail)
        b = prob.chi * np.array([f.laplace(z - d) for f in forcings])
        ops.append(resolvent_apply(prob.fam, z - d, b, neumann=False).w)
    ints, ops = np.array(ints), np.array(ops)
    U = cesaro_limit(prob)
    ext = None
    real = np.abs(zs.imag).max() == 0 and zs.size >= 2
    if real:
        z1, z2 = zs[-2].real, zs[-1].real
        v1, v2 = (z1 * ints[-2]).real, (z2 * ints[-1]).real
        ext = v2 - z2 * (v1 - v2) / (z1 - z2)
    return LaplaceProbe(zs, ints, ops, np.array(tails), U, ext)


def _window_integral(t, X, z, delta, dt, rule):
    if rule == "trapezoid":
        return trapezoid(np.exp(z * t)[:, None] * X, t, axis=0)
    if rule == "hold":
        w = z - delta
        cell = np.expm1(w * dt) / w if w != 0 else dt
        return np.sum(X[:-1] * np.exp(z * t[:-1])[:, None], axis=0) * cell
    raise PreconditionError("unknown quadrature rule %r" % rule)
