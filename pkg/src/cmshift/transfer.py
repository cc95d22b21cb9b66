"""Transfer matrices of depth-k potentials and their spectral data.

States are admissible words of length ``s = max(k-1, 1)``. A function that
reads ``s`` coordinates is a vector over states, and the operator

    (L_f g)(x) = sum_{e : e x admissible} exp(f(e x)) g(e x)

acts on it exactly as the matrix ``L[state(x), state(e x)] = exp(f(e x))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from .errors import NonConvergenceError, PreconditionError, ResourceCapError
from .potential import DepthPotential, birkhoff_sums, state_length

DENSE_CAP = 2000
STALL_ITERS = 100
STALL_TOL = 1e-12


@dataclass(eq=False)
class TransferMatrix:
    potential: DepthPotential
    states: np.ndarray
    matrix: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def is_complex(self):
        return np.iscomplexobj(self.matrix)

    def apply(self, g, n=1):
        g = np.asarray(g)
        for _ in range(n):
            g = self.matrix @ g
        return g


def build_matrix(f):
    """Exact matrix of ``L_f`` on functions of the first ``s`` coordinates."""
    shift = f.shift
    s = state_length(f.depth)
    states = shift.words_array(s)
    n = states.shape[0]
    if n > shift.word_cap:
        raise ResourceCapError("transfer matrix of dimension %d exceeds cap" % n)
    words = shift.words_array(s + 1)
    vals = f.read(words)
    target = shift.index_of(words[:, 1:])
    source = shift.index_of(words[:, :s])
    L = np.zeros((n, n), dtype=complex if f.is_complex else float)
    L[target, source] = np.exp(vals)
    return TransferMatrix(f, states, L)


def state_table(f, g):
    """Vector over states for ``g`` given as array or shallow DepthPotential."""
    s = state_length(f.depth)
    states = f.shift.words_array(s)
    if isinstance(g, DepthPotential):
        if g.depth > s:
            raise PreconditionError("function of depth %d is not a state function (s=%d)" % (g.depth, s))
        return g.read(states)
    g = np.asarray(g)
    if g.ndim == 0:
        return np.full(states.shape[0], g[()])
    if g.shape != (states.shape[0],):
        raise PreconditionError("state table needs %d entries, got %s" % (states.shape[0], g.shape))
    return g


@dataclass(eq=False)
class SpectralData:
    """Leading eigendata of a real transfer matrix.

    ``h`` is the right eigenvector (function on states), ``nu`` the left one
    (cylinder masses of the states) with ``sum(nu) = 1`` and ``nu @ h = 1``;
    ``mu = h * nu`` is the invariant Gibbs measure on states.
    """

    lam: float
    pressure: float
    h: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    gamma: float
    gamma_empirical: float
    gamma_dense: float | None
    positivity_margin: float
    gibbs_constant: float | None
    gibbs_lmax: int
    iterations: int
    residual: float
    potential: DepthPotential
    transfer: TransferMatrix
    _masses: dict = field(default_factory=dict, repr=False)

    @property
    def states(self):
        return self.transfer.states

    @property
    def state_len(self):
        return self.states.shape[1]

    def cylinder_masses(self, n, against="nu"):
        """Masses of all cylinders of length ``n`` (aligned with ``words_array(n)``).

        ``nu([w]) = lam**-n * sum_x nu[x] exp(S_n u(w x))`` over states ``x``
        following ``w``; the ``mu`` version weights by ``h(state(w x))``.
        """
        key = (n, against)
        if key in self._masses:
            return self._masses[key]
        shift = self.potential.shift
        if n == 0:
            out = np.ones(1)
        else:
            s = self.state_len
            pairs = shift.words_array(n + s)
            w_idx = shift.index_of(pairs[:, :n])
            x_idx = shift.index_of(pairs[:, n:])
            logw = birkhoff_sums(self.potential, pairs, n).real - n * self.pressure
            weight = self.nu[x_idx] * np.exp(logw)
            if against == "mu":
                weight = weight * self.h[shift.index_of(pairs[:, :s])]
            elif against != "nu":
                raise PreconditionError("integrate against 'nu' or 'mu'")
            out = np.zeros(shift.words_array(n).shape[0])
            np.add.at(out, w_idx, weight)
        self._masses[key] = out
        return out


def _irreducible(L):
    n, labels = connected_components(np.abs(L) > 0, directed=True, connection="strong")
    return n == 1


def _power(L, tol, max_iter):
    """Normalised power iteration with Collatz-Wielandt stopping.

    Returns ``(lam, vector, iterations, diffs)`` where ``diffs`` are the
    successive sup-norm changes of the normalised iterate.
    """
    x = np.ones(L.shape[0])
    diffs = []
    best, since = math.inf, 0
    for it in range(1, max_iter + 1):
        y = L @ x
        ratio = y / x
        hi, lo = ratio.max(), ratio.min()
        y = y / y.max()
        diffs.append(float(np.abs(y - x).max()))
        x = y
        width = (hi - lo) / hi
        if width <= tol:
            return 0.5 * (hi + lo), x, it, diffs
        # a tol below the rounding floor can never be met; accept a bracket
        # that stopped shrinking once it is within STALL_TOL
        best, since = (width, 0) if width < best else (best, since + 1)
        if since >= STALL_ITERS and best <= STALL_TOL:
            return 0.5 * (hi + lo), x, it, diffs
    raise NonConvergenceError(
        "power iteration did not converge in %d iterations (bracket %.3g)" % (max_iter, hi - lo),
        last=x,
    )


def _empirical_rate(diffs):
    d = np.asarray(diffs)
    if d.size < 3 or d[1] == 0.0:
        return 0.0
    floor = 1e3 * np.finfo(float).eps * max(d.max(), 1.0)
    good = np.flatnonzero(d > floor)
    if good.size < 3:
        return 0.0
    run = d[good[0]: good[-1] + 1]
    ratios = run[1:] / run[:-1]
    ratios = ratios[np.isfinite(ratios) & (ratios > 0)]
    if ratios.size == 0:
        return 0.0
    return float(np.median(ratios[-min(ratios.size, 20):]))


def leading_eigendata(u, tol=1e-12, max_iter=100_000, gibbs_lmax=None):
    """Leading eigenvalue, eigenfunction and eigenmeasure of ``L_u``.

    Parameters
    ----------
    u : DepthPotential
        Real potential, summable at the truncation level.
    tol : float
        Relative width of the Collatz-Wielandt bracket at which the power
        iteration stops.
    gibbs_lmax : int, optional
        Longest cylinder scanned for the Gibbs constant. By default the
        longest length ``<= 6`` with at most ``2e5`` (word, state) pairs.
    """
    if u.is_complex:
        raise PreconditionError("leading_eigendata needs a real potential")
    tm = build_matrix(u)
    L = tm.matrix
    if not _irreducible(L):
        raise PreconditionError("truncated shift is not irreducible")
    lam, h, it_r, diffs = _power(L, tol, max_iter)
    lam_l, nu, it_l, _ = _power(L.T.copy(), tol, max_iter)
    nu = nu / nu.sum()
    h = h / (nu @ h)
    residual = max(
        float(np.abs(L @ h - lam * h).max() / lam / h.max()),
        float(np.abs(nu @ L - lam * nu).max() / lam / nu.max()),
    )
    gamma_emp = _empirical_rate(diffs)
    gamma_dense = None
    if tm.dim <= DENSE_CAP:
        ev = np.sort(np.abs(np.linalg.eigvals(L)))[::-1]
        gamma_dense = float(ev[1] / ev[0]) if ev.size > 1 else 0.0
    spec = SpectralData(
        lam=float(lam), pressure=math.log(lam), h=h, nu=nu, mu=h * nu,
        gamma=gamma_dense if gamma_dense is not None else gamma_emp,
        gamma_empirical=gamma_emp, gamma_dense=gamma_dense,
        positivity_margin=float(h.min()), gibbs_constant=None, gibbs_lmax=0,
        iterations=max(it_r, it_l), residual=residual, potential=u, transfer=tm,
    )
    if gibbs_lmax is None:
        gibbs_lmax = 0
        for n in range(1, 7):
            if u.shift.count_words(n + tm.states.shape[1]) > 2e5:
                break
            gibbs_lmax = n
    if gibbs_lmax:
        spec.gibbs_constant = verify_gibbs(spec, gibbs_lmax).c
        spec.gibbs_lmax = gibbs_lmax
    return spec


def pressure_by_limit(u, n_max):
    """``(1/n) log sum_{w in E^n} exp(sup_[w] S_n u)`` for ``n = 1..n_max``."""
    if u.is_complex:
        raise PreconditionError("pressure needs a real potential")
    shift = u.shift
    out = []
    for n in range(1, n_max + 1):
        words = shift.words_array(n + u.depth - 1)
        sums = birkhoff_sums(u, words, n)
        w_idx = shift.index_of(words[:, :n])
        sup = np.full(shift.words_array(n).shape[0], -np.inf)
        np.maximum.at(sup, w_idx, sums)
        top = sup.max()
        out.append((top + math.log(np.exp(sup - top).sum())) / n)
    return np.array(out)


@dataclass(frozen=True)
class GibbsReport:
    c: float
    worst_word: tuple
    worst_state: tuple
    by_length: tuple  # c_n for n = 1..L_max


def verify_gibbs(spec, L_max):
    """Scan ``nu([w]) / exp(S_n u(w x) - n P)`` over cylinders of length <= L_max."""
    u = spec.potential
    shift = u.shift
    s = spec.state_len
    best, worst = 1.0, ((), ())
    by_length = []
    for n in range(1, L_max + 1):
        masses = spec.cylinder_masses(n, "nu")
        pairs = shift.words_array(n + s)
        w_idx = shift.index_of(pairs[:, :n])
        logw = birkhoff_sums(u, pairs, n).real - n * spec.pressure
        log_ratio = np.log(masses[w_idx]) - logw
        dev = np.abs(log_ratio)
        i = int(dev.argmax())
        c_n = float(math.exp(dev[i]))
        by_length.append(c_n)
        if c_n > best:
            best = c_n
            row = tuple(int(e) for e in pairs[i])
            worst = (row[:n], row[n:])
    return GibbsReport(best, worst[0], worst[1], tuple(by_length))


@dataclass(frozen=True)
class DecayReport:
    errors: np.ndarray
    rate: float
    prefactor: float
    gamma: float

    @property
    def ok(self):
        return self.rate <= self.gamma + 0.05


def rpf_convergence(spec, g, n_max):
    """Sup-norm decay of ``lam**-n L^n g - nu(g) h`` for a state function ``g``."""
    g = np.asarray(state_table(spec.potential, g), dtype=float)
    target = (spec.nu @ g) * spec.h
    L = spec.transfer.matrix / spec.lam
    errs = []
    cur = g.copy()
    for n in range(n_max + 1):
        errs.append(float(np.abs(cur - target).max()))
        cur = L @ cur
    errs = np.array(errs)
    # eigendata carry ~1e-12 relative error; stay well above that floor
    scale = max(errs.max(), np.abs(target).max(), 1.0)
    good = np.flatnonzero(errs > 1e-9 * scale)
    good = good[good >= 1] if good.size > 2 else good
    if good.size < 2:
        return DecayReport(errs, 0.0, float(errs[0]), spec.gamma)
    slope, icpt = np.polyfit(good, np.log(errs[good]), 1)
    return DecayReport(errs, float(math.exp(slope)), float(math.exp(icpt)), spec.gamma)


@dataclass(frozen=True)
class ComplexSpectrum:
    eigenvalues: np.ndarray  # sorted by decreasing modulus
    spectral_radius: float
    reference_radius: float  # exp(P(Re f))

    @property
    def margin(self):
        return self.reference_radius - self.spectral_radius


def complex_spectrum(f, dense_cap=DENSE_CAP):
    """Full spectrum of the truncated ``L_f`` paired with ``exp(P(Re f))``."""
    tm = build_matrix(f)
    if tm.dim > dense_cap:
        raise ResourceCapError("dense eigensolve of dimension %d exceeds cap %d" % (tm.dim, dense_cap))
    try:
        ev = np.linalg.eigvals(tm.matrix)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError("eigensolver failed: %s" % exc) from exc
    ev = ev[np.argsort(-np.abs(ev), kind="stable")]
    ref = leading_eigendata(f.real, gibbs_lmax=0).lam
    return ComplexSpectrum(ev, float(np.abs(ev[0])), ref)


@dataclass(frozen=True)
class Classification:
    kind: str  # "a-function", "regular" or "inconclusive"
    angle: float | None
    spectrum: ComplexSpectrum


def classify_a_function(f, tol=1e-8):
    """Decide whether the truncated operator has an eigenvalue on the circle
    of radius ``exp(P(Re f))``."""
    sp = complex_spectrum(f)
    ref = sp.reference_radius
    on_circle = np.flatnonzero(np.abs(np.abs(sp.eigenvalues) - ref) <= tol)
    if on_circle.size:
        a = float(np.angle(sp.eigenvalues[on_circle[0]]) % (2 * math.pi))
        if abs(a - 2 * math.pi) < tol:
            a = 0.0
        return Classification("a-function", a, sp)
    if sp.spectral_radius < ref - tol:
        return Classification("regular", None, sp)
    return Classification("inconclusive", None, sp)


def integrate(spec, g, against="nu"):
    """``int g d(nu or mu)`` for a depth-``d`` potential or a state table."""
    if isinstance(g, DepthPotential):
        masses = spec.cylinder_masses(g.depth, against)
        return complex(g.values @ masses) if g.is_complex else float(g.values @ masses)
    g = state_table(spec.potential, g)
    w = spec.nu if against == "nu" else spec.mu
    if against not in ("nu", "mu"):
        raise PreconditionError("integrate against 'nu' or 'mu'")
    return float(np.real_if_close(w @ g))


def spectra_distance(a, b):
    """Largest deviation after optimally pairing two eigenvalue multisets."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise PreconditionError("multisets differ in size")
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())
