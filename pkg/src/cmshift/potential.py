"""Locally constant potentials of depth ``k`` on a truncated shift.

A :class:`DepthPotential` stores one value per admissible word of length
``k``; the value at a sequence ``x`` is the table entry for ``x[:k]``. Hölder
potentials enter through :func:`depth_project`, whose error is bounded by
``holder_norm_bound * theta**k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleWordError, PreconditionError
from .shift import Point, TruncatedShift


@dataclass(frozen=True)
class TailRule:
    """Closed-form bound ``T(M) >= sum_{e>M} exp(sup u|[e])``.

    ``kind`` is one of ``zero`` (finite alphabet), ``power`` (``C * M**-p``),
    ``geometric`` (``C * r**M``), ``explicit`` (a table ``{M: T}``) or
    ``divergent``.
    """

    kind: str = "zero"
    C: float = 1.0
    exponent: float = 1.0
    ratio: float = 0.5
    table: tuple = ()

    def __call__(self, M):
        if self.kind == "zero":
            return 0.0
        if self.kind == "power":
            return self.C * float(M) ** (-self.exponent)
        if self.kind == "geometric":
            return self.C * self.ratio**M
        if self.kind == "explicit":
            lookup = dict(self.table)
            if M not in lookup:
                raise PreconditionError("explicit tail rule has no entry for M=%d" % M)
            return float(lookup[M])
        if self.kind == "divergent":
            return math.inf
        raise PreconditionError("unknown tail rule %r" % self.kind)

    def describe(self):
        if self.kind == "power":
            return "T(M) = %g * M^-%g" % (self.C, self.exponent)
        if self.kind == "geometric":
            return "T(M) = %g * %g^M" % (self.C, self.ratio)
        return self.kind


class DepthPotential:
    """Real or complex potential that reads the first ``depth`` letters.

    Parameters
    ----------
    shift : TruncatedShift
    depth : int
        Number of coordinates read, ``k >= 1``.
    values : array_like or dict
        Either an array aligned with ``shift.words_array(depth)`` or a mapping
        from words to values (every admissible word must be present).
    theta : float
        Hölder parameter in ``(0, 1)``.
    holder_norm_bound : float, optional
        Declared bound on ``||f||_theta`` of the un-truncated potential.
        Defaults to the exact norm of the table.
    tail : TailRule, optional
        Tail bound beyond the truncation level; ``None`` means no global
        certificate is available.
    """

    def __init__(self, shift, depth, values, theta=0.5, holder_norm_bound=None,
                 tail=None, name=None, projection_error=0.0):
        if depth < 1:
            raise PreconditionError("depth must be >= 1")
        if not 0.0 < theta < 1.0:
            raise PreconditionError("theta must lie in (0, 1)")
        self.shift = shift
        self.depth = depth
        words = shift.words_array(depth)
        if isinstance(values, dict):
            arr = np.empty(words.shape[0], dtype=complex)
            missing = []
            for i, w in enumerate(words):
                key = tuple(int(e) for e in w)
                if key in values:
                    arr[i] = values[key]
                else:
                    missing.append(key)
            if missing:
                raise PreconditionError("potential table missing words, e.g. %s" % (missing[0],))
            extra = [w for w in values if not shift.is_admissible(w) or len(w) != depth]
            if extra:
                raise InadmissibleWordError("table has inadmissible or wrong-length word %s" % (extra[0],))
            values = arr
        values = np.asarray(values)
        if values.shape != (words.shape[0],):
            raise PreconditionError(
                "expected %d values for depth %d, got shape %s"
                % (words.shape[0], depth, values.shape)
            )
        if np.iscomplexobj(values) and np.all(values.imag == 0):
            values = values.real
        values = values.astype(complex if np.iscomplexobj(values) else float)
        values.setflags(write=False)
        self.values = values
        self.theta = float(theta)
        self.tail = tail
        self.name = name
        self.projection_error = float(projection_error)
        self._holder = holder_norm_bound

    def __repr__(self):
        return "DepthPotential(%s, depth=%d, %s)" % (
            self.name or "unnamed", self.depth, self.shift.name)

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    @property
    def words(self):
        return self.shift.words_array(self.depth)

    @property
    def holder_norm_bound(self):
        if self._holder is None:
            self._holder = self.holder_norm()
        return self._holder

    def table(self):
        return {tuple(int(e) for e in w): v for w, v in zip(self.words, self.values)}

    def value(self, word):
        word = tuple(word)
        if len(word) < self.depth:
            raise PreconditionError("need %d letters, got %d" % (self.depth, len(word)))
        idx = self.shift.index_of(np.array([word[: self.depth]]))[0]
        return self.values[idx]

    def evaluate(self, x):
        """Value at an infinite sequence given as a :class:`Point`."""
        return self.value(x.letters(self.depth))

    def read(self, arr, offset=0):
        """Vectorised values at ``arr[:, offset:offset+depth]``."""
        arr = np.asarray(arr)
        idx = self.shift.index_of(arr[:, offset: offset + self.depth])
        return self.values[idx]

    def lift(self, depth):
        """Same function as a table of larger depth."""
        if depth < self.depth:
            raise PreconditionError("cannot lower depth %d to %d" % (self.depth, depth))
        if depth == self.depth:
            return self
        words = self.shift.words_array(depth)
        return self._like(self.read(words), depth)

    def _like(self, values, depth=None, **kw):
        opts = dict(theta=self.theta, holder_norm_bound=self._holder, tail=self.tail,
                    name=self.name, projection_error=self.projection_error)
        opts.update(kw)
        return DepthPotential(self.shift, depth or self.depth, values, **opts)

    def _aligned(self, other):
        if isinstance(other, DepthPotential):
            if other.shift != self.shift:
                raise PreconditionError("potentials live on different shifts")
            k = max(self.depth, other.depth)
            return self.lift(k), other.lift(k)
        return self, None

    def __add__(self, other):
        a, b = self._aligned(other)
        if b is None:
            return a._like(a.values + other, tail=None)
        return a._like(a.values + b.values, holder_norm_bound=_sum_or_none(a, b),
                       tail=None, name=None)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.values)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        if isinstance(c, DepthPotential):
            raise TypeError("only scalar multiples are supported")
        hb = None if self._holder is None else abs(c) * self._holder
        return self._like(self.values * c, holder_norm_bound=hb, tail=None)

    __rmul__ = __mul__

    @property
    def real(self):
        return self._like(self.values.real.copy())

    @property
    def imag(self):
        return self._like(self.values.imag.copy() if self.is_complex else np.zeros(self.values.size))

    def var(self, n):
        """``var_n`` by exhaustive pairing of table words with a common ``n``-prefix."""
        if n < 1:
            raise PreconditionError("var_n needs n >= 1")
        if n >= self.depth:
            return 0.0
        words = self.words
        codes = self.shift.encode(words[:, :n])
        best = 0.0
        for c in np.unique(codes):
            vals = self.values[codes == c]
            if vals.size < 2:
                continue
            if self.is_complex:
                d = np.abs(vals[:, None] - vals[None, :]).max()
            else:
                d = vals.max() - vals.min()
            best = max(best, float(d))
        return best

    def holder_norm(self):
        """Exact ``||f||_theta`` of the table: ``max_n var_n / theta**n``."""
        return max([self.var(n) / self.theta**n for n in range(1, self.depth)], default=0.0)

    def sup_on_letters(self):
        """``sup u|[e]`` for each letter ``e`` (max over table words starting with ``e``)."""
        if self.is_complex:
            raise PreconditionError("sup over cylinders needs a real potential")
        first = self.words[:, 0]
        out = np.full(self.shift.M, -np.inf)
        np.maximum.at(out, first - 1, self.values)
        return out


def _sum_or_none(a, b):
    if a._holder is None or b._holder is None:
        return None
    return a._holder + b._holder


# ----------------------------------------------------------------- builders

def constant(shift, c, depth=1, theta=0.5, tail=None, name=None):
    n = shift.words_array(depth).shape[0]
    return DepthPotential(shift, depth, np.full(n, c, dtype=complex if np.iscomplexobj(c) else float),
                          theta=theta, holder_norm_bound=0.0, tail=tail,
                          name=name or "constant(%s)" % c)


def letter_values(shift, values, theta=0.5, tail=None, name=None):
    """Depth-1 potential ``u(e...) = values[e-1]``."""
    values = np.asarray(values)
    if values.shape != (shift.M,):
        raise PreconditionError("need %d letter values, got %d" % (shift.M, values.size))
    return DepthPotential(shift, 1, values, theta=theta, holder_norm_bound=0.0, tail=tail,
                          name=name or "letters")


def from_weights(shift, weights, theta=0.5, tail=None, name=None):
    """Depth-1 potential ``u(e...) = log weights[e-1]``."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise PreconditionError("weights must be positive")
    return letter_values(shift, np.log(weights), theta=theta, tail=tail, name=name or "weights")


def power_potential(shift, s, theta=0.5):
    """``u(e...) = -s log e`` with tail ``sum_{e>M} e^-s <= M^(1-s)/(s-1)``."""
    if s <= 1:
        tail = TailRule("divergent")
    else:
        tail = TailRule("power", C=1.0 / (s - 1.0), exponent=s - 1.0)
    M = shift.M
    return letter_values(shift, -s * np.log(np.arange(1, M + 1)), theta=theta, tail=tail,
                         name="power:%g" % s)


# --------------------------------------------------------- Birkhoff sums

def birkhoff_sum(f, prefix, anchor, n):
    """``S_n f`` on the sequence ``prefix + anchor``.

    ``anchor`` is a :class:`Point` or a finite word long enough to supply all
    ``n + depth - 1`` coordinates. ``S_0 f = 0``.
    """
    if n < 0:
        raise PreconditionError("n must be >= 0")
    prefix = tuple(prefix)
    need = n + f.depth - 1
    if isinstance(anchor, Point):
        seq = prefix + anchor.letters(max(need - len(prefix), 0) + 1)
    else:
        seq = prefix + tuple(anchor)
        if n and len(seq) < need:
            raise PreconditionError("sequence too short for S_%d at depth %d" % (n, f.depth))
    if not f.shift.is_admissible(seq[: max(need, len(prefix) + 1)]):
        raise InadmissibleWordError("inadmissible concatenation %s" % (seq[:need],))
    if n == 0:
        return 0.0 * f.values[0]
    arr = np.array([seq[:need]], dtype=np.int64)
    return sum(f.read(arr, j)[0] for j in range(n))


def birkhoff_sums(f, arr, n):
    """Vectorised ``S_n f`` for each row of ``arr`` (rows need ``n+depth-1`` letters)."""
    arr = np.asarray(arr, dtype=np.int64)
    out = np.zeros(arr.shape[0], dtype=f.values.dtype)
    for j in range(n):
        out = out + f.read(arr, j)
    return out


# ----------------------------------------------------------- summability

@dataclass(frozen=True)
class Summability:
    level_sum: float  # C_M
    tail: float | None  # T(M); None means no tail rule declared
    note: str = ""

    @property
    def summable(self):
        if self.tail is None:
            return None
        return math.isfinite(self.level_sum + self.tail)

    @property
    def total(self):
        return None if self.tail is None else self.level_sum + self.tail


def summability_constant(u):
    """``C_M = sum_{e<=M} exp(sup u|[e])`` plus the declared tail ``T(M)``."""
    if u.is_complex:
        raise PreconditionError("summability is defined for real potentials")
    C_M = float(np.exp(u.sup_on_letters()).sum())
    if u.tail is None:
        return Summability(C_M, None, "level-M only, no global certificate")
    t = u.tail(u.shift.M)
    note = "not summable" if not math.isfinite(t) else "certified by tail rule %s" % u.tail.describe()
    return Summability(C_M, t, note)


# ---------------------------------------------------- bounded distortion

def distortion_bound(f, n, agree=0):
    """Bound on ``|S_n f(wx) - S_n f(wy)|`` for ``w`` of length ``n``.

    ``agree`` is the length of the common initial block of ``x`` and ``y``;
    the bound is ``||f||_theta * theta**(agree+1) / (1 - theta)``.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    th = f.theta
    return f.holder_norm_bound * th ** (agree + 1) / (1.0 - th)


def empirical_distortion(f, n, agree=0):
    """Exhaustive ``max |S_n f(wx) - S_n f(wy)|`` over admissible ``w, x, y``.

    ``x`` and ``y`` range over words of length ``depth - 1`` (enough for a
    depth-``k`` potential) sharing their first ``agree`` letters.
    """
    shift = f.shift
    tail_len = max(f.depth - 1, agree, 1)
    words = shift.words_array(n + tail_len)
    sums = birkhoff_sums(f, words, n)
    key_w = shift.encode(words[:, :n + agree]) if n + agree else np.zeros(words.shape[0], np.int64)
    best = 0.0
    for c in np.unique(key_w):
        vals = sums[key_w == c]
        d = np.abs(vals[:, None] - vals[None, :]).max()
        best = max(best, float(d))
    return best


# ------------------------------------------------------------ projection

def depth_project(rule, shift, depth, theta=0.5, holder_norm_bound=None, tail=None, name=None):
    """Depth-``k`` table from a rule evaluated at canonical cylinder points.

    ``rule(point)`` evaluates the potential at a :class:`Point`. Rules with a
    ``batch(words, tail_point)`` method are evaluated per last letter, since
    the canonical extension only depends on it. The reported projection error
    is ``holder_norm_bound * theta**depth`` (zero when no bound is declared
    and the rule is itself depth ``<= k``).
    """
    words = shift.words_array(depth)
    values = None
    if hasattr(rule, "batch"):
        values = np.empty(words.shape[0])
        last = words[:, -1]
        for e in np.unique(last):
            sel = last == e
            tail_pt = shift.canonical_extension((int(e),))
            tail_pt = Point(tail_pt.prefix[1:], tail_pt.cycle)
            values[sel] = rule.batch(words[sel], tail_pt)
    else:
        vals = [rule(shift.canonical_extension(tuple(int(e) for e in w))) for w in words]
        values = np.asarray(vals)
    hb = holder_norm_bound
    err = 0.0 if hb is None else hb * theta**depth
    return DepthPotential(shift, depth, values, theta=theta, holder_norm_bound=hb, tail=tail,
                          name=name, projection_error=err)


class GaussRule:
    """``u_s(x) = -2s log(x_1 + [0; x_2, x_3, ...]) = 2s log [0; x_1, x_2, ...]``."""

    def __init__(self, s):
        self.s = float(s)

    @staticmethod
    def _tail_value(pt, extra=96):
        letters = pt.letters(len(pt.prefix) + max(extra, 4 * len(pt.cycle)))
        y = 0.0
        for e in reversed(letters):
            y = 1.0 / (e + y)
        return y

    def __call__(self, pt):
        return 2.0 * self.s * math.log(self._tail_value(pt))

    def batch(self, words, tail_pt):
        y = np.full(words.shape[0], self._tail_value(tail_pt))
        for j in range(words.shape[1] - 1, -1, -1):
            y = 1.0 / (words[:, j] + y)
        return 2.0 * self.s * np.log(y)


def gauss_potential(shift, s=1.0, depth=2, theta=None):
    """Depth-``k`` projection of the Gauss-map potential.

    ``|u_s(x) - u_s(y)| <= 2s |Tx - Ty|`` and an ``(n-1)``-cylinder has
    diameter at most ``phi**(-2(n-2))``, so ``theta = phi**-2`` and
    ``||u_s||_theta <= 2s * phi**4``. The tail bound
    uses ``sum_{e>M} e^{-2s} <= M^(1-2s)/(2s-1)``.
    """
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    theta = theta or phi**-2
    if s > 0.5:
        tail = TailRule("power", C=1.0 / (2 * s - 1.0), exponent=2 * s - 1.0)
    else:
        tail = TailRule("divergent")
    return depth_project(GaussRule(s), shift, depth, theta=theta,
                         holder_norm_bound=2.0 * s * phi**4, tail=tail, name="gauss:%g" % s)


# ---------------------------------------------------------- normalisation

class NormalizedPotential(DepthPotential):
    """``u - P(u) + log h - log h o sigma``; pressure 0 and ``L 1 = 1``."""

    def __init__(self, base, pressure_shift, log_h, values, depth):
        super().__init__(base.shift, depth, values, theta=base.theta, tail=base.tail,
                         name="normalized(%s)" % (base.name or "u"))
        self.base = base
        self.pressure_shift = pressure_shift
        self.log_h = log_h


def state_length(depth):
    return max(depth - 1, 1)


def normalize(u, spec):
    """Normalise a real potential with its eigendata ``spec``.

    The result has depth ``max(k, 2)`` because ``log h o sigma`` reads one
    more coordinate than ``h``.
    """
    if u.is_complex:
        raise PreconditionError("normalisation needs a real potential")
    s = state_length(u.depth)
    n_states = u.shift.words_array(s).shape[0]
    if spec.potential is not u and (spec.potential.shift != u.shift
                                    or spec.potential.depth != u.depth
                                    or not np.allclose(spec.potential.values, u.values)):
        raise PreconditionError("eigendata was computed for a different potential")
    if np.shape(spec.h) != (n_states,):
        raise PreconditionError("stale eigendata: %s states vs %d" % (np.shape(spec.h), n_states))
    depth = max(u.depth, s + 1)
    words = u.shift.words_array(depth)
    log_h = np.log(spec.h)
    here = u.shift.index_of(words[:, :s])
    there = u.shift.index_of(words[:, 1: 1 + s])
    vals = u.read(words) - spec.pressure + log_h[here] - log_h[there]
    return NormalizedPotential(u, spec.pressure, log_h, vals, depth)


# ------------------------------------------------------------------ CSV io

def load_potential_csv(path, shift, theta=0.5, tail=None, name=None):
    """Table with columns ``word`` (space separated letters), ``real``, ``imag``."""
    table = {}
    depth = None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            word = tuple(int(t) for t in row["word"].split())
            if depth is None:
                depth = len(word)
            elif len(word) != depth:
                raise PreconditionError("mixed word lengths in %s" % path)
            table[word] = complex(float(row["real"]), float(row.get("imag") or 0.0))
    if depth is None:
        raise PreconditionError("empty potential table %s" % path)
    return DepthPotential(shift, depth, table, theta=theta, tail=tail, name=name or str(path))
