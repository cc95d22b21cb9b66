"""Finite truncations of countable-alphabet Markov shifts.

Letters are the integers ``1..M``. A word is a tuple of letters; word arrays
used internally are ``(count, length)`` int64 arrays in lexicographic order.
Infinite sequences are represented by eventually periodic :class:`Point`
objects, which is lossless for locally constant potentials.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InadmissibleWordError, PreconditionError, ResourceCapError

DEFAULT_WORD_CAP = 10**7

Word = tuple


@dataclass(frozen=True)
class Point:
    """The sequence ``prefix + cycle + cycle + ...``."""

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        if not self.cycle:
            raise ValueError("a point needs a nonempty cycle")

    def letters(self, n):
        out = list(self.prefix[:n])
        while len(out) < n:
            out.extend(self.cycle)
        return tuple(out[:n])

    def prepend(self, word):
        return Point(tuple(word) + self.prefix, self.cycle)


@dataclass(frozen=True)
class PeriodicOrbit:
    """A cyclic word ``w`` whose periodic extension ``www...`` is admissible."""

    word: tuple

    @property
    def period(self):
        return len(self.word)

    def point(self):
        return Point((), self.word)


@dataclass(frozen=True)
class IrreducibilityReport:
    ok: bool
    witnesses: tuple  # the set Lambda, sorted by (length, letters)
    failing_pair: tuple | None = None

    def __bool__(self):
        return self.ok


class TruncatedShift:
    """Markov shift on letters ``1..M`` with 0/1 incidence matrix.

    Construction fails if a letter has no admissible successor or no
    admissible predecessor; such truncations would silently change word
    counts.
    """

    def __init__(self, incidence, name=None, word_cap=DEFAULT_WORD_CAP):
        A = np.asarray(incidence).astype(bool)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise PreconditionError("incidence must be a nonempty square table")
        dead_out = np.flatnonzero(~A.any(axis=1))
        dead_in = np.flatnonzero(~A.any(axis=0))
        if dead_out.size or dead_in.size:
            raise PreconditionError(
                "truncation has dead letters: no successor %s, no predecessor %s"
                % ((dead_out + 1).tolist(), (dead_in + 1).tolist())
            )
        A.setflags(write=False)
        self.incidence = A
        self.M = A.shape[0]
        self.full_shift = bool(A.all())
        self.name = name or ("full-%d" % self.M if self.full_shift else "custom-%d" % self.M)
        self.word_cap = word_cap
        self._words = {}
        self._succ = [tuple(int(j) + 1 for j in np.flatnonzero(A[i])) for i in range(self.M)]

    @classmethod
    def full(cls, M, **kw):
        return cls(np.ones((M, M), dtype=bool), name="full-%d" % M, **kw)

    @classmethod
    def golden_mean(cls, **kw):
        return cls([[1, 1], [1, 0]], name="golden-mean", **kw)

    def __repr__(self):
        return "TruncatedShift(%s, M=%d)" % (self.name, self.M)

    def __eq__(self, other):
        return isinstance(other, TruncatedShift) and np.array_equal(
            self.incidence, other.incidence
        )

    def __hash__(self):
        return hash((self.M, self.incidence.tobytes()))

    def successors(self, letter):
        return self._succ[letter - 1]

    def allows(self, a, b):
        return bool(self.incidence[a - 1, b - 1])

    def is_admissible(self, word):
        if any(not (1 <= e <= self.M) for e in word):
            return False
        return all(self.incidence[a - 1, b - 1] for a, b in zip(word, word[1:]))

    def check_word(self, word):
        if not self.is_admissible(word):
            raise InadmissibleWordError("inadmissible word %s" % (tuple(word),))

    def count_words(self, n):
        """``|E^n|`` as a float (exact below 2**53)."""
        if n == 0:
            return 1.0
        v = np.ones(self.M)
        A = self.incidence.astype(float)
        for _ in range(n - 1):
            v = A @ v
        return float(v.sum())

    def _check_cap(self, count, what):
        if count > self.word_cap:
            raise ResourceCapError(
                "%s: %.3g words exceeds cap %d" % (what, count, self.word_cap)
            )

    def words_array(self, n):
        """Admissible words of length ``n`` as a lexicographically sorted array."""
        if n in self._words:
            return self._words[n]
        self._check_cap(self.count_words(n), "E^%d" % n)
        if n == 0:
            arr = np.zeros((1, 0), dtype=np.int64)
        else:
            arr = np.arange(1, self.M + 1, dtype=np.int64)[:, None]
            A = self.incidence
            for _ in range(n - 1):
                last = arr[:, -1] - 1
                rows, cols = np.nonzero(A[last])
                arr = np.hstack([arr[rows], (cols + 1)[:, None].astype(np.int64)])
        arr.setflags(write=False)
        self._words[n] = arr
        return arr

    def encode(self, arr):
        """Mixed-radix codes of word rows; order-preserving for fixed length."""
        arr = np.asarray(arr, dtype=np.int64)
        n = arr.shape[1]
        if float(self.M) ** n >= 2.0**62:
            raise ResourceCapError("words of length %d too long to encode" % n)
        codes = np.zeros(arr.shape[0], dtype=np.int64)
        for j in range(n):
            codes = codes * self.M + (arr[:, j] - 1)
        return codes

    def index_of(self, arr):
        """Row indices into ``words_array(n)`` for each row of ``arr``."""
        arr = np.atleast_2d(np.asarray(arr, dtype=np.int64))
        n = arr.shape[1]
        key = ("codes", n)
        if key not in self._words:
            self._words[key] = self.encode(self.words_array(n))
        codes = self._words[key]
        q = self.encode(arr)
        idx = np.searchsorted(codes, q)
        bad = (idx >= codes.size) | (codes[np.minimum(idx, codes.size - 1)] != q)
        if bad.any():
            row = tuple(int(e) for e in arr[np.flatnonzero(bad)[0]])
            raise InadmissibleWordError("inadmissible word %s" % (row,))
        return idx

    def canonical_extension(self, word=()):
        """Lexicographically least admissible infinite extension of ``word``.

        Greedy choice of the least successor is optimal because no letter is
        a dead end; the greedy orbit is eventually periodic.
        """
        word = tuple(word)
        if word:
            self.check_word(word)
            e = self.successors(word[-1])[0]
        else:
            e = 1
        seq, pos = [], {}
        while e not in pos:
            pos[e] = len(seq)
            seq.append(e)
            e = self.successors(e)[0]
        start = pos[e]
        return Point(word + tuple(seq[:start]), tuple(seq[start:]))


def enumerate_words(shift, n):
    """All admissible words of length ``n`` in lexicographic order."""
    if n < 0:
        raise PreconditionError("n must be >= 0")
    return [tuple(int(e) for e in row) for row in shift.words_array(n)]


def preimage_words(shift, anchor, n):
    """All ``w`` of length ``n`` such that ``w + anchor`` is admissible."""
    anchor = tuple(anchor)
    if n < 0:
        raise PreconditionError("n must be >= 0")
    if not anchor and not shift.full_shift:
        raise PreconditionError("empty anchor requires a full shift")
    if anchor:
        shift.check_word(anchor)
    if n == 0:
        return [()]
    arr = shift.words_array(n)
    if anchor:
        arr = arr[shift.incidence[arr[:, -1] - 1, anchor[0] - 1]]
    return [tuple(int(e) for e in row) for row in arr]


def enumerate_periodic_orbits(shift, p):
    """Admissible cyclic words of period ``p``.

    Rotations of the same cycle are all listed; no reduction is made.
    """
    if p < 1:
        raise PreconditionError("period must be >= 1")
    arr = shift.words_array(p)
    closing = shift.incidence[arr[:, -1] - 1, arr[:, 0] - 1]
    return [PeriodicOrbit(tuple(int(e) for e in row)) for row in arr[closing]]


def check_finitely_irreducible(shift, max_len):
    """Find a finite connecting set ``Lambda`` with words of length <= max_len.

    For every pair ``(i, j)`` the lexicographically least among the shortest
    ``w`` with ``i w j`` admissible is used.
    """
    if max_len < 0:
        raise PreconditionError("max_len must be >= 0")
    M = shift.M
    witnesses = set()
    for i in range(1, M + 1):
        # breadth-first search from i; paths are explored in lexicographic
        # order so the first hit at each length is the least word
        best = {}
        frontier = [((), i)]
        visited = set()
        for length in range(max_len + 1):
            for w, last in frontier:
                for j in shift.successors(last):
                    if j not in best:
                        best[j] = w
            if len(best) == M:
                break
            nxt = []
            for w, last in frontier:
                for e in shift.successors(last):
                    if e not in visited:
                        visited.add(e)
                        nxt.append((w + (e,), e))
            frontier = nxt
            if not frontier:
                break
        for j in range(1, M + 1):
            if j not in best:
                return IrreducibilityReport(False, tuple(sorted(witnesses, key=_wkey)), (i, j))
            witnesses.add(best[j])
    return IrreducibilityReport(True, tuple(sorted(witnesses, key=_wkey)))


def _wkey(w):
    return (len(w), w)


def parse_incidence(spec, M):
    """Shift from ``"full"``, ``"golden-mean"``, ``"gauss"`` or a 0/1 table."""
    if isinstance(spec, str):
        name = spec.lower()
        if name in ("full", "gauss"):
            shift = TruncatedShift.full(M)
            if name == "gauss":
                shift.name = "gauss-%d" % M
            return shift
        if name in ("golden-mean", "golden"):
            if M != 2:
                raise PreconditionError("golden-mean shift has M = 2")
            return TruncatedShift.golden_mean()
        raise PreconditionError("unknown shift builtin %r" % spec)
    table = np.asarray(spec)
    if table.shape != (M, M):
        raise PreconditionError("incidence shape %s does not match M=%d" % (table.shape, M))
    return TruncatedShift(table)


def all_words_bruteforce(shift, n):
    """Reference enumeration by filtering ``{1..M}^n``; only for tiny cases."""
    return [w for w in product(range(1, shift.M + 1), repeat=n) if shift.is_admissible(w)]
