"""
Interval exchange transformations as combinatorial and metric data.

An interval exchange on ``d`` symbols is given by a pair of bijections
``pi0, pi1`` from the alphabet to row positions and a vector of positive
lengths.  The subinterval ``I_a`` sits at position ``pi0[a]`` before the map
is applied and at position ``pi1[a]`` afterwards, so that the map acts on
``I_a`` as the translation by

    w_a = sum(lambda_b for pi1[b] < pi1[a]) - sum(lambda_b for pi0[b] < pi0[a]).

Symbols are the integers ``0..d-1`` and row positions are 0-based.  Letter
names are kept only for parsing and printing.

Two arithmetic modes are supported: exact rationals (:class:`fractions.Fraction`
or ``int`` entries) and IEEE doubles.  The mode is inferred from the entries.
"""
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import DomainError, InvalidLength, InvalidPermutation, TieError

__all__ = [
    "Type", "Permutation", "LengthVector", "IetState", "KeaneVerdict",
    "as_lengths", "build_iet", "evaluate", "evaluate_inverse", "monodromy",
    "is_irreducible", "classify_type", "check_keane", "iet_to_json",
    "iet_from_json", "TIE_TOL",
]

#: relative tolerance under which two float lengths are declared equal
TIE_TOL = 1e-12


class Type(IntEnum):
    """Type of a pair: 0 when the last top interval is the longer one."""
    TYPE0 = 0
    TYPE1 = 1


def _letters(d):
    return tuple(chr(ord("A") + i) for i in range(d)) if d <= 26 else tuple(
        f"a{i}" for i in range(d))


@dataclass(frozen=True)
class Permutation:
    """Combinatorial datum ``(pi0, pi1)``.

    Parameters
    ----------
    pi0, pi1 : sequence of int
        ``pi0[a]`` (resp. ``pi1[a]``) is the 0-based position of symbol ``a``
        on the top (resp. bottom) row.
    names : sequence of str, optional
        Printable names of the symbols.  Ignored by comparisons.
    """
    pi0: tuple
    pi1: tuple
    names: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        try:
            pi0 = tuple(int(p) for p in self.pi0)
            pi1 = tuple(int(p) for p in self.pi1)
        except (TypeError, ValueError) as exc:
            raise InvalidPermutation(f"positions must be integers: {exc}") from None
        d = len(pi0)
        if d < 2 or len(pi1) != d:
            raise InvalidPermutation("need two rows of equal length d >= 2")
        for row in (pi0, pi1):
            if sorted(row) != list(range(d)):
                raise InvalidPermutation(f"{row} is not a bijection onto 0..{d - 1}")
        names = _letters(d) if self.names is None else tuple(self.names)
        if len(names) != d or len(set(names)) != d:
            raise InvalidPermutation("symbol names must be distinct, one per symbol")
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "pi1", pi1)
        object.__setattr__(self, "names", names)

    @property
    def d(self):
        return len(self.pi0)

    def row(self, eps):
        """Symbols of row ``eps`` (0 top, 1 bottom) listed left to right."""
        pos = self.pi0 if eps == 0 else self.pi1
        out = [0] * self.d
        for a, p in enumerate(pos):
            out[p] = a
        return tuple(out)

    @property
    def top(self):
        return self.row(0)

    @property
    def bottom(self):
        return self.row(1)

    def last(self, eps):
        """The symbol ``a(eps)`` occupying the last position of row ``eps``."""
        pos = self.pi0 if eps == 0 else self.pi1
        return pos.index(self.d - 1)

    @classmethod
    def from_rows(cls, top, bottom=None):
        """Build from row words, e.g. ``from_rows("ABC/CBA")``.

        Rows may be strings of single letters, whitespace separated names or
        sequences of names.  The alphabet is ordered as on the top row.
        """
        if bottom is None:
            if not isinstance(top, str) or top.count("/") != 1:
                raise InvalidPermutation(f"expected 'TOP/BOTTOM', got {top!r}")
            top, bottom = top.split("/")
        top, bottom = _split_row(top), _split_row(bottom)
        if len(top) != len(bottom) or set(top) != set(bottom) or len(set(top)) != len(top):
            raise InvalidPermutation(f"rows {top} and {bottom} are not the same alphabet")
        names = tuple(top)
        index = {n: i for i, n in enumerate(names)}
        pi0 = list(range(len(names)))
        pi1 = [0] * len(names)
        for p, n in enumerate(bottom):
            pi1[index[n]] = p
        return cls(pi0, pi1, names)

    def rows_string(self):
        sep = "" if all(len(n) == 1 for n in self.names) else " "
        top = sep.join(self.names[a] for a in self.top)
        bottom = sep.join(self.names[a] for a in self.bottom)
        return f"{top}/{bottom}"

    def __str__(self):
        return self.rows_string()

    def sort_key(self):
        return (self.pi0, self.pi1)

    def with_rows(self, top, bottom):
        """Permutation over the same alphabet with the given row orders."""
        pi0 = [0] * self.d
        pi1 = [0] * self.d
        for p, a in enumerate(top):
            pi0[a] = p
        for p, a in enumerate(bottom):
            pi1[a] = p
        return Permutation(pi0, pi1, self.names)


def _split_row(row):
    if isinstance(row, str):
        row = row.strip()
        return row.split() if any(c.isspace() for c in row) else list(row)
    return [str(r) for r in row]


def _is_exact_value(v):
    return isinstance(v, Rational) and not isinstance(v, bool)


def _to_fraction(v):
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        return Fraction(v)
    return Fraction(v)


class LengthVector:
    """Positive lengths, one per symbol, with their cached total.

    Exact mode holds :class:`~fractions.Fraction` entries, float mode holds
    Python floats.
    """
    __slots__ = ("entries", "total", "exact")

    def __init__(self, values, exact=None):
        vals = list(values.entries if isinstance(values, LengthVector) else values)
        if exact is None:
            exact = all(_is_exact_value(v) or isinstance(v, str) for v in vals)
        if exact:
            try:
                vals = [_to_fraction(v) for v in vals]
            except (ValueError, ZeroDivisionError) as exc:
                raise InvalidLength(f"bad rational length: {exc}") from None
        else:
            vals = [float(Fraction(v)) if isinstance(v, str) else float(v) for v in vals]
        for v in vals:
            if not (v > 0) or (not exact and not math.isfinite(v)):
                raise InvalidLength(f"lengths must be positive and finite, got {v}")
        self.entries = tuple(vals)
        self.exact = bool(exact)
        self.total = sum(vals, Fraction(0)) if exact else math.fsum(vals)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __eq__(self, other):
        if isinstance(other, LengthVector):
            return self.entries == other.entries
        return NotImplemented

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"LengthVector({list(map(str, self.entries))})"

    def normalized(self):
        return LengthVector([v / self.total for v in self.entries], self.exact)

    def as_array(self):
        return np.array([float(v) for v in self.entries])


def as_lengths(values, exact=None):
    """Coerce a sequence (or :class:`LengthVector`) to a :class:`LengthVector`."""
    if isinstance(values, LengthVector) and (exact is None or exact == values.exact):
        return values
    if isinstance(values, np.ndarray):
        values = values.tolist()
    return LengthVector(values, exact)


@dataclass(frozen=True)
class IetState:
    """An interval exchange ``f`` on ``[0, |lambda|)``.

    Attributes
    ----------
    perm : Permutation
    lengths : LengthVector
    w : tuple
        Translation vector, ``f(x) = x + w[a]`` for ``x`` in ``I_a``.
    """
    perm: Permutation
    lengths: LengthVector
    w: tuple

    @property
    def exact(self):
        return self.lengths.exact

    @property
    def d(self):
        return self.perm.d

    @property
    def total(self):
        return self.lengths.total

    def _left_ends(self, eps):
        zero = Fraction(0) if self.exact else 0.0
        ends = [zero] * self.d
        acc = zero
        for a in self.perm.row(eps):
            ends[a] = acc
            acc = acc + self.lengths[a]
        return ends

    def intervals(self):
        """Domain intervals ``I_a = [lo, hi)`` indexed by symbol."""
        lo = self._left_ends(0)
        return [(lo[a], lo[a] + self.lengths[a]) for a in range(self.d)]

    def image_intervals(self):
        """Images ``f(I_a)`` indexed by symbol."""
        lo = self._left_ends(1)
        return [(lo[a], lo[a] + self.lengths[a]) for a in range(self.d)]

    def locate(self, x):
        """Symbol ``a`` with ``x`` in ``I_a``."""
        if not (0 <= x < self.total):
            raise DomainError(f"{x} outside [0, {self.total})")
        acc = 0
        for a in self.perm.top:
            acc = acc + self.lengths[a]
            if x < acc:
                return a
        return self.perm.top[-1]

    def __call__(self, x):
        return evaluate(self, x)


def _translation(perm, lengths):
    d = perm.d
    zero = Fraction(0) if lengths.exact else 0.0
    w = []
    for a in range(d):
        after = sum((lengths[b] for b in range(d) if perm.pi1[b] < perm.pi1[a]), zero)
        before = sum((lengths[b] for b in range(d) if perm.pi0[b] < perm.pi0[a]), zero)
        w.append(after - before)
    return tuple(w)


def build_iet(perm, lengths):
    """Construct the interval exchange of ``(perm, lengths)``.

    Raises
    ------
    InvalidPermutation, InvalidLength
    """
    if not isinstance(perm, Permutation):
        if isinstance(perm, str):
            perm = Permutation.from_rows(perm)
        else:
            perm = Permutation(*perm)
    lengths = as_lengths(lengths)
    if len(lengths) != perm.d:
        raise InvalidLength(f"expected {perm.d} lengths, got {len(lengths)}")
    return IetState(perm, lengths, _translation(perm, lengths))


def evaluate(iet, x):
    """Evaluate the exchange at ``x``; raises :class:`DomainError` outside the domain."""
    if iet.exact and not isinstance(x, float):
        x = Fraction(x)
    a = iet.locate(x)
    return x + iet.w[a]


def evaluate_inverse(iet, y):
    """Preimage of ``y`` found by scanning the image intervals."""
    if not (0 <= y < iet.total):
        raise DomainError(f"{y} outside [0, {iet.total})")
    acc = 0
    for a in iet.perm.bottom:
        acc = acc + iet.lengths[a]
        if y < acc:
            return y - iet.w[a]
    return y - iet.w[iet.perm.bottom[-1]]


def monodromy(perm):
    """The permutation ``p = pi1 o pi0^{-1}`` of positions (0-based)."""
    top = perm.top
    return np.array([perm.pi1[top[i]] for i in range(perm.d)], dtype=np.int64)


def is_irreducible(perm):
    """True unless ``p({0..k-1}) = {0..k-1}`` for some ``k < d``."""
    p = monodromy(perm)
    running = -1
    for k in range(perm.d - 1):
        running = max(running, p[k])
        if running == k:
            return False
    return True


def _tie_tol(lengths):
    return 0 if lengths.exact else TIE_TOL * float(lengths.total)


def classify_type(perm, lengths):
    """Return :attr:`Type.TYPE0` if ``lambda_{a(0)} > lambda_{a(1)}``, else ``TYPE1``.

    Raises
    ------
    TieError
        When the two lengths agree (exactly, or within ``1e-12 |lambda|``
        in float mode).
    """
    lengths = as_lengths(lengths)
    top_last, bottom_last = lengths[perm.last(0)], lengths[perm.last(1)]
    diff = top_last - bottom_last
    if abs(diff) <= _tie_tol(lengths):
        raise TieError()
    return Type.TYPE0 if diff > 0 else Type.TYPE1


@dataclass(frozen=True)
class KeaneVerdict:
    """Outcome of :func:`check_keane`.

    ``ok`` is True when no coincidence was seen up to ``depth``; otherwise
    ``n`` is the first iterate at which ``f^n`` of the left end of ``I_a``
    hit the left end of ``I_b``.
    """
    ok: bool
    depth: int
    n: int = None
    a: int = None
    b: int = None

    def __str__(self):
        return f"ok_to_depth({self.depth})" if self.ok else f"violation_at({self.n})"


def check_keane(perm, lengths, depth):
    """Search for connections between the discontinuities up to ``depth`` iterates.

    The left end of every ``I_a`` is iterated ``depth`` times and compared to
    the left ends of the intervals ``I_b`` not starting at 0.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    iet = build_iet(perm, lengths)
    lo = [iv[0] for iv in iet.intervals()]
    targets = [(lo[b], b) for b in range(iet.d) if iet.perm.pi0[b] != 0]
    tol = _tie_tol(iet.lengths)
    points = list(lo)
    for n in range(1, depth + 1):
        points = [evaluate(iet, x) for x in points]
        for a, x in enumerate(points):
            for y, b in targets:
                if abs(x - y) <= tol:
                    return KeaneVerdict(False, depth, n, a, b)
        if not iet.exact:
            # keep float orbits inside the domain
            points = [min(max(x, 0.0), math.nextafter(float(iet.total), 0.0)) for x in points]
    return KeaneVerdict(True, depth)


def _encode(v):
    return f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) else float(v)


def iet_to_json(perm, lengths):
    """Serialise ``(perm, lengths)``; rationals become ``"p/q"`` strings.

    Row positions are written 1-based, as bijections onto ``{1..d}``.
    """
    lengths = as_lengths(lengths)
    return json.dumps({
        "d": perm.d,
        "pi0": [p + 1 for p in perm.pi0],
        "pi1": [p + 1 for p in perm.pi1],
        "lambda": [_encode(v) for v in lengths],
    })


def iet_from_json(text):
    """Inverse of :func:`iet_to_json`."""
    data = json.loads(text) if isinstance(text, str) else dict(text)
    perm = Permutation([p - 1 for p in data["pi0"]], [p - 1 for p in data["pi1"]])
    if data.get("d", perm.d) != perm.d:
        raise InvalidPermutation("field d disagrees with the rows")
    raw = data["lambda"]
    exact = all(isinstance(v, (str, int)) for v in raw)
    return perm, LengthVector(raw, exact=exact)
