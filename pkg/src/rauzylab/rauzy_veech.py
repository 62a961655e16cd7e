"""
Rauzy-Veech induction and renormalisation.

One induction step compares the last intervals of the two rows.  The longer
one (the winner ``a(eps)``, ``eps`` the type) keeps its row; the loser
``a(1-eps)`` is cut off, its length is subtracted from the winner and the
loser symbol is reinserted in the opposite row immediately after the winner.
The induced map is the first return of the exchange to ``[0, |lambda| -
lambda_loser)``.

Matrices follow the length convention ``lambda = A lambda'``: the matrix of a
path maps the lengths of the induced exchange back to the original lengths.
It has nonnegative integer entries and determinant one; the usual
``Theta`` matrix is its transpose, so ``lambda' = Theta^{-1*} lambda``.
"""
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NearDegenerate, NotNormalized, ReduciblePermutation, TieError
from .iet_core import (LengthVector, Permutation, Type, as_lengths, build_iet,
                       classify_type, is_irreducible)

__all__ = [
    "NEAR_DEGENERATE_TOL", "ThetaWord", "RauzyClass", "T0Orbit",
    "elementary_matrix", "rauzy_move", "rv_induction_step", "rv_renormalize",
    "markov_cell", "rauzy_class", "iterate_t0", "projective_jacobian",
]

NEAR_DEGENERATE_TOL = 1e-13


def _int_matrix(a):
    return np.array([[int(v) for v in row] for row in a], dtype=object)


def _identity(d):
    return _int_matrix(np.eye(d, dtype=np.int64))


def elementary_matrix(perm, eps):
    """Matrix of one induction step of type ``eps`` from ``perm``."""
    m = _identity(perm.d)
    m[perm.last(eps), perm.last(1 - eps)] = 1
    return m


def rauzy_move(perm, eps):
    """Combinatorial part of a type ``eps`` step."""
    winner, loser = perm.last(eps), perm.last(1 - eps)
    rows = [list(perm.top), list(perm.bottom)]
    moving = rows[1 - eps]
    moving.remove(loser)
    moving.insert(moving.index(winner) + 1, loser)
    return perm.with_rows(rows[0], rows[1])


def _det(m):
    # Bareiss elimination on an integer matrix
    a = [[int(v) for v in row] for row in m]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[-1][-1]


@dataclass(frozen=True)
class ThetaWord:
    """Product of elementary induction matrices along a path.

    Attributes
    ----------
    matrix : ndarray of Python ints
        ``A`` with ``lambda_start = A lambda_end`` (unnormalised lengths).
    inverse : ndarray of Python ints
        Exact integer inverse of ``matrix``.
    path : tuple of (Permutation, int)
        The ``(pi, eps)`` label of every elementary step.
    """
    matrix: np.ndarray
    inverse: np.ndarray
    path: tuple = ()

    @classmethod
    def identity(cls, d):
        return cls(_identity(d), _identity(d), ())

    @classmethod
    def step(cls, perm, eps):
        m = elementary_matrix(perm, eps)
        inv = _identity(perm.d)
        inv[perm.last(eps), perm.last(1 - eps)] = -1
        return cls(m, inv, ((perm, int(eps)),))

    @classmethod
    def from_matrix(cls, matrix):
        """Wrap a unimodular nonnegative integer matrix with empty path."""
        m = _int_matrix(matrix)
        if _det(m) not in (1, -1):
            raise ValueError("matrix is not unimodular")
        inv = _int_matrix(np.round(np.linalg.inv(np.array(m, dtype=float))).astype(np.int64))
        if not np.array_equal(np.dot(m, inv), _identity(len(m))):
            raise ValueError("integer inverse could not be recovered")
        return cls(m, inv, ())

    @property
    def d(self):
        return self.matrix.shape[0]

    @property
    def step_count(self):
        return len(self.path)

    @property
    def theta(self):
        """The transpose ``Theta`` with ``lambda' = Theta^{-1*} lambda``."""
        return self.matrix.T.copy()

    @property
    def det(self):
        return _det(self.matrix)

    def then(self, other):
        """Path ``self`` followed by ``other``."""
        return ThetaWord(np.dot(self.matrix, other.matrix),
                         np.dot(other.inverse, self.inverse),
                         self.path + other.path)

    def float_matrix(self):
        return np.array(self.matrix, dtype=float)

    def float_inverse(self):
        return np.array(self.inverse, dtype=float)

    def is_positive(self):
        return all(int(v) >= 1 for v in self.matrix.flat)

    def apply(self, lengths):
        """``A lambda`` (exact for rational input)."""
        return list(np.dot(self.matrix, np.array(list(lengths), dtype=object)))

    def apply_inverse(self, lengths):
        """``A^{-1} lambda``."""
        return list(np.dot(self.inverse, np.array(list(lengths), dtype=object)))

    def projective(self, lam):
        """``A lam / |A lam|`` in floating point."""
        v = self.float_matrix() @ np.asarray(lam, dtype=float)
        return v / v.sum(axis=0)

    def jacobian(self, lam):
        """Jacobian of :meth:`projective` on the simplex chart at ``lam``."""
        return projective_jacobian(self.float_matrix(), lam, abs(self.det))


def projective_jacobian(matrix, lam, det=None):
    """``|det A| / |A lam|^d`` for ``lam`` on the unit simplex.

    This is the Jacobian, in the chart given by the first ``d-1``
    coordinates, of ``lam -> A lam / |A lam|``.
    """
    matrix = np.asarray(matrix, dtype=float)
    lam = np.asarray(lam, dtype=float)
    lam = lam / lam.sum(axis=0)
    d = matrix.shape[0]
    if det is None:
        det = abs(np.linalg.det(matrix))
    return det / (matrix @ lam).sum(axis=0) ** d


def _check_degenerate(lengths):
    if not lengths.exact and min(lengths) < NEAR_DEGENERATE_TOL * lengths.total:
        raise NearDegenerate(
            f"min length {min(lengths):.3e} below {NEAR_DEGENERATE_TOL:g}*|lambda|")


def rv_induction_step(perm, lengths):
    """One Rauzy-Veech step without renormalisation.

    Returns
    -------
    perm2 : Permutation
    lengths2 : LengthVector
        Lengths of the induced exchange on ``[0, |lambda| - lambda_loser)``.
    theta : ThetaWord
        The elementary matrix, ``lengths = theta.matrix @ lengths2``.

    Raises
    ------
    TieError, NearDegenerate
    """
    lengths = as_lengths(lengths)
    eps = int(classify_type(perm, lengths))
    winner, loser = perm.last(eps), perm.last(1 - eps)
    new = list(lengths)
    new[winner] = new[winner] - new[loser]
    out = LengthVector(new, lengths.exact)
    _check_degenerate(out)
    return rauzy_move(perm, eps), out, ThetaWord.step(perm, eps)


def _normalize(vals, exact):
    total = sum(vals, Fraction(0)) if exact else math.fsum(vals)
    return LengthVector([v / total for v in vals], exact)


def rv_renormalize(perm, lengths):
    """Induction step followed by rescaling back to the unit simplex.

    Raises
    ------
    NotNormalized
        If ``|lambda| != 1`` (beyond ``1e-12`` in float mode).
    """
    lengths = as_lengths(lengths)
    if lengths.exact:
        if lengths.total != 1:
            raise NotNormalized(f"|lambda| = {lengths.total}")
    elif abs(lengths.total - 1.0) > 1e-12:
        raise NotNormalized(f"|lambda| = {lengths.total!r}")
    eps = int(classify_type(perm, lengths))
    loser = perm.last(1 - eps)
    perm2, lam2, _ = rv_induction_step(perm, lengths)
    scale = 1 - lengths[loser]
    return perm2, LengthVector([v / scale for v in lam2], lengths.exact)


def markov_cell(perm, lengths):
    """The label ``(perm, eps)`` of the cell containing ``lengths``."""
    return perm, classify_type(perm, lengths)


@dataclass
class RauzyClass:
    """Closure of a permutation under both induction moves.

    Vertices are sorted lexicographically on ``(pi0, pi1)``; ``edges`` maps
    ``(i, eps)`` to the index of the image vertex.
    """
    vertices: tuple
    edges: dict
    theta_factors: dict = field(repr=False)

    def __post_init__(self):
        self._index = {v: i for i, v in enumerate(self.vertices)}
        self._tables = None

    def __len__(self):
        return len(self.vertices)

    @property
    def d(self):
        return self.vertices[0].d

    def index(self, perm):
        return self._index[perm]

    def __contains__(self, perm):
        return perm in self._index

    def to_json_dict(self):
        return {
            "vertices": [v.rows_string() for v in self.vertices],
            "edges": [{"from": i, "eps": e, "to": j}
                      for (i, e), j in sorted(self.edges.items())],
        }

    def to_dot(self):
        lines = ["digraph rauzy {"]
        for i, v in enumerate(self.vertices):
            lines.append(f'  v{i} [label="{v.rows_string()}"];')
        for (i, e), j in sorted(self.edges.items()):
            style = "solid" if e == 0 else "dashed"
            lines.append(f'  v{i} -> v{j} [label="{e}", style={style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def kernel_tables(self):
        """Integer lookup tables used by the compiled orbit kernels.

        Returns a dict with ``last`` (nv, 2): the last symbol of each row;
        ``nxt`` (nv, 2): the image vertex of each move; ``tail`` (nv, 2, d)
        and ``tlen`` (nv, 2): for a type ``eps`` step, the symbols following
        the winner in the opposite row (they rotate during a burst).
        """
        if self._tables is None:
            nv, d = len(self.vertices), self.d
            last = np.zeros((nv, 2), np.int64)
            nxt = np.zeros((nv, 2), np.int64)
            tail = np.zeros((nv, 2, d), np.int64)
            tlen = np.zeros((nv, 2), np.int64)
            for i, v in enumerate(self.vertices):
                for eps in (0, 1):
                    last[i, eps] = v.last(eps)
                    nxt[i, eps] = self.edges[(i, eps)]
                    row = v.row(1 - eps)
                    k = row.index(v.last(eps))
                    rest = row[k + 1:]
                    tlen[i, eps] = len(rest)
                    tail[i, eps, :len(rest)] = rest
            self._tables = dict(last=last, nxt=nxt, tail=tail, tlen=tlen)
        return self._tables


def rauzy_class(perm):
    """Breadth-first closure of ``perm`` under both moves.

    Raises
    ------
    ReduciblePermutation
    """
    if not is_irreducible(perm):
        raise ReduciblePermutation(f"{perm} is reducible")
    seen = {perm}
    queue = deque([perm])
    while queue:
        p = queue.popleft()
        for eps in (0, 1):
            q = rauzy_move(p, eps)
            if q not in seen:
                seen.add(q)
                queue.append(q)
    vertices = tuple(sorted(seen, key=Permutation.sort_key))
    index = {v: i for i, v in enumerate(vertices)}
    edges, factors = {}, {}
    for i, v in enumerate(vertices):
        for eps in (0, 1):
            edges[(i, eps)] = index[rauzy_move(v, eps)]
            factors[(i, eps)] = elementary_matrix(v, eps)
    return RauzyClass(vertices, edges, factors)


@dataclass(frozen=True)
class T0Orbit:
    """States visited by the renormalised induction, with the path matrix."""
    states: tuple
    theta: ThetaWord
    types: tuple


def iterate_t0(perm, lengths, n):
    """``n`` renormalised induction steps starting from ``(perm, lengths)``.

    The input is first rescaled to the unit simplex.

    Raises
    ------
    TieError
        With ``step`` set to the failing step index.
    """
    lengths = as_lengths(lengths)
    cur = _normalize(list(lengths), lengths.exact)
    states = [(perm, cur)]
    theta = ThetaWord.identity(perm.d)
    types = []
    for k in range(n):
        try:
            eps = int(classify_type(perm, cur))
            perm2, lam2, step = rv_induction_step(perm, cur)
        except TieError:
            raise TieError(step=k) from None
        cur = _normalize(list(lam2), cur.exact)
        perm = perm2
        theta = theta.then(step)
        types.append(Type(eps))
        states.append((perm, cur))
    return T0Orbit(tuple(states), theta, tuple(types))


def induced_iet(perm, lengths):
    """The unnormalised induced exchange as an :class:`~rauzylab.iet_core.IetState`."""
    perm2, lam2, _ = rv_induction_step(perm, lengths)
    return build_iet(perm2, lam2)
