"""
Induced map on a contracting cylinder of the accelerated induction.

The base ``B`` is the set of points whose first ``n_B`` accelerated steps
follow the itinerary of a seed, and whose next step has the seed's type.
With ``A_w`` the product of those ``n_B`` step matrices (required strictly
positive) and ``M`` the elementary matrix of the following step,
``B = A_B(Delta)`` for ``A_B = A_w M``.  The first return to ``B`` under
the accelerated map is the induced map; its branches ``B_k = A_u(B)`` are
indexed by the return words ``u``.

Inverse branches ``I_u(y) = A_u y / |A_u y|`` are globally defined on
``B``.  The forward Jacobian at ``x`` in ``B_u`` is
``1 / |A_u^{-1} x|^d`` and the flow roof is ``-log |A_u^{-1} x|``.
"""
import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels as K
from .errors import (DepthExceeded, InsufficientSamples, InvalidBase, NearDegenerate,
                     ReturnCapExceeded, TieError)
from .iet_core import LengthVector, as_lengths, classify_type
from .rauzy_veech import ThetaWord, elementary_matrix, rauzy_class, rauzy_move
from .zorich import _normalized, zorich_step

__all__ = [
    "RETURN_CAP", "MASS_FLOOR", "BaseCell", "Branch", "BranchInventory",
    "DistortionReport", "FloatInduced", "select_base", "first_return",
    "enumerate_branches", "jacobian_t2", "distortion_diagnostics",
    "simplex_mass", "hilbert_distance", "return_time_tail", "fit_geometric_tail",
    "branch_mass_decay", "fit_log_linear", "return_time_masses",
]

RETURN_CAP = 10 ** 5
MASS_FLOOR = 1e-10


def simplex_mass(matrix):
    """Lebesgue mass of ``A(Delta)`` relative to the whole simplex.

    For a nonnegative integer matrix this is ``|det A| / prod_j |A e_j|``.
    """
    m = np.asarray(matrix, dtype=object)
    det = abs(ThetaWord(m, m).det) if m.dtype == object else abs(round(np.linalg.det(m)))
    cols = [int(sum(int(x) for x in m[:, j])) for j in range(m.shape[1])]
    return det / math.prod(cols)


def hilbert_distance(x, y):
    """Hilbert projective distance between positive vectors."""
    r = np.asarray(x, dtype=float) / np.asarray(y, dtype=float)
    return float(np.log(r.max() / r.min()))


def _chart(lam):
    lam = np.asarray(lam, dtype=float)
    return lam[..., :-1] / lam.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class BaseCell:
    """Contracting cylinder ``B = A_B(Delta)``.

    Attributes
    ----------
    n_B : int
        Number of accelerated steps in the defining itinerary.
    itinerary : tuple of (Permutation, int, int)
        ``(perm, type, n1)`` of each accelerated step.
    end_label : (Permutation, int)
        Permutation and type required after the itinerary.
    word_matrix : ThetaWord
        ``A_w``, product of the itinerary's step matrices.
    matrix : ThetaWord
        ``A_B = A_w M``.
    """
    n_B: int
    itinerary: tuple
    end_label: tuple
    word_matrix: ThetaWord
    matrix: ThetaWord
    rclass: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.word_matrix.is_positive():
            raise InvalidBase("itinerary matrix has a zero entry")
        if self.rclass is None:
            object.__setattr__(self, "rclass", rauzy_class(self.perm))

    @property
    def perm(self):
        return self.itinerary[0][0]

    @property
    def d(self):
        return self.perm.d

    @property
    def vertex(self):
        return self.rclass.index(self.perm)

    @property
    def vertex_set(self):
        """Extreme points of ``B`` as rows (normalised columns of ``A_B``)."""
        A = self.matrix.float_matrix()
        return (A / A.sum(axis=0)).T

    @property
    def center(self):
        return self.vertex_set.mean(axis=0)

    @property
    def mass(self):
        """Lebesgue mass relative to the simplex."""
        return simplex_mass(self.matrix.matrix)

    @property
    def words(self):
        """The itinerary as kernel symbols ``(vertex, type, n1)``."""
        return tuple((self.rclass.index(p), e, n) for p, e, n in self.itinerary)

    def contains(self, lam):
        """Exact for rational input; vectorised over rows for floats."""
        if isinstance(lam, LengthVector) and lam.exact:
            return all(v > 0 for v in self.matrix.apply_inverse(lam))
        lam = np.asarray(lam, dtype=float)
        return np.all(lam @ self.matrix.float_inverse().T > 0, axis=-1)

    def sample(self, size, rng):
        """Uniform (Lebesgue) points of ``B``."""
        return rng.dirichlet(np.ones(self.d), size) @ self.vertex_set

    def contraction_estimate(self, n_pairs, rng):
        """Largest sampled ratio of Hilbert distances under ``A_w``."""
        A = self.word_matrix.float_matrix()
        x = rng.dirichlet(np.ones(self.d), n_pairs)
        y = rng.dirichlet(np.ones(self.d), n_pairs)
        ratios = [hilbert_distance(A @ a, A @ b) / hilbert_distance(a, b) for a, b in zip(x, y)]
        return float(max(ratios))

    def to_json_dict(self):
        return {
            "n_B": self.n_B,
            "itinerary": [{"perm": p.rows_string(), "type": e, "n1": n} for p, e, n in self.itinerary],
            "end": {"perm": self.end_label[0].rows_string(), "type": self.end_label[1]},
            "matrix": [[int(x) for x in row] for row in self.matrix.matrix],
            "mass": self.mass,
        }


def select_base(perm, lengths, max_depth=20, rclass=None):
    """Smallest ``n_B <= max_depth`` whose itinerary matrix is positive.

    Raises
    ------
    DepthExceeded
    """
    lengths = as_lengths(lengths)
    itinerary = []
    A = ThetaWord.identity(perm.d)
    p, lam = perm, lengths
    for n in range(1, max_depth + 1):
        step = zorich_step(p, lam)
        itinerary.append((p, int(step.start_type), step.n1))
        A = ThetaWord(np.dot(A.matrix, step.theta_word.matrix),
                      np.dot(step.theta_word.inverse, A.inverse))
        p, lam = step.end_state
        if A.is_positive():
            eps = int(classify_type(p, lam))
            M = ThetaWord.step(p, eps)
            AB = ThetaWord(np.dot(A.matrix, M.matrix), np.dot(M.inverse, A.inverse))
            return BaseCell(n, tuple(itinerary), (p, eps), A, AB, rclass)
    raise DepthExceeded(f"no positive itinerary matrix within {max_depth} steps")


class FloatInduced:
    """Compiled float64 access to the first-return map of a base."""

    def __init__(self, base, cap=RETURN_CAP):
        self.base = base
        self.cap = int(cap)
        t = base.rclass.kernel_tables()
        self._t = (t["last"], t["nxt"], t["tail"], t["tlen"])
        self._binv = np.ascontiguousarray(base.matrix.float_inverse())
        self._vb = base.vertex
        self._args = self._t + (self._vb, self._binv, self.cap)

    def step(self, lam):
        lam = np.array(lam, dtype=float)
        lam /= lam.sum()
        st, v, n2, r2 = K.t2_step(lam, self._vb, *self._args)
        _raise(st, n2)
        return lam, n2, r2

    def orbit(self, lam, n):
        """``n`` returns; dict with ``points`` (n+1, d), ``n2``, ``r2`` and ``status``."""
        lam = np.asarray(lam, dtype=float)
        st, k, pts, n2s, r2s = K.t2_orbit(lam / lam.sum(), self._vb, int(n), *self._args)
        return dict(status=int(st), length=int(k), points=pts[:k + 1], n2=n2s[:k], r2=r2s[:k])

    def map_batch(self, points):
        """One return for every row; rows that fail carry a nonzero status."""
        pts = np.ascontiguousarray(points, dtype=float)
        return K.t2_map_batch(pts, self._vb, *self._args)

    def iterate(self, lam, k):
        st, out = K.t2_iterate(np.asarray(lam, dtype=float), self._vb, int(k), *self._args)
        _raise(st, None)
        return out

    def first_hit(self, lam, center, radius, max_steps):
        return K.t2_first_hit(np.asarray(lam, dtype=float), self._vb,
                              np.asarray(center, dtype=float), float(radius), int(max_steps),
                              *self._args)


def _raise(st, n2):
    if st == K.TIE:
        raise TieError()
    if st == K.DEGENERATE:
        raise NearDegenerate("length fell below 1e-13")
    if st == K.RETURN_CAP:
        raise ReturnCapExceeded(f"no return within {n2} steps")


def first_return(base, lengths, cap=RETURN_CAP, inventory=None):
    """First return of ``lengths`` (a point of ``B``) to ``B``.

    Returns
    -------
    image : LengthVector
        Normalised return point, exact for rational input.
    n2 : int
        Return time in accelerated steps.
    branch : int or tuple
        Index of the branch in ``inventory`` when given and found,
        otherwise the return word as a tuple of ``(vertex, type, n1)``.
    """
    lengths = as_lengths(lengths)
    if not base.contains(lengths if lengths.exact else lengths.as_array()):
        raise InvalidBase("point is not in the base")
    rc = base.rclass
    p, lam = base.perm, _normalized(list(lengths), lengths.exact)
    word = []
    while len(word) < cap:
        step = zorich_step(p, lam)
        word.append((rc.index(p), int(step.start_type), step.n1))
        p, lam = step.end_state
        if p == base.perm and base.contains(lam if lam.exact else lam.as_array()):
            word = tuple(word)
            if inventory is not None and word in inventory.index:
                return lam, len(word), inventory.index[word]
            return lam, len(word), word
    raise ReturnCapExceeded(f"no return within {cap} steps")


@dataclass(frozen=True)
class Branch:
    """One element ``B_k = A_u(B)`` of the return partition."""
    k: int
    word: tuple
    n2: int
    matrix: ThetaWord
    mass: float

    def inverse_branch(self, lam):
        """``I_k(lam) = A_u lam / |A_u lam|`` (rows of ``lam`` are points of ``B``)."""
        A = self.matrix.float_matrix()
        y = np.asarray(lam, dtype=float) @ A.T
        return y / y.sum(axis=-1, keepdims=True)

    def forward(self, lam):
        Ai = self.matrix.float_inverse()
        y = np.asarray(lam, dtype=float) @ Ai.T
        return y / y.sum(axis=-1, keepdims=True)

    def cell_vertices(self, base):
        A = self.matrix.float_matrix() @ base.matrix.float_matrix()
        return (A / A.sum(axis=0)).T


@dataclass
class BranchInventory:
    """Branches found by the pruned search, in shortlex order of words."""
    base: BaseCell
    branches: list
    covered_mass: float
    uncovered_mass: float
    n2_max: int
    nodes: int
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.index = {b.word: b.k for b in self.branches}

    def __len__(self):
        return len(self.branches)

    @property
    def coverage(self):
        return self.covered_mass / (self.covered_mass + self.uncovered_mass)

    def mass_by_return_time(self):
        out = {}
        for b in self.branches:
            out[b.n2] = out.get(b.n2, 0.0) + b.mass
        return dict(sorted(out.items()))

    def to_json(self):
        rc = self.base.rclass
        return json.dumps([
            {"k": b.k, "word": [[rc.vertices[v].rows_string(), e, n] for v, e, n in b.word],
             "n2": b.n2, "matrix": [[int(x) for x in row] for row in b.matrix.matrix],
             "mass": b.mass}
            for b in self.branches], indent=1)


def _mul(a, b):
    return np.dot(a, b)


def enumerate_branches(base, n2_max, mass_target=None, mass_floor=MASS_FLOOR, max_nodes=200_000):
    """Best-first search for return words of length at most ``n2_max``.

    The search walks elementary induction steps from ``B``: each node is a
    cylinder ``P(Delta)`` together with the accelerated symbols completed
    so far and the burst in progress.  A return at time ``j`` is confirmed
    when the last ``n_B`` completed symbols equal the base itinerary and the
    burst that has just started carries the base's end label; the earliest
    such ``j`` is the return time.  Cylinders lighter than
    ``mass_floor * m(B)`` or unable to return by ``n2_max`` are dropped.

    Parameters
    ----------
    mass_target : float, optional
        Stop once this fraction of ``m(B)`` is covered.

    Returns
    -------
    BranchInventory
        Always reports covered and uncovered mass; the search never claims
        completeness it did not reach.
    """
    rc = base.rclass
    w = base.words
    nb = base.n_B
    end_v, end_e = rc.index(base.end_label[0]), base.end_label[1]
    total = base.mass
    floor = mass_floor * total
    inv_w = base.word_matrix.inverse
    # root: the itinerary is complete and the first step of the end burst taken
    root_perm = rauzy_move(base.end_label[0], end_e)
    heap = []
    counter = 0
    found = []
    covered = 0.0
    dropped = 0.0

    def push(P, perm, syms, burst):
        nonlocal counter, dropped
        m = float(simplex_mass(P))
        if m < floor or len(syms) - nb > n2_max:
            dropped += m
            return
        counter += 1
        heapq.heappush(heap, (-m, counter, P, perm, syms, burst))

    push(base.matrix.matrix, root_perm, w, (end_v, end_e, 1))
    nodes = 0
    while heap and nodes < max_nodes:
        if mass_target is not None and covered >= mass_target * total:
            break
        negm, _, P, perm, syms, (bv, be, bn) = heapq.heappop(heap)
        nodes += 1
        for e in (0, 1):
            Q = _mul(P, elementary_matrix(perm, e))
            nperm = rauzy_move(perm, e)
            if e == be:
                push(Q, nperm, syms, (bv, be, bn + 1))
                continue
            s2 = syms + ((bv, be, bn),)
            j = len(s2) - nb
            v = rc.index(perm)
            if j >= 1 and s2[j:] == w and (v, e) == (end_v, end_e):
                u = s2[:j]
                # A_u = P_u with the word matrix and end step removed
                Au = _mul(_mul(Q, ThetaWord.step(perm, e).inverse), inv_w)
                A_inv = _inv_of_word(rc, u)
                m = float(simplex_mass(Q))
                found.append((u, Au, A_inv, m))
                covered += m
                continue
            push(Q, nperm, s2, (v, e, 1))
    uncovered = total - covered
    found.sort(key=lambda t: (len(t[0]), t[0]))
    branches = [Branch(k, u, len(u), ThetaWord(Au, Ai, ()), m)
                for k, (u, Au, Ai, m) in enumerate(found)]
    return BranchInventory(base, branches, covered, uncovered, n2_max, nodes)


def _inv_of_word(rc, word):
    d = rc.d
    inv = ThetaWord.identity(d).inverse
    for v, e, n in word:
        p = rc.vertices[v]
        for _ in range(n):
            step = ThetaWord.step(p, e)
            inv = np.dot(step.inverse, inv)
            p = rauzy_move(p, e)
    return inv


def jacobian_t2(branch, lam):
    """Forward Jacobian of the induced map at ``lam`` in the branch cell.

    ``|det A| / |A^{-1} lam|^d`` for the normalised point ``lam`` in the
    chart of the first ``d-1`` coordinates.  ``branch`` may be a
    :class:`Branch`, a :class:`ThetaWord` or a square matrix ``A``.
    """
    if isinstance(branch, Branch):
        branch = branch.matrix
    if isinstance(branch, ThetaWord):
        Ai = branch.float_inverse()
        det = abs(branch.det)
    else:
        A = np.asarray(branch, dtype=float)
        Ai = np.linalg.inv(A)
        det = abs(np.linalg.det(A))
    lam = np.asarray(lam, dtype=float)
    lam = lam / lam.sum(axis=-1, keepdims=True)
    d = lam.shape[-1]
    return (lam @ Ai.T).sum(axis=-1) ** (-d) / det


@dataclass(frozen=True)
class DistortionReport:
    """Sampled uniform-expansion and distortion constants of the induced map."""
    C_hat: float
    theta_hat: float
    D1_hat: float
    D2_hat: float
    sample_size: int
    min_log_ratio: tuple = ()


def distortion_diagnostics(base, inventory, samples, rng, depth=3):
    """Estimate expansion and distortion constants from sampled pairs.

    Pairs are drawn in the same depth-``n`` cylinder (``n <= depth``) of
    the enumerated partition.  ``theta_hat`` and ``C_hat`` come from a
    linear fit of the smallest log expansion ratio against ``n``;
    ``D1_hat`` is the 99th percentile of ``|log J(x) - log J(y)| /
    d(T x, T y)``; ``D2_hat`` bounds ``m(B_k) J(x) / m(B)`` and its
    reciprocal.

    Raises
    ------
    InsufficientSamples
    """
    if len(inventory) == 0 or samples < 10:
        raise InsufficientSamples("need a nonempty inventory and at least 10 samples")
    brs = inventory.branches
    p = np.array([b.mass for b in brs])
    p = p / p.sum()
    mins = []
    d1, d2 = [], []
    for n in range(1, depth + 1):
        logs = []
        for _ in range(samples):
            ks = rng.choice(len(brs), size=n, p=p)
            A = np.eye(base.d)
            for k in ks:
                A = A @ brs[k].matrix.float_matrix()
            V = A @ base.matrix.float_matrix()
            V = (V / V.sum(axis=0)).T
            x, y = rng.dirichlet(np.ones(base.d), 2) @ V
            fx, fy = x, y
            for k in ks:
                fx = brs[k].forward(fx)
                fy = brs[k].forward(fy)
            dxy = np.linalg.norm(_chart(x) - _chart(y))
            logs.append(np.log(np.linalg.norm(_chart(fx) - _chart(fy)) / dxy))
            if n == 1:
                b = brs[ks[0]]
                jx, jy = jacobian_t2(b, x), jacobian_t2(b, y)
                d1.append(abs(np.log(jx) - np.log(jy)) / np.linalg.norm(_chart(fx) - _chart(fy)))
                r = b.mass * jx / base.mass
                d2.append(max(r, 1 / r))
        mins.append(float(np.min(logs)))
    ns = np.arange(1, depth + 1)
    slope, intercept = np.polyfit(ns, mins, 1) if depth > 1 else (mins[0], 0.0)
    return DistortionReport(float(np.exp(intercept)), float(np.exp(slope)),
                            float(np.percentile(d1, 99)), float(np.max(d2)),
                            samples * depth, tuple(mins))


def return_time_tail(base, n_samples, rng, points=None, cap=RETURN_CAP):
    """Empirical ``P(n2 > k)`` from sampled points of ``B``.

    ``points`` defaults to Lebesgue-uniform samples.  Returns ``(k, tail,
    n2)`` with ``tail[i] = P(n2 > k[i])``.
    """
    if points is None:
        points = base.sample(n_samples, rng)
    _, n2, _, status = FloatInduced(base, cap).map_batch(points)
    n2 = n2[status == 0]
    k = np.arange(0, int(n2.max()) + 1)
    tail = 1.0 - np.searchsorted(np.sort(n2), k, side="right") / len(n2)
    return k, tail, n2


def fit_geometric_tail(k, tail, min_count=1e-3):
    """Least-squares fit of ``log tail = log C + k log rho`` where the tail exceeds ``min_count``."""
    sel = (tail > min_count) & (k >= 1)
    slope, intercept = np.polyfit(k[sel], np.log(tail[sel]), 1)
    return float(np.exp(intercept)), float(np.exp(slope))


def fit_log_linear(x, y):
    """Least squares ``log y = a + b x``; returns ``(b, a, r_squared)``."""
    x = np.asarray(x, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))
    b, a = np.polyfit(x, ly, 1)
    resid = ly - (a + b * x)
    return float(b), float(a), float(1 - resid.var() / ly.var())


def return_time_masses(base, n_samples, rng, min_count=50, cap=RETURN_CAP):
    """Monte Carlo Lebesgue masses ``m(B_n)`` of the sets ``{n2 = n}``.

    Only return times observed at least ``min_count`` times are reported.
    Returns ``(n, masses)``.
    """
    _, n2, _, status = FloatInduced(base, cap).map_batch(base.sample(n_samples, rng))
    n2 = n2[status == 0]
    counts = np.bincount(n2)
    n = np.flatnonzero(counts >= min_count)
    return n, base.mass * counts[n] / len(n2)


def branch_mass_decay(inventory, n_max=None):
    """Fit of ``log m(B_n)`` against ``n``; returns ``(slope, r_squared, n, masses)``."""
    by_n = inventory.mass_by_return_time()
    n = np.array([k for k in by_n if n_max is None or k <= n_max], dtype=float)
    m = np.array([by_n[int(k)] for k in n])
    y = np.log(m)
    slope, intercept = np.polyfit(n, y, 1)
    resid = y - (slope * n + intercept)
    r2 = 1 - resid.var() / y.var()
    return float(slope), float(r2), n, m
