"""
Zorich acceleration of the renormalised Rauzy-Veech induction.

One accelerated step runs the induction until the type changes, so the
types of consecutive accelerated steps alternate.  The set of points of a
given type forms one cyclic class of the square of the map; the absolutely
continuous invariant measure is estimated per class by Birkhoff histograms.
"""
import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels as K
from ._simplex import SimplexGrid
from .errors import BurstTooLong, NearDegenerate, TieError
from .iet_core import LengthVector, Type, as_lengths, classify_type
from .rauzy_veech import (NEAR_DEGENERATE_TOL, ThetaWord, _identity, rauzy_class,
                          rauzy_move)

__all__ = [
    "BURST_CAP", "ZorichStep", "zorich_step", "zorich_orbit", "zorich_cylinder",
    "FloatZorich", "Mu1Histogram", "estimate_mu1",
]

BURST_CAP = 10 ** 6


@dataclass(frozen=True)
class ZorichStep:
    """One accelerated step.

    Attributes
    ----------
    n1 : int
        Number of elementary steps, all of type ``start_type``.
    start_perm, start_lengths
        Normalised start state.
    end_perm, end_lengths
        Normalised end state.
    theta_word : ThetaWord
        Product of the ``n1`` elementary matrices.
    start_type, end_type : Type
    factors : tuple
        ``1 - lambda_loser / |lambda|`` for every elementary step; the
        renormalisation constant of the step is their product.
    """
    n1: int
    start_perm: object
    start_lengths: LengthVector
    end_perm: object
    end_lengths: LengthVector
    theta_word: ThetaWord
    start_type: Type
    end_type: Type
    factors: tuple = ()

    @property
    def end_state(self):
        return self.end_perm, self.end_lengths

    @property
    def scale(self):
        """``|A^{-1} lambda|`` for the normalised start point."""
        out = Fraction(1) if self.start_lengths.exact else 1.0
        for f in self.factors:
            out *= f
        return out

    @property
    def roof(self):
        """``-log`` of :attr:`scale`, the time spent by the flow on this step."""
        return -sum(math.log(f) for f in self.factors)


def _normalized(vals, exact):
    total = sum(vals, Fraction(0)) if exact else math.fsum(vals)
    return LengthVector([v / total for v in vals], exact)


def zorich_step(perm, lengths, cap=BURST_CAP):
    """Run the induction from ``(perm, lengths)`` until the type changes.

    Raises
    ------
    TieError
        A tie occurs inside the burst or at the end state.
    NearDegenerate
        A float length falls below ``1e-13 |lambda|``.
    BurstTooLong
        More than ``cap`` elementary steps (near-rational input).
    """
    lengths = as_lengths(lengths)
    exact = lengths.exact
    start = _normalized(list(lengths), exact)
    eps0 = int(classify_type(perm, start))
    d = perm.d
    cur = list(start)
    total = Fraction(1) if exact else 1.0
    A = [[int(x) for x in row] for row in _identity(d)]
    Ainv = [row[:] for row in A]
    path, factors = [], []
    p = perm
    n = 0
    while True:
        if n > 0:
            eps = int(classify_type(p, LengthVector(cur, exact)))
            if eps != eps0:
                break
        if n >= cap:
            raise BurstTooLong(f"no type change after {cap} steps")
        w, l = p.last(eps0), p.last(1 - eps0)
        factors.append(1 - cur[l] / total)
        cur[w] = cur[w] - cur[l]
        total = total - cur[l]
        if not exact and cur[w] < NEAR_DEGENERATE_TOL * total:
            raise NearDegenerate(f"length {cur[w]:.3e} after {n + 1} steps")
        # A <- A (I + E_wl) and A^{-1} <- (I - E_wl) A^{-1}
        for i in range(d):
            A[i][l] += A[i][w]
        Ainv[w] = [x - y for x, y in zip(Ainv[w], Ainv[l])]
        path.append((p, eps0))
        p = rauzy_move(p, eps0)
        n += 1
        if exact is False and n % 64 == 0:
            cur = [v / total for v in cur]
            total = 1.0
    end = _normalized(cur, exact)
    theta = ThetaWord(np.array(A, dtype=object), np.array(Ainv, dtype=object), tuple(path))
    return ZorichStep(n, perm, start, p, end, theta, Type(eps0), Type(1 - eps0), tuple(factors))


def zorich_orbit(perm, lengths, n_steps, cap=BURST_CAP):
    """``n_steps`` consecutive accelerated steps (exact or float)."""
    out = []
    for _ in range(n_steps):
        step = zorich_step(perm, lengths, cap)
        out.append(step)
        perm, lengths = step.end_state
    return out


def zorich_cylinder(perm, eps, n):
    """Matrix of the cell of points of type ``eps`` at ``perm`` with ``n1 = n``.

    The cell is ``A(Delta_{perm', 1-eps})`` with ``A`` the returned word
    and ``perm'`` its end permutation.
    """
    theta = ThetaWord.identity(perm.d)
    p = perm
    for _ in range(n):
        theta = theta.then(ThetaWord.step(p, eps))
        p = rauzy_move(p, eps)
    return theta, p


class FloatZorich:
    """Compiled float orbits of the accelerated map on one Rauzy class."""

    def __init__(self, rclass):
        self.rclass = rclass
        t = rclass.kernel_tables()
        self._t = (t["last"], t["nxt"], t["tail"], t["tlen"])

    def _vertex(self, perm):
        return perm if isinstance(perm, (int, np.integer)) else self.rclass.index(perm)

    def step(self, perm, lam):
        """One step; returns ``(vertex, lam, n1, type, roof)``."""
        lam = np.array(lam, dtype=float)
        lam /= lam.sum()
        st, v, n1, eps, r = K.t1_step(lam, self._vertex(perm), *self._t)
        _raise_status(st)
        return v, lam, n1, eps, r

    def orbit(self, perm, lam, n):
        """Float orbit of length ``n``.

        Returns a dict with ``points`` (n+1, d), ``vertices`` (n+1,),
        ``n1``, ``types`` and ``roofs`` (n,), the number of completed
        steps ``length`` and the abort ``status`` (0 when complete).
        """
        lam = np.asarray(lam, dtype=float)
        lam = lam / lam.sum()
        st, k, pts, verts, n1s, types, roofs = K.t1_orbit(lam, self._vertex(perm), int(n), *self._t)
        return dict(status=int(st), length=int(k), points=pts[:k + 1], vertices=verts[:k + 1],
                    n1=n1s[:k], types=types[:k], roofs=roofs[:k])


def _raise_status(st):
    if st == K.TIE:
        raise TieError()
    if st == K.DEGENERATE:
        raise NearDegenerate("length fell below 1e-13")


@dataclass
class Mu1Histogram:
    """Birkhoff histogram of the accelerated map per cyclic class.

    ``counts[eps, v, c]`` counts visits of type ``eps`` to cell ``c`` of
    the Kuhn grid of the simplex over vertex ``v``.  Masses are normalised
    to one in each class.
    """
    rclass: object
    grid: SimplexGrid
    counts: np.ndarray
    n_steps: int
    partial: tuple = ()

    @property
    def totals(self):
        return self.counts.reshape(2, -1).sum(axis=1)

    @property
    def masses(self):
        tot = np.maximum(self.totals, 1)
        return self.counts / tot[:, None, None]

    @property
    def stderr(self):
        """Binomial standard errors of the cell masses (independent visits)."""
        p = self.masses
        tot = np.maximum(self.totals, 1)
        return np.sqrt(p * (1 - p) / tot[:, None, None])

    def density(self):
        """Mass per unit chart volume, same shape as ``counts``."""
        return self.masses / self.grid.cell_chart_volume

    def class_mass(self, eps, select):
        """Mass of class ``eps`` on the cells picked by boolean ``select`` (nv, n_cells)."""
        return float(self.masses[eps][select].sum())

    def l1_distance(self, other):
        """``sum |m - m'|`` per class, maximised over the two classes."""
        diff = np.abs(self.masses - other.masses).reshape(2, -1).sum(axis=1)
        return float(diff.max())

    def merge(self, other):
        return Mu1Histogram(self.rclass, self.grid, self.counts + other.counts,
                            self.n_steps + other.n_steps, self.partial + other.partial)

    def to_csv(self, path):
        """One row per (class, vertex, cell) with the cell's barycentric corner."""
        m = self.masses
        with open(path, "w", newline="") as fh:
            fh.write("# rauzylab-schema v1\n")
            out = csv.writer(fh)
            out.writerow(["class", "vertex", "cell_index"]
                         + [f"corner_{j}" for j in range(self.grid.m)] + ["count", "mass"])
            for eps in (0, 1):
                for v in range(self.counts.shape[1]):
                    for c in range(self.grid.n_cells):
                        corner, _ = self.grid.cell_index(c)
                        out.writerow([eps, v, c] + [f"{x / self.grid.N:.17g}" for x in corner]
                                     + [int(self.counts[eps, v, c]), f"{m[eps, v, c]:.17g}"])


def estimate_mu1(rclass, seed_points, n_steps, grid=32, burn_in=100):
    """Empirical invariant measure of the accelerated map.

    Parameters
    ----------
    rclass : RauzyClass or Permutation
    seed_points : list of (perm, lengths)
        One orbit of length ``n_steps`` is run from each seed.
    grid : int
        Cells per simplex edge.

    Returns
    -------
    Mu1Histogram
        Orbits that abort early contribute their completed part and are
        listed in ``partial`` as ``(seed_index, steps_done, status)``.
    """
    if not hasattr(rclass, "kernel_tables"):
        rclass = rauzy_class(rclass)
    d = rclass.d
    g = SimplexGrid(np.eye(d), grid)
    runner = FloatZorich(rclass)
    counts = np.zeros((2, len(rclass), g.n_cells), dtype=np.int64)
    partial = []
    for i, (perm, lam) in enumerate(seed_points):
        res = runner.orbit(perm, lam, n_steps + burn_in)
        if res["status"] != 0:
            partial.append((i, res["length"], res["status"]))
        pts = res["points"][burn_in:-1] if res["length"] > burn_in else res["points"][:0]
        verts = res["vertices"][burn_in:-1][:len(pts)]
        types = res["types"][burn_in:][:len(pts)]
        cells = g.locate(pts)
        ok = cells >= 0
        np.add.at(counts, (types[ok], verts[ok], cells[ok]), 1)
    return Mu1Histogram(rclass, g, counts, n_steps * len(seed_points), tuple(partial))
