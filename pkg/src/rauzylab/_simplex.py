"""Equal-volume simplicial grids on a simplex given by its vertices.

A simplex with vertex rows ``V`` (``k x d``) is subdivided at resolution
``N`` into ``N**(k-1)`` Kuhn simplices of equal volume.  A point with
barycentric coordinates ``b`` is mapped to the cumulative coordinates
``s_j = b_j + ... + b_{k-1}`` (``j = 1..k-1``); the scaled vector ``N s``
lies in the cube with corner ``floor(N s)`` and the ordering of its
fractional parts selects one of the Kuhn simplices of that cube.
"""
import math
from itertools import permutations, product

import numpy as np

__all__ = ["SimplexGrid"]


class SimplexGrid:
    """Kuhn subdivision of the simplex spanned by the rows of ``vertices``.

    Parameters
    ----------
    vertices : array_like, shape (d, d)
        Vertices of the simplex as points of the unit simplex in ``R^d``.
    N : int
        Number of subdivisions of each edge.
    """

    def __init__(self, vertices, N):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] != V.shape[1]:
            raise ValueError("need d vertices in R^d")
        if N < 1:
            raise ValueError("resolution must be >= 1")
        self.vertices = V
        self.N = int(N)
        self.k = V.shape[0]
        self.m = self.k - 1
        self._inv = np.linalg.inv(V)
        self._perms = list(permutations(range(self.m)))
        self._rank = {p: i for i, p in enumerate(self._perms)}
        self._cells = []
        nperm = len(self._perms)
        self._lookup = np.full(self.N ** self.m * nperm, -1, dtype=np.int64)
        for c in product(range(self.N), repeat=self.m):
            if any(c[j] < c[j + 1] for j in range(self.m - 1)):
                continue
            for sigma in self._perms:
                pos = {j: i for i, j in enumerate(sigma)}
                if any(c[j] == c[j + 1] and pos[j] > pos[j + 1] for j in range(self.m - 1)):
                    continue
                self._lookup[self._code(c) * nperm + self._rank[sigma]] = len(self._cells)
                self._cells.append((c, sigma))
        assert len(self._cells) == self.N ** self.m

    def _code(self, c):
        code = 0
        for j in reversed(range(self.m)):
            code = code * self.N + c[j]
        return code

    @property
    def n_cells(self):
        return len(self._cells)

    @property
    def chart_volume(self):
        """Lebesgue volume of the simplex in the chart of the first ``d-1`` coordinates."""
        if self.m == 0:
            return 1.0
        E = (self.vertices[1:, :self.m] - self.vertices[0, :self.m])
        return abs(np.linalg.det(E)) / math.factorial(self.m)

    @property
    def cell_chart_volume(self):
        return self.chart_volume / self.n_cells

    def barycentric(self, lam):
        lam = np.atleast_2d(np.asarray(lam, dtype=float))
        lam = lam / lam.sum(axis=1, keepdims=True)
        return lam @ self._inv

    def locate(self, lam, beta=None):
        """Cell index of every row of ``lam``; -1 for points outside the simplex."""
        b = self.barycentric(lam) if beta is None else np.atleast_2d(beta)
        n = b.shape[0]
        out = np.full(n, -1, dtype=np.int64)
        inside = np.all(b >= -1e-12, axis=1)
        if self.m == 0:
            out[inside] = 0
            return out
        s = np.cumsum(b[:, ::-1], axis=1)[:, ::-1][:, 1:]
        S = np.clip(s * self.N, 0.0, self.N * (1 - 1e-15))
        c = np.floor(S).astype(np.int64)
        c = np.minimum(c, self.N - 1)
        f = S - c
        # enforce a consistent order when cube corners coincide
        sigma = np.argsort(-f, axis=1, kind="stable")
        code = np.zeros(n, dtype=np.int64)
        for j in reversed(range(self.m)):
            code = code * self.N + c[:, j]
        rank = np.zeros(n, dtype=np.int64)
        if self.m > 1:
            keys = {p: i for i, p in enumerate(self._perms)}
            rank = np.array([keys[tuple(row)] for row in sigma], dtype=np.int64)
        idx = self._lookup[code * len(self._perms) + rank]
        out[inside] = idx[inside]
        return out

    def _from_cube(self, c, f):
        S = np.asarray(c, dtype=float) + f
        s = S / self.N
        b = np.empty(f.shape[:-1] + (self.k,))
        b[..., 0] = 1.0 - s[..., 0]
        for j in range(1, self.m):
            b[..., j] = s[..., j - 1] - s[..., j]
        b[..., self.m] = s[..., self.m - 1]
        return b @ self.vertices

    def sample(self, cell, size, rng):
        """``size`` uniform points of cell ``cell`` (rows in lambda space)."""
        if self.m == 0:
            return np.repeat(self.vertices[:1], size, axis=0)
        c, sigma = self._cells[cell]
        u = -np.sort(-rng.random((size, self.m)), axis=1)
        f = np.empty_like(u)
        f[:, list(sigma)] = u
        return self._from_cube(c, f)

    def cell_vertices(self, cell):
        if self.m == 0:
            return self.vertices[:1].copy()
        c, sigma = self._cells[cell]
        f = np.zeros((self.m + 1, self.m))
        for i, j in enumerate(sigma):
            f[i + 1:, j] = 1.0
        return self._from_cube(c, f)

    def centroids(self):
        return np.array([self.cell_vertices(i).mean(axis=0) for i in range(self.n_cells)])

    def cell_index(self, cell):
        """The (corner, ordering) label of a cell."""
        return self._cells[cell]
