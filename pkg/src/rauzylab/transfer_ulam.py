"""
Ulam discretisation of the transfer operator of the induced map.

The base simplex is cut into equal-volume Kuhn cells; the transition
probability from cell ``i`` to cell ``j`` is estimated by mapping uniform
samples of cell ``i`` once.  The left Perron vector gives the cell masses of
the invariant measure and the subdominant spectrum gives a spectral-gap
estimate.  Correlations are measured both on the discretised operator and
along long float orbits.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigs
from scipy.stats import qmc

from ._simplex import SimplexGrid
from .errors import CoverageTooLow, InsufficientSamples, LadderTooFine, NoConvergence
from .induced_mp import FloatInduced, _chart
from .zorich import FloatZorich

__all__ = [
    "UlamOperator", "SpectralReport", "InvariantDensity", "CorrelationReport",
    "SeminormEstimate", "RegularGrid", "build_ulam", "spectral_analysis",
    "correlation_decay", "ulam_correlations", "g_correlation_decay", "quasi_holder_seminorm",
    "fit_exponential_rate",
]

DENSE_LIMIT = 4096


@dataclass
class UlamOperator:
    """Row-stochastic cell transition matrix on the base.

    ``unassigned[i]`` counts the samples of cell ``i`` whose return failed
    (return cap, degenerate lengths) or landed outside the base by
    rounding; rows are normalised over the assigned samples.
    """
    grid: SimplexGrid
    matrix: sparse.csr_matrix
    samples_per_cell: int
    unassigned: np.ndarray
    base: object = field(default=None, repr=False)

    @property
    def n_cells(self):
        return self.grid.n_cells

    @property
    def resolved_fraction(self):
        return 1.0 - self.unassigned.sum() / (self.n_cells * self.samples_per_cell)

    def dense(self):
        return self.matrix.toarray()

    def to_triplets_csv(self, path):
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write("# rauzylab-schema v1\nrow,col,value\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i},{j},{v:.17g}\n")


def build_ulam(base, N, samples_per_cell, rng, min_coverage=0.99, cap=None):
    """Monte Carlo Ulam matrix at resolution ``N`` per edge of the base.

    Parameters
    ----------
    min_coverage : float
        Smallest acceptable fraction of samples whose first return was
        resolved.

    Raises
    ------
    CoverageTooLow
    """
    grid = SimplexGrid(base.vertex_set, N)
    fi = FloatInduced(base) if cap is None else FloatInduced(base, cap)
    n = grid.n_cells
    s = int(samples_per_cell)
    rows, cols = [], []
    unassigned = np.zeros(n, dtype=np.int64)
    for i in range(n):
        pts = grid.sample(i, s, rng)
        img, _, _, status = fi.map_batch(pts)
        j = grid.locate(img)
        ok = (status == 0) & (j >= 0)
        unassigned[i] = s - ok.sum()
        rows.append(np.full(ok.sum(), i))
        cols.append(j[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    counts = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    counts.sum_duplicates()
    tot = np.asarray(counts.sum(axis=1)).ravel()
    op = UlamOperator(grid, sparse.diags(1.0 / np.maximum(tot, 1)) @ counts, s, unassigned, base)
    if op.resolved_fraction < min_coverage:
        raise CoverageTooLow(f"only {op.resolved_fraction:.4f} of sampled returns resolved")
    return op


@dataclass
class SpectralReport:
    leading_eigenvalue: float
    cell_masses: np.ndarray
    h_B: np.ndarray
    gap: float
    unit_circle_eigs: list
    eigenvalues: np.ndarray
    iterations: int

    def to_json(self):
        return json.dumps({
            "leading_eigenvalue": self.leading_eigenvalue,
            "gap": self.gap,
            "h_B": [float(x) for x in self.h_B],
            "unit_circle_eigs": [[float(z.real), float(z.imag)] for z in self.unit_circle_eigs],
            "iterations": self.iterations,
        })


def spectral_analysis(op, tol=1e-3, max_iter=100_000, conv_tol=1e-14):
    """Perron data and subdominant spectrum of an Ulam operator.

    Raises
    ------
    NoConvergence
        Power iteration did not settle within ``max_iter`` steps.
    """
    P = op.matrix
    PT = P.T.tocsr()
    n = op.n_cells
    p = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        q = PT @ p
        q /= q.sum()
        if np.abs(q - p).sum() < conv_tol:
            p = q
            break
        p = q
    else:
        raise NoConvergence(f"power iteration did not converge in {max_iter} steps")
    lead = float((PT @ p).sum() / p.sum())
    if n == 1:
        ev = np.array([1.0 + 0j])
    elif n <= DENSE_LIMIT:
        ev = np.linalg.eigvals(P.toarray())
    else:
        ev = eigs(PT, k=min(8, n - 2), which="LM", return_eigenvectors=False)
    ev = ev[np.argsort(-np.abs(ev))]
    one = np.argmin(np.abs(ev - 1.0))
    rest = np.delete(ev, one)
    gap = 1.0 - (np.abs(rest).max() if len(rest) else 0.0)
    unit = [z for z in ev if abs(z) > 1 - tol]
    h = p / op.grid.cell_chart_volume
    return SpectralReport(lead, p, h, float(gap), unit, ev, it)


class InvariantDensity:
    """Piecewise-constant invariant density of the induced map.

    Parameters
    ----------
    base : BaseCell
    grid : SimplexGrid
    cell_masses : array
        Probability of each cell.
    """

    def __init__(self, base, grid, cell_masses):
        self.base = base
        self.grid = grid
        self.cell_masses = np.asarray(cell_masses, dtype=float)
        self.cell_masses = self.cell_masses / self.cell_masses.sum()
        self._induced = FloatInduced(base)

    @classmethod
    def from_report(cls, op, report):
        return cls(op.base, op.grid, report.cell_masses)

    def density(self, lam):
        """Density with respect to Lebesgue measure in the chart."""
        cells = self.grid.locate(lam)
        out = np.zeros(len(cells))
        ok = cells >= 0
        out[ok] = self.cell_masses[cells[ok]] / self.grid.cell_chart_volume
        return out

    def sample(self, size, rng, burn_in=0):
        """Draw from the cell masses, uniformly inside each cell, then apply ``burn_in`` returns."""
        cells = rng.choice(self.grid.n_cells, size=size, p=self.cell_masses)
        pts = np.empty((size, self.base.d))
        for c in np.unique(cells):
            sel = cells == c
            pts[sel] = self.grid.sample(c, int(sel.sum()), rng)
        for _ in range(burn_in):
            img, _, _, status = self._induced.map_batch(pts)
            pts = np.where((status == 0)[:, None], img, pts)
        return pts

    @property
    def dim(self):
        return self.grid.m

    def _cells_1d(self):
        V = self.grid.vertices[:, 0]
        xs = V[0] + np.linspace(0, 1, self.grid.N + 1) * (V[1] - V[0])
        left = np.minimum(xs[:-1], xs[1:])
        right = np.maximum(xs[:-1], xs[1:])
        mid = (left + right) / 2
        cells = self.grid.locate(np.column_stack([mid, 1 - mid]))
        return left, right, self.cell_masses[cells] / (right - left)

    def _ellipsoid_points(self, k, n_qmc, seed):
        # uniform points of the unit k-ball from scrambled Sobol points of the cube
        u = 2 * qmc.Sobol(k, scramble=True, seed=seed).random(n_qmc) - 1
        return u[(u ** 2).sum(axis=1) < 1]

    def _chart_map(self):
        # |dlambda|^2 = dx^T Q dx with Q = I + 11^T on the chart
        m = self.dim
        L = np.linalg.cholesky(np.eye(m) + np.ones((m, m)))
        return np.linalg.inv(L).T, 1.0 / math.sqrt(m + 1)

    def ball_mass(self, center, radius, n_qmc=4096, seed=0):
        """Mass of ``{x : |x - center| < radius}`` (Euclidean distance of length vectors).

        ``radius`` may be an array.  Exact for a one dimensional chart,
        quasi Monte Carlo otherwise.
        """
        center = np.asarray(center, dtype=float)
        center = center / center.sum()
        radius = np.asarray(radius, dtype=float)
        m = self.dim
        if m == 1:
            left, right, h = self._cells_1d()
            w = radius[..., None] / math.sqrt(2)
            a = center[0] - w
            b = center[0] + w
            overlap = np.clip(np.minimum(right, b) - np.maximum(left, a), 0, None)
            return (h * overlap).sum(axis=-1)
        y = self._ellipsoid_points(m, n_qmc, seed)
        M, jac = self._chart_map()
        vol = math.pi ** (m / 2) / math.gamma(m / 2 + 1) * jac
        out = []
        for r in np.atleast_1d(radius):
            x = center[:m] + r * y @ M.T
            lam = np.column_stack([x, 1 - x.sum(axis=1)])
            out.append(self.density(lam).mean() * vol * r ** m)
        return np.array(out).reshape(radius.shape)

    def flow_ball_mass(self, center, delta, n_qmc=8192, seed=0):
        """Product measure (invariant density times Lebesgue in the fibre) of a flow ball.

        The ball has radius ``delta`` in the metric ``sqrt(du^2 +
        |dlambda|^2)`` and is assumed to lie inside one strip.
        """
        center = np.asarray(center, dtype=float)
        center = center / center.sum()
        delta = np.asarray(delta, dtype=float)
        m = self.dim
        if m == 1:
            left, right, h = self._cells_1d()
            d = delta[..., None]

            def prim(y):
                y = np.clip(y, -d, d)
                return y * np.sqrt(np.maximum(d * d - y * y, 0)) + d * d * np.arcsin(
                    np.clip(y / np.where(d > 0, d, 1), -1, 1))
            # chord length 2 sqrt(delta^2 - 2 dx^2), integrated in y = sqrt(2) dx
            ya = math.sqrt(2) * (left - center[0])
            yb = math.sqrt(2) * (right - center[0])
            return (h * (prim(yb) - prim(ya))).sum(axis=-1) / math.sqrt(2)
        y = self._ellipsoid_points(m + 1, n_qmc, seed)
        M, jac = self._chart_map()
        vol = math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2 + 1) * jac
        out = []
        for r in np.atleast_1d(delta):
            x = center[:m] + r * y[:, :m] @ M.T
            lam = np.column_stack([x, 1 - x.sum(axis=1)])
            out.append(self.density(lam).mean() * vol * r ** (m + 1))
        return np.array(out).reshape(delta.shape)

    def radius_for_mass(self, center, masses, r_min=1e-12):
        """Invert :meth:`ball_mass` by monotone interpolation in log-log scale.

        Masses at or above the total give ``inf`` (the whole base).
        """
        masses = np.asarray(masses, dtype=float)
        diam = float(np.linalg.norm(self.grid.vertices[0] - self.grid.vertices[1:], axis=1).max()) * 2
        rs = np.geomspace(r_min, diam, 600)
        ms = np.maximum.accumulate(np.asarray(self.ball_mass(center, rs), float))
        ok = ms > 0
        rs, ms = rs[ok], ms[ok]
        keep = np.concatenate([[True], np.diff(ms) > 0])
        rs, ms = rs[keep], ms[keep]
        out = np.exp(np.interp(np.log(np.maximum(masses, 1e-300)), np.log(ms), np.log(rs)))
        small = masses < ms[0]
        # below the table the mass is a pure power of the radius
        out[small] = rs[0] * (masses[small] / ms[0]) ** (1.0 / self.dim)
        out[masses >= ms[-1] * (1 - 1e-12)] = np.inf
        return out


def fit_exponential_rate(n, cor, stderr=None, z=3.0):
    """Fit ``log |cor| = a + n log rate`` over the points above ``z`` standard errors.

    Returns ``(rate, r_squared, used_n)``.
    """
    n = np.asarray(n, dtype=float)
    cor = np.abs(np.asarray(cor, dtype=float))
    sel = cor > 0
    if stderr is not None:
        sel &= cor > z * np.asarray(stderr)
    if sel.sum() < 2:
        raise InsufficientSamples("fewer than two correlations above the noise level")
    # keep the initial run of significant points
    first_bad = np.argmin(sel) if not sel.all() else len(sel)
    sel[first_bad:] = False
    if sel.sum() < 2:
        raise InsufficientSamples("fewer than two leading correlations above the noise level")
    y = np.log(cor[sel])
    slope, icpt = np.polyfit(n[sel], y, 1)
    resid = y - (slope * n[sel] + icpt)
    r2 = 1 - resid.var() / y.var() if y.var() > 0 else 1.0
    return float(np.exp(slope)), float(r2), n[sel]


@dataclass
class CorrelationReport:
    n: np.ndarray
    cor: np.ndarray
    stderr: np.ndarray
    rate: float = float("nan")
    r_squared: float = float("nan")
    extra: dict = field(default_factory=dict)


def _lagged(phi_vals, psi_vals, n_max, n_batches):
    L = len(phi_vals) - n_max
    if L < 10 * n_batches:
        raise InsufficientSamples("orbit too short for the requested lags")
    cor = np.empty(n_max + 1)
    se = np.empty(n_max + 1)
    for k in range(n_max + 1):
        a = phi_vals[:L]
        b = psi_vals[k:k + L]
        prod = a * b - a.mean() * b.mean()
        cor[k] = prod.mean()
        bm = prod[: (L // n_batches) * n_batches].reshape(n_batches, -1).mean(axis=1)
        se[k] = bm.std(ddof=1) / math.sqrt(n_batches)
    return cor, se


def correlation_decay(sampler, phi, psi, n_max, length, rng, n_batches=50, fit=True):
    """Orbit estimate of ``int phi psi(T^n) - int phi int psi``.

    Parameters
    ----------
    sampler : FloatInduced or InvariantDensity
        Source of a long float orbit of the induced map; the start point is
        drawn from the density when one is given.
    phi, psi : callable
        Vectorised functions of rows of lengths.
    """
    if isinstance(sampler, InvariantDensity):
        start = sampler.sample(1, rng, burn_in=5)[0]
        runner = sampler._induced
    else:
        runner = sampler
        start = runner.base.sample(1, rng)[0]
    res = runner.orbit(start, length + 1000)
    pts = res["points"][1000:]
    if len(pts) < length // 2:
        raise InsufficientSamples(f"orbit aborted after {res['length']} returns")
    cor, se = _lagged(np.asarray(phi(pts), float), np.asarray(psi(pts), float), n_max, n_batches)
    rep = CorrelationReport(np.arange(n_max + 1), cor, se)
    if fit:
        try:
            rep.rate, rep.r_squared, _ = fit_exponential_rate(rep.n[1:], cor[1:], se[1:])
        except InsufficientSamples:
            pass
    return rep


def ulam_correlations(op, cell_masses, phi_cells, psi_cells, n_max):
    """The same correlations computed on the Ulam matrix for cell-wise constant observables."""
    p = np.asarray(cell_masses, float)
    f = np.asarray(phi_cells, float)
    g = np.asarray(psi_cells, float)
    mean = (p * f).sum() * (p * g).sum()
    out = []
    v = g.copy()
    for _ in range(n_max + 1):
        out.append((p * f * v).sum() - mean)
        v = op.matrix @ v
    return np.array(out)


def g_correlation_decay(rclass, base, phi, psi, n_max, length, rng, n2_tail=None, n_batches=50):
    """Correlations of the square of the accelerated map for observables supported in the base.

    The orbit is run in the cyclic class of the base.  The report's
    ``extra`` holds the class measure of the base by orbit frequency,
    ``c_n`` built from the return tail, and the residual ``cor - (c_n -
    1) mu(phi) mu(psi)``.

    Parameters
    ----------
    n2_tail : callable, optional
        ``k -> mu_2(n_G > k)`` for the return time ``n_G = n2 / 2`` of the
        square; when omitted it is estimated from the same orbit.
    """
    fz = FloatZorich(rclass)
    start = base.sample(1, rng)[0]
    res = fz.orbit(base.vertex, start, 2 * (length + n_max) + 2000)
    if res["status"] != 0 and res["length"] < length:
        raise InsufficientSamples(f"orbit aborted after {res['length']} steps")
    pts = res["points"][2000::2]
    verts = res["vertices"][2000::2]
    inside = (verts == base.vertex) & base.contains(pts)
    a = np.where(inside, phi(pts), 0.0)
    b = np.where(inside, psi(pts), 0.0)
    cor, se = _lagged(a, b, n_max, n_batches)
    mu_b = float(inside.mean())
    mu_phi, mu_psi = a.mean(), b.mean()
    if n2_tail is None:
        hits = np.flatnonzero(inside)
        gaps = np.diff(hits)
        n2_tail = lambda k: float(np.mean(gaps > k))
    ks = np.arange(n_max + 1)
    cn = np.array([1.0 + mu_b * sum(n2_tail(m) for m in range(k + 1, k + 400)) for k in ks])
    resid = cor - (cn - 1.0) * mu_phi * mu_psi
    rep = CorrelationReport(ks, cor, se)
    rep.extra = dict(mu_B=mu_b, mu_B_stderr=math.sqrt(mu_b * (1 - mu_b) / len(pts)),
                     c_n=cn, residual=resid, mu_phi=mu_phi, mu_psi=mu_psi,
                     n_points=len(pts))
    return rep


class RegularGrid:
    """Cartesian lattice of spacing ``h`` in the chart, masked to the base."""

    def __init__(self, base, h):
        self.base = base
        self.h = float(h)
        V = _chart(base.vertex_set)
        lo, hi = V.min(axis=0) - h, V.max(axis=0) + h
        self.m = V.shape[1]
        axes = [np.arange(lo[i], hi[i] + h, h) for i in range(self.m)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.shape = mesh[0].shape
        self.chart = np.stack([g.ravel() for g in mesh], axis=1)
        lam = np.column_stack([self.chart, 1 - self.chart.sum(axis=1)])
        self.inside = base.contains(lam).reshape(self.shape)
        self.points = lam

    def values(self, f):
        vals = np.full(self.shape, np.nan)
        vals[self.inside] = np.asarray(f(self.points[self.inside.ravel()]), float)
        return vals


@dataclass(frozen=True)
class SeminormEstimate:
    alpha: float
    eps0: float
    value: float
    resolution: float
    profile: tuple = ()


def _oscillation(vals, radius_cells):
    """``max - min`` of ``vals`` over lattice balls of ``radius_cells`` (NaN outside)."""
    m = vals.ndim
    r = int(math.floor(radius_cells))
    hi = np.where(np.isnan(vals), -np.inf, vals)
    lo = np.where(np.isnan(vals), np.inf, vals)
    mx, mn = hi.copy(), lo.copy()
    offsets = [o for o in np.ndindex(*(2 * r + 1,) * m)]
    pad = [(r, r)] * m
    hp = np.pad(hi, pad, constant_values=-np.inf)
    lp = np.pad(lo, pad, constant_values=np.inf)
    for o in offsets:
        if sum((x - r) ** 2 for x in o) > radius_cells ** 2:
            continue
        sl = tuple(slice(x, x + s) for x, s in zip(o, vals.shape))
        np.maximum(mx, hp[sl], out=mx)
        np.minimum(mn, lp[sl], out=mn)
    osc = mx - mn
    return np.where(np.isnan(vals), np.nan, osc)


def quasi_holder_seminorm(f, grid, alpha=0.5, eps0=None, ladder=None):
    """Estimate ``sup_eps eps^-alpha int_B osc(f, B_eps(x)) dx`` on a lattice.

    Parameters
    ----------
    f : callable
        Vectorised function of rows of lengths.
    grid : RegularGrid
    eps0 : float, optional
        Defaults to a quarter of the base's circumradius.
    ladder : sequence of float, optional
        Radii at which the supremum is taken; defaults to eight
        geometrically spaced values up to ``eps0``.

    Raises
    ------
    LadderTooFine
        A radius is smaller than twice the lattice spacing.
    """
    V = _chart(grid.base.vertex_set)
    if eps0 is None:
        c = V.mean(axis=0)
        eps0 = float(np.linalg.norm(V - c, axis=1).max()) / 4
    if ladder is None:
        ladder = eps0 * np.geomspace(1 / 16, 1, 8)
    ladder = [e for e in ladder if e <= eps0 * (1 + 1e-12)]
    if min(ladder) < 2 * grid.h:
        raise LadderTooFine(f"radius {min(ladder):.3g} below twice the spacing {grid.h:.3g}")
    vals = grid.values(f)
    cell = grid.h ** grid.m
    profile = []
    for e in ladder:
        osc = _oscillation(vals, e / grid.h)
        integral = float(np.nansum(osc) * cell)
        profile.append((float(e), integral * e ** (-alpha)))
    value = max(v for _, v in profile)
    return SeminormEstimate(alpha, float(eps0), value, grid.h, tuple(profile))
