"""
Recurrence statistics: shrinking targets, extreme values and rare events.

All experiments run float orbits of the induced map (or of the accelerated
map and its square) from points drawn from the Ulam invariant density, with
one independent random stream per trial.  Targets are Euclidean balls in
the coordinates of the normalised length vector; flow targets add the
fibre coordinate.
"""
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats
from scipy.special import comb, gammaln

from . import _kernels as K
from .errors import (EnNotDivergent, ParamOutOfRange, PeriodDetectionFailed,
                     ScalingConditionsFail, TargetStraddlesStrip, TargetTooSmall)
from .induced_mp import RETURN_CAP
from .rauzy_veech import _det
from .surface_flow import sample_flow_measure, trajectory
from .transfer_ulam import RegularGrid, quasi_holder_seminorm
from .zorich import FloatZorich, zorich_cylinder

__all__ = [
    "TargetSequence", "ScalingLaw", "StatReport", "PeriodInfo", "FlowTarget",
    "nested_balls", "whole_space", "classify_center", "base_class_mass",
    "sbc_ratio_t2", "sbc_ratio_t1", "sbc_ratio_g", "evl_experiment", "repp_experiment",
    "polya_aeppli_pmf", "hitting_return_stats", "flow_sbc", "flow_evl",
    "induced_flow_observable", "ball_volume_constant", "trial_rngs",
]


def trial_rngs(seed, trials):
    """Independent generators for each trial, derived from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def _map_trials(fn, rngs, threads):
    if threads is None or threads <= 1:
        return [fn(i, r) for i, r in enumerate(rngs)]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, range(len(rngs)), rngs))


@dataclass
class StatReport:
    """Outcome of one experiment.

    ``curve`` holds the main empirical curve (``x``, ``empirical``,
    ``reference``, ``stderr``); ``summary`` the scalar results.
    """
    experiment: str
    seed: int
    params: dict
    curve: dict
    summary: dict
    samples: np.ndarray = field(default=None, repr=False)
    runtime: float = 0.0

    def to_csv(self, path):
        cols = ["x", "empirical", "reference", "stderr"]
        n = len(self.curve["x"])
        with open(path, "w") as fh:
            fh.write("# rauzylab-schema v1\n")
            fh.write(",".join(cols) + "\n")
            for i in range(n):
                fh.write(",".join(f"{float(self.curve[c][i]):.17g}" for c in cols) + "\n")

    def to_json(self, path=None):
        def conv(v):
            if isinstance(v, (np.floating, float)):
                return float(v)
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, np.ndarray):
                return [conv(x) for x in v]
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            return v
        text = json.dumps({"experiment": self.experiment, "seed": self.seed,
                           "params": conv(self.params), "summary": conv(self.summary),
                           "runtime": self.runtime}, indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


def _step_curve(x, emp, ref, se=None):
    return {"x": np.asarray(x, float), "empirical": np.asarray(emp, float),
            "reference": np.asarray(ref, float),
            "stderr": np.zeros(len(x)) if se is None else np.asarray(se, float)}


# targets -----------------------------------------------------------------


@dataclass
class TargetSequence:
    """Shrinking targets ``U_j`` (``j = 0..n-1``).

    ``radii[j]`` is ``inf`` when ``U_j`` is the whole base; ``measures[j]``
    is the invariant measure of ``U_j``; ``exponent`` records a schedule
    ``measure ~ j^-exponent`` when one was used.
    """
    kind: str
    center: np.ndarray
    radii: np.ndarray
    measures: np.ndarray
    exponent: float = None
    metric: str = "euclidean-lengths"

    def __post_init__(self):
        r = np.where(np.isinf(self.radii), np.finfo(float).max, self.radii)
        if np.any(np.diff(r) > 0):
            raise ValueError("radii must be nonincreasing")

    def __len__(self):
        return len(self.radii)

    @property
    def expected(self):
        """``E_k = sum_{j<k} mu(U_j)`` for ``k = 1..n``."""
        return np.cumsum(self.measures)

    def check_divergent(self):
        if self.exponent is not None and self.exponent > 1:
            raise EnNotDivergent(f"measure schedule j^-{self.exponent} is summable")
        if self.measures.sum() < 1.0:
            raise EnNotDivergent(f"E_n = {self.measures.sum():.3g} < 1")


def nested_balls(density, center, n, c=50.0, exponent=1.0, scale=1.0):
    """Balls around ``center`` with ``mu(U_j) = min(1, c / (j+1)^exponent)``.

    ``scale`` converts the target measure to the invariant measure of the
    base used for the radii (radii are set so that ``scale * mu_2(U_j)``
    equals the schedule).
    """
    j = np.arange(1, n + 1, dtype=float)
    target = np.minimum(1.0, c / j ** exponent)
    base_mass = np.minimum(1.0, target / scale)
    radii = density.radius_for_mass(center, base_mass)
    measures = np.where(np.isinf(radii), scale, base_mass * scale)
    return TargetSequence("nested_balls", np.asarray(center, float), radii, measures, exponent)


def whole_space(n, scale=1.0):
    return TargetSequence("whole_space", None, np.full(n, np.inf), np.full(n, float(scale)), 0.0)


def ball_volume_constant(dim):
    """Volume of the unit ball of the length metric in the ``dim``-dimensional chart."""
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) / math.sqrt(dim + 1)


@dataclass(frozen=True)
class ScalingLaw:
    """``u_n(t) = g(t) / a_n + b_n`` for ``phi = -log d(., p0)``.

    ``a_n = dim``, ``b_n = (log(C h0) + log n) / dim`` and ``g(t) = -log t``,
    so that ``n mu(phi > u_n(t)) -> t`` when the density at ``p0`` is
    ``h0`` and ``C`` is the volume of the unit ball.
    """
    dim: int
    h0: float
    C: float = None

    def __post_init__(self):
        if self.C is None:
            object.__setattr__(self, "C", ball_volume_constant(self.dim))

    def a(self, n):
        return float(self.dim)

    def b(self, n):
        return (math.log(self.C * self.h0) + np.log(n)) / self.dim

    @staticmethod
    def g(t):
        return -np.log(t)

    def u(self, n, t):
        return self.g(t) / self.a(n) + self.b(n)

    def radius(self, n, t):
        return np.exp(-self.u(n, t))

    def conditions(self, eps=(1e-1, 1e-2, 1e-3, 1e-4), ns=np.geomspace(1e6, 1e12, 7), tol=1e-3):
        """Evaluate both regularity conditions on the normalising constants.

        Returns ``{eps: (c1, c2)}`` with the limsup over ``ns`` of
        ``a_n |b_[n+eps n] - b_n|`` and ``|1 - a_[n+eps n] / a_n|``.

        Raises
        ------
        ScalingConditionsFail
            If the values do not decrease to below ``tol``.
        """
        out = {}
        for e in eps:
            m = np.floor(ns + e * ns)
            c1 = max(self.a(n) * abs(self.b(k) - self.b(n)) for n, k in zip(ns, m))
            c2 = max(abs(1 - self.a(k) / self.a(n)) for n, k in zip(ns, m))
            out[e] = (float(c1), float(c2))
        vals = [out[e] for e in eps]
        if not all(x[0] >= y[0] - 1e-15 for x, y in zip(vals, vals[1:])) or vals[-1][0] > tol \
                or vals[-1][1] > tol:
            raise ScalingConditionsFail(f"normalising constants fail the limit conditions: {out}")
        return out


# periodic points ---------------------------------------------------------


@dataclass(frozen=True)
class PeriodInfo:
    """Period classification of a center; ``period`` is None for non-periodic points."""
    period: int
    fixed_point: np.ndarray
    jacobian: float
    distance: float

    @property
    def theta(self):
        """Extremal index ``1 - 1/|Jac(T2^k)|`` (1 for non-periodic centers)."""
        return 1.0 if self.period is None else 1.0 - 1.0 / abs(self.jacobian)


def _perron(A):
    M = np.array(A, dtype=float)
    M = M / M.max()
    w, V = np.linalg.eig(M)
    i = np.argmax(w.real)
    v = np.abs(V[:, i].real)
    return v / v.sum()


def classify_center(base, p0, max_period=12, tol=1e-8, ambiguous=1e-6):
    """Detect whether ``p0`` is a periodic point of the induced map.

    The first ``max_period`` return words of ``p0`` are multiplied up; the
    Perron direction ``x*`` of each product ``A`` is the fixed point of the
    corresponding branch of ``T2^k``.  Its distance to ``p0`` is divided by
    the diameter of the cylinder ``A(Delta)``, which puts it on the scale
    of ``|T2^k p0 - x*|``.

    Raises
    ------
    PeriodDetectionFailed
        A candidate fixed point lies between ``tol`` and ``ambiguous`` of
        ``p0``.
    """
    rc = base.rclass
    fz = FloatZorich(rc)
    p0 = np.asarray(p0, float)
    p0 = p0 / p0.sum()
    if not base.contains(p0):
        raise PeriodDetectionFailed("center is not in the base")
    lam, v = p0.copy(), base.vertex
    A = np.eye(base.d, dtype=np.int64).astype(object)
    best = np.inf
    for k in range(1, max_period + 1):
        for _ in range(RETURN_CAP):
            p = rc.vertices[v]
            v2, lam, n1, eps, _ = fz.step(v, lam)
            A = np.dot(A, zorich_cylinder(p, eps, n1)[0].matrix)
            v = v2
            if v == base.vertex and base.contains(lam):
                break
        if max(int(a).bit_length() for a in A.ravel()) > 900:
            break
        x = _perron(A)
        # every itinerary word has its fixed point inside the cylinder of p0, so the
        # distance is measured relative to the cylinder size (roughly |T2^k p0 - x*|)
        cols = np.array(A, dtype=float)
        cols = cols / cols.sum(axis=0)
        diam = max(np.linalg.norm(cols[:, i] - cols[:, j])
                   for i in range(base.d) for j in range(i + 1, base.d))
        if diam < 1e-12:
            break
        dist = float(np.linalg.norm(x - p0)) / diam
        best = min(best, dist)
        if dist < tol:
            rho = float(np.max(np.abs(np.linalg.eigvals(np.array(A, dtype=float)))))
            jac = rho ** base.d / abs(_det(A))
            return PeriodInfo(k, x, jac, dist)
        if dist < ambiguous:
            raise PeriodDetectionFailed(f"period-{k} point at distance {dist:.2e}: ambiguous")
    return PeriodInfo(None, None, 1.0, best)


def base_class_mass(base, rng, length=10 ** 6, method="orbit", density=None):
    """Measure of the base in its cyclic class (class mass normalised to one).

    ``method="orbit"`` counts visits of the square of the accelerated map;
    ``method="kac"`` uses ``2 / E[n2]`` under the invariant density.
    Returns ``(value, stderr)``.
    """
    if method == "orbit":
        fz = FloatZorich(base.rclass)
        res = fz.orbit(base.vertex, base.sample(1, rng)[0], 2 * length + 1000)
        pts = res["points"][1000::2]
        verts = res["vertices"][1000::2]
        inside = (verts == base.vertex) & base.contains(pts)
        p = inside.mean()
        # visits are positively correlated; use batch means
        b = inside[: (len(inside) // 50) * 50].reshape(50, -1).mean(axis=1)
        return float(p), float(b.std(ddof=1) / math.sqrt(50))
    if method == "kac":
        pts = density.sample(min(length, 200_000), rng, burn_in=3)
        _, n2, _, status = density._induced.map_batch(pts)
        n2 = n2[status == 0]
        m = n2.mean()
        return float(2.0 / m), float(2.0 / m ** 2 * n2.std() / math.sqrt(len(n2)))
    raise ValueError(method)


# Borel-Cantelli ------------------------------------------------------------


def _checkpoints(n, k=60):
    return np.unique(np.geomspace(1, n, k).astype(np.int64))


def _sbc_report(name, seed, params, hits_list, E, n, statuses):
    cps = _checkpoints(n)
    curves = np.array([[np.searchsorted(h, c, side="left") for c in cps] for h in hits_list], float)
    ratios = curves / E[cps - 1]
    final = ratios[:, -1]
    burn = cps >= max(1, n // 100)
    running_min = ratios[:, burn].min(axis=1)
    curve = _step_curve(cps, np.median(ratios, axis=0), np.ones(len(cps)),
                        ratios.std(axis=0) / math.sqrt(len(final)))
    summary = {"final_ratios": final, "running_min": running_min,
               "median_final": float(np.median(final)), "E_n": float(E[-1]),
               "aborted": int(sum(s != 0 for s in statuses))}
    return StatReport(name, seed, params, curve, summary, samples=final)


def sbc_ratio_t2(base, density, targets, n, trials, seed, threads=None, burn_in=5):
    """``S_n / E_n`` along orbits of the induced map started from the invariant density.

    Raises
    ------
    EnNotDivergent
    """
    targets.check_divergent()
    fi = density._induced
    center = base.center if targets.center is None else targets.center
    rad2 = np.ascontiguousarray(targets.radii[:n] ** 2)
    E = targets.expected[:n]
    t0 = time.perf_counter()

    def one(i, rng):
        x0 = density.sample(1, rng, burn_in=burn_in)[0]
        st, k, hits = K.t2_nested_hits(x0, fi._vb, n, center, rad2, *fi._args)
        return st, hits

    out = _map_trials(one, trial_rngs(seed, trials), threads)
    rep = _sbc_report("sbc_t2", seed, {"n": n, "trials": trials, "kind": targets.kind},
                      [h for _, h in out], E, n, [s for s, _ in out])
    rep.runtime = time.perf_counter() - t0
    return rep


def _sbc_t1_like(name, stride, base, density, targets, n, trials, seed, threads):
    targets.check_divergent()
    t = base.rclass.kernel_tables()
    tabs = (t["last"], t["nxt"], t["tail"], t["tlen"])
    binv = np.ascontiguousarray(base.matrix.float_inverse())
    center = base.center if targets.center is None else targets.center
    rad2 = np.ascontiguousarray(targets.radii[:n] ** 2)
    E = targets.expected[:n]
    t0 = time.perf_counter()

    def one(i, rng):
        x0 = density.sample(1, rng, burn_in=5)[0]
        st, k, hits = K.t1_nested_hits(x0, base.vertex, n, stride, center, rad2, *tabs,
                                       base.vertex, binv)
        return st, hits

    out = _map_trials(one, trial_rngs(seed, trials), threads)
    rep = _sbc_report(name, seed, {"n": n, "trials": trials, "kind": targets.kind},
                      [h for _, h in out], E, n, [s for s, _ in out])
    rep.runtime = time.perf_counter() - t0
    return rep


def sbc_ratio_t1(base, density, targets, n, trials, seed, threads=None):
    """Ratios along orbits of the accelerated map for targets inside the base.

    ``targets.measures`` must be class-normalised measures (each cyclic
    class has mass one); the orbit spends every other step in the class
    of the base, so the ratio tends to one half.
    """
    return _sbc_t1_like("sbc_t1", 1, base, density, targets, n, trials, seed, threads)


def sbc_ratio_g(base, density, targets, n, trials, seed, threads=None):
    """Ratios along orbits of the square of the accelerated map (class measure)."""
    return _sbc_t1_like("sbc_g", 2, base, density, targets, n, trials, seed, threads)


# extreme values ----------------------------------------------------------


def _ks_and_theta(W, period_info, t_grid):
    theta_ref = period_info.theta
    ks = stats.kstest(W, "expon", args=(0, 1.0 / theta_ref)).statistic
    emp = np.array([(W >= t).mean() for t in t_grid])

    def loss(th):
        return np.sum((emp - np.exp(-th * t_grid)) ** 2)
    theta_fit = optimize.minimize_scalar(loss, bounds=(1e-3, 2.0), method="bounded").x
    return float(ks), float(theta_fit), emp


def evl_experiment(base, density, p0, n, trials, seed, map_id="T2", threads=None,
                   t_grid=None, period_info=None, mu_B=None):
    """Law of the maximum of ``-log d(., p0)`` over ``n`` iterates.

    With ``W = n mu(B(p0, D_min))`` for the smallest distance ``D_min``
    reached, ``P(M_n <= u_n(t)) = P(W >= t)``; the reference is
    ``exp(-theta t)`` with ``theta = 1`` away from periodic points.

    For ``map_id="T1"`` the accelerated map is iterated and ``mu`` is the
    probability measure on both classes, ``mu_B mu_2 / 2``.

    Raises
    ------
    PeriodDetectionFailed
    """
    p0 = np.asarray(p0, float)
    p0 = p0 / p0.sum()
    if period_info is None:
        period_info = classify_center(base, p0)
    t_grid = np.linspace(0.02, 4.0, 200) if t_grid is None else np.asarray(t_grid, float)
    fi = density._induced
    t = base.rclass.kernel_tables()
    tabs = (t["last"], t["nxt"], t["tail"], t["tlen"])
    t0 = time.perf_counter()
    if map_id == "T1" and mu_B is None:
        raise ValueError("the accelerated-map variant needs the class measure of the base")

    def one(i, rng):
        x0 = density.sample(1, rng, burn_in=5)[0]
        if map_id == "T2":
            st, k, d2 = K.t2_min_dist(x0, fi._vb, n, p0, *fi._args)
        else:
            st, k, d2 = K.t1_min_dist(x0, fi._vb, n, p0, *tabs, fi._vb, fi._binv)
        return st, math.sqrt(d2)

    out = _map_trials(one, trial_rngs(seed, trials), threads)
    D = np.array([d for _, d in out])
    scale = 1.0 if map_id == "T2" else mu_B / 2
    W = n * scale * np.asarray(density.ball_mass(p0, D), float)
    ks, theta_fit, emp = _ks_and_theta(W, period_info, t_grid)
    law = ScalingLaw(density.dim, float(density.density(p0[None, :])[0]))
    summary = {"ks": ks, "theta_fit": theta_fit, "theta_ref": period_info.theta,
               "period": period_info.period, "jacobian": period_info.jacobian,
               "aborted": int(sum(s != 0 for s, _ in out)),
               "u_n_at_t1": float(law.u(n, 1.0))}
    rep = StatReport(f"evl_{map_id}", seed, {"n": n, "trials": trials, "p0": p0},
                     _step_curve(t_grid, emp, np.exp(-period_info.theta * t_grid),
                                 np.sqrt(emp * (1 - emp) / trials)), summary, samples=W)
    rep.runtime = time.perf_counter() - t0
    return rep


def polya_aeppli_pmf(theta, t, k):
    """``P(N = k)`` for the compound Poisson law with geometric multiplicities.

    Clusters arrive at rate ``theta t``; cluster sizes are geometric with
    success probability ``theta``.

    Raises
    ------
    ParamOutOfRange
    """
    if not (0 < theta <= 1) or t < 0 or k < 0 or int(k) != k:
        raise ParamOutOfRange(f"theta={theta}, t={t}, k={k}")
    k = int(k)
    if k == 0:
        return math.exp(-theta * t)
    if t == 0:
        return 0.0
    total = 0.0
    for i in range(1, k + 1):
        if theta == 1 and i < k:
            continue
        logterm = (i * math.log(theta) + (k - i) * (math.log1p(-theta) if theta < 1 else 0.0)
                   + i * (math.log(theta) + math.log(t)) - gammaln(i + 1))
        total += math.exp(logterm) * comb(k - 1, i - 1, exact=True)
    return math.exp(-theta * t) * total


def _chi2_distance(counts, pmf):
    """``sum (p_emp - p_ref)^2 / p_ref`` over ``k`` with the tail pooled in the last bin."""
    kmax = len(pmf) - 1
    emp = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1) / len(counts)
    ref = np.array(pmf, float)
    ref[-1] = max(1.0 - ref[:-1].sum(), 1e-300)
    return float(np.sum((emp - ref) ** 2 / ref))


def repp_experiment(base, density, p0, n_level, t, trials, seed, threads=None, period_info=None):
    """Exceedance counts ``N_n([0, t))`` in rescaled time.

    The target is the ball of measure ``1 / n_level`` around ``p0`` and time
    is rescaled by ``v_n = n_level``, so the orbit is run for ``t n_level``
    returns.
    """
    p0 = np.asarray(p0, float)
    p0 = p0 / p0.sum()
    if period_info is None:
        period_info = classify_center(base, p0)
    r = float(density.radius_for_mass(p0, np.array([1.0 / n_level]))[0])
    steps = int(round(t * n_level))
    rad2 = np.full(steps, r * r)
    fi = density._induced
    t0 = time.perf_counter()

    def one(i, rng):
        x0 = density.sample(1, rng, burn_in=5)[0]
        st, k, hits = K.t2_nested_hits(x0, fi._vb, steps, p0, rad2, *fi._args)
        return len(hits)

    counts = np.array(_map_trials(one, trial_rngs(seed, trials), threads))
    kmax = max(int(counts.max()), int(4 * t + 10))
    ks = np.arange(kmax + 1)
    pois = np.array([stats.poisson.pmf(k, t) for k in ks])
    pa = np.array([polya_aeppli_pmf(period_info.theta, t, k) for k in ks])
    emp = np.bincount(counts, minlength=kmax + 1)[:kmax + 1] / trials
    summary = {"mean": float(counts.mean()), "var": float(counts.var(ddof=1)),
               "dispersion": float(counts.var(ddof=1) / counts.mean()),
               "chi2_poisson": _chi2_distance(counts, pois),
               "chi2_polya_aeppli": _chi2_distance(counts, pa),
               "theta_ref": period_info.theta, "period": period_info.period, "radius": r}
    rep = StatReport("repp", seed, {"n_level": n_level, "t": t, "trials": trials, "p0": p0},
                     _step_curve(ks, emp, pa, np.sqrt(emp * (1 - emp) / trials)), summary,
                     samples=counts)
    rep.runtime = time.perf_counter() - t0
    return rep


def _uniform_in_ball(density, center, r, size, rng):
    m = density.dim
    M, _ = density._chart_map()
    z = rng.standard_normal((size, m))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.random((size, 1)) ** (1.0 / m)
    x = center[:m] + r * z @ M.T
    return np.column_stack([x, 1 - x.sum(axis=1)])


def hitting_return_stats(base, density, p0, n_level, trials, seed, threads=None,
                         period_info=None, cap_factor=30, atom_t=0.01):
    """Hitting and return time laws of the ball of measure ``1 / n_level`` around ``p0``.

    Hitting starts are drawn from the invariant density, return starts
    uniformly from the target.  Times are rescaled by the target measure.

    Raises
    ------
    TargetTooSmall
        No trial hit the target within ``cap_factor * n_level`` returns.
    """
    p0 = np.asarray(p0, float)
    p0 = p0 / p0.sum()
    if period_info is None:
        period_info = classify_center(base, p0)
    mu = 1.0 / n_level
    r = float(density.radius_for_mass(p0, np.array([mu]))[0])
    cap = int(cap_factor * n_level)
    fi = density._induced
    t0 = time.perf_counter()

    def one(i, rng):
        x0 = density.sample(1, rng, burn_in=5)[0]
        st, j = fi.first_hit(x0, p0, r, cap)
        y0 = _uniform_in_ball(density, p0, r, 1, rng)[0]
        st2, k = fi.first_hit(y0, p0, r, cap)
        return j, k

    out = np.array(_map_trials(one, trial_rngs(seed, trials), threads), float)
    if np.all(out[:, 0] == 0):
        raise TargetTooSmall(f"no hit within {cap} returns")
    hit = np.where(out[:, 0] > 0, out[:, 0] * mu, np.inf)
    ret = np.where(out[:, 1] > 0, out[:, 1] * mu, np.inf)
    th = period_info.theta
    ks_hit = stats.kstest(hit, "expon", args=(0, 1.0 / th)).statistic
    ret_cdf = lambda s: np.where(s < 0, 0.0, (1 - th) + th * (1 - np.exp(-th * s)))
    grid = np.linspace(0, 4, 201)
    emp_ret = np.array([(ret <= s).mean() for s in grid])
    emp_hit = np.array([(hit <= s).mean() for s in grid])
    srt = np.sort(ret[np.isfinite(ret)])
    fr = np.arange(1, len(srt) + 1) / len(ret)
    # the atom sits at t = mu(U) rather than 0, so compare away from it
    fine = np.linspace(atom_t, 6.0, 3000)
    ks_ret = float(np.abs(np.searchsorted(srt, fine, side="right") / len(ret) - ret_cdf(fine)).max())
    summary = {"ks_hitting": float(ks_hit), "ks_return": ks_ret,
               "return_atom": float((ret <= atom_t).mean()), "atom_ref": 1 - th,
               "hit_return_sup_diff": float(np.abs(emp_ret - emp_hit).max()),
               "theta_ref": th, "period": period_info.period, "radius": r,
               "censored": int(np.sum(out == 0))}
    rep = StatReport("hitting", seed, {"n_level": n_level, "trials": trials, "p0": p0},
                     _step_curve(grid, emp_hit, 1 - np.exp(-th * grid),
                                 np.sqrt(emp_hit * (1 - emp_hit) / trials)), summary)
    rep.curve_return = _step_curve(grid, emp_ret, ret_cdf(grid))
    rep.runtime = time.perf_counter() - t0
    return rep


# flow ----------------------------------------------------------------------


@dataclass(frozen=True)
class FlowTarget:
    """Flow balls ``U_s = B_{delta(s)}((z0, u0))`` with ``delta(s) = c (1 + s)^-gamma``."""
    z0: np.ndarray
    u0: float
    c: float
    gamma: float

    def delta(self, s):
        return self.c * (1.0 + np.maximum(np.asarray(s, float), 0.0)) ** (-self.gamma)

    def check(self, base, density, rng, n_probe=400):
        """Divergence of ``E_t`` and containment of the largest ball in one strip.

        Raises
        ------
        EnNotDivergent, TargetStraddlesStrip
        """
        if self.gamma * (density.dim + 1) > 1:
            raise EnNotDivergent("flow-ball measure decays faster than 1/s")
        d0 = float(self.delta(0.0))
        probe = _uniform_in_ball(density, np.asarray(self.z0, float) / np.sum(self.z0), d0,
                                 n_probe, rng)
        if not np.all(base.contains(probe)):
            raise TargetStraddlesStrip("ball leaves the base")
        _, _, r2, _ = density._induced.map_batch(probe)
        if self.u0 - d0 <= 0 or self.u0 + d0 >= r2.min():
            raise TargetStraddlesStrip(
                f"fibre interval [{self.u0 - d0:.3g}, {self.u0 + d0:.3g}] leaves the strip "
                f"(min roof {r2.min():.3g})")


def _expected_flow_time(density, target, T, rbar, n_grid=4000):
    s = np.concatenate([[0.0], np.geomspace(1e-3, T, n_grid)])
    z0 = np.asarray(target.z0, float)
    mass = np.asarray(density.flow_ball_mass(z0, target.delta(s)), float) / rbar
    return float(np.trapezoid(mass, s)) if hasattr(np, "trapezoid") else float(np.trapz(mass, s))


def _time_in_balls(tr, target, T):
    """Time spent in ``U_s`` for ``s`` in ``[0, T]`` along one flow trajectory."""
    z0 = np.asarray(target.z0, float)
    z0 = z0 / z0.sum()
    D2 = ((tr.points[:len(tr.roofs)] - z0) ** 2).sum(axis=1)
    starts = tr.times[:-1]
    total = 0.0
    naive = 0.0
    for j in np.flatnonzero(D2 < target.c ** 2):
        tj = starts[j]
        lo, hi = max(tj, 0.0), min(tj + tr.roofs[j], T)
        if lo >= hi:
            continue
        f = lambda s: target.delta(s) ** 2 - (s - tj - target.u0) ** 2 - D2[j]
        sc = tj + target.u0
        if f(sc) <= 0:
            continue
        dmax = float(target.delta(max(tj, 0.0)))
        a = optimize.brentq(f, sc - dmax - 1e-12, sc) if f(sc - dmax - 1e-12) < 0 else sc - dmax
        b = optimize.brentq(f, sc, sc + dmax + 1e-12) if f(sc + dmax + 1e-12) < 0 else sc + dmax
        total += max(0.0, min(b, hi) - max(a, lo))
        dn = float(target.delta(sc))
        if dn * dn > D2[j]:
            naive += 2 * math.sqrt(dn * dn - D2[j])
    return total, naive


def induced_flow_observable(target, n, rbar):
    """``psi_n(x)``: time the fibre over ``x`` spends in the ball at flow time ``n rbar``."""
    z0 = np.asarray(target.z0, float)
    z0 = z0 / z0.sum()
    dn = float(target.delta(n * rbar + target.u0))

    def psi(lam):
        d2 = ((np.asarray(lam, float) - z0) ** 2).sum(axis=1)
        return 2 * np.sqrt(np.maximum(dn * dn - d2, 0.0))
    return psi


def flow_sbc(base, density, target, T, starts, seed, rbar, threads=None,
             ladder=(16, 32, 64, 128, 256, 512), seminorm_h=None):
    """Time-integral shrinking-target ratios for the suspension flow.

    Also estimates the quasi-Hoelder norm (``alpha = 1/2``) of the induced
    observables over ``ladder`` and compares the exact time integral with
    the sum of induced observables along the base orbit.
    """
    rng0 = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    target.check(base, density, rng0)
    E = _expected_flow_time(density, target, T, rbar)
    fi = density._induced
    t0 = time.perf_counter()

    def one(i, rng):
        x, u, _ = sample_flow_measure(density, 1, rng)
        tr = trajectory(fi, x[0], u[0], T)
        return _time_in_balls(tr, target, T)

    out = np.array(_map_trials(one, trial_rngs(seed, starts), threads))
    ratios = out[:, 0] / E
    h = seminorm_h or min(float(target.delta(max(ladder) * rbar)) / 80, 1e-4)
    grid = RegularGrid(base, h)
    norms = []
    for n in ladder:
        psi = induced_flow_observable(target, n, rbar)
        est = quasi_holder_seminorm(psi, grid, alpha=0.5)
        norms.append(est.value + float(np.nanmax(grid.values(psi))))
    norms = np.array(norms)
    med = np.median(norms)
    summary = {"E_T": E, "ratios": ratios, "within_10pct": float(np.mean(np.abs(ratios - 1) <= 0.1)),
               "induced_sum_vs_integral": float(np.max(np.abs(out[:, 1] - out[:, 0]))),
               "ladder": list(ladder), "norms": norms,
               "norm_spread": float(max(norms.max() / med, med / norms.min()))}
    srt = np.sort(ratios)
    rep = StatReport("flow_sbc", seed, {"T": T, "starts": starts, "c": target.c,
                                        "gamma": target.gamma, "u0": target.u0},
                     _step_curve(srt, np.arange(1, len(srt) + 1) / len(srt),
                                 (srt >= 0.9) & (srt <= 1.1)), summary, samples=ratios)
    rep.runtime = time.perf_counter() - t0
    return rep


def _min_flow_distance(tr, z0, u0, T):
    n = len(tr.roofs)
    D2 = ((tr.points[:n] - z0) ** 2).sum(axis=1)
    tj = tr.times[:-1]
    a = np.maximum(0.0, -tj)
    b = np.minimum(tr.roofs, T - tj)
    ok = a < b
    du = np.where(u0 < a, a - u0, np.where(u0 > b, u0 - b, 0.0))
    return float(np.sqrt((D2 + du * du)[ok].min()))


def flow_evl(base, density, x0, u0, T, trials, seed, rbar, threads=None, period_info=None,
             t_grid=None):
    """Law of the maximum of ``-log d((x, u), (x0, u0))`` along the flow up to time ``T``.

    The normalisation uses the induced observable ``-log |x - x0|`` on the
    base with ``n = floor(T / rbar)`` returns.
    """
    x0 = np.asarray(x0, float)
    x0 = x0 / x0.sum()
    if period_info is None:
        period_info = classify_center(base, x0)
    ScalingLaw(density.dim, float(density.density(x0[None, :])[0])).conditions()
    n = int(T // rbar)
    fi = density._induced
    t_grid = np.linspace(0.02, 4.0, 200) if t_grid is None else np.asarray(t_grid, float)
    t0 = time.perf_counter()

    def one(i, rng):
        x, u, _ = sample_flow_measure(density, 1, rng)
        tr = trajectory(fi, x[0], u[0], T)
        return _min_flow_distance(tr, x0, u0, T)

    D = np.array(_map_trials(one, trial_rngs(seed, trials), threads))
    W = n * np.asarray(density.ball_mass(x0, D), float)
    ks, theta_fit, emp = _ks_and_theta(W, period_info, t_grid)
    summary = {"ks": ks, "theta_fit": theta_fit, "theta_ref": period_info.theta,
               "period": period_info.period, "n": n}
    rep = StatReport("flow_evl", seed, {"T": T, "trials": trials, "x0": x0, "u0": u0},
                     _step_curve(t_grid, emp, np.exp(-period_info.theta * t_grid),
                                 np.sqrt(emp * (1 - emp) / trials)), summary, samples=W)
    rep.runtime = time.perf_counter() - t0
    return rep
