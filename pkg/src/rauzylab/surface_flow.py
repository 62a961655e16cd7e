"""
Zippered polygons, the extended induction and the suspension semi-flow.

A height vector ``tau`` in the cone of ``perm`` (top-row partial sums
positive, bottom-row partial sums negative) together with the lengths
``lambda`` defines a closed polygon whose paired sides glue to a
translation surface.  The induction acts on ``tau`` by the same inverse
matrix as on ``lambda``.

The semi-flow is the suspension over the induced map with roof
``r2 = -log |A_u^{-1} x|``, the Teichmueller time between returns to the
base.  Only the projected flow (``tau`` removed) is simulated.
"""
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidBase, ReturnCapExceeded, TauOutsideCone
from .iet_core import Type, as_lengths, classify_type
from .induced_mp import RETURN_CAP, FloatInduced
from .rauzy_veech import rv_induction_step
from .zorich import _normalized, zorich_step

__all__ = [
    "TauVector", "ZipperedPolygon", "RoofRecord", "SuspensionPoint", "FlowTrajectory",
    "in_cone", "polygon", "polygon_area", "extended_step", "renormalized_extended_step", "roof_r0", "roof_r2",
    "flow_step", "mean_roof", "sample_flow_measure", "crossing_counts",
]


def _partial_sums(perm, tau, eps):
    out, s = [], 0
    for a in perm.row(eps)[:-1]:
        s = s + tau[a]
        out.append(s)
    return out


def in_cone(perm, tau):
    """Top-row partial sums of ``tau`` positive, bottom-row ones negative (k < d)."""
    return (all(s > 0 for s in _partial_sums(perm, tau, 0))
            and all(s < 0 for s in _partial_sums(perm, tau, 1)))


@dataclass(frozen=True)
class TauVector:
    """Height vector in the cone of ``perm``; its type is the sign of its total."""
    perm: object
    values: tuple

    def __post_init__(self):
        if not in_cone(self.perm, self.values):
            raise TauOutsideCone(f"tau={self.values} violates the partial-sum constraints")

    @property
    def total(self):
        return sum(self.values)

    @property
    def type(self):
        if self.total == 0:
            raise TauOutsideCone("tau has zero total, its type is undefined")
        return Type.TYPE0 if self.total > 0 else Type.TYPE1


@dataclass(frozen=True)
class ZipperedPolygon:
    """Closed polygon: the top chain of ``zeta_a = (lambda_a, tau_a)`` then the reversed bottom chain."""
    vertices: tuple
    area: object
    perm: object

    @property
    def closes(self):
        first, last = self.vertices[0], self.vertices[-1]
        return all(abs(a - b) <= 1e-12 for a, b in zip(first, last))

    def upper_endpoints(self):
        return self.vertices[1:self.perm.d]

    def lower_endpoints(self):
        # the bottom chain is traversed backwards, so its partial sums appear in reverse
        d = self.perm.d
        return self.vertices[d + 1:2 * d][::-1]

    def to_json(self):
        return json.dumps({"vertices": [[float(x), float(y)] for x, y in self.vertices],
                           "area": float(self.area)})


def polygon_area(vertices):
    """Unsigned shoelace area of a closed vertex chain."""
    s = 0
    for (x0, y0), (x1, y1) in zip(vertices[:-1], vertices[1:]):
        s = s + x0 * y1 - x1 * y0
    return abs(s) / 2


def polygon(perm, lengths, tau):
    """The curve of ``(perm, lengths, tau)`` with ``2d`` sides.

    Raises
    ------
    TauOutsideCone
    """
    tau = tuple(tau)
    if not in_cone(perm, tau):
        raise TauOutsideCone("tau violates the partial-sum constraints")
    lam = list(as_lengths(lengths))
    zero = lam[0] - lam[0]
    pts = [(zero, zero)]
    x, y = zero, zero
    for a in perm.top:
        x, y = x + lam[a], y + tau[a]
        pts.append((x, y))
    for a in reversed(perm.bottom):
        x, y = x - lam[a], y - tau[a]
        pts.append((x, y))
    return ZipperedPolygon(tuple(pts), polygon_area(pts), perm)


def extended_step(perm, lengths, tau):
    """One induction step on ``(perm, lengths, tau)``.

    ``tau`` is transformed by the inverse step matrix, like the lengths.

    Raises
    ------
    TauOutsideCone
        The input is outside the cone, or (never expected) the output is.
    """
    tau = list(tau)
    if not in_cone(perm, tau):
        raise TauOutsideCone("tau violates the partial-sum constraints")
    perm2, lam2, theta = rv_induction_step(perm, lengths)
    tau2 = theta.apply_inverse(tau)
    if not in_cone(perm2, tau2):
        raise TauOutsideCone("image of tau left the cone")
    return perm2, lam2, tuple(tau2)


def renormalized_extended_step(perm, lengths, tau):
    """Extended step followed by the flow-time compensation.

    The induced lengths are scaled by ``e^{r0}`` (back to the unit
    simplex) and the heights by ``e^{-r0}``, so the polygon area is
    unchanged.  Returns ``(perm', lengths', tau', r0)``.
    """
    lengths = as_lengths(lengths)
    eps = int(classify_type(perm, lengths))
    keep = 1 - lengths[perm.last(1 - eps)] / lengths.total
    perm2, lam2, tau2 = extended_step(perm, lengths, tau)
    lam2 = [v / keep for v in lam2]
    tau2 = tuple(t * keep for t in tau2)
    return perm2, as_lengths(lam2), tau2, -math.log(float(keep))


def roof_r0(perm, lengths):
    """Flow time ``-log(1 - lambda_loser / |lambda|)`` of one induction step."""
    lengths = as_lengths(lengths)
    eps = int(classify_type(perm, lengths))
    ratio = lengths[perm.last(1 - eps)] / lengths.total
    return -math.log1p(-float(ratio))


@dataclass(frozen=True)
class RoofRecord:
    """Roof of one return, split over its elementary steps.

    ``scale`` is the exact product of the step factors in rational mode,
    so ``r2 = -log(scale)``.
    """
    r0_steps: tuple
    r2: float
    steps: int
    scale: object
    n2: int
    image: object


def roof_r2(base, lengths, cap=RETURN_CAP):
    """Accumulate elementary roofs along the first return of ``lengths`` to the base.

    Raises
    ------
    ReturnCapExceeded
    """
    lengths = as_lengths(lengths)
    exact = lengths.exact
    if not base.contains(lengths if exact else lengths.as_array()):
        raise InvalidBase("point is not in the base")
    p, lam = base.perm, _normalized(list(lengths), exact)
    r0s = []
    scale = Fraction(1) if exact else 1.0
    n2 = 0
    while n2 < cap:
        step = zorich_step(p, lam)
        for f in step.factors:
            r0s.append(-math.log(f))
            scale = scale * f
        n2 += 1
        p, lam = step.end_state
        if p == base.perm and base.contains(lam if exact else lam.as_array()):
            r2 = -math.log(scale) if not exact else -(math.log(scale.numerator) - math.log(scale.denominator))
            return RoofRecord(tuple(r0s), r2, len(r0s), scale, n2, lam)
    raise ReturnCapExceeded(f"no return within {cap} steps")


@dataclass(frozen=True)
class SuspensionPoint:
    """Point ``(x, u)`` of the suspension, ``0 <= u < r2(x)``."""
    x: np.ndarray
    u: float


def flow_step(base, point, t, induced=None):
    """Flow ``point`` for time ``t``; returns ``(landing point, crossings)``.

    Reaching the roof identifies ``(x, r2(x))`` with ``(T2 x, 0)``.
    """
    if t < 0:
        raise ValueError("flow time must be nonnegative")
    fi = induced or FloatInduced(base)
    x = np.asarray(point.x, dtype=float)
    x = x / x.sum()
    u = float(point.u)
    crossings = 0
    while True:
        y, n2, r2 = fi.step(x)
        if u + t < r2:
            return SuspensionPoint(x, u + t), crossings
        t -= r2 - u
        x, u = y, 0.0
        crossings += 1


@dataclass
class FlowTrajectory:
    """Consecutive returns of one flow line.

    ``times[j]`` is the flow time at which the ``j``-th base point
    ``points[j]`` is reached (``times[0] = -u0``).
    """
    points: np.ndarray
    roofs: np.ndarray
    times: np.ndarray
    status: int

    def crossings_before(self, T):
        """Number of returns to the base in ``(0, T]``."""
        return int(np.searchsorted(self.times[1:], T, side="right"))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# rauzylab-schema v1\n")
            fh.write("t,crossings," + ",".join(f"x{i}" for i in range(self.points.shape[1])) + "\n")
            for j, (t, p) in enumerate(zip(self.times, self.points)):
                fh.write(f"{t:.17g},{j}," + ",".join(f"{v:.17g}" for v in p) + "\n")


def trajectory(induced, x0, u0, T, chunk=None):
    """Returns of the flow line of ``(x0, u0)`` up to flow time ``T``."""
    chunk = chunk or 256
    pts, roofs = [np.asarray(x0, float)[None, :] / np.sum(x0)], []
    elapsed = -float(u0)
    x = pts[0][0]
    status = 0
    while True:
        res = induced.orbit(x, chunk)
        roofs.append(res["r2"])
        pts.append(res["points"][1:])
        elapsed += res["r2"].sum()
        x = res["points"][-1]
        if res["status"] != 0:
            status = res["status"]
            break
        if elapsed > T:
            break
    roofs = np.concatenate(roofs)
    points = np.concatenate(pts)[:len(roofs) + 1]
    times = np.concatenate([[-float(u0)], -float(u0) + np.cumsum(roofs)])
    return FlowTrajectory(points, roofs, times, status)


def mean_roof(induced, length, rng, start=None, burn_in=1000):
    """Birkhoff average of ``r2`` along one orbit; returns ``(mean, stderr)``.

    The standard error uses 50 batch means.
    """
    if start is None:
        start = induced.base.sample(1, rng)[0]
    res = induced.orbit(start, length + burn_in)
    r = res["r2"][burn_in:]
    if len(r) < length:
        raise ReturnCapExceeded(f"orbit stopped after {res['length']} returns")
    b = r[: (len(r) // 50) * 50].reshape(50, -1).mean(axis=1)
    return float(r.mean()), float(b.std(ddof=1) / math.sqrt(50))


def sample_flow_measure(density, size, rng, oversample=20, burn_in=5):
    """Draw ``(x, u)`` from the normalised product of the invariant measure and Lebesgue.

    Base points are drawn from ``density`` (an
    :class:`~rauzylab.transfer_ulam.InvariantDensity`), resampled with
    weights ``r2(x)`` and paired with ``u`` uniform on ``[0, r2(x))``.
    """
    cand = density.sample(size * oversample, rng, burn_in=burn_in)
    _, _, r2, status = density._induced.map_batch(cand)
    w = np.where(status == 0, r2, 0.0)
    idx = rng.choice(len(cand), size=size, p=w / w.sum())
    u = rng.random(size) * r2[idx]
    return cand[idx], u, r2[idx]


def crossing_counts(induced, starts, T):
    """Number of returns to the base within time ``T`` for each ``(x, u)`` start."""
    out = []
    for x, u in starts:
        tr = trajectory(induced, x, u, T)
        out.append(tr.crossings_before(T))
    return np.array(out)
