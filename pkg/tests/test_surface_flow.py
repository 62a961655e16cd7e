import math
from fractions import Fraction as F

import numpy as np
import pytest

from rauzylab.errors import TauOutsideCone
from rauzylab.iet_core import LengthVector, Permutation, classify_type
from rauzylab.induced_mp import FloatInduced
from rauzylab.rauzy_veech import rv_induction_step
from rauzylab.zorich import zorich_orbit
from rauzylab.surface_flow import (SuspensionPoint, TauVector, extended_step, flow_step, in_cone,
                                   mean_roof, polygon, renormalized_extended_step, roof_r0, roof_r2,
                                   sample_flow_measure, trajectory)

from oracles import shoelace

PERMS = ["AB/BA", "ABC/CBA", "ABCD/DCBA", "ABCD/DBCA", "ABCDE/EDCBA"]


def cone_draws(perm, n, rng):
    out = []
    while len(out) < n:
        tau = rng.normal(size=perm.d)
        if in_cone(perm, tau):
            out.append((rng.dirichlet(np.ones(perm.d)), tau))
    return out


def half_plane_ok(perm, lam, tau):
    poly = polygon(perm, lam, tau)
    return (all(y > 0 for _, y in poly.upper_endpoints())
            and all(y < 0 for _, y in poly.lower_endpoints()))


def test_roof_r0(swap):
    assert roof_r0(swap, [0.3, 0.7]) == pytest.approx(-math.log(0.7), abs=1e-12)
    assert roof_r0(swap, [0.3, 0.7]) == pytest.approx(0.356675, abs=1e-6)
    assert roof_r0(swap, [0.7, 0.3]) == roof_r0(swap, [0.3, 0.7])
    small = [roof_r0(swap, [x, 1 - x]) for x in (1e-2, 1e-4, 1e-8)]
    assert small[0] > small[1] > small[2] > 0


def test_polygon_example(swap):
    poly = polygon(swap, [F(3, 10), F(7, 10)], (F(1, 2), F(-1, 5)))
    assert poly.upper_endpoints() == ((F(3, 10), F(1, 2)),)
    assert poly.lower_endpoints() == ((F(7, 10), F(-1, 5)),)
    assert poly.vertices[0] == poly.vertices[-1]
    assert poly.area == shoelace(poly.vertices)
    # parallelogram spanned by (0.3, 0.5) and (0.7, -0.2)
    assert poly.area == abs(F(3, 10) * F(-1, 5) - F(7, 10) * F(1, 2))


def test_polygon_closes_exactly(rng):
    p = Permutation.from_rows("ABCD/DBCA")
    for lam, tau in cone_draws(p, 20, rng):
        lam = [F(int(1000 * x) + 1) for x in lam]
        tau = [F(x).limit_denominator(1000) for x in tau]
        if not in_cone(p, tau):
            continue
        poly = polygon(p, lam, tau)
        assert poly.vertices[0] == poly.vertices[-1]
        assert poly.area == shoelace(poly.vertices)


def test_tau_outside_cone(swap):
    with pytest.raises(TauOutsideCone):
        TauVector(swap, (-1.0, 1.0))
    with pytest.raises(TauOutsideCone):
        TauVector(swap, (0.5, -0.5)).type
    with pytest.raises(TauOutsideCone):
        polygon(swap, [0.3, 0.7], (-0.5, 0.2))


@pytest.mark.parametrize("rows", PERMS)
def test_cone_preservation_and_types(rows, rng):
    p = Permutation.from_rows(rows)
    for lam, tau in cone_draws(p, 2000, rng):
        eps = int(classify_type(p, lam))
        p2, lam2, tau2 = extended_step(p, lam, tau)
        assert in_cone(p2, tau2)
        assert TauVector(p2, tau2).type == 1 - eps
        q, mu, _ = rv_induction_step(p, lam)
        assert q == p2 and np.allclose(list(mu), list(lam2), atol=0)


@pytest.mark.parametrize("rows", PERMS)
def test_cone_iff_half_planes(rows, rng):
    p = Permutation.from_rows(rows)
    for _ in range(2000):
        lam = rng.dirichlet(np.ones(p.d))
        tau = rng.normal(size=p.d)
        if in_cone(p, tau):
            assert half_plane_ok(p, lam, tau)
        else:
            with pytest.raises(TauOutsideCone):
                polygon(p, lam, tau)
            # the half-plane predicate computed without the cone guard
            x = y = 0.0
            top = []
            for a in p.top[:-1]:
                y += tau[a]
                top.append(y)
            y = 0.0
            bottom = []
            for a in p.bottom[:-1]:
                y += tau[a]
                bottom.append(y)
            assert not (all(v > 0 for v in top) and all(v < 0 for v in bottom))


@pytest.mark.parametrize("rows", PERMS)
def test_area_invariance(rows, rng):
    p = Permutation.from_rows(rows)
    for lam, tau in cone_draws(p, 500, rng):
        a0 = polygon(p, lam, tau).area
        p2, lam2, tau2, r0 = renormalized_extended_step(p, lam, tau)
        assert r0 == pytest.approx(roof_r0(p, lam))
        assert polygon(p2, lam2, tau2).area == pytest.approx(a0, rel=1e-9)


def test_area_invariance_exact():
    p = Permutation.from_rows("ABCD/DCBA")
    lam = LengthVector([F(1, 10), F(2, 10), F(3, 10), F(4, 10)], True)
    tau = (F(1), F(1, 2), F(-1, 3), F(-2))
    a0 = polygon(p, lam, tau).area
    p2, lam2, tau2 = extended_step(p, lam, tau)
    assert polygon(p2, lam2, tau2).area == a0


def test_roof_r2_exact_additivity(golden_base, generic_p0):
    a = F(float(generic_p0[0]))
    rec = roof_r2(golden_base, LengthVector([a, 1 - a], True))
    assert rec.r2 > 0 and rec.n2 >= 1
    assert math.fsum(rec.r0_steps) == pytest.approx(rec.r2, rel=1e-12)
    steps = zorich_orbit(golden_base.perm, [a, 1 - a], rec.n2)
    assert math.prod(s.scale for s in steps) == rec.scale
    assert list(steps[-1].end_lengths) == list(rec.image)
    # a return expands the chart by exp(2 r2), so float round-off is only
    # negligible over the first elementary steps
    fl = roof_r2(golden_base, [float(a), 1 - float(a)])
    assert fl.r0_steps[:20] == pytest.approx(rec.r0_steps[:20], rel=1e-9)


def test_flow_identities(golden_base, generic_p0, fixed_p0, rng):
    fi = FloatInduced(golden_base)
    pt = SuspensionPoint(generic_p0, 0.0)
    same, k = flow_step(golden_base, pt, 0.0, fi)
    assert k == 0 and same.u == 0 and np.array_equal(same.x, pt.x / pt.x.sum())
    y, n2, r2 = fi.step(generic_p0)
    land, k = flow_step(golden_base, pt, r2, fi)
    assert k == 1 and land.u == pytest.approx(0, abs=1e-12) and land.x == pytest.approx(y)
    # the fixed point of the induced map is a closed flow line of length r2
    _, _, r2s = fi.step(fixed_p0)
    back, k = flow_step(golden_base, SuspensionPoint(fixed_p0, 0.0), r2s, fi)
    assert k == 1 and back.x == pytest.approx(fixed_p0, abs=1e-9)
    for _ in range(20):
        x = golden_base.sample(1, rng)[0]
        _, _, r = fi.step(x)
        p = SuspensionPoint(x, rng.random() * r)
        t1, t2 = rng.exponential(40, 2)
        a, _ = flow_step(golden_base, p, t1 + t2, fi)
        b, _ = flow_step(golden_base, flow_step(golden_base, p, t1, fi)[0], t2, fi)
        assert a.x == pytest.approx(b.x, abs=1e-9) and a.u == pytest.approx(b.u, abs=1e-9)


def test_trajectory_times(golden, rng):
    fi = FloatInduced(golden.base)
    tr = trajectory(fi, golden.generic_center(), 0.5, 500)
    assert tr.times[0] == -0.5 and tr.times[-1] > 500
    assert np.all(tr.roofs > 0)
    c = tr.crossings_before(500)
    assert tr.times[c] <= 500 < tr.times[c + 1]


def test_mean_roof_reproducible(golden):
    fi = FloatInduced(golden.base)
    a, _ = mean_roof(fi, 10 ** 5, np.random.default_rng(1))
    b, _ = mean_roof(fi, 10 ** 5, np.random.default_rng(2))
    assert abs(a / b - 1) < 0.01


def test_flow_measure_samples(golden, rng):
    x, u, r2 = sample_flow_measure(golden.density, 2000, rng)
    assert np.all((u >= 0) & (u < r2))
    assert np.all(golden.base.contains(x))
