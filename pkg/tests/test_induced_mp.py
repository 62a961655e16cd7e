import math
from fractions import Fraction as F

import numpy as np
import pytest

from rauzylab.errors import InvalidBase
from rauzylab.iet_core import LengthVector, Permutation
from rauzylab.induced_mp import (BaseCell, FloatInduced, branch_mass_decay, distortion_diagnostics,
                                 enumerate_branches, first_return, fit_log_linear, jacobian_t2,
                                 return_time_masses, return_time_tail, select_base)
from rauzylab.rauzy_veech import ThetaWord, rauzy_move
from rauzylab.recurrence_stats import _perron


@pytest.fixture(scope="module")
def inventory(golden_base):
    return enumerate_branches(golden_base, 14, max_nodes=20000)


def test_golden_base(golden_base):
    assert golden_base.n_B == 2
    assert [[int(x) for x in r] for r in golden_base.matrix.matrix] == [[2, 1], [3, 2]]
    v = sorted(golden_base.vertex_set[:, 0])
    assert v == pytest.approx([1 / 3, 2 / 5])
    assert golden_base.mass == pytest.approx(1 / 15)


def test_base_rejects_zero_entry(swap):
    w = ThetaWord.step(swap, 0)
    with pytest.raises(InvalidBase):
        BaseCell(1, ((swap, 0, 1),), (rauzy_move(swap, 0), 1), w, w)


def test_contraction(golden_base, rng):
    assert golden_base.contraction_estimate(500, rng) < 1


def test_branch_fixed_points(golden_base, inventory):
    B = golden_base.matrix.float_matrix()
    fi = FloatInduced(golden_base)
    for b in inventory.branches[:12]:
        # fixed point of the branch: Perron direction of A_u A_B restricted to B
        x = _perron(b.matrix.float_matrix())
        assert golden_base.contains(x)
        y, n2, _ = fi.step(x)
        assert n2 == b.n2
        assert y == pytest.approx(x, abs=1e-8)


def test_exact_first_return_lands_in_base(golden_base, inventory, generic_p0):
    a = F(float(generic_p0[0]))
    x = LengthVector([a, 1 - a], True)
    y, n2, k = first_return(golden_base, x, inventory=inventory)
    assert golden_base.contains(y)
    assert (inventory.branches[k].n2 if isinstance(k, int) else len(k)) == n2
    fixed = _perron(inventory.branches[0].matrix.float_matrix())
    a = F(float(fixed[0]))
    _, n2, k = first_return(golden_base, LengthVector([a, 1 - a], True), inventory=inventory)
    assert k == 0 and n2 == inventory.branches[0].n2
    with pytest.raises(InvalidBase):
        first_return(golden_base, LengthVector([F(1, 10), F(9, 10)], True))


def test_branch_replay(golden_base, inventory, rng):
    fi = FloatInduced(golden_base)
    for b in inventory.branches[:30]:
        pts = rng.dirichlet([1, 1], 5) @ b.cell_vertices(golden_base)
        out, n2, _, st = fi.map_batch(pts)
        assert np.all(st == 0) and np.all(n2 == b.n2)
        assert out == pytest.approx(b.forward(pts), abs=1e-9)


def test_branch_bijectivity_exact(golden_base, inventory):
    # forward map of a branch cell's vertices gives the base's vertices
    AB = golden_base.matrix.matrix
    for b in inventory.branches[:10]:
        cell = np.dot(b.matrix.matrix, AB)
        img = np.dot(b.matrix.inverse, cell)
        assert np.array_equal(img, AB)


def test_jacobian_example():
    A = [[1, 0], [1, 1]]
    assert jacobian_t2(A, [0.3, 0.7]) == pytest.approx(1 / 0.7 ** 2, rel=1e-12)
    assert jacobian_t2(A, [0.3, 0.7]) == pytest.approx(2.0408, abs=1e-4)
    # finite-difference oracle on the chart x -> x / (1 - x)
    f = lambda x: x / (1 - x)
    h = 1e-6
    assert (f(0.3 + h) - f(0.3 - h)) / (2 * h) == pytest.approx(jacobian_t2(A, [0.3, 0.7]), rel=1e-6)
    assert jacobian_t2(np.eye(3), [0.2, 0.3, 0.5]) == pytest.approx(1.0)


def test_jacobian_finite_difference_d3(rng):
    A = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 3]])
    Ai = np.linalg.inv(A)
    for _ in range(20):
        x = rng.dirichlet([2, 2, 2])
        g = lambda c: (lambda y: (y / y.sum())[:2])(Ai @ np.array([c[0], c[1], 1 - c[0] - c[1]]))
        h = 1e-6
        J = np.column_stack([(g(x[:2] + h * e) - g(x[:2] - h * e)) / (2 * h) for e in np.eye(2)])
        assert abs(np.linalg.det(J)) == pytest.approx(jacobian_t2(A, x), rel=1e-6)


def test_jacobian_chain_rule(golden_base, inventory, rng):
    b1, b2 = inventory.branches[0], inventory.branches[3]
    x = rng.dirichlet([1, 1]) @ b1.cell_vertices(golden_base)
    # a point of B_{b1} whose image lies in B_{b2}
    x = b1.inverse_branch(b2.inverse_branch(rng.dirichlet([1, 1]) @ golden_base.vertex_set))
    y = b1.forward(x)
    both = ThetaWord(np.dot(b1.matrix.matrix, b2.matrix.matrix), np.dot(b2.matrix.inverse, b1.matrix.inverse))
    lhs = jacobian_t2(both, x)
    rhs = jacobian_t2(b1, x) * jacobian_t2(b2, y)
    assert lhs == pytest.approx(rhs, rel=1e-9)


def test_distortion(golden_base, inventory, rng):
    rep = distortion_diagnostics(golden_base, inventory, 200, rng)
    assert rep.theta_hat > 1
    assert math.isfinite(rep.D1_hat) and rep.D2_hat >= 1


def test_return_times_even_and_tail(golden_base, rng):
    k, tail, n2 = return_time_tail(golden_base, 20000, rng)
    assert np.all(n2 % 2 == 0)
    assert tail[0] == 1.0 and np.all(np.diff(tail) <= 0)


def test_inventory_mass_accounting(golden_base, inventory):
    assert inventory.covered_mass + inventory.uncovered_mass == pytest.approx(golden_base.mass)
    assert list(inventory.mass_by_return_time()) == sorted(inventory.mass_by_return_time())
    deeper = enumerate_branches(golden_base, 20, max_nodes=40000)
    assert deeper.covered_mass >= inventory.covered_mass


def test_return_time_mass_decay(golden_base, rng):
    n, m = return_time_masses(golden_base, 200_000, rng)
    slope, _, r2 = fit_log_linear(n, m)
    assert slope < 0 and r2 > 0.9
    assert m.sum() <= golden_base.mass * (1 + 1e-12)


def test_select_base_depth():
    p = Permutation.from_rows("ABC/CBA")
    lam = np.array([1, math.sqrt(2), math.sqrt(3)])
    base = select_base(p, lam / lam.sum())
    assert base.word_matrix.is_positive()
    assert base.contains(base.center)
