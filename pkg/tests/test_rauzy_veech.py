import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rauzylab.errors import NotNormalized, ReduciblePermutation, TieError
from rauzylab.iet_core import Permutation, Type, evaluate
from rauzylab.rauzy_veech import (ThetaWord, elementary_matrix, induced_iet, iterate_t0,
                                  markov_cell, rauzy_class, rauzy_move, rv_induction_step,
                                  rv_renormalize)

from oracles import bfs_class, first_return, iet_map, rauzy_step


def test_induction_step_swap():
    p = Permutation.from_rows("AB/BA")
    p2, lam, theta = rv_induction_step(p, [F(3, 10), F(7, 10)])
    assert p2 == p and list(lam) == [F(3, 10), F(4, 10)]
    p2, lam, theta = rv_induction_step(p, [F(7, 10), F(3, 10)])
    assert list(lam) == [F(4, 10), F(3, 10)]
    with pytest.raises(TieError):
        rv_induction_step(p, [F(1, 2), F(1, 2)])


def test_renormalize_chain():
    p = Permutation.from_rows("AB/BA")
    _, lam = rv_renormalize(p, [F(3, 10), F(7, 10)])
    assert list(lam) == [F(3, 7), F(4, 7)]
    _, lam = rv_renormalize(p, lam)
    assert list(lam) == [F(3, 4), F(1, 4)]
    with pytest.raises(NotNormalized):
        rv_renormalize(p, [F(1, 2), F(1, 3)])


def test_golden_point_is_fixed_by_two_steps():
    phi = (1 + math.sqrt(5)) / 2
    p = Permutation.from_rows("AB/BA")
    lam = [2 - phi, phi - 1]
    _, l1 = rv_renormalize(p, lam)
    _, l2 = rv_renormalize(p, l1)
    # independent check: x -> x/(1-x) style continued fraction of phi - 1 is all ones
    assert l1[0] == pytest.approx(lam[1], abs=1e-12) and l2[0] == pytest.approx(lam[0], abs=1e-10)


def test_markov_cell():
    p = Permutation.from_rows("AB/BA")
    assert markov_cell(p, [0.3, 0.7]) == (p, Type.TYPE0)
    assert markov_cell(p, [0.7, 0.3]) == (p, Type.TYPE1)
    with pytest.raises(TieError):
        markov_cell(p, [0.5, 0.5])


@pytest.mark.parametrize("text, size", [("AB/BA", 1), ("ABC/CBA", 3), ("ABCD/DCBA", 7),
                                        ("ABCDE/EDCBA", 15), ("ABCD/DBCA", 12)])
def test_class_sizes_against_bfs(text, size):
    rc = rauzy_class(Permutation.from_rows(text))
    ref = bfs_class(*[list(r) for r in text.split("/")])
    assert len(rc) == len(ref) == size
    got = {tuple(v.rows_string().split("/")) for v in rc.vertices}
    assert got == ref


def test_class_order_is_deterministic():
    a = rauzy_class(Permutation.from_rows("ABCD/DCBA"))
    b = rauzy_class(Permutation.from_rows("ABCD/DCBA"))
    assert [v.rows_string() for v in a.vertices] == [v.rows_string() for v in b.vertices]
    keys = [v.sort_key() for v in a.vertices]
    assert keys == sorted(keys)
    assert len(a.edges) == 2 * len(a)


def test_reducible_class_rejected():
    with pytest.raises(ReduciblePermutation):
        rauzy_class(Permutation.from_rows("ABC/ACB"))


def test_iterate_t0():
    p = Permutation.from_rows("AB/BA")
    orb = iterate_t0(p, [F(3, 10), F(7, 10)], 0)
    assert orb.types == () and orb.theta.det == 1
    orb = iterate_t0(p, [F(3, 10), F(7, 10)], 2)
    assert orb.types == (Type.TYPE0, Type.TYPE0)
    assert list(orb.states[-1][1]) == [F(3, 4), F(1, 4)]
    prod = np.dot(elementary_matrix(p, 0), elementary_matrix(p, 0))
    assert np.array_equal(orb.theta.matrix, prod)


def test_tie_reports_step():
    p = Permutation.from_rows("AB/BA")
    with pytest.raises(TieError) as info:
        iterate_t0(p, [F(1, 3), F(2, 3)], 5)
    assert info.value.step == 1


def test_theta_word_inverse_and_transpose():
    p = Permutation.from_rows("ABCD/DCBA")
    w = ThetaWord.identity(4)
    q = p
    for eps in (0, 1, 1, 0, 1):
        w = w.then(ThetaWord.step(q, eps))
        q = rauzy_move(q, eps)
    assert np.array_equal(np.dot(w.matrix, w.inverse), np.eye(4, dtype=int))
    assert abs(w.det) == 1
    assert np.array_equal(w.theta, w.matrix.T)


def _irreducible_perms():
    from itertools import permutations
    from rauzylab.iet_core import is_irreducible
    out = []
    for d in (2, 3, 4):
        for bottom in permutations(range(d)):
            p = Permutation(list(range(d)), list(bottom))
            if is_irreducible(p):
                out.append(p)
    return out


@st.composite
def exact_iet(draw):
    p = draw(st.sampled_from(_irreducible_perms()))
    lam = [F(draw(st.integers(1, 10 ** 9)), 10 ** 9) for _ in range(p.d)]
    return p, lam


@settings(max_examples=60, deadline=None)
@given(exact_iet(), st.lists(st.fractions(0, 1), min_size=5, max_size=5))
def test_induced_map_is_first_return(data, us):
    p, lam = data
    try:
        p2, lam2, theta = rv_induction_step(p, lam)
    except TieError:
        return
    names = [chr(65 + i) for i in range(p.d)]
    f = iet_map([names[a] for a in p.top], [names[a] for a in p.bottom], dict(zip(names, lam)))
    g = induced_iet(p, lam)
    J = g.total
    for u in us:
        z = u * J
        if z == J:
            continue
        assert evaluate(g, z) == first_return(f, z, J)
    # lambda = A lambda'
    assert theta.apply(lam2) == list(lam)
    # rows agree with the oracle step
    top, bottom, l = rauzy_step([names[a] for a in p.top], [names[a] for a in p.bottom],
                                dict(zip(names, lam)))
    assert p2.rows_string() == "".join(top) + "/" + "".join(bottom)
    assert list(lam2) == [l[n] for n in names]


def test_kernel_tables_consistent():
    rc = rauzy_class(Permutation.from_rows("ABCD/DCBA"))
    t = rc.kernel_tables()
    for i, v in enumerate(rc.vertices):
        for eps in (0, 1):
            assert t["last"][i, eps] == v.last(eps)
            assert rc.vertices[t["nxt"][i, eps]] == rauzy_move(v, eps)
