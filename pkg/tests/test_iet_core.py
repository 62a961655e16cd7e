from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rauzylab.errors import DomainError, InvalidLength, InvalidPermutation, TieError
from rauzylab.iet_core import (Permutation, Type, build_iet, check_keane, classify_type,
                               evaluate, evaluate_inverse, iet_from_json, iet_to_json,
                               is_irreducible, monodromy)

from oracles import iet_map, rows, translations


def test_translation_vector_swap():
    iet = build_iet(Permutation.from_rows("AB/BA"), [0.3, 0.7])
    assert iet.w == pytest.approx((0.7, -0.3))


def test_identity_permutation_does_not_move():
    iet = build_iet(Permutation.from_rows("AB/AB"), [F(2, 5), F(3, 5)])
    assert iet.w == (0, 0)


def test_translation_vector_matches_definition_d3():
    lam = [F(1, 2), F(1, 3), F(1, 6)]
    iet = build_iet(Permutation.from_rows("ABC/CBA"), lam)
    ref = translations(*rows("ABC/CBA"), dict(zip("ABC", lam)))
    assert iet.w == tuple(ref[a] for a in "ABC")
    assert iet.w == (F(1, 2), F(-1, 3), F(-5, 6))


@pytest.mark.parametrize("x, y", [(0.1, 0.8), (0.5, 0.2)])
def test_rotation_values(x, y):
    iet = build_iet(Permutation.from_rows("AB/BA"), [0.3, 0.7])
    assert evaluate(iet, x) == pytest.approx(y)


def test_evaluate_d3_against_scan():
    lam = [F(1, 2), F(1, 3), F(1, 6)]
    iet = build_iet(Permutation.from_rows("ABC/CBA"), lam)
    f = iet_map(*rows("ABC/CBA"), dict(zip("ABC", lam)))
    assert evaluate(iet, F(3, 5)) == f(F(3, 5)) == F(4, 15)


def test_domain_errors():
    iet = build_iet(Permutation.from_rows("AB/BA"), [0.3, 0.7])
    with pytest.raises(DomainError):
        evaluate(iet, 1.0)
    with pytest.raises(DomainError):
        evaluate(iet, -0.1)
    with pytest.raises(InvalidLength):
        build_iet(Permutation.from_rows("AB/BA"), [0.3, 0.7, 0.1])
    with pytest.raises(InvalidLength):
        build_iet(Permutation.from_rows("AB/BA"), [0.3, -0.7])
    with pytest.raises(InvalidPermutation):
        Permutation.from_rows("AB/AA")


@pytest.mark.parametrize("text, expected", [("AB/BA", [1, 0]), ("AB/AB", [0, 1]),
                                            ("ABC/CBA", [2, 1, 0])])
def test_monodromy(text, expected):
    assert list(monodromy(Permutation.from_rows(text))) == expected


@pytest.mark.parametrize("text, expected", [("AB/BA", True), ("ABC/ACB", False),
                                            ("ABC/CBA", True), ("ABCD/DCBA", True),
                                            ("ABCD/BADC", False)])
def test_irreducibility(text, expected):
    assert is_irreducible(Permutation.from_rows(text)) is expected


def test_types():
    p = Permutation.from_rows("AB/BA")
    assert classify_type(p, [0.3, 0.7]) == Type.TYPE0
    assert classify_type(p, [0.7, 0.3]) == Type.TYPE1
    with pytest.raises(TieError):
        classify_type(p, [0.5, 0.5])
    with pytest.raises(TieError):
        classify_type(p, [F(1, 2), F(1, 2)])


def test_keane_verdicts():
    p = Permutation.from_rows("AB/BA")
    s = np.sqrt(2)
    assert check_keane(p, [1 / (1 + s), s / (1 + s)], 1000).ok
    v = check_keane(p, [F(1, 2), F(1, 2)], 2)
    assert not v.ok and v.n == 1
    v = check_keane(p, [F(1, 3), F(2, 3)], 10)
    assert not v.ok and v.n <= 3


def test_json_round_trip_exact():
    p = Permutation.from_rows("ABC/CBA")
    lam = [F(1, 2), F(1, 3), F(1, 6)]
    text = iet_to_json(p, lam)
    assert '"1/3"' in text
    p2, lam2 = iet_from_json(text)
    assert p2.pi0 == p.pi0 and p2.pi1 == p.pi1 and list(lam2) == lam


def _perm_and_lengths(d_min=2, d_max=5):
    @st.composite
    def build(draw):
        d = draw(st.integers(d_min, d_max))
        bottom = draw(st.permutations(range(d)))
        lam = draw(st.lists(st.integers(1, 10 ** 6), min_size=d, max_size=d))
        return Permutation(list(range(d)), list(bottom)), [F(v) for v in lam]
    return build()


@settings(max_examples=100, deadline=None)
@given(_perm_and_lengths())
def test_partition_property(data):
    p, lam = data
    iet = build_iet(p, lam)
    images = sorted(iet.image_intervals())
    assert images[0][0] == 0 and images[-1][1] == iet.total
    assert all(a[1] == b[0] for a, b in zip(images, images[1:]))
    # w moves I_a onto f(I_a)
    for (lo, hi), (ilo, ihi), w in zip(iet.intervals(), iet.image_intervals(), iet.w):
        assert lo + w == ilo and hi + w == ihi


@settings(max_examples=100, deadline=None)
@given(_perm_and_lengths(), st.fractions(0, 1))
def test_inverse_and_brute_force(data, u):
    p, lam = data
    iet = build_iet(p, lam)
    x = u * iet.total
    if x == iet.total:
        x = F(0)
    names = [chr(65 + i) for i in range(p.d)]
    f = iet_map([names[a] for a in p.top], [names[a] for a in p.bottom], dict(zip(names, lam)))
    y = evaluate(iet, x)
    assert y == f(x)
    assert evaluate_inverse(iet, y) == x
