import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodesic_lab.errors import NotHyperbolic
from geodesic_lab.hyperbolic_core import (
    GroupElement,
    approximating_orbit,
    closed_orbit_from_word,
    compose,
    covering_distance,
    flow_matrix,
    frame_norm,
    geodesic_step,
    horocycle_step,
    octagon_group,
    reduce_to_domain,
    surface_distance,
    unipotent,
)

RNG = np.random.default_rng(7)


def random_reduced(group, n, max_len=10, rng=RNG):
    pts = []
    for _ in range(n):
        g = GroupElement(np.eye(2))
        for _ in range(rng.integers(1, max_len)):
            g = compose(g, group.generators[rng.integers(0, 8)])
        pts.append(reduce_to_domain(group, g)[0])
    return pts


def test_relation_word_is_identity(group):
    assert group.relation_defect() < 1e-10


def test_generators_are_hyperbolic(group):
    for g in group.generators:
        assert abs(g.trace) > 2.0


def test_compose_identity_and_inverse(group):
    g0 = group.generators[0]
    assert compose(GroupElement(np.eye(2)), g0).close_to(g0, 1e-14)
    assert compose(g0, g0.inv()).close_to(GroupElement(np.eye(2)), 1e-12)


def test_compose_matches_entrywise_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m1 = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        m2 = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        m1 = m1 / np.sqrt(abs(np.linalg.det(m1)))
        m2 = m2 / np.sqrt(abs(np.linalg.det(m2)))
        if np.linalg.det(m1) < 0 or np.linalg.det(m2) < 0:
            continue
        g = compose(GroupElement(m1), GroupElement(m2))
        # independent entrywise product
        oracle = np.array(
            [
                [m1[0, 0] * m2[0, 0] + m1[0, 1] * m2[1, 0],
                 m1[0, 0] * m2[0, 1] + m1[0, 1] * m2[1, 1]],
                [m1[1, 0] * m2[0, 0] + m1[1, 1] * m2[1, 0],
                 m1[1, 0] * m2[0, 1] + m1[1, 1] * m2[1, 1]],
            ]
        )
        assert g.close_to(GroupElement(oracle), 1e-12)


def test_geodesic_step_identity_and_group_law(group):
    p = random_reduced(group, 5)
    for pt in p:
        assert geodesic_step(pt, 0.0).rep.close_to(pt.rep, 1e-14)
    rng = np.random.default_rng(3)
    for pt in p:
        s, t = rng.uniform(-5, 5, 2)
        a = geodesic_step(geodesic_step(pt, s), t)
        b = geodesic_step(pt, s + t)
        assert surface_distance(a, b) < 1e-10


def test_geodesic_step_distance_bound(group):
    rng = np.random.default_rng(5)
    for pt in random_reduced(group, 100, rng=rng):
        t = rng.uniform(-3, 3)
        d = surface_distance(geodesic_step(pt, t), pt)
        assert d <= abs(t) + 1e-9


def test_horocycle_identity(group):
    for pt in random_reduced(group, 5):
        assert horocycle_step(pt, 0.0, "unstable").rep.close_to(pt.rep, 1e-14)


def test_horocycle_conjugation_law():
    # flow after unstable move = scaled unstable move after flow, exactly
    rng = np.random.default_rng(9)
    for _ in range(1000):
        r = rng.uniform(-1, 1)
        t = rng.uniform(-2, 2)
        lhs = unipotent(r, "unstable").m @ flow_matrix(t).m
        rhs = flow_matrix(t).m @ unipotent(r * np.exp(t), "unstable").m
        assert np.max(np.abs(lhs - rhs)) < 1e-12
        lhs = unipotent(r, "stable").m @ flow_matrix(t).m
        rhs = flow_matrix(t).m @ unipotent(r * np.exp(-t), "stable").m
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_stable_horocycle_contraction(group):
    p = random_reduced(group, 3)
    for pt in p:
        q = horocycle_step(pt, 0.1, "stable")
        for T in range(1, 11):
            d = surface_distance(geodesic_step(pt, float(T)),
                                 geodesic_step(q, float(T)))
            assert d < 0.1 * np.exp(-T) * 1.01


def test_reduce_idempotent_and_deck_invariant(group):
    rng = np.random.default_rng(11)
    for pt in random_reduced(group, 100, rng=rng):
        # idempotence is exact: no generator strictly improves
        again, word = reduce_to_domain(group, pt.rep)
        assert not word
        assert np.array_equal(again.rep.m, pt.rep.m)
        # deck invariance for a one-generator translate
        k = int(rng.integers(0, 8))
        moved = GroupElement(group.generators[k].m @ pt.rep.m)
        back = reduce_to_domain(group, moved)[0]
        assert surface_distance(back, pt) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=7), min_size=1, max_size=20))
def test_reduce_idempotence_property(word):
    group = octagon_group()
    g = group.word(word)
    p, _ = reduce_to_domain(group, g)
    again, w2 = reduce_to_domain(group, p.rep)
    assert not w2
    assert np.array_equal(again.rep.m, p.rep.m)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.integers(min_value=0, max_value=7), min_size=1, max_size=8),
    st.integers(min_value=0, max_value=7),
)
def test_reduce_deck_invariance_property(word, k):
    # the float representation of a word only pins the coset down to
    # eps * cond, and cond grows like e^{1.53 len}; the tolerance follows
    group = octagon_group()
    g = group.word(word)
    p1 = reduce_to_domain(group, g)[0]
    p2 = reduce_to_domain(group, compose(group.generators[k], g))[0]
    # worst case (a repeated generator) has cond = e^{3.06 len}
    tol = min(1e-3, max(1e-9, 1e-14 * np.exp(3.1 * (len(word) + 1))))
    assert surface_distance(p1, p2) < tol


def test_closed_orbit_length_and_eigenvalue_oracle(group):
    orb = closed_orbit_from_word(group, (0,))
    tr = abs(orb.axis_element.trace)
    assert abs(orb.length - 2.0 * np.arccosh(tr / 2.0)) < 1e-12
    lam = np.max(np.abs(np.linalg.eigvals(orb.axis_element.m)))
    assert abs(orb.length - 2.0 * np.log(lam)) < 1e-12


def test_closed_orbit_conjugation_invariance(group):
    # conjugating the word by a generator preserves the length
    l1 = closed_orbit_from_word(group, (0,)).length
    l2 = closed_orbit_from_word(group, (1, 0, 5)).length
    assert abs(l1 - l2) < 1e-12
    l3 = closed_orbit_from_word(group, (0, 1)).length
    l4 = closed_orbit_from_word(group, (2, 0, 1, 6)).length
    assert abs(l3 - l4) < 1e-12


def test_closed_orbit_empty_word_raises(group):
    with pytest.raises(NotHyperbolic):
        closed_orbit_from_word(group, ())


def test_closed_orbit_base_point_periodic(group):
    for word in [(0,), (1,), (0, 1), (2, 5, 2)]:
        orb = closed_orbit_from_word(group, word)
        back = geodesic_step(orb.base_point, orb.length)
        assert surface_distance(back, orb.base_point) < 1e-9


def test_approximating_orbit_basics(group):
    target = closed_orbit_from_word(group, (1,))
    a1 = approximating_orbit(target, 1)
    assert a1.length > 0
    back = geodesic_step(a1.base_point, a1.length)
    assert surface_distance(back, a1.base_point) < 1e-8
    for k in (2, 4, 8):
        ak = approximating_orbit(target, k)
        assert abs(abs(ak.axis_element.trace) - abs(target.axis_element.trace)) > 1e-9


def test_approximating_orbit_distances_decrease(group):
    target = closed_orbit_from_word(group, (1,))
    ds = [covering_distance(target, approximating_orbit(target, k), n=150)
          for k in (2, 4, 8)]
    assert ds[0] >= ds[1] >= ds[2]


def test_surface_distance_axioms(group):
    pts = random_reduced(group, 20)
    for p in pts[:5]:
        assert surface_distance(p, p) == 0.0
    rng = np.random.default_rng(13)
    for _ in range(20):
        i, j = rng.integers(0, len(pts), 2)
        d1 = surface_distance(pts[i], pts[j])
        d2 = surface_distance(pts[j], pts[i])
        assert abs(d1 - d2) < 1e-12


def test_expansion_rate_in_frame(group):
    # derivative of the flow map on horocycle displacements: e^{t}, e^{-t}
    p = random_reduced(group, 1)[0]
    h = 1e-7
    t = 0.8
    for kind, rate in (("unstable", np.exp(t)), ("stable", np.exp(-t))):
        a = geodesic_step(horocycle_step(p, h, kind), t)
        b = geodesic_step(p, t)
        ratio = surface_distance(a, b) / h
        assert abs(ratio / rate - 1.0) < 1e-6
