import numpy as np
import pytest

from geodesic_lab.errors import OutOfChart
from geodesic_lab.hyperbolic_core import (
    GroupElement,
    closed_orbit_from_word,
    compose,
    reduce_to_domain,
    surface_distance,
    unipotent,
)
from geodesic_lab.product_dynamics import (
    Chart,
    ChartPoint,
    ProductPoint,
    S_map,
    S_inverse,
    chart_frame_matrix,
    chart_frame_matrix_inv,
    chart_to_manifold,
    chart_volume_samples,
    haar_samples,
    manifold_to_chart,
)


@pytest.fixture(scope="module")
def chart(group):
    orb = closed_orbit_from_word(group, (0,))
    return Chart(ProductPoint(orb.base_point, 0.5), (0.05, 0.05, 0.05))


def test_s_map_z_invariance(group, random_points):
    delta = 0.095
    for w in random_points[:100]:
        out = S_map(w, delta)
        assert out.z == w.z  # bitwise


def test_s_map_periodicity_on_the_anchor_orbit(group):
    orb = closed_orbit_from_word(group, (0,))
    m = 32
    delta = orb.length / m
    w = ProductPoint(orb.base_point, 0.37)
    for _ in range(m):
        w = S_map(w, delta)
    assert surface_distance(w.surf, orb.base_point) < 1e-9
    assert w.z == 0.37


def test_s_map_inverse(group, random_points):
    for w in random_points[:20]:
        back = S_inverse(S_map(w, 0.095), 0.095)
        assert surface_distance(back.surf, w.surf) < 1e-10


def test_chart_origin(chart):
    w = chart_to_manifold(ChartPoint(0.0, 0.0, 0.0, 0.3), chart)
    assert surface_distance(w.surf, chart.anchor.surf) < 1e-12
    assert w.z == 0.3


def test_chart_roundtrip(chart):
    rng = np.random.default_rng(2)
    for _ in range(300):
        c = ChartPoint(*(rng.uniform(-0.04, 0.04, 3)), rng.random())
        w = chart_to_manifold(c, chart)
        c2 = manifold_to_chart(w, chart)
        err = max(abs(c.x - c2.x), abs(c.y - c2.y), abs(c.t - c2.t), abs(c.z - c2.z))
        assert err < 1e-10


def test_chart_stable_displacement_closed_form(chart):
    # a point displaced by the stable unipotent 0.01 has coordinates
    # (0, 0.01, 0, z); cross-checked against a direct matrix solve
    g = compose(chart.anchor.surf.rep, unipotent(0.01, "stable"))
    w = ProductPoint(reduce_to_domain(chart.group, g)[0], 0.6)
    c = manifold_to_chart(w, chart)
    assert abs(c.x) < 1e-12 and abs(c.t) < 1e-12
    assert abs(c.y - 0.01) < 1e-12
    m = np.linalg.solve(chart.anchor.surf.rep.m, g.m)
    y_oracle = m[0, 1] / m[1, 1]
    assert abs(c.y - y_oracle) < 1e-14


def test_chart_unstable_axis_is_horocycle(chart):
    # (x, 0, 0, z) traces the unstable horocycle through the anchor
    for x in (0.01, -0.03):
        w = chart_to_manifold(ChartPoint(x, 0.0, 0.0, 0.5), chart)
        hor = reduce_to_domain(
            chart.group, compose(chart.anchor.surf.rep, unipotent(x, "unstable"))
        )[0]
        assert surface_distance(w.surf, hor) < 1e-12


def test_chart_out_of_range(chart):
    with pytest.raises(OutOfChart):
        chart_to_manifold(ChartPoint(0.2, 0.0, 0.0, 0.5), chart)
    far = haar_samples(chart.group, 30, np.random.default_rng(0))
    hits = 0
    for s in far:
        try:
            manifold_to_chart(ProductPoint(s, 0.5), chart)
            hits += 1
        except OutOfChart:
            pass
    assert hits <= 5  # random points are rarely within chart reach


def test_chart_frame_matrix_inverse():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, t = rng.uniform(-0.5, 0.5, 2)
        M = chart_frame_matrix(x, t)
        Mi = chart_frame_matrix_inv(x, t)
        assert np.max(np.abs(M @ Mi - np.eye(4))) < 1e-12
        assert abs(np.linalg.det(M) - 1.0) < 1e-12


def test_chart_axioms_frame_directions(chart):
    # d/dx in the unstable frame direction, d/dt the flow, d/dy stable on
    # the x = t = 0 axis: finite differences against the frame
    h = 1e-7
    base = chart_to_manifold(ChartPoint(0.0, 0.02, 0.0, 0.5), chart)

    def disp(c):
        w = chart_to_manifold(c, chart)
        from geodesic_lab.hyperbolic_core import frame_log

        gi = np.linalg.inv(base.surf.rep.m)
        ball = chart.group.deck_ball(2)
        best = None
        for b in ball:
            v = frame_log(gi @ b @ w.surf.rep.m)
            n = np.linalg.norm(v)
            if best is None or n < best[0]:
                best = (n, v)
        return best[1] / h

    vy = disp(ChartPoint(0.0, 0.02 + h, 0.0, 0.5))
    assert abs(vy[0]) < 1e-6 and abs(vy[2]) < 1e-6  # pure stable
    vt = disp(ChartPoint(0.0, 0.02, h, 0.5))
    assert abs(vt[0]) < 1e-6 and abs(vt[1]) < 1e-6  # pure flow
    vx = disp(ChartPoint(h, 0.02, 0.0, 0.5))
    assert abs(vx[1]) < 1e-4 and abs(vx[2]) < 1e-4  # unstable at the origin


def test_chart_volume_constant(chart):
    rng = np.random.default_rng(5)
    vals = chart_volume_samples(chart, 400, rng)
    assert abs(vals.mean() - 1.0) < 1e-6
    assert (vals.max() - vals.min()) / vals.mean() < 1e-4


def test_haar_sampling_volume(group):
    # acceptance of the polar rejection measures the quotient volume
    rng = np.random.default_rng(8)
    n = 4000
    kept = 0
    total = 0
    from geodesic_lab.hyperbolic_core import dist_to_origin

    gens = group.gen_array()
    r_max = 2.6
    while kept < 400:
        u = rng.random()
        rho = np.arccosh(1.0 + u * (np.cosh(r_max) - 1.0))
        phi = rng.random() * 2 * np.pi
        th = rng.random() * np.pi
        cph, sph = np.cos(phi / 2), np.sin(phi / 2)
        ch, sh = np.cosh(rho / 2), np.sinh(rho / 2)
        ct, st = np.cos(th / 2), np.sin(th / 2)
        g = (
            np.array([[cph, sph], [-sph, cph]])
            @ np.array([[ch, sh], [sh, ch]])
            @ np.array([[ct, st], [-st, ct]])
        )
        total += 1
        d0 = dist_to_origin(g)
        if all(dist_to_origin(gens[k] @ g) >= d0 - 1e-14 for k in range(8)):
            kept += 1
    ball_vol = 2 * np.pi * (np.cosh(r_max) - 1.0) * np.pi
    vol = kept / total * ball_vol
    assert abs(vol - 4 * np.pi**2) / (4 * np.pi**2) < 0.15
