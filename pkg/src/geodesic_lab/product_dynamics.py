"""The product system: surface x interval, its unperturbed map, and charts.

The chart at an anchor ``A`` factors nearby group elements as
``A u_stable(y) u_unstable(x) a_t`` with the interval coordinate ``z``
passed through.  In these coordinates the invariant volume is exactly
``dx dy dt dz`` (the factorization has unit Jacobian against the
left-invariant frame), ``d/dx`` and ``d/dt`` lie in the unstable and flow
directions everywhere, and ``d/dy`` is stable along ``x = t = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfChart, Singular
from .hyperbolic_core import (
    FuchsianGroup,
    GroupElement,
    SurfacePoint,
    compose,
    flow_matrix,
    frame_log,
    geodesic_step,
    reduce_to_domain,
)

__all__ = [
    "ProductPoint",
    "Chart",
    "ChartPoint",
    "S_map",
    "S_inverse",
    "chart_to_manifold",
    "manifold_to_chart",
    "chart_frame_matrix",
    "frame_at",
    "tangent_components",
    "haar_samples",
]


@dataclass(frozen=True)
class ProductPoint:
    """State of the four-dimensional system: tangent vector plus z in [0,1]."""

    surf: SurfacePoint
    z: float

    def __post_init__(self):
        if not (0.0 <= self.z <= 1.0):
            raise ValueError(f"z = {self.z} outside [0, 1]")


@dataclass(frozen=True)
class ChartPoint:
    x: float
    y: float
    t: float
    z: float

    def coords(self) -> np.ndarray:
        return np.array([self.x, self.y, self.t, self.z])


@dataclass(frozen=True)
class Chart:
    """Local coordinates anchored at a point; z keeps its global meaning."""

    anchor: ProductPoint
    half_widths: tuple[float, float, float]
    _anchor_translates: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def group(self) -> FuchsianGroup:
        return self.anchor.surf.group

    def anchor_inverse_translates(self) -> np.ndarray:
        """Precomputed ``(A^{-1} deck)`` matrices used to localize points."""
        if self._anchor_translates is not None:
            return self._anchor_translates
        ainv = self.anchor.surf.rep.inv().m
        ball = self.group.deck_ball(2)
        # deck acts on the left of the candidate, so fold A^{-1} gamma^{-1}
        mats = np.einsum("ij,njk->nik", ainv, np.linalg.inv(ball))
        object.__setattr__(self, "_anchor_translates", mats)
        return mats


def S_map(w: ProductPoint, delta: float) -> ProductPoint:
    """The unperturbed map: geodesic time-delta on the surface, z fixed."""
    return ProductPoint(geodesic_step(w.surf, delta), w.z)


def S_inverse(w: ProductPoint, delta: float) -> ProductPoint:
    return ProductPoint(geodesic_step(w.surf, -delta), w.z)


def _factor_usd(m: np.ndarray):
    """Solve ``m = u_stable(y) u_unstable(x) a_t`` in closed form.

    The factorization reads off ``t`` from the bottom-right entry, then the
    two unipotent parameters; it exists whenever that entry is nonzero.
    """
    m = np.asarray(m, float)
    d = m[1, 1]
    if abs(d) < 1e-12:
        raise Singular("factorization denominator vanished")
    if d < 0:
        m = -m
        d = -d
    t = -2.0 * np.log(d)
    y = m[0, 1] / d
    x = m[1, 0] * d
    return x, y, t


def chart_to_manifold(c: ChartPoint, chart: Chart) -> ProductPoint:
    """Map chart coordinates to the manifold (anchor * u_s(y) u_u(x) a_t, z)."""
    hx, hy, ht = chart.half_widths
    if abs(c.x) > hx or abs(c.y) > hy or abs(c.t) > ht:
        raise OutOfChart(f"{c} outside half-widths {chart.half_widths}")
    m = chart.anchor.surf.rep.m @ np.array(
        [[1.0 + c.x * c.y, c.y], [c.x, 1.0]]
    ) @ np.array([[np.exp(c.t / 2.0), 0.0], [0.0, np.exp(-c.t / 2.0)]])
    surf = reduce_to_domain(chart.group, GroupElement(m))[0]
    return ProductPoint(surf, c.z)


def manifold_to_chart(w: ProductPoint, chart: Chart) -> ChartPoint:
    """Invert the chart factorization, searching deck translates of ``w``."""
    hx, hy, ht = chart.half_widths
    best = None
    for am in chart.anchor_inverse_translates():
        m = am @ w.surf.rep.m
        try:
            x, y, t = _factor_usd(m)
        except Singular:
            continue
        if abs(x) <= hx and abs(y) <= hy and abs(t) <= ht:
            score = abs(x) + abs(y) + abs(t)
            if best is None or score < best[0]:
                best = (score, x, y, t)
    if best is None:
        raise OutOfChart("point is not within chart range of the anchor")
    _, x, y, t = best
    return ChartPoint(x, y, t, w.z)


def in_chart(w: ProductPoint, chart: Chart) -> bool:
    try:
        manifold_to_chart(w, chart)
        return True
    except OutOfChart:
        return False


def chart_frame_matrix(x: float, t: float) -> np.ndarray:
    """Differential of the chart map in the invariant frame, closed form.

    Columns are the images of d/dx, d/dy, d/dt, d/dz expressed in the
    (unstable, stable, flow, interval) frame at the image point; the
    determinant is identically 1, which is the chart volume statement.
    """
    et = np.exp(t)
    return np.array(
        [
            [et, -x * x * et, 0.0, 0.0],
            [0.0, 1.0 / et, 0.0, 0.0],
            [0.0, 2.0 * x, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def chart_frame_matrix_inv(x: float, t: float) -> np.ndarray:
    et = np.exp(t)
    return np.array(
        [
            [1.0 / et, x * x * et, 0.0, 0.0],
            [0.0, et, 0.0, 0.0],
            [0.0, -2.0 * x * et, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def frame_at(w: ProductPoint):
    """The four invariant directions at ``w`` as tangent representatives.

    Surface directions are returned as matrices ``rep * B`` with ``B`` in
    {F, E, H}; the interval direction is the unit z-vector.  The frame is
    chart-independent: components of any tangent vector against it are
    obtained by left-translating back to the identity.
    """
    g = w.surf.rep.m
    F = np.array([[0.0, 0.0], [1.0, 0.0]])
    E = np.array([[0.0, 1.0], [0.0, 0.0]])
    H = np.array([[0.5, 0.0], [0.0, -0.5]])
    return (g @ F, g @ E, g @ H, np.array([0.0, 0.0, 0.0, 1.0]))


def tangent_components(base: SurfacePoint, displaced: SurfacePoint, h: float) -> np.ndarray:
    """Finite-difference frame components of a surface displacement.

    Computes ``log(base^{-1} displaced) / h`` in the (u, s, c) frame, with
    the deck translate chosen to make the logarithm small.
    """
    gi = base.rep.inv().m
    ball = base.group.deck_ball(2)
    best = None
    for b in ball:
        m = gi @ b @ displaced.rep.m
        v = frame_log(m)
        n = np.linalg.norm(v)
        if best is None or n < best[0]:
            best = (n, v)
    return best[1] / h


def chart_volume_samples(chart: Chart, n: int, rng: np.random.Generator,
                         h: float = 2e-6) -> np.ndarray:
    """Monte Carlo samples of the chart's volume-form Jacobian.

    At random chart points, central differences of the chart map along the
    four coordinate directions are expressed in the invariant frame at the
    image; the returned values are the determinants of those frames, which
    must be constant (and equal to one) for the chart to carry the product
    volume.
    """
    hx, hy, ht = chart.half_widths
    group = chart.group
    ball = group.deck_ball(2)
    anchor = chart.anchor.surf.rep.m
    vals = np.empty(n)
    for i in range(n):
        c = ChartPoint(
            (2.0 * rng.random() - 1.0) * hx * 0.9,
            (2.0 * rng.random() - 1.0) * hy * 0.9,
            (2.0 * rng.random() - 1.0) * ht * 0.9,
            0.05 + 0.9 * rng.random(),
        )
        w0 = chart_to_manifold(c, chart)
        gi = np.linalg.inv(w0.surf.rep.m)
        # the deck translate aligning the image with the unreduced chart
        # matrix is shared by all nearby difference points
        raw = anchor @ np.array(
            [[1.0 + c.x * c.y, c.y], [c.x, 1.0]]
        ) @ np.array([[np.exp(c.t / 2.0), 0.0], [0.0, np.exp(-c.t / 2.0)]])
        best = None
        for b in ball:
            v = frame_log(gi @ b @ raw)
            nn = np.linalg.norm(v)
            if best is None or nn < best[0]:
                best = (nn, b)
        gib = gi @ best[1]
        cols = np.zeros((4, 4))
        cols[3, 3] = 1.0
        for k in range(3):
            cp = [c.x, c.y, c.t]
            cm = [c.x, c.y, c.t]
            cp[k] += h
            cm[k] -= h

            def raw_mat(cc):
                return anchor @ np.array(
                    [[1.0 + cc[0] * cc[1], cc[1]], [cc[0], 1.0]]
                ) @ np.array(
                    [[np.exp(cc[2] / 2.0), 0.0], [0.0, np.exp(-cc[2] / 2.0)]]
                )

            vp = frame_log(gib @ raw_mat(cp))
            vm = frame_log(gib @ raw_mat(cm))
            cols[:3, k] = (vp - vm) / (2.0 * h)
        vals[i] = abs(np.linalg.det(cols))
    return vals


def haar_samples(group: FuchsianGroup, n: int, rng: np.random.Generator, r_max: float = 2.6):
    """Volume-uniform samples of the quotient, by polar rejection.

    Draws uniformly from the metric ball of radius ``r_max`` (which contains
    the Dirichlet octagon) in base-point polar coordinates with a uniform
    frame angle, and keeps exactly the already-reduced draws.
    """
    out = []
    gens = group.gen_array()
    from .hyperbolic_core import dist_to_origin

    while len(out) < n:
        m = int((n - len(out)) * 2.8) + 8
        u = rng.random(m)
        rho = np.arccosh(1.0 + u * (np.cosh(r_max) - 1.0))
        phi = rng.random(m) * 2.0 * np.pi
        theta = rng.random(m) * np.pi
        for i in range(m):
            cph, sph = np.cos(phi[i] / 2.0), np.sin(phi[i] / 2.0)
            ch, sh = np.cosh(rho[i] / 2.0), np.sinh(rho[i] / 2.0)
            ct, st = np.cos(theta[i] / 2.0), np.sin(theta[i] / 2.0)
            g = (
                np.array([[cph, sph], [-sph, cph]])
                @ np.array([[ch, sh], [sh, ch]])
                @ np.array([[ct, st], [-st, ct]])
            )
            d0 = dist_to_origin(g)
            reduced = True
            for k in range(8):
                if dist_to_origin(gens[k] @ g) < d0 - 1e-14:
                    reduced = False
                    break
            if reduced:
                out.append(SurfacePoint(group, GroupElement(g)))
                if len(out) == n:
                    break
    return out
