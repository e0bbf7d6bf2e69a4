"""Heteroclinic points, holonomy between close orbits, su-legs, and the
interval-drift experiment.

Everything at the surface level is exact: leaf intersections are
closed-form unipotent/diagonal factorizations in the matrix group.  Legs
of perturbed maps refine their interval coordinate by bisection on the
defining convergence property of the stable/unstable set, then certify
the residual decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import NoConvergence, NotFound, Singular
from .hyperbolic_core import (
    ClosedOrbit,
    GroupElement,
    SurfacePoint,
    _frame_norm_batch,
    compose,
    flow_matrix,
    frame_norm,
    geodesic_step,
    reduce_to_domain,
    surface_distance,
    unipotent,
)
from .product_dynamics import ProductPoint

__all__ = [
    "HeteroclinicData",
    "find_heteroclinics",
    "holonomy",
    "holonomy_displacement",
    "su_leg",
    "accessibility_drift",
    "DriftReport",
]


@dataclass(frozen=True)
class HeteroclinicData:
    """The two connecting points between the anchor fiber and the partner
    orbit.

    ``q1 = p u_unstable(x_param)`` lies on the global stable leaf of the
    partner orbit, with foot ``p1`` at orbit coordinate ``tau1`` and leaf
    parameter ``s_param``; ``q2`` is the symmetric point on the global
    unstable leaf.  ``n1``/``n2`` are the leaf-locality indices.
    """

    q1: SurfacePoint
    p1: SurfacePoint
    x_param: float
    s_param: float
    tau1: float
    n1: int
    q2: SurfacePoint
    p2: SurfacePoint
    y_param: float
    r_param: float
    tau2: float
    n2: int


def heteroclinic_candidates(
    p: SurfacePoint,
    c_prime: ClosedOrbit,
    eps0: float,
    eps1: float,
    deck_depth: int = 4,
):
    """All admissible heteroclinic connections, sorted by leaf parameter.

    Each deck translate of the partner orbit's lift contributes one
    intersection of its weak-stable (resp. weak-unstable) leaf with the
    unstable (resp. stable) horocycle of ``p``, solved exactly.  A hit is
    admissible when the horocycle parameter sits in the (2 eps1, eps0]
    window; short leaf parameters come first so the connection is as local
    as the group allows.
    """
    group = p.group
    ball = group.deck_ball(deck_depth)
    base_inv = c_prime.base_point.rep.inv().m
    rel = np.einsum("ij,njk,kl->nil", base_inv, np.linalg.inv(ball), p.rep.m)

    stable_side = []  # (|s|, x, s, tau, ball index)
    unstable_side = []
    for i in range(rel.shape[0]):
        m = rel[i]
        # stable-side leaf: solve a_tau u_+(s) = M u_-(x)
        mm = m if m[1, 1] > 0 else -m
        if mm[1, 1] > 1e-12:
            x = -mm[1, 0] / mm[1, 1]
            s = mm[0, 1] * mm[1, 1]
            tau = -2.0 * np.log(mm[1, 1])
            if 2.0 * eps1 < abs(x) <= eps0:
                stable_side.append((abs(s), x, s, tau, i))
        # unstable-side leaf: solve a_tau u_-(r) = M u_+(y)
        mm = m if m[0, 0] > 0 else -m
        if mm[0, 0] > 1e-12:
            y = -mm[0, 1] / mm[0, 0]
            r = mm[1, 0] * mm[0, 0]
            tau = 2.0 * np.log(mm[0, 0])
            if 2.0 * eps1 < abs(y) <= eps0:
                unstable_side.append((abs(r), y, r, tau, i))
    stable_side.sort(key=lambda c: c[0])
    unstable_side.sort(key=lambda c: c[0])
    return stable_side, unstable_side, ball


def find_heteroclinics(
    p: SurfacePoint,
    c_prime: ClosedOrbit,
    eps0: float,
    eps1: float,
    delta: float,
    deck_depth: int = 4,
    pick: tuple[int, int] = (0, 0),
) -> HeteroclinicData:
    """The two heteroclinic connections (by default the most local ones)."""
    stable_side, unstable_side, ball = heteroclinic_candidates(
        p, c_prime, eps0, eps1, deck_depth
    )
    if not stable_side or not unstable_side:
        raise NotFound(
            f"no heteroclinic point in the ({2 * eps1:.3g}, {eps0:.3g}] window "
            f"at deck depth {deck_depth}; increase the depth"
        )
    if pick[0] >= len(stable_side) or pick[1] >= len(unstable_side):
        raise NotFound("heteroclinic candidate index out of range")
    group = p.group
    _, x, s, tau1, i1 = stable_side[pick[0]]
    _, y, r, tau2, i2 = unstable_side[pick[1]]
    w1 = GroupElement(ball[i1] @ c_prime.base_point.rep.m)
    w2 = GroupElement(ball[i2] @ c_prime.base_point.rep.m)
    p1 = reduce_to_domain(group, compose(w1, flow_matrix(tau1)))[0]
    p2 = reduce_to_domain(group, compose(w2, flow_matrix(tau2)))[0]
    q1 = reduce_to_domain(group, compose(p.rep, unipotent(x, "unstable")))[0]
    q2 = reduce_to_domain(group, compose(p.rep, unipotent(y, "stable")))[0]
    n1 = leaf_locality_index(s, eps0, delta)
    n2 = leaf_locality_index(r, eps0, delta)
    L = c_prime.length
    return HeteroclinicData(
        q1, p1, x, s, tau1 % L, n1, q2, p2, y, r, tau2 % L, n2
    )


def leaf_locality_index(param: float, eps0: float, delta: float) -> int:
    """Smallest positive n with |param| e^{-n delta} <= eps0."""
    if abs(param) <= eps0 * np.exp(-delta):
        return 1
    return max(1, int(np.ceil(np.log(abs(param) / eps0) / delta)))


# ---------------------------------------------------------------------------
# holonomy of two nearby closed orbits (exact four-leg quadrilateral)

def _nearest_lift(x0: SurfacePoint, orbit: ClosedOrbit, n_samples: int = 1024):
    """The lift of ``orbit`` passing closest to ``x0``.

    Returns (distance, lift matrix W); the leaves used by the holonomy
    quadrilateral are the triangular-subgroup orbits of W.
    """
    ball = x0.group.deck_ball(2)
    gi = x0.rep.inv().m
    mats = orbit.sample_mats(n_samples)
    rel = np.einsum("ij,njk,mkl->nmil", gi, ball, mats)
    norms = _frame_norm_batch(rel)
    n_idx, m_idx = np.unravel_index(np.argmin(norms), norms.shape)
    w = ball[n_idx] @ mats[m_idx]
    return float(norms[n_idx, m_idx]), w


def _displacement_from_lift(w_mat: np.ndarray, x0_mat: np.ndarray):
    """Holonomy displacement given the nearby lift: 2 log |a d| of the
    relative matrix.  Raises Singular when the factorizations degenerate."""
    w_inv = np.array(
        [[w_mat[1, 1], -w_mat[0, 1]], [-w_mat[1, 0], w_mat[0, 0]]]
    ) / np.sqrt(abs(np.linalg.det(w_mat)))
    m = w_inv @ x0_mat
    if m[0, 0] + m[1, 1] < 0:
        m = -m
    a, d = m[0, 0], m[1, 1]
    if abs(a) < 1e-12 or abs(d) < 1e-12:
        raise Singular("holonomy factorization denominator vanished")
    return 2.0 * np.log(abs(a * d)), m


def holonomy(x0: SurfacePoint, c_prime: ClosedOrbit, c_eps: ClosedOrbit):
    """Return map of the four-leg su-quadrilateral through the nearby orbit.

    The four leaf intersections collapse, exactly, to a flow move of the
    start point: the first two legs land on the nearby orbit, the last two
    return to the orbit of ``x0``.  Returns (SurfacePoint, displacement).
    """
    d, w_mat = _nearest_lift(x0, c_eps)
    if d > 0.5:
        raise Singular(f"orbits are {d:.3g} apart; holonomy needs proximity")
    disp, _ = _displacement_from_lift(w_mat, x0.rep.m)
    return geodesic_step(x0, disp), disp


def holonomy_displacement(
    x0: SurfacePoint, c_prime: ClosedOrbit, c_eps: ClosedOrbit
) -> float:
    return holonomy(x0, c_prime, c_eps)[1]


def quadrilateral_legs(x0: SurfacePoint, c_eps: ClosedOrbit):
    """The four leaf parameters of the holonomy quadrilateral at ``x0``.

    Returns ((y1, sigma2, y3, sigma4), x4): the stable, unstable, stable,
    unstable parameters of the four exact intersections, and the endpoint
    ``x4 = x0`` flowed by the displacement.
    """
    d, w_mat = _nearest_lift(x0, c_eps)
    disp, m = _displacement_from_lift(w_mat, x0.rep.m)
    a, b, c, dd = m.ravel()
    y1 = -b / a
    sigma2 = -c * a
    y3 = b / (dd * a * a)
    sigma4 = c * dd * a * a
    x4 = geodesic_step(x0, disp)
    return (y1, sigma2, y3, sigma4), x4


# ---------------------------------------------------------------------------
# su-legs for the product maps

def shadow_window(r: float, delta: float, floor: float = 1e-9) -> int:
    """Iteration count matching the contraction of a leg of size ``r``.

    Long enough for the separation to fall below ``floor`` at the flow
    rate, short enough that rounding noise re-expanded along the opposite
    direction has not surfaced yet.
    """
    n = int(np.ceil(np.log(max(abs(r), 1e-4) / floor) / delta))
    return max(60, min(n, 400))


def su_leg(system, w: ProductPoint, kind: str, r: float, map_name: str = "S",
           n_shadow: int | None = None, residual_tol: float = 1e-7) -> ProductPoint:
    """The point at horocycle parameter ``r`` on the leaf of ``w``.

    For the unperturbed map (or legs that never meet a support) this is
    the exact horocycle with the interval coordinate copied.  Otherwise
    the interval coordinate comes from bisection on the convergence
    property, and the residual decay is certified.
    """
    if r == 0.0:
        return w
    group = w.surf.group
    base = reduce_to_domain(group, compose(w.surf.rep, unipotent(r, kind)))[0]
    if map_name == "S":
        return ProductPoint(base, w.z)
    if n_shadow is None:
        n_shadow = shadow_window(r, system.cfg.delta)
    stable = kind == "stable"
    z_sol = _leaf_point_z(system, w, base, map_name, stable, n_shadow)
    out = ProductPoint(base, z_sol)
    sep = _leg_separation(system, out, w, map_name, stable, n_shadow)
    if sep > residual_tol:
        raise NoConvergence(
            f"leg residual {sep:.3g} above {residual_tol:.1g} after {n_shadow} steps"
        )
    return out


def _leaf_point_z(system, anchor: ProductPoint, target: SurfacePoint,
                  map_name: str, stable: bool, n_steps: int,
                  tol: float = 1e-14) -> float:
    """Interval coordinate of the leaf point of ``anchor`` over ``target``.

    Bisection on the difference of interval coordinates after ``n_steps``
    of the map (forward for stable legs, backward for unstable ones); the
    boundary levels are fixed, so the bracket is always valid.
    """
    pk = system.pack
    map_id = {"S": 0, "R": 1, "Q": 2, "P": 3}[map_name]
    direction = 1 if stable else -1
    a2, b2, c2, d2 = anchor.surf.rep.m.ravel()
    ref = K.evolve(a2, b2, c2, d2, anchor.z, pk, map_id, n_steps, direction)
    if not ref[5]:
        raise NoConvergence("reference orbit failed")
    zref = ref[4]
    a1, b1, c1, d1 = target.rep.m.ravel()

    def gap(z_try):
        s = K.evolve(a1, b1, c1, d1, z_try, pk, map_id, n_steps, direction)
        if not s[5]:
            raise NoConvergence("candidate orbit failed")
        return s[4] - zref

    lo, hi = 0.0, 1.0
    if not (gap(lo) <= 0.0 <= gap(hi)):
        raise NoConvergence("leaf bisection is not bracketed")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if gap(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _leg_separation(system, w1: ProductPoint, w2: ProductPoint,
                    map_name: str, stable: bool, n_steps: int) -> float:
    """4-D separation of the two orbits after ``n_steps`` (residual)."""
    pk = system.pack
    map_id = {"S": 0, "R": 1, "Q": 2, "P": 3}[map_name]
    direction = 1 if stable else -1
    a1, b1, c1, d1 = w1.surf.rep.m.ravel()
    a2, b2, c2, d2 = w2.surf.rep.m.ravel()
    s1 = K.evolve(a1, b1, c1, d1, w1.z, pk, map_id, n_steps, direction)
    s2 = K.evolve(a2, b2, c2, d2, w2.z, pk, map_id, n_steps, direction)
    g1 = reduce_to_domain(
        system.group, GroupElement(np.array([[s1[0], s1[1]], [s1[2], s1[3]]]))
    )[0]
    g2 = reduce_to_domain(
        system.group, GroupElement(np.array([[s2[0], s2[1]], [s2[2], s2[3]]]))
    )[0]
    return surface_distance(g1, g2) + abs(s1[4] - s2[4])


# ---------------------------------------------------------------------------
# the drift experiment

@dataclass
class DriftReport:
    z0: float
    z1: float
    z2: float
    z3: float
    z4: float
    z5: float
    bound_rhs: float
    legs_ok: bool
    holonomy_steps: int
    residuals: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def _holonomy_chain(system, start_tau: float, end_tau: float,
                    c_prime: ClosedOrbit, c_eps: ClosedOrbit,
                    max_steps: int = 200000):
    """Walk from one orbit coordinate to another by holonomy returns.

    The displacement is constant along a lift's validity window, so the
    lift is cached and re-searched only when its factorization degrades.
    Returns (steps, closing_gap, notes).
    """
    L = c_prime.length
    gap = (end_tau - start_tau) % L
    if gap > L / 2.0:
        gap -= L
    x = c_prime.point_at(start_tau)
    d, w_mat = _nearest_lift(x, c_eps)
    disp, _ = _displacement_from_lift(w_mat, x.rep.m)
    if disp == 0.0:
        raise Singular("holonomy displacement vanished; orbits coincide")
    notes = []
    forward = disp > 0
    if (gap > 0) != forward:
        # walk the long way around: accessibility only needs arrival
        gap = gap - np.sign(gap) * L
        notes.append("holonomy direction opposes the short arc; walking around")
    steps = 0
    travelled = 0.0
    pos_mat = x.rep.m
    while abs(gap - travelled) > abs(disp) and steps < max_steps:
        pos_mat = pos_mat @ flow_matrix(disp).m
        travelled += disp
        steps += 1
        if steps % 64 == 0:
            try:
                disp_new, m = _displacement_from_lift(w_mat, pos_mat)
                cond = abs(m[0, 1]) + abs(m[1, 0])
                if cond > 0.75:
                    raise Singular("stale lift")
                disp = disp_new
            except Singular:
                xr = reduce_to_domain(system.group, GroupElement(pos_mat))[0]
                d, w_mat = _nearest_lift(xr, c_eps)
                disp, _ = _displacement_from_lift(w_mat, xr.rep.m)
                if disp == 0.0:
                    raise
    return steps, float(gap - travelled), notes


def accessibility_drift(system, z0: float, map_name: str = "R",
                        holonomy_k: int = 2) -> DriftReport:
    """Run the four-leg loop from (p, z0) back to the fiber of p.

    Legs: unstable to the first heteroclinic point, stable into the
    partner orbit (interval coordinate constant: the leaf avoids every
    support, which is checked), a holonomy-chained walk along the partner
    orbit, unstable out to the second heteroclinic point, and stable back
    to the fiber of p, which determines the final interval coordinate.
    """
    od = system.orbit_data
    het = od.het
    p = od.p
    notes = []
    residuals = {}
    n_steps = shadow_window(het.x_param, system.cfg.delta)

    start = ProductPoint(p, z0)
    if map_name == "S":
        z1 = z0
    else:
        z1 = _leaf_point_z(system, start, het.q1, map_name, stable=False,
                           n_steps=n_steps)
        out1 = ProductPoint(het.q1, z1)
        residuals["leg1"] = _leg_separation(
            system, out1, start, map_name, False, n_steps
        )

    # leg 2: the pulled-back stable leaf from q1 to the partner orbit is
    # unperturbed, so the interval coordinate rides through unchanged;
    # sample the leaf segment and check it misses every support.
    z2 = z1
    for frac in (0.0, 0.33, 0.66, 1.0):
        seg = reduce_to_domain(
            system.group,
            compose(het.q1.rep, unipotent(-frac * het.s_param, "stable")),
        )[0]
        if any(system.support_flags(ProductPoint(seg, z1))):
            notes.append(f"leg-2 leaf point at fraction {frac} inside a support")

    steps, closing, chain_notes = _holonomy_chain(
        system, het.tau1, het.tau2, od.c_prime, od.approximants[holonomy_k]
    )
    notes.extend(chain_notes)
    if abs(closing) > 0.05:
        notes.append(f"holonomy chain stopped {closing:.3g} short")
    z3 = z2
    z4 = z3

    if map_name == "S":
        z5 = z4
    else:
        start5 = ProductPoint(het.q2, z4)
        z5 = _leaf_point_z(system, start5, p, map_name, stable=True,
                           n_steps=n_steps)
        out5 = ProductPoint(p, z5)
        residuals["leg5"] = _leg_separation(
            system, out5, start5, map_name, True, n_steps
        )

    # comparison bound: the backward composition misses exactly ell + 1
    # departure kicks relative to the anchor fiber (the step order applies
    # the field inverse before the flow), so the tight bound is ell + 1
    # inverse field maps applied to (p, z0).
    ell_eff = od.ell + 1
    wb = ProductPoint(p, z0)
    for _ in range(ell_eff):
        wb = system.h1_map(wb, direction=-1)
    legs_ok = all(v <= 1e-7 for v in residuals.values())
    return DriftReport(z0, z1, z2, z3, z4, z5, wb.z, legs_ok, steps,
                       residuals, notes)
