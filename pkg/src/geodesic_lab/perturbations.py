"""Construction of the perturbed system: supports, packs, composed maps.

``build_system`` assembles the full pipeline: the anchor orbit and its
partner, the two heteroclinic connections, the bump suite (with the
interval amplitude calibrated to the C1 budget), the twist center, the
rotation boxes placed along an orbit segment, and the flat parameter pack
the kernels consume.  The composed maps R, Q, P and their inverses are
evaluated through that pack, so library calls and the long cocycle runs
share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .accessibility import HeteroclinicData, find_heteroclinics
from .bumps import BumpSuite, build_suite
from .config import LabConfig, validate_constants
from .errors import ConfigError, IntegratorDivergence, SupportOverlap
from .hyperbolic_core import (
    ClosedOrbit,
    FuchsianGroup,
    GroupElement,
    SurfacePoint,
    approximating_orbit,
    closed_orbit_from_word,
    compose,
    distance_to_mats,
    flow_matrix,
    octagon_group,
    reduce_to_domain,
    surface_distance,
    unipotent,
)
from .product_dynamics import ProductPoint, haar_samples

__all__ = ["OrbitData", "BoxFamily", "MapSystem", "build_system"]

MAP_IDS = {"S": 0, "R": 1, "Q": 2, "P": 3}


@dataclass(frozen=True)
class OrbitData:
    """Anchor periodic point, partner orbit, heteroclinics, return index."""

    p: SurfacePoint
    m: int
    c_orbit: ClosedOrbit
    c_prime: ClosedOrbit
    het: HeteroclinicData
    ell: int
    approximants: dict


@dataclass(frozen=True)
class BoxFamily:
    """Product boxes along an orbit segment, with their flowed images.

    Level-i boxes are the exact images of the level-0 boxes under i steps
    of the composed map (which equals the plain flow there), so their
    anchors flow and their horocycle radii stretch accordingly.
    """

    anchors: tuple
    z_centers: tuple
    ru: float
    rs: float
    rcn: float
    k0: int
    delta: float

    def level_anchor(self, i: int, j: int) -> SurfacePoint:
        return self.anchors[i][j]

    def radii(self, i: int):
        return (
            self.ru * np.exp(i * self.delta),
            self.rs * np.exp(-i * self.delta),
            self.rcn,
        )

    @property
    def count(self) -> int:
        return len(self.anchors[0])


class SupportZones:
    """Sampled keep-out sets: orbit tubes and heteroclinic leaf tubes."""

    def __init__(self, group: FuchsianGroup):
        self.group = group
        self.zones = []  # (name, mats (N,2,2), radius, sample spacing)

    def add(self, name: str, mats: np.ndarray, radius: float, spacing: float = 0.0):
        self.zones.append((name, np.asarray(mats), float(radius), float(spacing)))

    def clearance(self, mat: np.ndarray, stop_below: float = -np.inf) -> float:
        """Smallest (distance - radius) over all zones; negative = inside."""
        p = SurfacePoint(self.group, GroupElement(mat))
        best = np.inf
        for _, mats, radius, _ in self.zones:
            d = float(distance_to_mats(p, mats).min()) - radius
            best = min(best, d)
            if best < stop_below:
                break
        return float(best)

    def coarse(self, max_samples: int = 400) -> "SupportZones":
        """Subsampled copy with radii padded by the subsample spacing."""
        out = SupportZones(self.group)
        for name, mats, radius, spacing in self.zones:
            f = max(1, int(np.ceil(mats.shape[0] / max_samples)))
            out.add(name, mats[::f], radius + 0.75 * f * spacing, f * spacing)
        return out


def _chart_arrays(group: FuchsianGroup, anchor_mat: np.ndarray, reach: float):
    """Flattened localization arrays for one chart anchor."""
    ball = group.deck_ball(2)
    anchors = np.einsum("nij,jk->nik", ball, anchor_mat)
    loc = np.linalg.inv(anchors)
    den = anchors[:, 1, 0] ** 2 + anchors[:, 1, 1] ** 2
    bx = (anchors[:, 0, 0] * anchors[:, 1, 0] + anchors[:, 0, 1] * anchors[:, 1, 1]) / den
    by = 1.0 / den
    base = np.stack([bx, by], axis=1)
    rej = np.cosh(reach) - 1.0
    return (
        np.ascontiguousarray(loc.reshape(-1, 4)),
        np.ascontiguousarray(base),
        np.ascontiguousarray(anchors.reshape(-1, 4)),
        float(rej),
    )


def _flat(m: np.ndarray):
    return float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1])


@dataclass
class MapSystem:
    """The assembled system: geometry, suite, supports, and the kernel pack."""

    cfg: LabConfig
    group: FuchsianGroup
    suite: BumpSuite
    orbit_data: OrbitData
    w_star: ProductPoint
    boxes: BoxFamily
    zones: SupportZones
    pack: K.SysPack
    diag: dict = field(default_factory=dict)

    # -- basic maps ---------------------------------------------------------
    @property
    def delta(self) -> float:
        return self.cfg.delta

    def map_point(self, name: str, w: ProductPoint, steps: int = 1,
                  inverse: bool = False) -> ProductPoint:
        a, b, c, d = _flat(w.surf.rep.m)
        res = K.evolve(a, b, c, d, w.z, self.pack, MAP_IDS[name], steps,
                       -1 if inverse else 1)
        if not res[5]:
            raise IntegratorDivergence(f"{name} failed after <= {steps} steps")
        mat = np.array([[res[0], res[1]], [res[2], res[3]]])
        return ProductPoint(SurfacePoint(self.group, GroupElement(mat)), res[4])

    def s_map(self, w, inverse=False):
        return self.map_point("S", w, inverse=inverse)

    def r_map(self, w, inverse=False):
        return self.map_point("R", w, inverse=inverse)

    def q_map(self, w, inverse=False):
        return self.map_point("Q", w, inverse=inverse)

    def p_map(self, w, inverse=False):
        return self.map_point("P", w, inverse=inverse)

    def _component(self, which: int, w: ProductPoint, direction: int):
        a, b, c, d = _flat(w.surf.rep.m)
        res = K.apply_component(a, b, c, d, w.z, self.pack, which, float(direction))
        if not res[5]:
            raise IntegratorDivergence("field-flow Newton failed")
        mat = np.array([[res[0], res[1]], [res[2], res[3]]])
        surf = w.surf if np.array_equal(mat, w.surf.rep.m) else SurfacePoint(
            self.group, GroupElement(mat)
        )
        return ProductPoint(surf, res[4])

    def h1_map(self, w, direction: int = 1):
        return self._component(1, w, direction)

    def h2_map(self, w, direction: int = 1):
        return self._component(2, w, direction)

    def h3_map(self, w, direction: int = 1):
        return self._component(3, w, direction)

    def component_jacobian(self, which: int, w: ProductPoint):
        """(image, frame Jacobian, acted) of one perturbation factor."""
        a, b, c, d = _flat(w.surf.rep.m)
        res = K.component_with_jac(a, b, c, d, w.z, self.pack, which, 1.0)
        if not res[7]:
            raise IntegratorDivergence("field-flow Newton failed")
        mat = np.array([[res[0], res[1]], [res[2], res[3]]])
        out = ProductPoint(SurfacePoint(self.group, GroupElement(mat)), res[4])
        return out, np.array(res[5]), bool(res[6])

    def step_jacobian(self, name: str, w: ProductPoint):
        """(image, frame 4x4 in (u, s, c, n) order) for one forward step."""
        a, b, c, d = _flat(w.surf.rep.m)
        res = K.step_with_jac(a, b, c, d, w.z, self.pack, MAP_IDS[name], 0.0, 1.0)
        if not res[6]:
            raise IntegratorDivergence(f"{name} jacobian step failed")
        mat = np.array([[res[0], res[1]], [res[2], res[3]]])
        out = ProductPoint(SurfacePoint(self.group, GroupElement(mat)), res[4])
        return out, np.array(res[5])

    def support_flags(self, w: ProductPoint):
        """(in h1, in h2, in h3) membership of the open supports."""
        pk = self.pack
        a, b, c, d = _flat(w.surf.rep.m)
        z = w.z
        in1 = in2 = in3 = False
        j, x, y, t = K.locate4(a, b, c, d, pk.h1_loc, pk.h1_base, pk.h1_rej)
        if (j >= 0 and abs(x) < pk.eps1 and np.hypot(y, t) < pk.eps1
                and 0.0 < z < 1.0):
            in1 = True
        if abs(z - pk.h2_z0) < pk.eps4:
            j, x, y, t = K.locate4(a, b, c, d, pk.h2_loc, pk.h2_base, pk.h2_rej)
            if j >= 0 and np.hypot(x, z - pk.h2_z0) < pk.eps4 and np.hypot(y, t) < pk.eps4:
                in2 = True
        for nb in range(pk.b_zc.shape[0]):
            zt = z - pk.b_zc[nb]
            if abs(zt) >= pk.b_rcn[nb]:
                continue
            j, x, y, t = K.locate4(a, b, c, d, pk.b_loc[nb], pk.b_base[nb], pk.b_rej)
            if (j >= 0 and abs(x) < pk.b_ru[nb] and abs(y) < pk.b_rs[nb]
                    and np.hypot(t, zt) < pk.b_rcn[nb]):
                in3 = True
                break
        return in1, in2, in3

    def with_strengths(self, alpha: float | None = None,
                       beta: float | None = None,
                       theta: float | None = None) -> "MapSystem":
        """A copy of the system with perturbation strengths replaced.

        Geometry (supports, charts, boxes) is shared; only the pack's
        strength scalars change, so comparisons across strengths are exact.
        """
        pk = self.pack._replace(
            alpha=self.pack.alpha if alpha is None else float(alpha),
            beta=self.pack.beta if beta is None else float(beta),
            theta=self.pack.theta if theta is None else float(theta),
        )
        out = MapSystem(self.cfg, self.group, self.suite, self.orbit_data,
                        self.w_star, self.boxes, self.zones, pk)
        out.diag = dict(self.diag)
        return out

    # -- band systems ---------------------------------------------------------
    def band_strength_factor(self, n: int) -> float:
        unit = self.diag["c1_unit"]
        return min(1.0, self.cfg.delta_prime * n**-4 / unit)

    def band_pack(self, n: int) -> K.SysPack:
        f = self.band_strength_factor(n)
        return self.pack._replace(
            alpha=self.pack.alpha * f,
            beta=self.pack.beta * f,
            theta=self.pack.theta * f,
        )

    def sample_points(self, n: int, rng) -> list:
        pts = haar_samples(self.group, n, rng)
        zs = rng.random(n)
        return [ProductPoint(s, z) for s, z in zip(pts, zs)]


# ---------------------------------------------------------------------------
# support sampling helpers

def _sample_h1_support(system: MapSystem, n: int, rng) -> list:
    pk = system.pack
    out = []
    anchors = pk.h1_anchor
    while len(out) < n:
        x = (rng.random() * 2.0 - 1.0) * pk.eps1
        ang = rng.random() * 2.0 * np.pi
        rad = pk.eps1 * np.sqrt(rng.random())
        y, t = rad * np.cos(ang), rad * np.sin(ang)
        z = rng.random()
        a, b, c, d = K.rebuild4(anchors, 0, x, y, t)
        mat = np.array([[a, b], [c, d]])
        surf = reduce_to_domain(system.group, GroupElement(mat))[0]
        out.append(ProductPoint(surf, z))
    return out


def _sample_h2_support(system: MapSystem, n: int, rng) -> list:
    pk = system.pack
    out = []
    for _ in range(n):
        a1 = rng.random() * 2.0 * np.pi
        r1 = pk.eps4 * np.sqrt(rng.random())
        a2 = rng.random() * 2.0 * np.pi
        r2 = pk.eps4 * np.sqrt(rng.random())
        x, zt = r1 * np.cos(a1), r1 * np.sin(a1)
        y, t = r2 * np.cos(a2), r2 * np.sin(a2)
        a, b, c, d = K.rebuild4(pk.h2_anchor, 0, x, y, t)
        mat = np.array([[a, b], [c, d]])
        surf = reduce_to_domain(system.group, GroupElement(mat))[0]
        out.append(ProductPoint(surf, pk.h2_z0 + zt))
    return out


def _sample_h3_support(system: MapSystem, n: int, rng) -> list:
    pk = system.pack
    nb_count = pk.b_zc.shape[0]
    out = []
    for _ in range(n):
        nb = int(rng.integers(0, nb_count))
        x = (rng.random() * 2.0 - 1.0) * pk.b_ru[nb]
        y = (rng.random() * 2.0 - 1.0) * pk.b_rs[nb]
        ang = rng.random() * 2.0 * np.pi
        rad = pk.b_rcn[nb] * np.sqrt(rng.random())
        t, zt = rad * np.cos(ang), rad * np.sin(ang)
        a, b, c, d = K.rebuild4(pk.b_anchor[nb], 0, x, y, t)
        mat = np.array([[a, b], [c, d]])
        surf = reduce_to_domain(system.group, GroupElement(mat))[0]
        out.append(ProductPoint(surf, pk.b_zc[nb] + zt))
    return out


def check_support_disjointness(system: MapSystem, n_samples: int = 100000,
                               seed: int = 7) -> dict:
    """Sampled pairwise disjointness of the three supports.

    Raises SupportOverlap on any violation; returns counts otherwise.
    """
    rng = np.random.default_rng(seed)
    per = max(1, n_samples // 3)
    report = {}
    for name, sampler, own in (
        ("h1", _sample_h1_support, 0),
        ("h2", _sample_h2_support, 1),
        ("h3", _sample_h3_support, 2),
    ):
        pts = sampler(system, per, rng)
        hits = [0, 0, 0]
        for w in pts:
            flags = system.support_flags(w)
            for k in range(3):
                if k != own and flags[k]:
                    hits[k] += 1
        report[name] = hits
        if any(hits[k] for k in range(3) if k != own):
            raise SupportOverlap(f"support {name} intersects another: {hits}")
    return report


# ---------------------------------------------------------------------------
# construction

def _leaf_tube_samples(group, q: SurfacePoint, leaf_param: float, kind: str,
                       delta: float, n_levels: int, forward: bool):
    """Orbit samples of points along a heteroclinic leaf segment.

    The segment runs from the connection point to its foot on the partner
    orbit; the orbits of a few interpolating points fatten into the
    keep-out tube.
    """
    mats = []
    sgn = 1.0 if forward else -1.0
    for frac in (0.0, 0.35, 0.7, 1.0):
        start = compose(q.rep, unipotent(-frac * leaf_param, kind))
        g = reduce_to_domain(group, start)[0].rep.m
        for _ in range(n_levels):
            mats.append(g)
            g = (
                reduce_to_domain(group, GroupElement(g @ flow_matrix(sgn * delta).m))[0]
            ).rep.m
    return np.stack(mats)


def _place_w_star(cfg, group, zones_full, p, rng):
    """A twist center clear of the tubes and of its own flow returns."""
    pad = 1.5 * cfg.eps4
    zones = zones_full.coarse(300)
    n_try = 400
    cands = haar_samples(group, n_try, rng)
    for cand in cands:
        if zones.clearance(cand.rep.m, stop_below=pad) < pad:
            continue
        if zones_full.clearance(cand.rep.m, stop_below=pad) < pad:
            continue
        ok = True
        g = cand
        for i in range(1, cfg.N0 + 1):
            g = reduce_to_domain(
                group, compose(g.rep, flow_matrix(-cfg.delta))
            )[0]
            d_self = surface_distance(g, cand)
            if d_self < 2.0 * pad * 1.45:
                ok = False
                break
            if surface_distance(g, p) < pad + cfg.eps0:
                ok = False
                break
        if ok:
            return cand
    raise SupportOverlap("no admissible twist center found; shrink eps4")


def _place_boxes(cfg, group, zones_full, w_star_mat, base_pack, rng):
    """Greedy box placement along an orbit of the partial composition."""
    k0 = cfg.k0
    zones = zones_full.coarse(300)
    delta = cfg.delta
    z_run = 0.3
    start = haar_samples(group, 1, rng)[0]
    a, b, c, d = _flat(start.rep.m)
    z = z_run
    accepted = []  # (anchor mats per level, z-center)
    half = np.sqrt(
        max(cfg.box_ru * np.exp((k0 - 1) * delta), cfg.box_rs) ** 2 * 2
        + cfg.box_rcn**2
    )
    w_pad = 1.45 * cfg.eps4 + half
    n_steps = 4000
    for _ in range(n_steps):
        res = K.evolve(a, b, c, d, z, base_pack, 2, 1, 1)
        a, b, c, d, z = res[0], res[1], res[2], res[3], res[4]
        if len(accepted) >= cfg.j_count:
            break
        if not (0.1 < z < 0.9) or abs(z - 0.5) < cfg.eps4 + cfg.box_rcn:
            continue
        anchor0 = SurfacePoint(group, GroupElement(np.array([[a, b], [c, d]])))
        levels = [anchor0]
        good = True
        for i in range(1, k0 + 1):
            levels.append(
                reduce_to_domain(
                    group, compose(levels[-1].rep, flow_matrix(delta))
                )[0]
            )
        for i in range(k0 + 1):
            hi = np.sqrt(
                (cfg.box_ru * np.exp(i * delta)) ** 2
                + (cfg.box_rs * np.exp(-i * delta)) ** 2
                + cfg.box_rcn**2
            )
            if zones.clearance(levels[i].rep.m, stop_below=hi * 1.15) < hi * 1.15 or \
               zones_full.clearance(levels[i].rep.m, stop_below=hi * 1.15) < hi * 1.15:
                good = False
                break
            dw = surface_distance(
                levels[i],
                SurfacePoint(group, GroupElement(w_star_mat)),
            )
            if dw < w_pad:
                good = False
                break
            for other_levels, other_z in accepted:
                for i2 in range(k0 + 1):
                    h2 = np.sqrt(
                        (cfg.box_ru * np.exp(i2 * delta)) ** 2
                        + (cfg.box_rs * np.exp(-i2 * delta)) ** 2
                        + cfg.box_rcn**2
                    )
                    if (
                        abs(z - other_z) < 2.0 * cfg.box_rcn
                        and surface_distance(levels[i], other_levels[i2])
                        < (hi + h2) * 1.15
                    ):
                        good = False
                        break
                if not good:
                    break
            if not good:
                break
        if good:
            accepted.append((levels, z))
    if len(accepted) < max(2, cfg.j_count // 2):
        raise SupportOverlap(
            f"only {len(accepted)} boxes placed; loosen the box radii"
        )
    anchors = tuple(
        tuple(acc[0][i] for acc in accepted) for i in range(k0)
    )
    z_centers = tuple(acc[1] for acc in accepted)
    return BoxFamily(anchors, z_centers, cfg.box_ru, cfg.box_rs, cfg.box_rcn,
                     k0, delta)


def _c1_units(cfg, suite: BumpSuite) -> dict:
    """Per-strength first-derivative scales of the three perturbations."""
    u1 = cfg.beta * suite.field_c1_bound()
    rr = np.linspace(0.0, cfg.eps4, 601)
    rho_v = np.array([suite.rho3(r, cfg.eps4)[0] for r in rr])
    rho_d = np.array([suite.rho3(r, cfg.eps4)[1] for r in rr])
    a_max = float(np.max(np.abs(rho_v))) ** 2
    grad = float(np.max(np.abs(rr * rho_d))) * float(np.max(np.abs(rho_v)))
    u2 = cfg.alpha * (a_max + 2.0 * grad)
    ss = np.linspace(0.0, 1.0, 601)
    dz_max = float(np.max(np.abs([suite.zeta3(s, 1.0)[1] for s in ss])))
    u3 = cfg.theta * (1.0 + 2.0 * dz_max)
    return {"h1": u1, "h2": u2, "h3": u3, "max": max(u1, u2, u3)}


def build_system(cfg: LabConfig | None = None, check_supports: int = 20000,
                 strict: bool = True) -> MapSystem:
    """Assemble the full construction from a configuration."""
    cfg = cfg or LabConfig()
    bad = validate_constants(cfg)
    if bad and strict:
        raise ConfigError("; ".join(bad))
    group = octagon_group()
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))

    c_orbit = closed_orbit_from_word(group, (0,))
    c_prime = closed_orbit_from_word(group, (1,))
    p = c_orbit.base_point
    delta = cfg.delta

    sep = min(
        float(distance_to_mats(q, c_prime.sample_mats(256)).min())
        for q in c_orbit.sample(64)
    )
    if sep < 3.0 * cfg.eps0 and strict:
        raise ConfigError(
            f"orbit separation {sep:.4g} below 3 eps0 = {3 * cfg.eps0:.4g}"
        )

    gens4 = np.ascontiguousarray(group.gen_array().reshape(8, 4))
    h1_loc, h1_base, h1_anchor, h1_rej = _chart_arrays(
        group, p.rep.m, 3.2 * cfg.eps1 + 0.05
    )

    def tube_clear_of_field_box(mats) -> bool:
        for m in mats:
            j, x, y, t = K.locate4(
                m[0, 0], m[0, 1], m[1, 0], m[1, 1], h1_loc, h1_base, h1_rej
            )
            if j >= 0 and abs(x) < cfg.eps1 * 1.02 and np.hypot(y, t) < cfg.eps1 * 1.02:
                return False
        return True

    het = None
    leaf_tubes = None
    for pick1 in range(12):
        for pick2 in range(12):
            try:
                cand = find_heteroclinics(
                    p, c_prime, cfg.eps0, cfg.eps1, delta, pick=(pick1, pick2)
                )
            except Exception:
                continue
            t1 = _leaf_tube_samples(
                group, cand.q1, cand.s_param, "stable", delta / 2.0,
                2 * (cand.n1 + 2 * cfg.m), forward=True,
            )
            if not tube_clear_of_field_box(t1):
                continue
            t2 = _leaf_tube_samples(
                group, cand.q2, cand.r_param, "unstable", delta / 2.0,
                2 * (cand.n2 + 2 * cfg.m), forward=False,
            )
            if not tube_clear_of_field_box(t2):
                continue
            het = cand
            leaf_tubes = (t1, t2)
            break
        if het is not None:
            break
    if het is None:
        raise SupportOverlap(
            "every heteroclinic candidate's leaf tube crosses the field box"
        )
    eps1_eff = min(cfg.eps1, abs(het.x_param) / 2.0, abs(het.y_param) / 2.0)
    eps2_eff = eps1_eff * (cfg.eps2 / cfg.eps1)
    suite = build_suite(
        eps1_eff, eps2_eff, cfg.phi0, cfg.psi0, cfg.kappa,
        xi_amp=cfg.xi_amp or None, beta=cfg.beta, delta=delta,
    )

    # the return index of the first heteroclinic point: how many periods
    # until its backward orbit enters the eps1-ball around the anchor
    ell = 0
    for k in range(0, 64):
        d_in = abs(het.x_param) * np.exp(-(k + 1) * cfg.m * delta)
        d_out = abs(het.x_param) * np.exp(-k * cfg.m * delta)
        if d_out > eps1_eff and d_in <= eps1_eff:
            ell = k
            break

    approximants = {k: approximating_orbit(c_prime, k) for k in (2, 4, 8)}

    zones = SupportZones(group)
    tube = c_orbit.sample_mats(512)
    zones.add("anchor_orbit_tube", tube, cfg.eps0 + c_orbit.length / 1024.0,
              c_orbit.length / 512.0)
    zones.add("partner_tube", c_prime.sample_mats(512),
              3.0 * cfg.eps0 + c_prime.length / 1024.0, c_prime.length / 512.0)
    for k, orb in approximants.items():
        n_orb = int(256 * max(1, orb.length // 3))
        zones.add(f"approx_{k}", orb.sample_mats(n_orb),
                  cfg.eps3 + 0.03, orb.length / n_orb)
    zones.add("stable_leaf_tube", leaf_tubes[0], cfg.eps3, delta / 2.0)
    zones.add("unstable_leaf_tube", leaf_tubes[1], cfg.eps3, delta / 2.0)

    w_star = _place_w_star(cfg, group, zones, p, rng)

    h2_loc, h2_base, h2_anchor, h2_rej = _chart_arrays(
        group, w_star.rep.m, 3.2 * cfg.eps4 + 0.05
    )
    partial = K.SysPack(
        delta, gens4,
        1, h1_loc, h1_base, h1_anchor, h1_rej,
        eps1_eff, eps2_eff, cfg.phi0, cfg.psi0, suite.xi_amp, cfg.beta,
        cfg.h1_steps,
        1, h2_loc, h2_base, h2_anchor, h2_rej, cfg.eps4, cfg.alpha, 0.5,
        0, np.zeros((1, 1, 4)), np.zeros((1, 1, 2)), np.zeros((1, 1, 4)),
        1.0, np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1),
        cfg.theta, cfg.kappa,
        cfg.newton_max,
    )

    boxes = _place_boxes(cfg, group, zones, w_star.rep.m, partial, rng)
    nb = boxes.count * cfg.k0
    b_loc = np.zeros((nb, h1_loc.shape[0], 4))
    b_base = np.zeros((nb, h1_loc.shape[0], 2))
    b_anchor = np.zeros((nb, h1_loc.shape[0], 4))
    b_ru = np.zeros(nb)
    b_rs = np.zeros(nb)
    b_rcn = np.zeros(nb)
    b_zc = np.zeros(nb)
    idx = 0
    reach = 3.2 * max(cfg.box_ru * np.exp(cfg.k0 * delta), cfg.box_rs) + 0.05
    for i in range(cfg.k0):
        for j in range(boxes.count):
            loc, base, anch, rej = _chart_arrays(
                group, boxes.level_anchor(i, j).rep.m, reach
            )
            b_loc[idx] = loc
            b_base[idx] = base
            b_anchor[idx] = anch
            ru, rs, rcn = boxes.radii(i)
            b_ru[idx] = ru
            b_rs[idx] = rs
            b_rcn[idx] = rcn
            b_zc[idx] = boxes.z_centers[j]
            idx += 1
    b_rej = np.cosh(reach) - 1.0

    pack = partial._replace(
        h3_on=1, b_loc=b_loc, b_base=b_base, b_anchor=b_anchor, b_rej=b_rej,
        b_ru=b_ru, b_rs=b_rs, b_rcn=b_rcn, b_zc=b_zc,
    )

    orbit_data = OrbitData(
        p, cfg.m, c_orbit, c_prime, het, ell, approximants
    )
    system = MapSystem(
        cfg, group, suite, orbit_data,
        ProductPoint(w_star, 0.5), boxes, zones, pack,
    )
    system.diag["orbit_separation"] = sep
    system.diag["eps1_eff"] = eps1_eff
    units = _c1_units(cfg, suite)
    system.diag.update(
        c1_unit=units["max"], c1_units=units, ell=ell,
        het_x=het.x_param, het_y=het.y_param, n1=het.n1, n2=het.n2,
    )
    if check_supports:
        check_support_disjointness(system, check_supports, seed=cfg.seed + 1)
    return system
