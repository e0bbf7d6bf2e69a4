"""Matrix arithmetic of the genus-2 octagon surface group and its flows.

Points of the unit tangent bundle are right cosets ``Gamma g`` of the
isometry group, represented by 2x2 real unimodular matrices modulo sign.
The geodesic flow is right multiplication by ``diag(e^{t/2}, e^{-t/2})``;
horocycle moves are right multiplication by unipotents.  Deck
transformations act on the left, and a greedy descent on the base-point
distance to the origin reduces any representative into the Dirichlet
octagon.

All operations are pure functions over immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NonTermination, NotHyperbolic

__all__ = [
    "GroupElement",
    "FuchsianGroup",
    "SurfacePoint",
    "ClosedOrbit",
    "compose",
    "inverse",
    "flow_matrix",
    "unipotent",
    "frame_log",
    "frame_norm",
    "octagon_group",
    "reduce_to_domain",
    "geodesic_step",
    "horocycle_step",
    "surface_distance",
    "closed_orbit_from_word",
    "approximating_orbit",
    "covering_distance",
]

_DET_TOL = 1e-12
_SIGN_TOL = 1e-9
REDUCE_MAX_STEPS = 10_000


def _canonical(m: np.ndarray) -> np.ndarray:
    """Renormalize to det 1 and fix the overall sign deterministically.

    For very large entries the determinant suffers catastrophic
    cancellation, so renormalization is applied only while it is
    trustworthy; products of unimodular matrices are unimodular anyway,
    and reduction brings entries back to order one.
    """
    scale = np.max(np.abs(m))
    if scale < 1e4:
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det > 1e-6:
            m = m / np.sqrt(det)
        else:
            # entries this small cannot legitimately have a tiny or negative
            # determinant unless precision was exhausted upstream (very long
            # words); project to the nearest unimodular matrix instead of
            # failing, keeping reduction total.
            u, s, vt = np.linalg.svd(m)
            if np.linalg.det(u @ vt) < 0:
                u[:, 1] = -u[:, 1]
                s = np.array([s[0], -s[1]])
            gm = np.sqrt(abs(s[0] * s[1])) or 1.0
            m = u @ np.diag([abs(s[0]) / gm, abs(s[1]) / gm]) @ vt
    tr = m[0, 0] + m[1, 1]
    if tr < -_SIGN_TOL:
        m = -m
    elif abs(tr) <= _SIGN_TOL:
        if m[0, 0] < -_SIGN_TOL or (abs(m[0, 0]) <= _SIGN_TOL and m[0, 1] < 0):
            m = -m
    return m


@dataclass(frozen=True)
class GroupElement:
    """A 2x2 real unimodular matrix modulo global sign."""

    m: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.m, dtype=float)
        if mat.shape != (2, 2):
            raise ValueError("GroupElement expects a 2x2 matrix")
        object.__setattr__(self, "m", _canonical(mat))
        self.m.setflags(write=False)

    @property
    def trace(self) -> float:
        return float(self.m[0, 0] + self.m[1, 1])

    def inv(self) -> "GroupElement":
        a, b, c, d = self.m.ravel()
        return GroupElement(np.array([[d, -b], [-c, a]]))

    def close_to(self, other: "GroupElement", tol: float = 1e-9) -> bool:
        d1 = float(np.max(np.abs(self.m - other.m)))
        d2 = float(np.max(np.abs(self.m + other.m)))
        return min(d1, d2) <= tol

    def __repr__(self):
        a, b, c, d = self.m.ravel()
        return f"GroupElement([[{a:.6g}, {b:.6g}], [{c:.6g}, {d:.6g}]])"


IDENTITY = GroupElement(np.eye(2))


def compose(g1: GroupElement, g2: GroupElement) -> GroupElement:
    """Matrix product, renormalized and sign-canonicalized."""
    return GroupElement(g1.m @ g2.m)


def inverse(g: GroupElement) -> GroupElement:
    return g.inv()


def flow_matrix(t: float) -> GroupElement:
    e = np.exp(t / 2.0)
    return GroupElement(np.array([[e, 0.0], [0.0, 1.0 / e]]))


def unipotent(r: float, kind: str) -> GroupElement:
    """Unipotent move: 'unstable' is lower triangular, 'stable' upper.

    With the flow ``diag(e^{t/2}, e^{-t/2})`` the lower-parameter grows as
    ``r e^t`` under forward conjugation and the upper one contracts, which
    is what the stable/unstable labels must mean dynamically.
    """
    if kind == "unstable":
        return GroupElement(np.array([[1.0, 0.0], [r, 1.0]]))
    if kind == "stable":
        return GroupElement(np.array([[1.0, r], [0.0, 1.0]]))
    raise ValueError(f"unknown horocycle kind {kind!r}")


# ---------------------------------------------------------------------------
# base-point geometry (upper half-plane, origin at i)

def act_on_i(m: np.ndarray) -> tuple[float, float]:
    """Moebius action of ``m`` on the point i, returned as (x, y)."""
    a, b, c, d = m.ravel()
    den = c * c + d * d
    return ((a * c + b * d) / den, 1.0 / den)


def dist_to_origin(m: np.ndarray) -> float:
    """Hyperbolic distance from the base point of ``m`` to the origin."""
    x, y = act_on_i(m)
    return float(np.arccosh(1.0 + (x * x + (y - 1.0) ** 2) / (2.0 * y)))


def frame_log(m: np.ndarray) -> np.ndarray:
    """Logarithm of a unimodular matrix in the (unstable, stable, flow) frame.

    Returns the coefficients (u, s, h) of ``log m`` over the basis
    ``F = e21``, ``E = e12``, ``H = diag(1/2, -1/2)``, taking the branch
    with nonnegative half-trace (sign quotient).
    """
    tr = m[0, 0] + m[1, 1]
    if tr < 0:
        m = -m
        tr = -tr
    c = 0.5 * tr
    b00 = m[0, 0] - c
    if c > 1.0 + 1e-12:
        s = np.arccosh(c)
        f = s / np.sinh(s)
    elif c < 1.0 - 1e-12:
        c = max(c, -1.0)
        phi = np.arccos(c)
        f = phi / np.sin(phi) if phi < np.pi - 1e-9 else 2.0
    else:
        f = 1.0
    return np.array([f * m[1, 0], f * m[0, 1], 2.0 * f * b00])


def frame_norm(m: np.ndarray) -> float:
    """Left-invariant distance surrogate: norm of the frame logarithm.

    Combines base displacement and frame-angle discrepancy in one number;
    a pure flow move of time t scores exactly |t| and a unipotent move of
    parameter r scores |r| (1 + O(r^2)).
    """
    return float(np.linalg.norm(frame_log(m)))


# ---------------------------------------------------------------------------
# the octagon group

_RELATION_WORD = (0, 5, 2, 7, 4, 1, 6, 3)


def _rotation(phi: float) -> np.ndarray:
    c, s = np.cos(phi / 2.0), np.sin(phi / 2.0)
    return np.array([[c, s], [-s, c]])


@dataclass(frozen=True)
class FuchsianGroup:
    """Side-pairing generators of the regular-octagon genus-2 surface."""

    generators: tuple[GroupElement, ...]
    relation_word: tuple[int, ...]
    _deck_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def generator(self, k: int) -> GroupElement:
        return self.generators[k]

    def inverse_index(self, k: int) -> int:
        return (k + 4) % 8

    def word(self, indices) -> GroupElement:
        g = IDENTITY
        for k in indices:
            g = compose(g, self.generators[k])
        return g

    def gen_array(self) -> np.ndarray:
        return np.stack([g.m for g in self.generators])

    def deck_ball(self, depth: int = 2) -> np.ndarray:
        """All distinct products of at most ``depth`` generators.

        Dedup is by a rounded-entry key; group elements are isolated, so
        the rounding cannot merge distinct elements at these depths.
        """
        if depth in self._deck_cache:
            return self._deck_cache[depth]

        def key(m):
            return tuple(np.round(m, 7).ravel())

        mats = [np.eye(2)]
        seen = {key(np.eye(2))}
        frontier = [np.eye(2)]
        for _ in range(depth):
            new = []
            for m in frontier:
                for g in self.generators:
                    cand = _canonical(g.m @ m)
                    k = key(cand)
                    if k not in seen:
                        seen.add(k)
                        mats.append(cand)
                        new.append(cand)
            frontier = new
        ball = np.stack(mats)
        self._deck_cache[depth] = ball
        return ball

    def relation_defect(self) -> float:
        r = self.word(self.relation_word)
        return min(
            float(np.max(np.abs(r.m - np.eye(2)))),
            float(np.max(np.abs(r.m + np.eye(2)))),
        )


@lru_cache(maxsize=1)
def octagon_group() -> FuchsianGroup:
    """The standard genus-2 group: conjugates of one octagon translation.

    ``gamma_0`` translates along the axis through the origin by
    ``2 arccosh(1 + sqrt 2)``; ``gamma_k`` is its rotation by ``k pi / 4``,
    and ``gamma_{k+4} = gamma_k^{-1}``.
    """
    s2 = np.sqrt(2.0)
    g0 = np.array(
        [[1.0 + s2, np.sqrt(2.0 + 2.0 * s2)], [np.sqrt(2.0 + 2.0 * s2), 1.0 + s2]]
    )
    gens = []
    for k in range(8):
        r = _rotation(k * np.pi / 4.0)
        gens.append(GroupElement(r @ g0 @ r.T))
    return FuchsianGroup(tuple(gens), _RELATION_WORD)


# ---------------------------------------------------------------------------
# fundamental-domain reduction and quotient points

@dataclass(frozen=True)
class SurfacePoint:
    """A reduced coset representative: one unit tangent vector on the surface."""

    group: FuchsianGroup = field(repr=False, compare=False)
    rep: GroupElement

    def close_to(self, other: "SurfacePoint", tol: float = 1e-9) -> bool:
        return surface_distance(self, other) <= tol


def reduce_to_domain(group: FuchsianGroup, g: GroupElement):
    """Greedy descent to the Dirichlet-domain representative.

    Returns ``(SurfacePoint, word)`` where ``word`` lists the generator
    indices applied on the left, in order.  Each accepted step strictly
    decreases the base-point distance to the origin.
    """
    m = g.m
    word: list[int] = []
    gens = group.gen_array()

    def cosh_gap(mm):
        x, y = act_on_i(mm)
        return (x * x + (y - 1.0) ** 2) / (2.0 * y)

    for _ in range(REDUCE_MAX_STEPS):
        d0 = cosh_gap(m)
        best_k = -1
        best_d = d0 - 1e-15
        for k in range(8):
            cand = gens[k] @ m
            dk = cosh_gap(cand)
            if dk < best_d:
                best_d = dk
                best_k = k
        if best_k < 0:
            return SurfacePoint(group, GroupElement(m)), word
        m = _canonical(gens[best_k] @ m)
        word.append(best_k)
    raise NonTermination(f"reduction did not stop within {REDUCE_MAX_STEPS} steps")


def surface_point(group: FuchsianGroup, g: GroupElement) -> SurfacePoint:
    return reduce_to_domain(group, g)[0]


def geodesic_step(p: SurfacePoint, t: float) -> SurfacePoint:
    """Flow the tangent vector for time ``t`` and reduce."""
    if not np.isfinite(t):
        raise ValueError("flow time must be finite")
    return reduce_to_domain(p.group, compose(p.rep, flow_matrix(t)))[0]


def horocycle_step(p: SurfacePoint, r: float, kind: str) -> SurfacePoint:
    """Move along the stable or unstable horocycle by parameter ``r``."""
    if not np.isfinite(r):
        raise ValueError("horocycle parameter must be finite")
    return reduce_to_domain(p.group, compose(p.rep, unipotent(r, kind)))[0]


def surface_distance(p: SurfacePoint, q: SurfacePoint, depth: int = 2) -> float:
    """Quotient distance: deck-minimized frame log-norm.

    Searches deck translates up to ``depth`` generator shells, which covers
    every displacement smaller than the injectivity radius of the octagon
    surface by a wide margin.
    """
    gi = np.array(
        [[p.rep.m[1, 1], -p.rep.m[0, 1]], [-p.rep.m[1, 0], p.rep.m[0, 0]]]
    )
    ball = p.group.deck_ball(depth)
    rel = np.einsum("ij,njk,kl->nil", gi, ball, q.rep.m)
    best = np.inf
    for m in rel:
        tr = abs(m[0, 0] + m[1, 1])
        # cheap lower bound: base distance alone already exceeds best
        if tr > 2.0 and 2.0 * np.arccosh(tr / 2.0) > 2.0 * best:
            continue
        best = min(best, frame_norm(m))
    return float(best)


# ---------------------------------------------------------------------------
# closed orbits

@dataclass(frozen=True)
class ClosedOrbit:
    """Closed geodesic-flow orbit: the axis of a hyperbolic group word."""

    word: tuple[int, ...]
    axis_element: GroupElement
    length: float
    base_point: SurfacePoint

    def point_at(self, s: float) -> SurfacePoint:
        return geodesic_step(self.base_point, s)

    def sample(self, n: int) -> list[SurfacePoint]:
        return [self.point_at(s) for s in np.linspace(0.0, self.length, n, endpoint=False)]

    def sample_mats(self, n: int) -> np.ndarray:
        return np.stack([p.rep.m for p in self.sample(n)])


def closed_orbit_from_word(group: FuchsianGroup, word) -> ClosedOrbit:
    """Axis, length and a base point for the orbit of a hyperbolic word.

    The base point is the frame aligned with the axis: conjugating the word
    by the eigenvector matrix diagonalizes it, so flowing the base point by
    the orbit length applies the word itself as a deck move.
    """
    word = tuple(int(k) for k in word)
    a = group.word(word)
    tr = abs(a.trace)
    if tr <= 2.0 + 1e-9:
        raise NotHyperbolic(f"word {word} has |trace| = {tr:.6g} <= 2")
    evals, evecs = np.linalg.eig(a.m)
    idx = np.argsort(-np.abs(evals))
    lam = float(np.abs(evals[idx[0]]))
    v = np.real(evecs[:, idx])
    if np.linalg.det(v) < 0:
        v[:, 1] = -v[:, 1]
    v = v / np.sqrt(abs(np.linalg.det(v)))
    length = 2.0 * np.log(lam)
    base = reduce_to_domain(group, GroupElement(v))[0]
    return ClosedOrbit(word, a, length, base)


def approximating_orbit(
    target: ClosedOrbit, k: int, companion: tuple[int, ...] | None = None
) -> ClosedOrbit:
    """Orbit of ``w^k w*`` for the target word ``w`` and a companion ``w*``.

    The companion shares the prefix ``w`` by default; higher ``k`` wraps the
    new orbit more times along the target, pulling a long stretch of it
    into any neighborhood of the target orbit.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    group = target.base_point.group
    if companion is None:
        first = target.word[0]
        extra = (first + 1) % 8
        if extra == group.inverse_index(first):
            extra = (extra + 1) % 8
        companion = target.word + (extra,)
    word = target.word * k + tuple(companion)
    return closed_orbit_from_word(group, word)


def _frame_norm_batch(ms: np.ndarray) -> np.ndarray:
    """Vectorized ``frame_norm`` over an (..., 2, 2) array."""
    tr = ms[..., 0, 0] + ms[..., 1, 1]
    sign = np.where(tr < 0, -1.0, 1.0)
    ms = ms * sign[..., None, None]
    c = 0.5 * np.abs(tr)
    f = np.ones_like(c)
    hyp = c > 1.0 + 1e-12
    ell = c < 1.0 - 1e-12
    s = np.arccosh(np.where(hyp, c, 2.0))
    f = np.where(hyp, s / np.sinh(s), f)
    phi = np.arccos(np.clip(np.where(ell, c, 0.0), -1.0, 1.0))
    f = np.where(ell, np.where(phi < np.pi - 1e-9, phi / np.sin(phi), 2.0), f)
    b00 = ms[..., 0, 0] - c
    u = f * ms[..., 1, 0]
    sc = f * ms[..., 0, 1]
    h = 2.0 * f * b00
    return np.sqrt(u * u + sc * sc + h * h)


def distance_to_mats(p: SurfacePoint, mats: np.ndarray, depth: int = 2) -> np.ndarray:
    """Distance from ``p`` to each reduced representative in ``mats``."""
    gi = p.rep.inv().m
    ball = p.group.deck_ball(depth)
    left = np.einsum("ij,njk->nik", gi, ball)
    rel = np.einsum("nij,mjk->nmik", left, mats)
    return _frame_norm_batch(rel).min(axis=0)


def covering_distance(target: ClosedOrbit, approx: ClosedOrbit, n: int = 1000) -> float:
    """Sampled one-sided orbit distance: how far target points are from
    the nearest sample of the approximating orbit."""
    tgt = target.sample(n)
    # sample the approximant proportionally to its length so gaps between
    # consecutive samples stay comparable
    m = max(n, int(n * approx.length / max(target.length, 1e-9)))
    app_mats = approx.sample_mats(m)
    worst = 0.0
    for p in tgt:
        worst = max(worst, float(distance_to_mats(p, app_mats).min()))
    return float(worst)
