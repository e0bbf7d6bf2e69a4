"""Band assembly: the interval family, per-band rescaled maps, the global
map, and time-average diagnostics.

Bands tile the open interval: even indices accumulate at 0, odd indices
at 1, and each band carries a conjugated copy of the perturbed map whose
strengths scale like ``delta_prime * n^{-4}``.  Outside all retained bands
the map acts as the plain product (flow times identity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import BadIndex, BandMismatch, IntegratorDivergence
from .hyperbolic_core import GroupElement, SurfacePoint
from .product_dynamics import ProductPoint, haar_samples

__all__ = [
    "band_interval",
    "band_stretch",
    "BandLayout",
    "band_map",
    "global_f",
    "birkhoff_profile",
    "band_distance_sample",
]


def band_interval(n: int) -> tuple[float, float]:
    """The n-th band: even bands accumulate at 0, odd bands at 1."""
    if n < 1:
        raise BadIndex(f"band index must be >= 1, got {n}")
    if n % 2 == 0:
        k = n // 2
        return (1.0 / (k + 2), 1.0 / (k + 1))
    k = (n + 1) // 2
    return (1.0 - 1.0 / (k + 1), 1.0 - 1.0 / (k + 2))


def band_stretch(n: int) -> float:
    """Exact derivative of the affine rescaler: 1 / |I_n| = (k+1)(k+2)."""
    if n < 1:
        raise BadIndex(f"band index must be >= 1, got {n}")
    k = (n + 1) // 2 if n % 2 else n // 2
    return float((k + 1) * (k + 2))


@dataclass(frozen=True)
class BandLayout:
    """Finitely many retained bands; the tail acts by the plain product."""

    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise BadIndex("n_max must be >= 0")

    @property
    def intervals(self) -> list:
        return [band_interval(n) for n in range(1, self.n_max + 1)]

    def band_of(self, z: float) -> int | None:
        """The retained band whose open interior contains z, if any."""
        for n in range(1, self.n_max + 1):
            lo, hi = band_interval(n)
            if lo < z < hi:
                return n
        return None


def band_map(system, n: int, w: ProductPoint, inverse: bool = False,
             layout: BandLayout | None = None) -> ProductPoint:
    """One step of the band-n map (the rescaled perturbed composition)."""
    lo, hi = band_interval(n)
    if not (lo <= w.z <= hi):
        raise BandMismatch(f"z = {w.z} not in band {n} = [{lo}, {hi}]")
    pk = system.band_pack(n)
    a, b, c, d = w.surf.rep.m.ravel()
    if inverse:
        width = hi - lo
        zu = min(1.0, max(0.0, (w.z - lo) / width))
        s = K.evolve(a, b, c, d, zu, pk, 3, 1, -1)
        if not s[5]:
            raise IntegratorDivergence("band map inverse failed")
        mat = np.array([[s[0], s[1]], [s[2], s[3]]])
        return ProductPoint(SurfacePoint(system.group, GroupElement(mat)),
                            lo + s[4] * width)
    res = K.step_with_jac(a, b, c, d, w.z, pk, 3, lo, hi)
    if not res[6]:
        raise IntegratorDivergence("band map step failed")
    mat = np.array([[res[0], res[1]], [res[2], res[3]]])
    return ProductPoint(SurfacePoint(system.group, GroupElement(mat)), res[4])


def band_jacobian(system, n: int, w: ProductPoint):
    lo, hi = band_interval(n)
    if not (lo <= w.z <= hi):
        raise BandMismatch(f"z = {w.z} not in band {n}")
    pk = system.band_pack(n)
    a, b, c, d = w.surf.rep.m.ravel()
    res = K.step_with_jac(a, b, c, d, w.z, pk, 3, lo, hi)
    if not res[6]:
        raise IntegratorDivergence("band jacobian step failed")
    mat = np.array([[res[0], res[1]], [res[2], res[3]]])
    out = ProductPoint(SurfacePoint(system.group, GroupElement(mat)), res[4])
    return out, np.array(res[5])


def global_f(system, layout: BandLayout, w: ProductPoint) -> ProductPoint:
    """The assembled map: band maps inside retained bands, the plain
    product on the tail and on band boundaries."""
    n = layout.band_of(w.z)
    if n is None:
        return system.s_map(w)
    return band_map(system, n, w)


def global_f_jacobian(system, layout: BandLayout, w: ProductPoint):
    n = layout.band_of(w.z)
    if n is None:
        return system.step_jacobian("S", w)
    return band_jacobian(system, n, w)


@dataclass(frozen=True)
class BirkhoffRow:
    band: int
    start_index: int
    observable: str
    average: float
    stderr: float
    n_iters: int


_OBS_IDS = {"z": 0, "surface": 1, "product": 2}


def birkhoff_profile(system, layout: BandLayout, observable: str, bands,
                     n_starts: int, n_iters: int, seed: int = 0,
                     n_batches: int | None = None) -> list:
    """Time averages of an observable along band orbits, with batch-mean
    error bars; starts are volume-random within each requested band."""
    obs_id = _OBS_IDS[observable]
    n_batches = n_batches or system.cfg.n_batches
    ball = np.ascontiguousarray(system.group.deck_ball(2).reshape(-1, 4))
    rows = []
    for band in bands:
        lo, hi = band_interval(band)
        pk = system.band_pack(band)
        for i in range(n_starts):
            rng = np.random.default_rng(
                np.random.Philox(key=(seed, (band << 20) + i))
            )
            surf = haar_samples(system.group, 1, rng)[0]
            z0 = lo + (hi - lo) * (0.15 + 0.7 * rng.random())
            a, b, c, d = surf.rep.m.ravel()
            sums, counts = K.birkhoff_series(
                a, b, c, d, z0, pk, 3, lo, hi, int(n_iters), obs_id, ball,
                int(n_batches),
            )
            means = sums / counts
            avg = float(sums.sum() / counts.sum())
            se = float(means.std(ddof=1) / np.sqrt(len(means)))
            rows.append(BirkhoffRow(band, i, observable, avg, se, int(n_iters)))
    return rows


def band_distance_sample(system, n: int, n_samples: int = 400, seed: int = 0):
    """Sampled distances of the band-n map from the plain product.

    Returns (c0, c1): the largest displacement difference and the largest
    one-step differential gap (operator norm) over both volume-random
    band points and points drawn inside the rescaled perturbation
    supports, where the difference actually lives.
    """
    from .hyperbolic_core import surface_distance
    from .perturbations import (
        _sample_h1_support,
        _sample_h2_support,
        _sample_h3_support,
    )

    rng = np.random.default_rng(np.random.Philox(key=(seed, n)))
    lo, hi = band_interval(n)
    width = hi - lo
    points = []
    for surf in haar_samples(system.group, n_samples // 4, rng):
        points.append(ProductPoint(surf, lo + width * float(rng.random())))
    per = max(4, n_samples // 4)
    for sampler in (_sample_h1_support, _sample_h2_support, _sample_h3_support):
        for w in sampler(system, per, rng):
            points.append(ProductPoint(w.surf, lo + width * w.z))
    ed = np.exp(system.pack.delta)
    js = np.diag([ed, 1.0 / ed, 1.0, 1.0])
    c0 = 0.0
    c1 = 0.0
    for w in points:
        fw, J = band_jacobian(system, n, w)
        sw = system.s_map(w)
        c0 = max(c0, surface_distance(fw.surf, sw.surf) + abs(fw.z - sw.z))
        c1 = max(c1, float(np.linalg.norm(J - js, 2)))
    return c0, c1
