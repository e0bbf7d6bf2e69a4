"""Command-line front end: validation, experiments, CSV/SVG artifacts.

Every command loads a config (or the defaults), runs deterministically
from its seed, writes CSV rows with round-trip-exact floats, and drops a
manifest next to its outputs.  Exit codes: 0 pass, 1 scientific or
invariant failure, 2 usage/config failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .artifacts import fmt17, write_csv, write_manifest, write_svg_curve
from .config import LabConfig, config_hash, load_config, validate_constants
from .errors import ConfigError, GeodesicLabError, NumericalBlowup

_MAPS = ("S", "R", "Q", "P", "f")
_SYSTEM_CACHE: dict = {}


def _system_for(cfg: LabConfig):
    """Construction cache: experiment commands share one built system."""
    key = config_hash(cfg)
    if key not in _SYSTEM_CACHE:
        from .perturbations import build_system

        _SYSTEM_CACHE[key] = build_system(cfg, check_supports=0)
    return _SYSTEM_CACHE[key]


def _n_workers() -> int:
    env = os.environ.get("LAB_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _load(args) -> LabConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = LabConfig()
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    return cfg


def _parallel(fn, items):
    workers = _n_workers()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# validate

def cmd_validate(args) -> int:
    from .perturbations import build_system, check_support_disjointness
    from .product_dynamics import Chart, ProductPoint, chart_volume_samples

    cfg = _load(args)
    failures = []
    bad = validate_constants(cfg)
    for msg in bad:
        failures.append(("constants", msg))
    if bad:
        _print_failures(failures)
        return 1
    try:
        system = build_system(cfg, check_supports=args.support_samples)
    except GeodesicLabError as e:
        failures.append(("construction", str(e)))
        _print_failures(failures)
        return 1

    defect = system.group.relation_defect()
    if defect > 1e-10:
        failures.append(("group", f"relation defect {defect:.3g} > 1e-10"))

    rng = np.random.default_rng(np.random.Philox(key=cfg.seed + 2))
    chart = Chart(ProductPoint(system.orbit_data.p, 0.5),
                  (cfg.eps0, cfg.eps0, cfg.eps0))
    vols = chart_volume_samples(chart, args.volume_samples, rng)
    spread = float(vols.max() - vols.min()) / float(vols.mean())
    if spread > 1e-4:
        failures.append(("chart", f"volume Jacobian spread {spread:.3g} > 1e-4"))

    suite = system.suite
    grid = np.linspace(0.0, suite.eps1 * 1.1, 2001)
    phi = suite.phi(grid)
    if not np.all(np.abs(phi[grid <= suite.eps2] - cfg.phi0) < 1e-12):
        failures.append(("bumps", "radial plateau value violated"))
    if not np.all(phi[grid >= suite.eps1] == 0.0):
        failures.append(("bumps", "radial support violated"))
    if np.any(np.diff(phi) > 1e-12):
        failures.append(("bumps", "radial profile not nonincreasing"))
    ygrid = np.linspace(0.0, suite.eps1, 40001)
    psi_vals = suite.psi(ygrid)
    integral = float(np.trapezoid(psi_vals, ygrid))
    if abs(integral) > 1e-10:
        failures.append(("bumps", f"one-sided integral {integral:.3g} > 1e-10"))
    # positivity away from the flat tails (the profile underflows to zero
    # in float64 within ~1e-2 of the endpoints, where it is still positive)
    zg = np.linspace(0.01, 0.99, 1001)
    xv = suite.xi(zg)
    if not np.all(xv > 0.0):
        failures.append(("bumps", "interval profile not positive inside"))
    if suite.xi3(1e-4)[0] > 1e-300:
        failures.append(("bumps", "interval profile not flat at 0"))

    # boundary fixing: the composed map equals the plain product at z = 0, 1
    from .product_dynamics import haar_samples

    pts = haar_samples(system.group, 50, rng)
    for zb in (0.0, 1.0):
        for s in pts[:25]:
            w = ProductPoint(s, zb)
            pw = system.p_map(w)
            sw = system.s_map(w)
            if pw.z != zb or not np.array_equal(pw.surf.rep.m, sw.surf.rep.m):
                failures.append(("boundary", f"map moved the z = {zb} leaf"))
                break

    from .cocycle import measure_interval_exponent

    lam, lam_u = measure_interval_exponent(system, n_samples=6000)
    print(f"config hash: {config_hash(cfg)}")
    print(f"group relation defect: {defect:.3e}")
    print(f"chart volume spread: {spread:.3e}")
    print(f"orbit separation: {system.diag['orbit_separation']:.4f}")
    print(f"support check samples: {args.support_samples}")
    print(f"measured interval exponent: {lam:.3e} "
          f"(smallness vs unstable rate: {'ok' if system.diag['lam_smallness_ok'] else 'violated'})")
    for name, norm in suite.c1_norms.items():
        print(f"profile C1 norm {name}: {norm:.4f}")
    if failures:
        _print_failures(failures)
        return 1
    print("all validation checks passed")
    return 0


def _print_failures(failures):
    print("VALIDATION FAILURES:")
    for where, msg in failures:
        print(f"  [{where}] {msg}")


# ---------------------------------------------------------------------------
# lyapunov

def cmd_lyapunov(args) -> int:
    from .cocycle import lyapunov_spectrum
    from .perturbations import build_system

    cfg = _load(args)
    t0 = time.time()
    system = _system_for(cfg)
    seeds = [args.seed + i for i in range(args.n_seeds)]
    if args.map == "f":
        bands = list(range(1, cfg.n_max + 1)) if args.band is None else [args.band]
        jobs = [(b, s) for b in bands for s in seeds]
    else:
        jobs = [(None, s) for s in seeds]

    failed = []

    def run(job):
        band, seed = job
        try:
            rep = lyapunov_spectrum(
                system, "P" if band is not None else args.map,
                n_iters=args.n_iters, seed=seed, band=band,
            )
            return (band, seed, rep)
        except NumericalBlowup as e:
            failed.append((band, seed, str(e)))
            return (band, seed, None)

    results = _parallel(run, jobs)
    rows = []
    for band, seed, rep in results:
        if rep is None:
            rows.append([args.map, band if band is not None else "-",
                         args.n_iters] + [float("nan")] * 8 + [seed])
            continue
        e, se = rep.exponents, rep.standard_errors
        rows.append([args.map, band if band is not None else "-",
                     rep.iterations, e[0], e[1], e[2], e[3],
                     se[0], se[1], se[2], se[3], seed])
    out = write_csv(
        args.out,
        ["map", "band", "iter_count", "lambda_u", "lambda_s", "lambda_c",
         "lambda_n", "se_u", "se_s", "se_c", "se_n", "seed"],
        rows,
    )
    write_manifest(str(out) + ".manifest.json", config_hash(cfg), args.seed,
                   [out], t0, "lyapunov")
    if failed:
        for band, seed, msg in failed:
            print(f"blowup at band={band} seed={seed}: {msg}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# prop51 (expansion integral scan)

def cmd_prop51(args) -> int:
    from .cocycle import expansion_scan
    from .perturbations import build_system

    cfg = _load(args)
    t0 = time.time()
    alphas = [float(a) for a in args.alphas.split(",")]
    system = _system_for(cfg)
    estimates, deriv, deriv_se = expansion_scan(
        system, alphas, n_samples=args.n_samples, seed=args.seed
    )
    rows = [
        [est.alpha, est.value, est.stderr, est.excluded_fraction]
        for est in estimates
    ]
    out = write_csv(args.out, ["alpha", "L", "stderr", "excluded_fraction"], rows)
    outputs = [out]
    if args.svg:
        svg = write_svg_curve(
            args.svg, [e.alpha for e in estimates], [e.value for e in estimates],
            "expansion integral vs twist strength", ref_y=system.pack.delta,
        )
        outputs.append(svg)
    write_manifest(str(out) + ".manifest.json", config_hash(cfg), args.seed,
                   outputs, t0, "prop51")
    print(f"derivative at zero: {fmt17(deriv)} +- {fmt17(deriv_se)}")
    worst_excl = max(e.excluded_fraction for e in estimates)
    if worst_excl > 0.01:
        print(f"excluded fraction {worst_excl:.2%} exceeds 1%", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# drift

def cmd_drift(args) -> int:
    from .accessibility import accessibility_drift
    from .errors import NoConvergence
    from .perturbations import build_system

    cfg = _load(args)
    t0 = time.time()
    system = _system_for(cfg)
    rows = []
    any_fail = False
    for z0 in (float(z) for z in args.z0.split(",")):
        try:
            rep = accessibility_drift(system, z0, args.map)
            rows.append([z0, rep.z1, rep.z2, rep.z3, rep.z4, rep.z5,
                         rep.bound_rhs, int(rep.legs_ok)])
            any_fail = any_fail or not rep.legs_ok
        except (NoConvergence, GeodesicLabError) as e:
            print(f"drift at z0={z0} failed: {e}", file=sys.stderr)
            rows.append([z0] + [float("nan")] * 6 + [0])
            any_fail = True
    out = write_csv(
        args.out,
        ["z0", "z1", "z2", "z3", "z4", "z5", "bound_rhs", "legs_ok"],
        rows,
    )
    write_manifest(str(out) + ".manifest.json", config_hash(cfg), args.seed or cfg.seed,
                   [out], t0, "drift")
    print(f"wrote {out}")
    return 1 if any_fail else 0


# ---------------------------------------------------------------------------
# birkhoff

def cmd_birkhoff(args) -> int:
    from .assembly import BandLayout, birkhoff_profile
    from .perturbations import build_system

    cfg = _load(args)
    t0 = time.time()
    system = _system_for(cfg)
    bands = [int(b) for b in args.bands.split(",")]
    layout = BandLayout(max(bands + [cfg.n_max]))
    rows_obj = birkhoff_profile(
        system, layout, args.observable, bands, args.n_starts, args.n_iters,
        seed=args.seed,
    )
    rows = [[r.band, r.start_index, r.observable, r.average, r.stderr]
            for r in rows_obj]
    out = write_csv(
        args.out, ["band", "start_index", "observable", "average", "stderr"],
        rows,
    )
    write_manifest(str(out) + ".manifest.json", config_hash(cfg), args.seed,
                   [out], t0, "birkhoff")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# holonomy

def cmd_holonomy(args) -> int:
    from .accessibility import holonomy
    from .hyperbolic_core import covering_distance
    from .perturbations import build_system

    cfg = _load(args)
    t0 = time.time()
    system = _system_for(cfg)
    od = system.orbit_data
    rows = []
    for k in (int(v) for v in args.k_grid.split(",")):
        orb = od.approximants.get(k)
        if orb is None:
            from .hyperbolic_core import approximating_orbit

            orb = approximating_orbit(od.c_prime, k)
        _, disp = holonomy(od.het.p1, od.c_prime, orb)
        cov = covering_distance(od.c_prime, orb, n=args.covering_samples)
        rows.append([k, disp, cov, orb.length])
    out = write_csv(
        args.out, ["k", "displacement", "covering_distance", "orbit_length"],
        rows,
    )
    write_manifest(str(out) + ".manifest.json", config_hash(cfg), args.seed or cfg.seed,
                   [out], t0, "holonomy")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# assemble-report

def cmd_assemble_report(args) -> int:
    from .assembly import band_distance_sample, band_interval, band_stretch
    from .perturbations import build_system

    cfg = _load(args)
    t0 = time.time()
    system = _system_for(cfg)
    rows = []
    bad = False
    for n in range(1, cfg.n_max + 1):
        lo, hi = band_interval(n)
        c0, c1 = band_distance_sample(system, n, n_samples=args.n_samples,
                                      seed=args.seed)
        bound = 5.0 * cfg.delta_prime * n**-2 * 1.2
        ok = c1 <= bound and c0 <= bound
        bad = bad or not ok
        rows.append([n, lo, hi, band_stretch(n),
                     system.band_strength_factor(n), c0, c1, bound, int(ok)])
    out = write_csv(
        args.out,
        ["band", "lo", "hi", "stretch", "strength_factor", "c0_distance",
         "c1_distance", "band_bound", "within_bound"],
        rows,
    )
    write_manifest(str(out) + ".manifest.json", config_hash(cfg), args.seed,
                   [out], t0, "assemble-report")
    print(f"wrote {out}")
    return 1 if bad else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="geodesic-lab",
        description="experiment harness for the perturbed product system",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", default=None, help="config file (key = value sections)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        if needs_out:
            p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("validate", help="run the invariant suite")
    common(p, needs_out=False)
    p.add_argument("--support-samples", type=int, default=100000)
    p.add_argument("--volume-samples", type=int, default=2000)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("lyapunov", help="cocycle exponents")
    common(p)
    p.add_argument("--map", choices=_MAPS, default="Q")
    p.add_argument("--n-iters", type=int, default=1000000)
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--band", type=int, default=None)
    p.set_defaults(fn=cmd_lyapunov, seed=0)

    p = sub.add_parser("prop51", help="expansion-integral scan")
    common(p)
    p.add_argument("--alphas", default="0.02,0.05,0.1,0.2")
    p.add_argument("--n-samples", type=int, default=100000)
    p.add_argument("--svg", default=None)
    p.set_defaults(fn=cmd_prop51, seed=0)

    p = sub.add_parser("drift", help="accessibility drift loop")
    common(p)
    p.add_argument("--map", choices=("S", "R", "Q", "P"), default="R")
    p.add_argument("--z0", default="0.25,0.5,0.75")
    p.set_defaults(fn=cmd_drift)

    p = sub.add_parser("birkhoff", help="band time averages")
    common(p)
    p.add_argument("--bands", default="1,2")
    p.add_argument("--observable", choices=("z", "surface", "product"), default="z")
    p.add_argument("--n-starts", type=int, default=10)
    p.add_argument("--n-iters", type=int, default=200000)
    p.set_defaults(fn=cmd_birkhoff, seed=0)

    p = sub.add_parser("holonomy", help="holonomy displacement over a k grid")
    common(p)
    p.add_argument("--k-grid", default="2,4,8")
    p.add_argument("--covering-samples", type=int, default=300)
    p.set_defaults(fn=cmd_holonomy)

    p = sub.add_parser("assemble-report", help="per-band distances from the product map")
    common(p)
    p.add_argument("--n-samples", type=int, default=400)
    p.set_defaults(fn=cmd_assemble_report, seed=0)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0,) else 0
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except GeodesicLabError as e:
        print(f"failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
