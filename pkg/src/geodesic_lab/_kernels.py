"""Numerical kernels for the hot loops (orbit stepping, cocycles, slopes).

Matrices are carried as four scalars (a, b, c, d) inside kernels; packs of
precomputed arrays describe the perturbation geometry.  Everything here is
plain scalar math so numba can compile it; without numba the same code runs
as ordinary Python.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except Exception:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(f):
            return f

        return deco


# ---------------------------------------------------------------------------
# bump profiles (single source of truth; bumps.BumpSuite wraps these)

@njit(cache=True, nogil=True)
def sig3(s):
    if s <= 0.0:
        return 0.0, 0.0, 0.0
    v = np.exp(-1.0 / s)
    return v, v / (s * s), v * (1.0 / (s * s * s * s) - 2.0 / (s * s * s))


@njit(cache=True, nogil=True)
def smoothstep3(s):
    if s <= 0.0:
        return 0.0, 0.0, 0.0
    if s >= 1.0:
        return 1.0, 0.0, 0.0
    a, da, dda = sig3(s)
    b, db1, ddb = sig3(1.0 - s)
    db = -db1
    tot = a + b
    p = a / tot
    n = da * b - a * db
    dp = n / (tot * tot)
    dn = dda * b - a * ddb
    ddp = dn / (tot * tot) - 2.0 * n * (da + db) / (tot * tot * tot)
    return p, dp, ddp


@njit(cache=True, nogil=True)
def falling3(r, lo, hi):
    if r <= lo:
        return 1.0, 0.0, 0.0
    if r >= hi:
        return 0.0, 0.0, 0.0
    w = hi - lo
    p, dp, ddp = smoothstep3((hi - r) / w)
    return p, -dp / w, ddp / (w * w)


@njit(cache=True, nogil=True)
def phi3(r, eps2, eps1, phi0):
    v, d1, d2 = falling3(abs(r), eps2, eps1)
    return phi0 * v, phi0 * d1, phi0 * d2


@njit(cache=True, nogil=True)
def psi3W(y, eps2, eps1, psi0):
    """Signed profile: (psi, psi', Psi) with Psi the exact antiderivative."""
    ay = abs(y)
    s = 1.0 if y >= 0.0 else -1.0
    b, db, ddb = falling3(ay, eps2, eps1)
    val = psi0 * (b + y * db * s)
    dval = psi0 * (2.0 * db * s + y * ddb)
    big = psi0 * y * b
    return val, dval, big


@njit(cache=True, nogil=True)
def xi3(z, amp):
    if z <= 0.0 or z >= 1.0:
        return 0.0, 0.0, 0.0
    q = 1.0 / z + 1.0 / (1.0 - z)
    dq = -1.0 / (z * z) + 1.0 / ((1.0 - z) * (1.0 - z))
    ddq = 2.0 / (z * z * z) + 2.0 / ((1.0 - z) * (1.0 - z) * (1.0 - z))
    v = amp * np.exp(4.0 - q)
    return v, -dq * v, (dq * dq - ddq) * v


@njit(cache=True, nogil=True)
def zeta3(s, ratio, kappa):
    s_eff = s - (ratio - 1.0)
    if s_eff < 0.0:
        return 1.0, 0.0, 0.0
    return falling3(s_eff, 1.0 - kappa, 1.0)


@njit(cache=True, nogil=True)
def rho3(r, eps2, eps1, phi0, eps4):
    scale = eps1 / eps4
    v, d1, d2 = phi3(r * scale, eps2, eps1, phi0)
    return v / scale, d1, d2 * scale


# ---------------------------------------------------------------------------
# 2x2 geometry

@njit(cache=True, nogil=True)
def base_xy(a, b, c, d):
    den = c * c + d * d
    return (a * c + b * d) / den, 1.0 / den


@njit(cache=True, nogil=True)
def coshdist1(x1, y1, x2, y2):
    dx = x1 - x2
    dy = y1 - y2
    return (dx * dx + dy * dy) / (2.0 * y1 * y2)


@njit(cache=True, nogil=True)
def canon4(a, b, c, d):
    big = max(abs(a), abs(b), abs(c), abs(d))
    if big < 1e4:
        det = a * d - b * c
        r = 1.0 / np.sqrt(det)
        a *= r
        b *= r
        c *= r
        d *= r
    tr = a + d
    flip = False
    if tr < -1e-9:
        flip = True
    elif abs(tr) <= 1e-9:
        if a < -1e-9 or (abs(a) <= 1e-9 and b < 0.0):
            flip = True
    if flip:
        return -a, -b, -c, -d
    return a, b, c, d


@njit(cache=True, nogil=True)
def reduce4(a, b, c, d, gens):
    """Greedy reduction into the Dirichlet octagon; gens is (8, 4)."""
    for _ in range(10000):
        x0, y0 = base_xy(a, b, c, d)
        d0 = (x0 * x0 + (y0 - 1.0) ** 2) / (2.0 * y0)
        bk = -1
        bd = d0 - 1e-15
        for k in range(8):
            na = gens[k, 0] * a + gens[k, 1] * c
            nb = gens[k, 0] * b + gens[k, 1] * d
            nc = gens[k, 2] * a + gens[k, 3] * c
            nd = gens[k, 2] * b + gens[k, 3] * d
            x1, y1 = base_xy(na, nb, nc, nd)
            dk = (x1 * x1 + (y1 - 1.0) ** 2) / (2.0 * y1)
            if dk < bd:
                bd = dk
                bk = k
        if bk < 0:
            break
        a, b, c, d = (
            gens[bk, 0] * a + gens[bk, 1] * c,
            gens[bk, 0] * b + gens[bk, 1] * d,
            gens[bk, 2] * a + gens[bk, 3] * c,
            gens[bk, 2] * b + gens[bk, 3] * d,
        )
        big = max(abs(a), abs(b), abs(c), abs(d))
        if big < 1e4:
            det = a * d - b * c
            rn = 1.0 / np.sqrt(det)
            a *= rn
            b *= rn
            c *= rn
            d *= rn
    return canon4(a, b, c, d)


@njit(cache=True, nogil=True)
def locate4(a, b, c, d, loc, base, rej):
    """Chart-localize: find the deck translate whose factorization is small.

    ``loc[j]`` is ``(gamma_j A)^{-1}`` flattened, ``base[j]`` the base point
    of ``gamma_j A``; candidates farther than ``rej`` (in cosh-1 units) from
    the point's base are skipped.  Returns (j, x, y, t) or j = -1.
    """
    wx, wy = base_xy(a, b, c, d)
    for j in range(loc.shape[0]):
        if coshdist1(wx, wy, base[j, 0], base[j, 1]) > rej:
            continue
        ma = loc[j, 0] * a + loc[j, 1] * c
        mb = loc[j, 0] * b + loc[j, 1] * d
        mc = loc[j, 2] * a + loc[j, 3] * c
        md = loc[j, 2] * b + loc[j, 3] * d
        if md < 0.0:
            ma, mb, mc, md = -ma, -mb, -mc, -md
        if md < 1e-12:
            continue
        t = -2.0 * np.log(md)
        ych = mb / md
        xch = mc * md
        return j, xch, ych, t
    return -1, 0.0, 0.0, 0.0


@njit(cache=True, nogil=True)
def rebuild4(anchor, j, x, y, t):
    """anchor[j] @ u_s(y) u_u(x) a_t, as four scalars."""
    e = np.exp(0.5 * t)
    f00 = (1.0 + x * y) * e
    f01 = y / e
    f10 = x * e
    f11 = 1.0 / e
    a = anchor[j, 0] * f00 + anchor[j, 1] * f10
    b = anchor[j, 0] * f01 + anchor[j, 1] * f11
    c = anchor[j, 2] * f00 + anchor[j, 3] * f10
    d = anchor[j, 2] * f01 + anchor[j, 3] * f11
    return a, b, c, d


# ---------------------------------------------------------------------------
# frame conjugation helpers

@njit(cache=True, nogil=True)
def mat4_mul(A, B, C):
    for i in range(4):
        for j in range(4):
            s = 0.0
            for k in range(4):
                s += A[i, k] * B[k, j]
            C[i, j] = s


@njit(cache=True, nogil=True)
def chart_frame(x, t, M):
    """Differential of the chart in the invariant frame (columns x,y,t,z)."""
    et = np.exp(t)
    M[:] = 0.0
    M[0, 0] = et
    M[0, 1] = -x * x * et
    M[1, 1] = 1.0 / et
    M[2, 1] = 2.0 * x
    M[2, 2] = 1.0
    M[3, 3] = 1.0


@njit(cache=True, nogil=True)
def chart_frame_inv(x, t, M):
    et = np.exp(t)
    M[:] = 0.0
    M[0, 0] = 1.0 / et
    M[0, 1] = x * x * et
    M[1, 1] = et
    M[2, 1] = -2.0 * x * et
    M[2, 2] = 1.0
    M[3, 3] = 1.0


@njit(cache=True, nogil=True)
def conj_to_frame(x_in, t_in, x_out, t_out, Jc, J, T1, T2):
    chart_frame(x_out, t_out, T1)
    mat4_mul(T1, Jc, T2)
    chart_frame_inv(x_in, t_in, T1)
    mat4_mul(T2, T1, J)


# ---------------------------------------------------------------------------
# system pack

SysPack = namedtuple(
    "SysPack",
    [
        "delta",
        "gens",  # (8,4)
        # h1 (field flow at the chart anchored on the periodic point)
        "h1_on",
        "h1_loc",  # (K,4)
        "h1_base",  # (K,2)
        "h1_anchor",  # (K,4)
        "h1_rej",
        "eps1",
        "eps2",
        "phi0",
        "psi0",
        "xi_amp",
        "beta",
        "h1_steps",
        # h2 (twist at the off-orbit center)
        "h2_on",
        "h2_loc",
        "h2_base",
        "h2_anchor",
        "h2_rej",
        "eps4",
        "alpha",
        "h2_z0",
        # h3 (box rotations along a finite orbit segment)
        "h3_on",
        "b_loc",  # (NB,K,4)
        "b_base",  # (NB,K,2)
        "b_anchor",  # (NB,K,4)
        "b_rej",
        "b_ru",  # (NB,)
        "b_rs",
        "b_rcn",
        "b_zc",
        "theta",
        "kappa",
        "newton_max",
    ],
)


def empty_pack(delta, gens4):
    z1 = np.zeros((1, 4))
    z2 = np.zeros((1, 2))
    b1 = np.zeros((1, 1, 4))
    b2 = np.zeros((1, 1, 2))
    e = np.zeros(1)
    return SysPack(
        delta, gens4,
        0, z1, z2, z1, 1.0, 0.02, 0.01, 1.0, 1.0, 0.0, 0.0, 32,
        0, z1, z2, z1, 1.0, 0.02, 0.0, 0.5,
        0, b1, b2, b1, 1.0, e, e, e, e, 0.0, 0.1,
        50,
    )


# ---------------------------------------------------------------------------
# h1: time-beta map of the divergence-free field, implicit midpoint

@njit(cache=True, nogil=True)
def _h1_field(x, z, phiv, eps2, eps1, psi0, xi_amp):
    psi, dpsi, big = psi3W(x, eps2, eps1, psi0)
    xv, xd, xdd = xi3(z, xi_amp)
    return -phiv * xd * big, phiv * xv * psi


@njit(cache=True, nogil=True)
def _h1_linear(x, z, phiv, eps2, eps1, psi0, xi_amp):
    """Field Jacobian A (2x2, trace zero) and the amplitude sensitivity B."""
    psi, dpsi, big = psi3W(x, eps2, eps1, psi0)
    xv, xd, xdd = xi3(z, xi_amp)
    a11 = -phiv * xd * psi
    a12 = -phiv * xdd * big
    a21 = phiv * xv * dpsi
    a22 = phiv * xd * psi
    b1 = -xd * big
    b2 = xv * psi
    return a11, a12, a21, a22, b1, b2


@njit(cache=True, nogil=True)
def h1_chart_flow(x, z, phiv, time, nsteps, newton_max, eps2, eps1, psi0, xi_amp, want_jac, M):
    """Integrate the (x, z) flow for ``time``; M (2x3) carries the exact
    derivative of the discrete scheme: columns (x, z, field-amplitude).

    Returns (x', z', ok).
    """
    h = time / nsteps
    if want_jac:
        M[:] = 0.0
        M[0, 0] = 1.0
        M[1, 1] = 1.0
    for _ in range(nsteps):
        fx, fz = _h1_field(x, z, phiv, eps2, eps1, psi0, xi_amp)
        xn = x + h * fx
        zn = z + h * fz
        ok = False
        for _ in range(newton_max):
            mx = 0.5 * (x + xn)
            mz = 0.5 * (z + zn)
            gx, gz = _h1_field(mx, mz, phiv, eps2, eps1, psi0, xi_amp)
            rx = xn - x - h * gx
            rz = zn - z - h * gz
            if abs(rx) + abs(rz) < 1e-15:
                ok = True
                break
            a11, a12, a21, a22, b1, b2 = _h1_linear(
                mx, mz, phiv, eps2, eps1, psi0, xi_amp
            )
            j11 = 1.0 - 0.5 * h * a11
            j12 = -0.5 * h * a12
            j21 = -0.5 * h * a21
            j22 = 1.0 - 0.5 * h * a22
            det = j11 * j22 - j12 * j21
            dx = (j22 * rx - j12 * rz) / det
            dz = (-j21 * rx + j11 * rz) / det
            xn -= dx
            zn -= dz
        if not ok:
            return x, z, False
        if want_jac:
            mx = 0.5 * (x + xn)
            mz = 0.5 * (z + zn)
            a11, a12, a21, a22, b1, b2 = _h1_linear(
                mx, mz, phiv, eps2, eps1, psi0, xi_amp
            )
            # M <- (I - h/2 A)^{-1} ((I + h/2 A) M + h B e3^T)
            j11 = 1.0 - 0.5 * h * a11
            j12 = -0.5 * h * a12
            j21 = -0.5 * h * a21
            j22 = 1.0 - 0.5 * h * a22
            det = j11 * j22 - j12 * j21
            for col in range(3):
                r1 = (1.0 + 0.5 * h * a11) * M[0, col] + 0.5 * h * a12 * M[1, col]
                r2 = 0.5 * h * a21 * M[0, col] + (1.0 + 0.5 * h * a22) * M[1, col]
                if col == 2:
                    r1 += h * b1
                    r2 += h * b2
                M[0, col] = (j22 * r1 - j12 * r2) / det
                M[1, col] = (-j21 * r1 + j11 * r2) / det
        x = xn
        z = zn
    return x, z, True


@njit(cache=True, nogil=True)
def apply_h1(a, b, c, d, z, pk, direction, want_jac, J, Jc, T1, T2, M23):
    """Apply the field flow (or its inverse); J receives the frame Jacobian.

    Returns (a, b, c, d, z, acted, ok); when ``acted`` is false the point
    was outside the support and J was not written.
    """
    if pk.h1_on == 0 or pk.beta == 0.0:
        return a, b, c, d, z, False, True
    j, x, y, t = locate4(a, b, c, d, pk.h1_loc, pk.h1_base, pk.h1_rej)
    if j < 0:
        return a, b, c, d, z, False, True
    sig = np.sqrt(y * y + t * t)
    if abs(x) >= pk.eps1 or sig >= pk.eps1 or z <= 0.0 or z >= 1.0:
        return a, b, c, d, z, False, True
    phiv, dphi, _ = phi3(sig, pk.eps2, pk.eps1, pk.phi0)
    xo, zo, ok = h1_chart_flow(
        x, z, phiv, pk.beta * direction, pk.h1_steps, pk.newton_max,
        pk.eps2, pk.eps1, pk.psi0, pk.xi_amp, want_jac, M23,
    )
    if not ok:
        return a, b, c, d, z, True, False
    if want_jac:
        Jc[:] = 0.0
        Jc[1, 1] = 1.0
        Jc[2, 2] = 1.0
        Jc[0, 0] = M23[0, 0]
        Jc[0, 3] = M23[0, 1]
        Jc[3, 0] = M23[1, 0]
        Jc[3, 3] = M23[1, 1]
        if sig > 1e-14:
            dpy = dphi * y / sig
            dpt = dphi * t / sig
            Jc[0, 1] = M23[0, 2] * dpy
            Jc[0, 2] = M23[0, 2] * dpt
            Jc[3, 1] = M23[1, 2] * dpy
            Jc[3, 2] = M23[1, 2] * dpt
        conj_to_frame(x, t, xo, t, Jc, J, T1, T2)
    na, nb, nc, nd = rebuild4(pk.h1_anchor, j, xo, y, t)
    return na, nb, nc, nd, zo, True, True


# ---------------------------------------------------------------------------
# h2: the area-preserving twist in the (x, z) plane

@njit(cache=True, nogil=True)
def apply_h2(a, b, c, d, z, pk, direction, want_jac, J, Jc, T1, T2):
    """The twist (or its inverse). Returns (a, b, c, d, z, acted)."""
    if pk.h2_on == 0 or pk.alpha == 0.0:
        return a, b, c, d, z, False
    zt = z - pk.h2_z0
    if abs(zt) >= pk.eps4:
        return a, b, c, d, z, False
    j, x, y, t = locate4(a, b, c, d, pk.h2_loc, pk.h2_base, pk.h2_rej)
    if j < 0:
        return a, b, c, d, z, False
    r = np.sqrt(x * x + zt * zt)
    sig = np.sqrt(y * y + t * t)
    if r >= pk.eps4 or sig >= pk.eps4:
        return a, b, c, d, z, False
    rv, rd, _ = rho3(r, pk.eps2, pk.eps1, pk.phi0, pk.eps4)
    sv, sd, _ = rho3(sig, pk.eps2, pk.eps1, pk.phi0, pk.eps4)
    ang = pk.alpha * direction * sv * rv
    if ang == 0.0:
        return a, b, c, d, z, False
    if r < 1e-14:
        # removable singularity: rigid rotation near the axis
        ca, sa = np.cos(ang), np.sin(ang)
        xo = ca * x - sa * zt
        zo = sa * x + ca * zt
        if want_jac:
            Jc[:] = 0.0
            Jc[1, 1] = 1.0
            Jc[2, 2] = 1.0
            Jc[0, 0] = ca
            Jc[0, 3] = -sa
            Jc[3, 0] = sa
            Jc[3, 3] = ca
            conj_to_frame(x, t, xo, t, Jc, J, T1, T2)
        na, nb, nc, nd = rebuild4(pk.h2_anchor, j, xo, y, t)
        return na, nb, nc, nd, pk.h2_z0 + zo, True
    th = np.arctan2(zt, x)
    tho = th + ang
    cth, sth = np.cos(th), np.sin(th)
    co, so = np.cos(tho), np.sin(tho)
    xo = r * co
    zo = r * so
    if want_jac:
        gr = pk.alpha * direction * sv * rd  # d(angle)/dr
        u = -sth / r + gr * cth
        v = cth / r + gr * sth
        Jc[:] = 0.0
        Jc[1, 1] = 1.0
        Jc[2, 2] = 1.0
        Jc[0, 0] = co * cth - r * so * u
        Jc[0, 3] = co * sth - r * so * v
        Jc[3, 0] = so * cth + r * co * u
        Jc[3, 3] = so * sth + r * co * v
        if sig > 1e-14:
            gc = pk.alpha * direction * sd * rv  # d(angle)/d(sigma)
            gy = gc * y / sig
            gt = gc * t / sig
            Jc[0, 1] = -r * so * gy
            Jc[0, 2] = -r * so * gt
            Jc[3, 1] = r * co * gy
            Jc[3, 2] = r * co * gt
        conj_to_frame(x, t, xo, t, Jc, J, T1, T2)
    na, nb, nc, nd = rebuild4(pk.h2_anchor, j, xo, y, t)
    return na, nb, nc, nd, pk.h2_z0 + zo, True


# ---------------------------------------------------------------------------
# h3: plateau rotations in the (t, z) plane on each box

@njit(cache=True, nogil=True)
def apply_h3(a, b, c, d, z, pk, direction, want_jac, J, Jc, T1, T2):
    """Box rotations (or inverse). Returns (a, b, c, d, z, acted)."""
    if pk.h3_on == 0 or pk.theta == 0.0:
        return a, b, c, d, z, False
    for nb_i in range(pk.b_zc.shape[0]):
        zt = z - pk.b_zc[nb_i]
        s = pk.b_rcn[nb_i]
        if abs(zt) >= s:
            continue
        j, x, y, t = locate4(
            a, b, c, d, pk.b_loc[nb_i], pk.b_base[nb_i], pk.b_rej
        )
        if j < 0:
            continue
        ru = pk.b_ru[nb_i]
        rs = pk.b_rs[nb_i]
        if abs(x) >= ru or abs(y) >= rs:
            continue
        q = np.sqrt(t * t + zt * zt)
        if q >= s:
            continue
        zx, dzx, _ = zeta3(abs(x) / s, ru / s, pk.kappa)
        zy, dzy, _ = zeta3(abs(y) / s, rs / s, pk.kappa)
        zq, dzq, _ = zeta3(q / s, 1.0, pk.kappa)
        ang = pk.theta * direction * zx * zy * zq
        if ang == 0.0:
            return a, b, c, d, z, False
        ca, sa = np.cos(ang), np.sin(ang)
        to = ca * t - sa * zt
        zo = sa * t + ca * zt
        if want_jac:
            Jc[:] = 0.0
            Jc[0, 0] = 1.0
            Jc[1, 1] = 1.0
            # (t, z) block: rotation plus radius dependence of the angle
            if q > 1e-14:
                aq = pk.theta * direction * zx * zy * dzq / (s * q)
                gt = aq * t
                gz = aq * zt
            else:
                gt = 0.0
                gz = 0.0
            # dR/d(angle) applied to (t, zt)
            w1 = -sa * t - ca * zt
            w2 = ca * t - sa * zt
            Jc[2, 2] = ca + w1 * gt
            Jc[2, 3] = -sa + w1 * gz
            Jc[3, 2] = sa + w2 * gt
            Jc[3, 3] = ca + w2 * gz
            sx = 1.0 if x >= 0.0 else -1.0
            sy = 1.0 if y >= 0.0 else -1.0
            gx = pk.theta * direction * dzx * sx / s * zy * zq
            gy = pk.theta * direction * zx * dzy * sy / s * zq
            Jc[2, 0] = w1 * gx
            Jc[2, 1] = w1 * gy
            Jc[3, 0] = w2 * gx
            Jc[3, 1] = w2 * gy
            conj_to_frame(x, t, x, to, Jc, J, T1, T2)
        na, nb2, nc, nd = rebuild4(pk.b_anchor[nb_i], j, x, y, to)
        return na, nb2, nc, nd, pk.b_zc[nb_i] + zo, True
    return a, b, c, d, z, False


# ---------------------------------------------------------------------------
# composed maps

@njit(cache=True, nogil=True)
def apply_s(a, b, c, d, z, delta, gens):
    e = np.exp(0.5 * delta)
    a, b, c, d = a * e, b / e, c * e, d / e
    a, b, c, d = reduce4(a, b, c, d, gens)
    return a, b, c, d, z


@njit(cache=True, nogil=True)
def _accumulate(F, J, G):
    """J <- F @ J using scratch G."""
    mat4_mul(F, J, G)
    J[:] = G


@njit(cache=True, nogil=True)
def step_map(a, b, c, d, z, pk, map_id, want_jac, J, F, G, Jc, T1, T2, M23):
    """One forward step of S, R, Q or P; J gets the frame Jacobian.

    map_id: 0 = S, 1 = R = h1 S, 2 = Q = h1 S h2, 3 = P = Q h3.
    Returns (a, b, c, d, z, ok).
    """
    if want_jac:
        J[:] = 0.0
        J[0, 0] = 1.0
        J[1, 1] = 1.0
        J[2, 2] = 1.0
        J[3, 3] = 1.0
    ok = True
    if map_id >= 3:
        a, b, c, d, z, acted = apply_h3(
            a, b, c, d, z, pk, 1.0, want_jac, F, Jc, T1, T2
        )
        if want_jac and acted:
            _accumulate(F, J, G)
    if map_id >= 2:
        a, b, c, d, z, acted = apply_h2(
            a, b, c, d, z, pk, 1.0, want_jac, F, Jc, T1, T2
        )
        if want_jac and acted:
            _accumulate(F, J, G)
    a, b, c, d, z = apply_s(a, b, c, d, z, pk.delta, pk.gens)
    if want_jac:
        ed = np.exp(pk.delta)
        for col in range(4):
            J[0, col] *= ed
            J[1, col] /= ed
    if map_id >= 1:
        a, b, c, d, z, acted, ok = apply_h1(
            a, b, c, d, z, pk, 1.0, want_jac, F, Jc, T1, T2, M23
        )
        if want_jac and acted and ok:
            _accumulate(F, J, G)
    return a, b, c, d, z, ok


@njit(cache=True, nogil=True)
def step_map_inv(a, b, c, d, z, pk, map_id, Jdummy, Jc, T1, T2, M23):
    """One backward step (the inverse composition); no Jacobian."""
    ok = True
    if map_id >= 1:
        a, b, c, d, z, acted, ok = apply_h1(
            a, b, c, d, z, pk, -1.0, False, Jdummy, Jc, T1, T2, M23
        )
    a, b, c, d, z = apply_s(a, b, c, d, z, -pk.delta, pk.gens)
    if map_id >= 2:
        a, b, c, d, z, acted = apply_h2(
            a, b, c, d, z, pk, -1.0, False, Jdummy, Jc, T1, T2
        )
    if map_id >= 3:
        a, b, c, d, z, acted = apply_h3(
            a, b, c, d, z, pk, -1.0, False, Jdummy, Jc, T1, T2
        )
    return a, b, c, d, z, ok


@njit(cache=True, nogil=True)
def step_band(a, b, c, d, z, pk, lo, hi, want_jac, J, F, G, Jc, T1, T2, M23):
    """Band-conjugated step: rescale z into [0,1], apply P, rescale back."""
    width = hi - lo
    zu = (z - lo) / width
    if zu < 0.0:
        zu = 0.0
    elif zu > 1.0:
        zu = 1.0
    a, b, c, d, zu, ok = step_map(
        a, b, c, d, zu, pk, 3, want_jac, J, F, G, Jc, T1, T2, M23
    )
    if want_jac:
        for i in range(4):
            if i != 3:
                J[3, i] *= width
                J[i, 3] /= width
    return a, b, c, d, lo + zu * width, ok


# ---------------------------------------------------------------------------
# engines

@njit(cache=True, nogil=True)
def _mgs4(V, logs, offset):
    for j in range(4):
        for k in range(j):
            dot = (
                V[0, j] * V[0, k]
                + V[1, j] * V[1, k]
                + V[2, j] * V[2, k]
                + V[3, j] * V[3, k]
            )
            for i in range(4):
                V[i, j] -= dot * V[i, k]
        nrm = np.sqrt(
            V[0, j] ** 2 + V[1, j] ** 2 + V[2, j] ** 2 + V[3, j] ** 2
        )
        logs[offset + j] += np.log(nrm)
        for i in range(4):
            V[i, j] /= nrm


@njit(cache=True, nogil=True)
def benettin(a, b, c, d, z, pk, map_id, lo, hi, n_iters, qr_every, n_batches):
    """Cocycle exponents by periodic orthonormalization.

    The carried flag basis is ordered along the invariant flag
    (unstable, interval, flow, stable) so the filtration positions track
    the subbundle exponents; callers translate back to (u, s, c, n).

    Returns (logs (n_batches, 4), counts (n_batches,), status) with
    status 0 = ok, 1 = newton failure, 2 = overflow.
    """
    J = np.zeros((4, 4))
    F = np.zeros((4, 4))
    G = np.zeros((4, 4))
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    M23 = np.zeros((2, 3))
    V = np.zeros((4, 4))
    for i in range(4):
        V[i, i] = 1.0
    logs = np.zeros((n_batches, 4))
    counts = np.zeros(n_batches, dtype=np.int64)
    # flag order: engine index -> frame index (u, n, c, s)
    per_batch = max(1, n_iters // n_batches)
    Vn = np.zeros((4, 4))
    bl = np.zeros(4)
    for it in range(n_iters):
        if lo == 0.0 and hi == 1.0:
            a, b, c, d, z, ok = step_map(
                a, b, c, d, z, pk, map_id, True, J, F, G, Jc, T1, T2, M23
            )
        else:
            a, b, c, d, z, ok = step_band(
                a, b, c, d, z, pk, lo, hi, True, J, F, G, Jc, T1, T2, M23
            )
        if not ok:
            return logs, counts, 1
        # V <- (P J P^T) V with P the (u,n,c,s) permutation
        for i in range(4):
            ii = 3 if i == 1 else (1 if i == 3 else i)
            for jj in range(4):
                s = 0.0
                for k in range(4):
                    kk = 3 if k == 1 else (1 if k == 3 else k)
                    s += J[ii, kk] * V[k, jj]
                Vn[i, jj] = s
        V[:] = Vn
        bi = min(it // per_batch, n_batches - 1)
        if (it + 1) % qr_every == 0 or it == n_iters - 1:
            big = 0.0
            for i in range(4):
                for jj in range(4):
                    av = abs(V[i, jj])
                    if av > big:
                        big = av
            if big > 1e300 or not np.isfinite(big):
                return logs, counts, 2
            bl[:] = 0.0
            _mgs4(V, bl, 0)
            for jq in range(4):
                logs[bi, jq] += bl[jq]
        counts[bi] += 1
    return logs, counts, 0


@njit(cache=True, nogil=True)
def evolve(a, b, c, d, z, pk, map_id, n, direction):
    """Iterate a map n times (direction +1 forward, -1 inverse)."""
    J = np.zeros((4, 4))
    F = np.zeros((4, 4))
    G = np.zeros((4, 4))
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    M23 = np.zeros((2, 3))
    ok_all = True
    for _ in range(n):
        if direction > 0:
            a, b, c, d, z, ok = step_map(
                a, b, c, d, z, pk, map_id, False, J, F, G, Jc, T1, T2, M23
            )
        else:
            a, b, c, d, z, ok = step_map_inv(
                a, b, c, d, z, pk, map_id, J, Jc, T1, T2, M23
            )
        if not ok:
            ok_all = False
            break
    return a, b, c, d, z, ok_all


@njit(cache=True, nogil=True)
def h2_block(a, b, c, d, z, pk):
    """The (unstable, interval) frame block of the twist's differential."""
    if pk.h2_on == 0 or pk.alpha == 0.0:
        return 1.0, 0.0, 0.0, 1.0, False
    zt = z - pk.h2_z0
    if abs(zt) >= pk.eps4:
        return 1.0, 0.0, 0.0, 1.0, False
    j, x, y, t = locate4(a, b, c, d, pk.h2_loc, pk.h2_base, pk.h2_rej)
    if j < 0:
        return 1.0, 0.0, 0.0, 1.0, False
    r = np.sqrt(x * x + zt * zt)
    sig = np.sqrt(y * y + t * t)
    if r >= pk.eps4 or sig >= pk.eps4:
        return 1.0, 0.0, 0.0, 1.0, False
    rv, rd, _ = rho3(r, pk.eps2, pk.eps1, pk.phi0, pk.eps4)
    sv, sd, _ = rho3(sig, pk.eps2, pk.eps1, pk.phi0, pk.eps4)
    if r < 1e-14:
        ang = pk.alpha * sv * rv
        ca, sa = np.cos(ang), np.sin(ang)
        et = np.exp(t)
        return ca, -sa / et, sa * et, ca, True
    th = np.arctan2(zt, x)
    tho = th + pk.alpha * sv * rv
    cth, sth = np.cos(th), np.sin(th)
    co, so = np.cos(tho), np.sin(tho)
    gr = pk.alpha * sv * rd
    u = -sth / r + gr * cth
    v = cth / r + gr * sth
    b11 = co * cth - r * so * u
    b12 = co * sth - r * so * v
    b21 = so * cth + r * co * u
    b22 = so * sth + r * co * v
    # conjugate by diag(e^t, 1): chart x-direction vs unit unstable frame
    et = np.exp(t)
    return b11, b12 / et, b21 * et, b22, True


@njit(cache=True, nogil=True)
def _push_slope(orbit, pk, start, ed):
    """Push a zero slope forward from pullback depth ``start``."""
    slope = 0.0
    for k in range(start - 1, -1, -1):
        b11, b12, b21, b22, acted = h2_block(
            orbit[k, 0], orbit[k, 1], orbit[k, 2], orbit[k, 3], orbit[k, 4], pk
        )
        if acted:
            num = b21 + b22 * slope
            den = b11 + b12 * slope
            slope = num / den
        slope = slope / ed
    return slope


@njit(cache=True, nogil=True)
def slope_and_stretch(a, b, c, d, z, pk, max_iter, tol):
    """Unstable-bundle slope at a point and the x-stretch through it.

    Pulls the point back ``max_iter`` steps of the zero-beta composition
    (twist then flow) and pushes the slope forward.  Stabilization is
    certified by comparing against the half-depth answer; points whose
    relevant twist visits are deeper than the half window are reported as
    unconverged.  Returns (slope, log_stretch, converged).
    """
    J = np.zeros((4, 4))
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    ed = np.exp(pk.delta)
    orbit = np.zeros((max_iter, 5))
    aa, bb, cc, dd, zz = a, b, c, d, z
    for k in range(max_iter):
        # inverse of (flow o twist): backward flow, then untwist
        aa, bb, cc, dd, zz = apply_s(aa, bb, cc, dd, zz, -pk.delta, pk.gens)
        aa, bb, cc, dd, zz, acted = apply_h2(
            aa, bb, cc, dd, zz, pk, -1.0, False, J, Jc, T1, T2
        )
        orbit[k, 0] = aa
        orbit[k, 1] = bb
        orbit[k, 2] = cc
        orbit[k, 3] = dd
        orbit[k, 4] = zz
    slope = _push_slope(orbit, pk, max_iter, ed)
    half = _push_slope(orbit, pk, max_iter // 2, ed)
    converged = abs(slope - half) <= tol
    b11, b12, b21, b22, acted = h2_block(a, b, c, d, z, pk)
    stretch = ed * (b11 + b12 * slope)
    return slope, np.log(abs(stretch)), converged


@njit(cache=True, nogil=True)
def birkhoff_series(a, b, c, d, z, pk, map_id, lo, hi, n_iters, obs_id, ball, n_batches):
    """Batch means of an observable along an orbit.

    obs_id: 0 = interval coordinate, 1 = smooth surface function,
    2 = their product.  ``ball`` is the (K, 4) deck ball for the surface
    observable.
    """
    J = np.zeros((4, 4))
    F = np.zeros((4, 4))
    G = np.zeros((4, 4))
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    M23 = np.zeros((2, 3))
    sums = np.zeros(n_batches)
    counts = np.zeros(n_batches, dtype=np.int64)
    per_batch = max(1, n_iters // n_batches)
    for it in range(n_iters):
        if lo == 0.0 and hi == 1.0:
            a, b, c, d, z, ok = step_map(
                a, b, c, d, z, pk, map_id, False, J, F, G, Jc, T1, T2, M23
            )
        else:
            a, b, c, d, z, ok = step_band(
                a, b, c, d, z, pk, lo, hi, False, J, F, G, Jc, T1, T2, M23
            )
        if obs_id == 0:
            val = z
        else:
            w = 0.0
            for k in range(ball.shape[0]):
                na = ball[k, 0] * a + ball[k, 1] * c
                nb = ball[k, 0] * b + ball[k, 1] * d
                nc = ball[k, 2] * a + ball[k, 3] * c
                nd = ball[k, 2] * b + ball[k, 3] * d
                x1, y1 = base_xy(na, nb, nc, nd)
                ch1 = (x1 * x1 + (y1 - 1.0) ** 2) / (2.0 * y1)
                w += np.exp(-ch1 / 0.18)
            if obs_id == 2:
                w *= z
            val = w
        bi = min(it // per_batch, n_batches - 1)
        sums[bi] += val
        counts[bi] += 1
    return sums, counts


@njit(cache=True, nogil=True)
def step_with_jac(a, b, c, d, z, pk, map_id, lo, hi):
    """Convenience single step returning the frame Jacobian (u, s, c, n)."""
    J = np.zeros((4, 4))
    F = np.zeros((4, 4))
    G = np.zeros((4, 4))
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    M23 = np.zeros((2, 3))
    if lo == 0.0 and hi == 1.0:
        a, b, c, d, z, ok = step_map(
            a, b, c, d, z, pk, map_id, True, J, F, G, Jc, T1, T2, M23
        )
    else:
        a, b, c, d, z, ok = step_band(
            a, b, c, d, z, pk, lo, hi, True, J, F, G, Jc, T1, T2, M23
        )
    return a, b, c, d, z, J, ok


@njit(cache=True, nogil=True)
def apply_component(a, b, c, d, z, pk, which, direction):
    """Apply one perturbation factor alone (1, 2 or 3), no Jacobian."""
    J = np.zeros((4, 4))
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    M23 = np.zeros((2, 3))
    ok = True
    if which == 1:
        a, b, c, d, z, acted, ok = apply_h1(
            a, b, c, d, z, pk, direction, False, J, Jc, T1, T2, M23
        )
    elif which == 2:
        a, b, c, d, z, acted = apply_h2(
            a, b, c, d, z, pk, direction, False, J, Jc, T1, T2
        )
    else:
        a, b, c, d, z, acted = apply_h3(
            a, b, c, d, z, pk, direction, False, J, Jc, T1, T2
        )
    return a, b, c, d, z, ok


@njit(cache=True, nogil=True)
def component_with_jac(a, b, c, d, z, pk, which, direction):
    """One perturbation factor with its frame Jacobian and acted flag."""
    J = np.zeros((4, 4))
    for i in range(4):
        J[i, i] = 1.0
    Jc = np.zeros((4, 4))
    T1 = np.zeros((4, 4))
    T2 = np.zeros((4, 4))
    M23 = np.zeros((2, 3))
    ok = True
    acted = False
    if which == 1:
        a, b, c, d, z, acted, ok = apply_h1(
            a, b, c, d, z, pk, direction, True, J, Jc, T1, T2, M23
        )
    elif which == 2:
        a, b, c, d, z, acted = apply_h2(
            a, b, c, d, z, pk, direction, True, J, Jc, T1, T2
        )
    else:
        a, b, c, d, z, acted = apply_h3(
            a, b, c, d, z, pk, direction, True, J, Jc, T1, T2
        )
    if not acted:
        for i in range(4):
            for jj in range(4):
                J[i, jj] = 1.0 if i == jj else 0.0
    return a, b, c, d, z, J, acted, ok
