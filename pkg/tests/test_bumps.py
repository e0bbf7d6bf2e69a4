import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from geodesic_lab.bumps import BumpSuite, build_suite

EPS1, EPS2 = 0.02, 0.01


def make_suite(xi_amp=0.001):
    return BumpSuite(EPS1, EPS2, 1.0, 1.0, xi_amp, 0.1)


def test_phi_plateau_support_monotone():
    s = make_suite()
    grid = np.linspace(0.0, EPS1 * 1.2, 10000)
    phi = s.phi(grid)
    assert np.all(phi[grid <= EPS2] == 1.0)
    assert np.all(phi[grid >= EPS1] == 0.0)
    assert np.all(np.diff(phi) <= 1e-15)


def test_psi_plateau_and_support():
    s = make_suite()
    inner = np.linspace(-EPS2 * 0.999, EPS2 * 0.999, 101)
    assert np.allclose(s.psi(inner), 1.0, atol=1e-15)
    outer = np.array([EPS1, EPS1 * 1.5, -EPS1, -2 * EPS1])
    assert np.all(s.psi(outer) == 0.0)


def test_psi_one_sided_integrals_vanish():
    # independent quadrature oracle (composite Simpson on a fine grid)
    s = make_suite()
    n = 40001
    for sign in (1.0, -1.0):
        ys = np.linspace(0.0, sign * EPS1, n)
        vals = s.psi(ys)
        h = (ys[-1] - ys[0]) / (n - 1)
        simpson = h / 3 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum() + 2 * vals[2:-2:2].sum())
        assert abs(simpson) < 1e-10


def test_psi_antiderivative_consistency():
    s = make_suite()
    ys = np.linspace(-EPS1, EPS1, 2001)
    h = 1e-8
    for y in ys[::100]:
        fd = (s.psi_pair(y + h)[1] - s.psi_pair(y - h)[1]) / (2 * h)
        assert abs(fd - s.psi_pair(y)[0]) < 1e-6


def test_xi_positive_and_flat():
    s = make_suite()
    zs = np.linspace(0.01, 0.99, 501)
    assert np.all(s.xi(zs) > 0.0)
    # derivatives vanish at the endpoints to all tested orders
    for z0 in (0.0, 1.0):
        for order in range(1, 5):
            h = 1e-3
            pts = z0 + np.arange(order + 1) * (h if z0 == 0.0 else -h)
            vals = s.xi(pts)
            fd = np.diff(vals, n=order) / h**order
            assert abs(fd[0]) < 1e-8


def test_zeta_plateau_family():
    s = make_suite()
    grid = np.linspace(0.0, 1.2, 2000)
    z1 = s.zeta(grid, 1.0)
    assert np.all(z1[grid <= 0.9] == 1.0)
    assert np.all(z1[grid >= 1.0] == 0.0)
    for ratio in (1.5, 2.0, 4.0):
        zr = s.zeta(grid, ratio)
        assert np.all(zr[grid <= ratio - 1.0] == 1.0)
        # edge reuses the unit falloff shape
        tail = grid[grid >= ratio - 1.0]
        expect = s.zeta(tail - (ratio - 1.0), 1.0)
        assert np.allclose(zr[grid >= ratio - 1.0], expect, atol=1e-14)


@settings(max_examples=80, deadline=None)
@given(st.floats(min_value=-0.03, max_value=0.03, allow_nan=False))
def test_derivatives_match_finite_differences(y):
    s = make_suite()
    h = 1e-7
    v, d = s.psi3(y)
    fd = (s.psi_pair(y + h)[0] - s.psi_pair(y - h)[0]) / (2 * h)
    assert abs(d - fd) < 2e-4 * max(1.0, abs(d))
    vphi, dphi, _ = s.phi3(abs(y))
    fdphi = (s.phi3(abs(y) + h)[0] - s.phi3(abs(y) - h)[0]) / (2 * h)
    assert abs(dphi - fdphi) < 2e-4 * max(1.0, abs(dphi))


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.02, max_value=0.98, allow_nan=False))
def test_xi_derivatives_match_fd(z):
    s = make_suite()
    h = 1e-6
    v, d1, d2 = s.xi3(z)
    fd1 = (s.xi3(z + h)[0] - s.xi3(z - h)[0]) / (2 * h)
    fd2 = (s.xi3(z + h)[0] - 2 * v + s.xi3(z - h)[0]) / (h * h)
    assert abs(d1 - fd1) < 1e-5 * max(1.0, abs(d1))
    assert abs(d2 - fd2) < 1e-2 * max(1.0, abs(d2))


def test_rho_rescaling():
    s = make_suite()
    eps4 = 0.02
    # with equal scales the twist profile is the radial plateau itself
    rr = np.linspace(0, eps4, 200)
    for r in rr[::20]:
        v, d, _ = s.rho3(r, eps4)
        vp, dp, _ = s.phi3(r)
        assert abs(v - vp) < 1e-14
        assert abs(d - dp) < 1e-14
    # support always ends at eps4 regardless of the scale ratio
    for eps4b in (0.01, 0.04):
        assert s.rho3(eps4b * 0.999, eps4b)[0] > 0.0
        assert s.rho3(eps4b, eps4b)[0] == 0.0


def test_calibrated_amplitude():
    suite = build_suite(EPS1, EPS2, 1.0, 1.0, 0.1, beta=0.05, delta=0.0955)
    assert suite.xi_amp > 0
    assert 0.05 * suite.field_c1_bound() <= 0.51 * 0.0955


def test_kernel_and_wrapper_agree():
    from geodesic_lab import _kernels as K

    s = make_suite()
    rng = np.random.default_rng(4)
    for _ in range(200):
        y = rng.uniform(-0.03, 0.03)
        z = rng.uniform(0.0, 1.0)
        assert s.psi_pair(y)[0] == K.psi3W(y, EPS2, EPS1, 1.0)[0]
        assert s.xi3(z)[0] == K.xi3(z, s.xi_amp)[0]
