"""Smooth bump profiles: radial plateau, signed profile, interval profile.

Everything is built from the flat mollifier ``exp(-1/s)``, so supports are
exact and every derivative vanishes identically at the support edges.  The
signed profile is the derivative of ``psi0 * y * B(y)`` for a plateau bump
``B``; its one-sided integrals vanish by construction rather than by
numerical tuning.  Scalar evaluation lives in ``_kernels`` so the orbit
loops and these wrappers can never disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

__all__ = ["BumpSuite", "build_suite"]


@dataclass(frozen=True)
class BumpSuite:
    """All profiles with their widths and amplitudes fixed.

    ``phi``: phi0 on [0, eps2], zero beyond eps1, nonincreasing.
    ``psi``: signed, psi0 on (-eps2, eps2), zero beyond |eps1|, with both
    one-sided integrals exactly zero.  ``xi``: positive on (0, 1), flat at
    the endpoints.  ``zeta``: the cutoff-plateau family for box rotations.
    """

    eps1: float
    eps2: float
    phi0: float
    psi0: float
    xi_amp: float
    kappa: float
    c1_norms: dict = field(default_factory=dict, compare=False)

    # -- scalar triples (value, d/ds, d2/ds2) ------------------------------
    def phi3(self, r: float):
        return K.phi3(r, self.eps2, self.eps1, self.phi0)

    def psi3(self, y: float):
        v, d, _ = K.psi3W(y, self.eps2, self.eps1, self.psi0)
        return v, d

    def psi_pair(self, y: float):
        v, _, big = K.psi3W(y, self.eps2, self.eps1, self.psi0)
        return v, big

    def xi3(self, z: float):
        return K.xi3(z, self.xi_amp)

    def zeta3(self, s: float, ratio: float = 1.0):
        return K.zeta3(s, ratio, self.kappa)

    def rho3(self, r: float, eps4: float):
        return K.rho3(r, self.eps2, self.eps1, self.phi0, eps4)

    # -- array conveniences --------------------------------------------------
    def phi(self, r):
        return np.array([self.phi3(s)[0] for s in np.atleast_1d(r)])

    def dphi(self, r):
        return np.array([self.phi3(s)[1] for s in np.atleast_1d(r)])

    def psi(self, y):
        return np.array([self.psi_pair(s)[0] for s in np.atleast_1d(y)])

    def Psi(self, y):
        return np.array([self.psi_pair(s)[1] for s in np.atleast_1d(y)])

    def xi(self, z):
        return np.array([self.xi3(s)[0] for s in np.atleast_1d(z)])

    def dxi(self, z):
        return np.array([self.xi3(s)[1] for s in np.atleast_1d(z)])

    def zeta(self, s, ratio: float = 1.0):
        return np.array([self.zeta3(u, ratio)[0] for u in np.atleast_1d(s)])

    # -- measured norms ------------------------------------------------------
    def measure_c1_norms(self, n: int = 20001) -> dict:
        rs = np.linspace(0.0, self.eps1 * 1.05, n)
        phi_c1 = max(float(np.max(np.abs(self.phi(rs)))), float(np.max(np.abs(self.dphi(rs)))))
        ys = np.linspace(-self.eps1 * 1.05, self.eps1 * 1.05, n)
        psi_c1 = max(
            float(np.max(np.abs(self.psi(ys)))),
            float(np.max(np.abs([self.psi3(y)[1] for y in ys]))),
        )
        zs = np.linspace(0.0, 1.0, n)
        xi_c1 = max(float(np.max(np.abs(self.xi(zs)))), float(np.max(np.abs(self.dxi(zs)))))
        out = {"phi": phi_c1, "psi": psi_c1, "xi": xi_c1}
        self.c1_norms.update(out)
        return out

    def field_c1_bound(self) -> float:
        """Grid bound on the divergence-free field's first derivatives.

        This is what the flow-time budget multiplies; the interval
        amplitude is calibrated against it.
        """
        xs = np.linspace(-self.eps1, self.eps1, 801)
        zs = np.linspace(1e-4, 1.0 - 1e-4, 801)
        psi_v = np.array([self.psi3(x)[0] for x in xs])
        psi_d = np.array([self.psi3(x)[1] for x in xs])
        big_v = np.array([self.psi_pair(x)[1] for x in xs])
        xi_v = np.array([self.xi3(z)[0] for z in zs])
        xi_d = np.array([self.xi3(z)[1] for z in zs])
        xi_dd = np.array([self.xi3(z)[2] for z in zs])
        phi_c1 = self.c1_norms.get("phi") or self.measure_c1_norms()["phi"]
        m = 0.0
        m = max(m, self.phi0 * np.max(np.abs(xi_v)) * np.max(np.abs(psi_d)))
        m = max(m, self.phi0 * np.max(np.abs(xi_d)) * np.max(np.abs(psi_v)))
        m = max(m, self.phi0 * np.max(np.abs(xi_dd)) * np.max(np.abs(big_v)))
        m = max(m, phi_c1 * np.max(np.abs(xi_d)) * np.max(np.abs(big_v)))
        m = max(m, phi_c1 * np.max(np.abs(xi_v)) * np.max(np.abs(psi_v)))
        return float(m)


def build_suite(eps1, eps2, phi0, psi0, kappa, xi_amp=None, beta=None, delta=None):
    """Construct the suite, calibrating the interval amplitude if asked.

    With ``xi_amp`` absent or zero the amplitude is set so the time-beta
    flow of the field stays within half the allowed C1 budget.
    """
    if not xi_amp:
        probe = BumpSuite(eps1, eps2, phi0, psi0, 1.0, kappa)
        unit = probe.field_c1_bound()
        if beta is None or delta is None:
            raise ValueError("xi_amp calibration needs beta and delta")
        xi_amp = 0.5 * delta / (beta * unit)
    suite = BumpSuite(eps1, eps2, phi0, psi0, float(xi_amp), kappa)
    suite.measure_c1_norms()
    return suite
