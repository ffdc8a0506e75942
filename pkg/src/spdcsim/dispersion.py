"""
Refractive index, group index and chromatic dispersion models.

Wavelengths are vacuum wavelengths in micrometers throughout this module.
Crystal indices come from a one-resonance Sellmeier form

    n^2(lambda) = A + B / (lambda^2 - C) - D * lambda^2

and the fiber is a weakly guiding step-index profile whose LP01 effective
index is found from the scalar characteristic equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect
from scipy.special import j0, j1, k0e, k1e

from .errors import DomainError, ModelError

C_M_PER_S = 299792458.0
C_UM_PER_PS = C_M_PER_S * 1e-6

# LP11 cutoff of a step-index fiber (first zero of J0)
V_CUTOFF = 2.404825557695773
OPERATING_BAND = (1.26, 1.64)

# central-difference steps, micrometers
GROUP_INDEX_STEP = 1e-3
DISPERSION_STEP = 1e-3

_B_BRACKET = (1e-9, 1.0 - 1e-9)


@dataclass(frozen=True)
class SellmeierSet:
    A: float
    B: float
    C: float
    D: float
    lambda_min: float
    lambda_max: float

    def __post_init__(self):
        if not self.lambda_min < self.lambda_max:
            raise DomainError(f"empty validity window ({self.lambda_min}, {self.lambda_max})")
        if self.lambda_min ** 2 - self.C <= 0:
            raise DomainError("pole of the Sellmeier form lies inside the validity window")
        grid = np.linspace(self.lambda_min, self.lambda_max, 101)
        if np.any(self._n2(grid) <= 1.0):
            raise DomainError("n^2 <= 1 inside the validity window")

    def _n2(self, lam):
        lam2 = lam * lam
        return self.A + self.B / (lam2 - self.C) - self.D * lam2

    def check(self, wavelength):
        lam = np.asarray(wavelength, dtype=float)
        if np.any(lam < self.lambda_min) or np.any(lam > self.lambda_max) or np.any(~np.isfinite(lam)):
            raise DomainError(
                f"wavelength outside Sellmeier window [{self.lambda_min}, {self.lambda_max}] um"
            )
        return lam

    def index(self, wavelength):
        lam = self.check(wavelength)
        n = np.sqrt(self._n2(lam))
        return float(n) if n.ndim == 0 else n


# Eimerl et al. (1987) beta-BBO, 0.2-2.6 um
BBO_ORDINARY = SellmeierSet(2.7405, 0.0184, 0.0179, 0.0155, 0.2, 2.6)
BBO_EXTRAORDINARY = SellmeierSet(2.3730, 0.0128, 0.0156, 0.0044, 0.2, 2.6)

# one-resonance least-squares fit to Malitson's fused silica over 1.2-1.7 um
# (max index error 6e-7 in that span)
FUSED_SILICA = SellmeierSet(2.10651757, 0.00578811, 0.2050814, 0.00996788, 1.2, 1.7)


@dataclass(frozen=True)
class CrystalSpec:
    """Uniaxial crystal. Angles in degrees, length in millimeters.

    ``tilt`` is the external angle between the pump and the surface normal;
    the internal pump-axis angle is ``cut_angle`` plus the refracted tilt.
    """

    cut_angle: float = 29.67
    length: float = 5.0
    sellmeier_o: SellmeierSet = BBO_ORDINARY
    sellmeier_e: SellmeierSet = BBO_EXTRAORDINARY
    tilt: float = 0.0

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError("crystal length must be positive")
        if not 0.0 <= self.cut_angle <= 90.0:
            raise DomainError("cut angle must lie in [0, 90] degrees")

    def pump_axis_angle(self, pump_wavelength_nm):
        """Internal angle between the pump and the optic axis, degrees."""
        lam = pump_wavelength_nm * 1e-3
        theta = self.cut_angle
        # pump is extraordinary: its index depends on the refracted angle
        for _ in range(20):
            n = index_e(self, lam, theta)
            theta_new = self.cut_angle + np.degrees(np.arcsin(np.sin(np.radians(self.tilt)) / n))
            if abs(theta_new - theta) < 1e-13:
                break
            theta = theta_new
        theta = float(theta_new)
        if not 0.0 <= theta <= 90.0:
            raise DomainError(f"internal pump-axis angle {theta:.3f} deg outside [0, 90]")
        return theta


@dataclass(frozen=True)
class FiberSpec:
    """Step-index single-mode fiber. length in m, core_radius in um."""

    length: float = 4202.0
    core_radius: float = 4.1
    numerical_aperture: float = 0.117
    cladding: SellmeierSet = field(default=FUSED_SILICA)

    def __post_init__(self):
        if not self.length >= 0:
            raise DomainError("fiber length must be non-negative")
        if not self.core_radius > 0:
            raise DomainError("core radius must be positive")
        if not 0 < self.numerical_aperture < 1:
            raise DomainError("numerical aperture must lie in (0, 1)")
        v_max = self.v_number(OPERATING_BAND[0])
        if v_max >= V_CUTOFF:
            raise DomainError(
                f"fiber is multimode in the operating band (V = {v_max:.4f} at {OPERATING_BAND[0]} um)"
            )

    def v_number(self, wavelength):
        return 2 * np.pi / np.asarray(wavelength, dtype=float) * self.core_radius * self.numerical_aperture

    def n_clad(self, wavelength):
        return self.cladding.index(wavelength)

    def n_core(self, wavelength):
        return np.sqrt(self.cladding.index(wavelength) ** 2 + self.numerical_aperture ** 2)


def index_o(crystal, wavelength):
    return crystal.sellmeier_o.index(wavelength)


def index_e(crystal, wavelength, theta):
    """Extraordinary index at angle ``theta`` (deg) between k and the optic axis."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > 90):
        raise DomainError("propagation angle must lie in [0, 90] degrees")
    no = crystal.sellmeier_o.index(wavelength)
    ne = crystal.sellmeier_e.index(wavelength)
    t = np.radians(theta)
    n = 1.0 / np.sqrt(np.cos(t) ** 2 / no ** 2 + np.sin(t) ** 2 / ne ** 2)
    return float(n) if np.ndim(n) == 0 else n


def lp01_residual(b, v):
    """u J1(u)/J0(u) - w K1(w)/K0(w) at normalized propagation constant b."""
    u = v * np.sqrt(1.0 - b)
    w = v * np.sqrt(b)
    # scaled Bessel K: the exp(-w) factors cancel in the ratio
    return u * j1(u) / j0(u) - w * k1e(w) / k0e(w)


def _solve_b(v):
    """Vectorized bisection on b in (0, 1) to |db| < 1e-12."""
    v = np.asarray(v, dtype=float)
    lo = np.full(v.shape, _B_BRACKET[0])
    hi = np.full(v.shape, _B_BRACKET[1])
    f_lo = lp01_residual(lo, v)
    f_hi = lp01_residual(hi, v)
    if not (np.all(np.isfinite(f_lo)) and np.all(np.isfinite(f_hi))) or np.any(f_lo * f_hi > 0):
        raise ModelError("no LP01 root in the b-bracket; invalid fiber profile")
    while v.size and np.max(hi - lo) > 1e-12:
        mid = 0.5 * (lo + hi)
        f_mid = lp01_residual(mid, v)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(left, mid, lo)
        f_lo = np.where(left, f_mid, f_lo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def normalized_propagation_constant(fiber, wavelength):
    lam = np.asarray(wavelength, dtype=float)
    v = fiber.v_number(lam)
    if np.any(v >= V_CUTOFF):
        raise DomainError(f"fiber is multimode at the requested wavelength (V >= {V_CUTOFF:.4f})")
    b = _solve_b(v)
    return float(b) if b.ndim == 0 else b


def fiber_neff(fiber, wavelength):
    """LP01 effective index of the step-index fiber."""
    b = normalized_propagation_constant(fiber, wavelength)
    ncl = fiber.n_clad(wavelength)
    n = np.sqrt(ncl ** 2 + b * fiber.numerical_aperture ** 2)
    return float(n) if np.ndim(n) == 0 else n


def _check_band(wavelength, reach):
    lam = np.asarray(wavelength, dtype=float)
    lo, hi = OPERATING_BAND
    if np.any(lam - reach < lo - 1e-12) or np.any(lam + reach > hi + 1e-12):
        raise DomainError(
            f"finite-difference stencil (+/-{reach} um) leaves the operating band {OPERATING_BAND} um"
        )
    return lam


def group_index_from(neff, wavelength, step=GROUP_INDEX_STEP):
    """n_g = n - lambda dn/dlambda by central difference on any n(lambda) callable."""
    lam = np.asarray(wavelength, dtype=float)
    n0 = neff(lam)
    dn = (neff(lam + step) - neff(lam - step)) / (2 * step)
    return n0 - lam * dn


def dispersion_from(neff, wavelength, step=DISPERSION_STEP):
    """D = -(lambda/c) d^2n/dlambda^2 in ps/(nm km)."""
    lam = np.asarray(wavelength, dtype=float)
    d2n = (neff(lam + step) - 2 * neff(lam) + neff(lam - step)) / step ** 2
    # lambda[um] * d2n[1/um^2] / c[m/s] is 1e6 s/m^2 = 1e12 ps/(nm km)
    return -lam * d2n / C_M_PER_S * 1e12


def fiber_group_index(fiber, wavelength, step=GROUP_INDEX_STEP):
    lam = _check_band(wavelength, step)
    ng = group_index_from(lambda x: fiber_neff(fiber, x), lam, step)
    return float(ng) if np.ndim(ng) == 0 else ng


def fiber_dispersion(fiber, wavelength, step=DISPERSION_STEP):
    """Dispersion parameter in ps/(nm km); positive means longer wavelengths arrive later."""
    lam = _check_band(wavelength, step)
    d = dispersion_from(lambda x: fiber_neff(fiber, x), lam, step)
    return float(d) if np.ndim(d) == 0 else d


def zero_dispersion_wavelength(fiber, lo=1.26, hi=1.36):
    step = DISPERSION_STEP
    f = lambda lam: fiber_dispersion(fiber, lam)
    lo, hi = max(lo, OPERATING_BAND[0] + step), min(hi, OPERATING_BAND[1] - step)
    if f(lo) * f(hi) > 0:
        raise ModelError(f"no zero-dispersion wavelength in [{lo}, {hi}] um")
    return bisect(f, lo, hi, xtol=1e-10)
