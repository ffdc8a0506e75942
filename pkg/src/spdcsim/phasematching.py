"""
Type-II non-collinear phase matching in a negative uniaxial crystal.

Polarizations: pump extraordinary, signal ordinary, idler extraordinary.
The pump travels along z; the optic axis lies in the x-z plane at the
internal angle theta to z. Signal and idler are collected symmetrically at
+/- the external emission angle, either in the plane perpendicular to the
principal plane (``emission_plane="perpendicular"``, the cone-intersection
geometry) or inside it (``"principal"``).

Wavelengths in nm at the interface, micrometers internally; wavevectors in
rad/um.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import bisect

from .dispersion import index_e
from .errors import DomainError, NoPhaseMatchingError

EMISSION_PLANES = ("perpendicular", "principal")

MISMATCH_TOL = 1e-4  # rad/um
WAVELENGTH_TOL = 1e-6  # nm
SEARCH_WINDOW = (1300.0, 1800.0)  # nm, ordinary-photon wavelength
DEGENERACY_BRACKET = (20.0, 45.0)  # deg


@dataclass(frozen=True)
class SourceGeometry:
    pump_waist: float = 150.0  # um
    collection_waist: float = 105.0  # um
    external_emission_angle: float = 3.0  # deg
    pump_wavelength: float = 775.0  # nm
    emission_plane: str = "perpendicular"

    def __post_init__(self):
        if not (self.pump_waist > 0 and self.collection_waist > 0):
            raise DomainError("beam waists must be positive")
        if not 0 <= self.external_emission_angle < 90:
            raise DomainError("external emission angle must lie in [0, 90) degrees")
        if not self.pump_wavelength > 0:
            raise DomainError("pump wavelength must be positive")
        if self.emission_plane not in EMISSION_PLANES:
            raise DomainError(f"emission_plane must be one of {EMISSION_PLANES}")

    def emission_direction(self):
        """Unit transverse vector (x, y) pointing at the signal collection arm."""
        return (0.0, 1.0) if self.emission_plane == "perpendicular" else (1.0, 0.0)


@dataclass(frozen=True)
class TuningCurvePoint:
    internal_pump_axis_angle: float
    lambda_o: float
    lambda_e: float
    residual_mismatch: float


@dataclass
class TuningCurve:
    points: list
    skipped: list  # (theta, reason)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def refract(external_angle, index):
    """Internal angle (deg) from Snell's law at a crystal-air face."""
    if index < 1:
        raise DomainError("index must be >= 1")
    return float(np.degrees(np.arcsin(np.sin(np.radians(external_angle)) / index)))


def unrefract(internal_angle, index):
    return float(np.degrees(np.arcsin(index * np.sin(np.radians(internal_angle)))))


def conjugate_wavelength(lambda_p, lambda_s):
    """Idler wavelength from energy conservation, same units as the inputs."""
    return 1.0 / (1.0 / lambda_p - 1.0 / lambda_s)


def kz_ordinary(n_o, k0, qx, qy):
    """Longitudinal wavevector of an ordinary wave and its gradient in (qx, qy)."""
    k = n_o * k0
    kz = np.sqrt(k * k - qx * qx - qy * qy)
    return kz, -qx / kz, -qy / kz


def kz_extraordinary(n_o, n_e, k0, theta, qx, qy):
    """Longitudinal wavevector of an extraordinary wave with transverse (qx, qy).

    Solves (k.c)^2/n_o^2 + (|k|^2 - (k.c)^2)/n_e^2 = k0^2 for kz with the
    optic axis c = (sin theta, 0, cos theta). ``theta`` in radians. Returns kz
    and the implicit derivatives dkz/dqx, dkz/dqy.
    """
    s, c = np.sin(theta), np.cos(theta)
    d = 1.0 / n_o ** 2 - 1.0 / n_e ** 2
    a = d * c * c + 1.0 / n_e ** 2
    b = 2.0 * d * s * c * qx
    c0 = d * s * s * qx * qx + (qx * qx + qy * qy) / n_e ** 2 - k0 * k0
    kz = (-b + np.sqrt(b * b - 4.0 * a * c0)) / (2.0 * a)
    u = qx * s + kz * c
    f_kz = 2.0 * d * c * u + 2.0 * kz / n_e ** 2
    f_qx = 2.0 * d * s * u + 2.0 * qx / n_e ** 2
    f_qy = 2.0 * qy / n_e ** 2
    return kz, -f_qx / f_kz, -f_qy / f_kz


@dataclass
class CentralWaves:
    """Wavevectors of the three fields at the nominal collection directions."""

    dk: np.ndarray  # longitudinal mismatch k_p - k_s - k_i
    grad_p: tuple
    grad_s: tuple
    grad_i: tuple
    q_s: tuple
    q_i: tuple
    q_p: tuple


def central_waves(crystal, geometry, lambda_s_nm, lambda_i_nm, theta_deg, pump_transverse=True,
                  lambda_p_nm=None):
    """Evaluate kz and its transverse gradients for collection along +/- the emission angle.

    Transverse wavevectors are continuous across the exit face, so the
    external angle fixes q = k0 sin(alpha) for each photon exactly. With
    ``pump_transverse`` the pump carries q_s + q_i; otherwise it is a plane
    wave along z. The pump sits at the sum frequency unless ``lambda_p_nm``
    is given.
    """
    ls = np.asarray(lambda_s_nm, dtype=float) * 1e-3
    li = np.asarray(lambda_i_nm, dtype=float) * 1e-3
    if lambda_p_nm is None:
        lp = 1.0 / (1.0 / ls + 1.0 / li)
    else:
        lp = np.broadcast_to(np.asarray(lambda_p_nm, dtype=float) * 1e-3, np.broadcast(ls, li).shape)
    theta = np.radians(theta_deg)
    so, se = crystal.sellmeier_o, crystal.sellmeier_e
    sin_a = np.sin(np.radians(geometry.external_emission_angle))
    ex, ey = geometry.emission_direction()

    k0s, k0i, k0p = 2 * np.pi / ls, 2 * np.pi / li, 2 * np.pi / lp
    qs = (k0s * sin_a * ex, k0s * sin_a * ey)
    qi = (-k0i * sin_a * ex, -k0i * sin_a * ey)
    if pump_transverse:
        qp = (qs[0] + qi[0], qs[1] + qi[1])
    else:
        qp = (np.zeros_like(lp), np.zeros_like(lp))

    kp, gpx, gpy = kz_extraordinary(so.index(lp), se.index(lp), k0p, theta, *qp)
    ks, gsx, gsy = kz_ordinary(so.index(ls), k0s, *qs)
    ki, gix, giy = kz_extraordinary(so.index(li), se.index(li), k0i, theta, *qi)
    return CentralWaves(kp - ks - ki, (gpx, gpy), (gsx, gsy), (gix, giy), qs, qi, qp)


def longitudinal_mismatch(crystal, geometry, lambda_s, lambda_i, theta_pump_axis):
    """k_p - k_s cos(theta_s) - k_i cos(theta_i) in rad/um, pump along z.

    Wavelengths in nm; energy conservation is not assumed, the pump is at
    ``geometry.pump_wavelength``.
    """
    dk = central_waves(crystal, geometry, lambda_s, lambda_i, theta_pump_axis, pump_transverse=False,
                       lambda_p_nm=geometry.pump_wavelength).dk
    return float(dk) if np.ndim(dk) == 0 else dk


def _mismatch_on_conservation(crystal, geometry, theta, lambda_p):
    def f(lambda_o):
        lambda_e = conjugate_wavelength(lambda_p, lambda_o)
        return longitudinal_mismatch(crystal, geometry, lambda_o, lambda_e, theta)
    return f


def central_wavelengths(crystal, geometry, theta_pump_axis, window=SEARCH_WINDOW):
    """(lambda_o, lambda_e) in nm solving phase matching with energy conservation.

    The ordinary wavelength is scanned on a 1 nm grid for sign changes of the
    mismatch; the first bracket is refined by bisection.
    """
    lambda_p = geometry.pump_wavelength
    lo, hi = window
    if lo <= lambda_p:
        raise DomainError("search window must lie above the pump wavelength")
    f = _mismatch_on_conservation(crystal, geometry, theta_pump_axis, lambda_p)
    grid = np.arange(lo, hi + 0.5, 1.0)
    try:
        vals = f(grid)
    except DomainError as exc:
        raise DomainError(f"search window leaves the crystal dispersion model: {exc}") from exc
    signs = np.sign(vals)
    exact = np.flatnonzero(signs == 0)
    change = np.flatnonzero(signs[:-1] * signs[1:] < 0)
    if exact.size and (not change.size or exact[0] <= change[0]):
        lambda_o = float(grid[exact[0]])
    elif change.size:
        k = change[0]
        lambda_o = bisect(lambda x: float(f(x)), grid[k], grid[k + 1], xtol=WAVELENGTH_TOL, rtol=1e-15)
    else:
        raise NoPhaseMatchingError(
            f"no phase matching for theta = {theta_pump_axis:.4f} deg in {lo:.0f}-{hi:.0f} nm"
        )
    return lambda_o, conjugate_wavelength(lambda_p, lambda_o)


def tuning_curve(crystal, geometry, theta_range):
    points, skipped = [], []
    for theta in theta_range:
        theta = float(theta)
        try:
            lo, le = central_wavelengths(crystal, geometry, theta)
        except (NoPhaseMatchingError, DomainError) as exc:
            skipped.append((theta, str(exc)))
            continue
        res = longitudinal_mismatch(crystal, geometry, lo, le, theta)
        points.append(TuningCurvePoint(theta, lo, le, abs(res)))
    return TuningCurve(points, skipped)


def degeneracy_angle(crystal, geometry, bracket=DEGENERACY_BRACKET):
    """Internal pump-axis angle (deg) giving degenerate emission at twice the pump wavelength.

    The cut angle and tilt of ``crystal`` are ignored.
    """
    lam = 2.0 * geometry.pump_wavelength
    f = lambda theta: longitudinal_mismatch(crystal, geometry, lam, lam, theta)
    grid = np.linspace(bracket[0], bracket[1], 51)
    vals = np.array([f(t) for t in grid])
    change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
    if not change.size:
        raise NoPhaseMatchingError(
            f"degenerate phase matching not reachable for {bracket[0]}-{bracket[1]} deg"
        )
    k = change[0]
    return bisect(f, grid[k], grid[k + 1], xtol=1e-10, rtol=1e-15)


def angle_for_wavelength(crystal, geometry, lambda_o, bracket=(25.0, 35.0)):
    """Internal angle (deg) at which the ordinary photon is emitted at ``lambda_o`` nm."""
    lambda_e = conjugate_wavelength(geometry.pump_wavelength, lambda_o)
    f = lambda theta: longitudinal_mismatch(crystal, geometry, lambda_o, lambda_e, theta)
    if f(bracket[0]) * f(bracket[1]) > 0:
        raise NoPhaseMatchingError(f"no angle in {bracket} deg emits the o-photon at {lambda_o} nm")
    return bisect(f, *bracket, xtol=1e-10, rtol=1e-15)


def with_pump_axis_angle(crystal, theta, pump_wavelength_nm):
    """Copy of ``crystal`` whose tilt places the internal pump-axis angle at ``theta``."""
    n = index_e(crystal, pump_wavelength_nm * 1e-3, theta)
    tilt = unrefract(theta - crystal.cut_angle, n)
    return replace(crystal, tilt=tilt)
