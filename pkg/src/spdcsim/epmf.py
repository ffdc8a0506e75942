"""
Effective phase-matching function, joint spectra and correlation metrics.

The effective phase-matching function of a fiber-coupled pair is the overlap

    Theta(ws, wi) = int d2qs d2qi  E_p(qs + qi) u_s(qs) u_i(qi) Phi(dkz(qs, qi))

of the Gaussian pump mode E_p, the two Gaussian collection modes u_s, u_i
(centered on the +/- emission directions) and the crystal response
Phi = sinc(dkz L / 2). Three evaluation paths are provided:

``"sinc"``       dkz linearized in the transverse momenta and the true sinc
                 kept; the Gaussian part is integrated in closed form and the
                 remaining 1-D sinc integral reduces to Faddeeva functions
                 (the default).
``"gaussian"``   as above with sinc(x) -> exp(-0.193 x^2), giving a fully
                 Gaussian 4-D integral.
``"quadrature"`` exact dkz and the true sinc, integrated with tensor
                 Gauss-Hermite quadrature against the mode Gaussians. Slow;
                 used as an oracle for the closed forms.

All three are scaled so a perfectly phase-matched, perfectly overlapping point
has amplitude 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import wofz

from .errors import DomainError, NoSignalError, UsageError
from .phasematching import central_waves, conjugate_wavelength, kz_extraordinary, kz_ordinary

GAUSS_SINC = 0.193
DEFAULT_ORDER = 15
METHODS = ("sinc", "gaussian", "quadrature")
DEFAULT_METHOD = "sinc"
PUMP_KINDS = ("cw", "pulsed")
CW_PUMP_RANGE = (650.0, 820.0)
MIN_GRID = 8

_P = np.hstack([np.eye(2), np.eye(2)])  # (xs, xi) -> xs + xi


@dataclass(frozen=True)
class PumpSpec:
    kind: str = "cw"
    center_wavelength: float = 775.0  # nm
    bandwidth_fwhm: float | None = None  # nm, intensity FWHM (pulsed only)

    def __post_init__(self):
        if self.kind not in PUMP_KINDS:
            raise DomainError(f"pump kind must be one of {PUMP_KINDS}")
        if not self.center_wavelength > 0:
            raise DomainError("pump wavelength must be positive")
        if self.kind == "cw" and self.bandwidth_fwhm is not None:
            raise DomainError("a CW pump has no bandwidth")
        if self.kind == "pulsed" and not (self.bandwidth_fwhm is not None and self.bandwidth_fwhm > 0):
            raise DomainError("a pulsed pump needs bandwidth_fwhm > 0")


@dataclass
class JointSpectrumGrid:
    signal_axis: np.ndarray  # nm, strictly increasing
    idler_axis: np.ndarray
    amplitude: np.ndarray  # complex, shape (len(signal_axis), len(idler_axis))
    normalized: bool = False

    def __post_init__(self):
        self.signal_axis = np.asarray(self.signal_axis, dtype=float)
        self.idler_axis = np.asarray(self.idler_axis, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=complex)
        for ax in (self.signal_axis, self.idler_axis):
            if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise UsageError("axes must be strictly increasing 1-D arrays")
        if self.amplitude.shape != (self.signal_axis.size, self.idler_axis.size):
            raise UsageError("amplitude shape does not match the axes")

    @property
    def cell_weights(self):
        return np.outer(cell_widths(self.signal_axis), cell_widths(self.idler_axis))

    @property
    def intensity(self):
        return np.abs(self.amplitude) ** 2

    def norm(self):
        return math.fsum((self.intensity * self.cell_weights).ravel())

    def normalize(self):
        total = self.norm()
        if not total > 0:
            raise NoSignalError("joint spectrum vanishes on the grid")
        return JointSpectrumGrid(self.signal_axis, self.idler_axis, self.amplitude / math.sqrt(total), True)


@dataclass(frozen=True)
class CorrelationMetrics:
    pearson: float
    schmidt_number: float
    purity: float
    fwhm_signal: float
    fwhm_idler: float
    ridge_angle: float
    center_signal: float
    center_idler: float


@dataclass
class CwSlice:
    pump_wavelength: float
    signal_axis: np.ndarray
    idler_axis: np.ndarray
    amplitude: np.ndarray
    center: float  # nm, peak of |amplitude|^2
    fwhm: float  # nm, nan when a half-maximum crossing lies off the axis
    normalized: bool = True

    @property
    def center_idler(self):
        return conjugate_wavelength(self.pump_wavelength, self.center)

    @property
    def intensity(self):
        return np.abs(self.amplitude) ** 2


@dataclass
class DecorrelationResult:
    bandwidth: float
    metrics: CorrelationMetrics
    at_boundary: bool
    coarse: list = field(default_factory=list)  # (bandwidth, pearson)


def cell_widths(axis):
    """Quadrature weight of each sample (trapezoid-free midpoint cells)."""
    axis = np.asarray(axis, dtype=float)
    edges = cell_edges(axis)
    return np.diff(edges)


def cell_edges(axis):
    axis = np.asarray(axis, dtype=float)
    mid = 0.5 * (axis[1:] + axis[:-1])
    return np.concatenate([[axis[0] - (mid[0] - axis[0])], mid, [axis[-1] + (axis[-1] - mid[-1])]])


def default_axes(center=1550.0, half_width=40.0, size=(256, 256)):
    return (np.linspace(center - half_width, center + half_width, size[0]),
            np.linspace(center - half_width, center + half_width, size[1]))


# ---------------------------------------------------------------- EPMF


def _mode_matrix(geometry):
    wp2, wc2 = geometry.pump_waist ** 2, geometry.collection_waist ** 2
    return 0.5 * wp2 * _P.T @ _P + 0.5 * wc2 * np.eye(4)


def _pump_linear(geometry, qp):
    """Linear and constant Gaussian terms from the pump mode displaced by qp."""
    wp2 = geometry.pump_waist ** 2
    qpx, qpy = qp
    J = -0.5 * wp2 * np.stack([qpx, qpy, qpx, qpy], axis=-1)
    c = -0.25 * wp2 * (qpx ** 2 + qpy ** 2)
    return J, c


def _gaussian_path(crystal, geometry, ls, li, theta):
    waves = central_waves(crystal, geometry, ls, li, theta)
    L = crystal.length * 1e3
    beta = GAUSS_SINC * L ** 2 / 4.0
    A0 = _mode_matrix(geometry)
    A0inv = np.linalg.inv(A0)

    gp, gs, gi = waves.grad_p, waves.grad_s, waves.grad_i
    g = np.stack([gp[0] - gs[0], gp[1] - gs[1], gp[0] - gi[0], gp[1] - gi[1]], axis=-1)
    dk0 = waves.dk
    J0, c0 = _pump_linear(geometry, waves.q_p)
    J = J0 - 2.0 * beta * dk0[..., None] * g
    c = c0 - beta * dk0 ** 2

    # M = A0 + 2 beta g g^T: Sherman-Morrison inverse, determinant lemma
    Ag = g @ A0inv
    gAg = np.einsum("...i,...i->...", g, Ag)
    denom = 1.0 + 2.0 * beta * gAg
    JA = J @ A0inv
    JAJ = np.einsum("...i,...i->...", J, JA)
    JAg = np.einsum("...i,...i->...", J, Ag)
    quad = JAJ - 2.0 * beta * JAg ** 2 / denom
    # relative to the ideal overlap (2 pi)^2 / sqrt(det A0)
    return np.exp(0.5 * quad + c) / np.sqrt(denom)


def _sinc_path(crystal, geometry, ls, li, theta):
    """Exact sinc against the mode Gaussians, dkz linear in the transverse momenta.

    With sinc(x) = 1/2 int_{-1}^{1} exp(i x s) ds the transverse integral is a
    Gaussian characteristic function, leaving int_0^1 cos(b s) exp(-a s^2) ds,
    which is evaluated through the Faddeeva function.
    """
    waves = central_waves(crystal, geometry, ls, li, theta)
    half_L = crystal.length * 1e3 / 2.0
    A0inv = np.linalg.inv(_mode_matrix(geometry))
    gp, gs, gi = waves.grad_p, waves.grad_s, waves.grad_i
    g = np.stack([gp[0] - gs[0], gp[1] - gs[1], gp[0] - gi[0], gp[1] - gi[1]], axis=-1)
    J0, c0 = _pump_linear(geometry, waves.q_p)
    mu = J0 @ A0inv
    overlap = np.exp(0.5 * np.einsum("...i,...i->...", J0, mu) + c0)
    b = half_L * (waves.dk + np.einsum("...i,...i->...", g, mu))
    a = 0.5 * half_L ** 2 * np.einsum("...i,...i->...", g @ A0inv, g)
    return overlap * _cos_gauss_integral(a, b)


def _cos_gauss_integral(a, b):
    """int_0^1 cos(b s) exp(-a s^2) ds for a >= 0."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.empty(a.shape)
    small = a < 1e-10
    out[small] = np.sinc(b[small] / np.pi)
    aa, bb = a[~small], b[~small]
    ra = np.sqrt(aa)
    beta = bb / (2.0 * ra)
    val = wofz(beta + 0j) - np.exp(-aa + 1j * bb) * wofz(beta + 1j * ra)
    out[~small] = (np.sqrt(np.pi) / (2.0 * ra) * val).real
    return out


def _hermite_nodes(order):
    x, w = np.polynomial.hermite.hermgauss(order)
    grids = np.meshgrid(x, x, x, x, indexing="ij")
    t = np.stack([gr.ravel() for gr in grids], axis=-1)
    wt = np.prod(np.stack(np.meshgrid(w, w, w, w, indexing="ij"), axis=-1).reshape(-1, 4), axis=1)
    return t, wt


def _quadrature_path(crystal, geometry, ls, li, theta, order=DEFAULT_ORDER, batch_nodes=2_000_000):
    ls, li = np.broadcast_arrays(np.asarray(ls, dtype=float), np.asarray(li, dtype=float))
    shape = ls.shape
    ls, li = ls.ravel(), li.ravel()
    waves = central_waves(crystal, geometry, ls, li, theta)
    L = crystal.length * 1e3
    A0 = _mode_matrix(geometry)
    R = np.linalg.cholesky(A0)  # A0 = R R^T
    T = np.sqrt(2.0) * np.linalg.inv(R).T  # x = mu + T t  gives  -1/2 x'A0x -> -|t|^2
    t, wt = _hermite_nodes(order)
    offsets = t @ T.T  # (nodes, 4)
    norm = np.pi ** -2  # int exp(-|t|^2) d4t = pi^2

    J0, c0 = _pump_linear(geometry, waves.q_p)
    mu = J0 @ np.linalg.inv(A0)  # A0 symmetric
    scale = np.exp(0.5 * np.einsum("...i,...i->...", J0, mu) + c0)

    so, se = crystal.sellmeier_o, crystal.sellmeier_e
    lp = 1.0 / (1.0 / (ls * 1e-3) + 1.0 / (li * 1e-3))
    k0s, k0i, k0p = 2 * np.pi / (ls * 1e-3), 2 * np.pi / (li * 1e-3), 2 * np.pi / lp
    ns_o = so.index(ls * 1e-3)
    ni_o, ni_e = so.index(li * 1e-3), se.index(li * 1e-3)
    np_o, np_e = so.index(lp), se.index(lp)
    th = np.radians(theta)

    out = np.empty(ls.size)
    per = max(1, batch_nodes // len(wt))
    for start in range(0, ls.size, per):
        sl = slice(start, start + per)
        x = mu[sl, None, :] + offsets[None, :, :]  # (pts, nodes, 4)
        qsx = waves.q_s[0][sl, None] + x[..., 0]
        qsy = waves.q_s[1][sl, None] + x[..., 1]
        qix = waves.q_i[0][sl, None] + x[..., 2]
        qiy = waves.q_i[1][sl, None] + x[..., 3]
        kp = kz_extraordinary(np_o[sl, None], np_e[sl, None], k0p[sl, None], th, qsx + qix, qsy + qiy)[0]
        ks = kz_ordinary(ns_o[sl, None], k0s[sl, None], qsx, qsy)[0]
        ki = kz_extraordinary(ni_o[sl, None], ni_e[sl, None], k0i[sl, None], th, qix, qiy)[0]
        phi = np.sinc((kp - ks - ki) * L / (2.0 * np.pi))
        out[sl] = scale[sl] * norm * (phi @ wt)
    return out.reshape(shape)


def epmf_amplitude(crystal, geometry, lambda_s, lambda_i, method=DEFAULT_METHOD, order=DEFAULT_ORDER):
    """Effective phase-matching amplitude at signal/idler wavelengths in nm."""
    theta = crystal.pump_axis_angle(geometry.pump_wavelength)
    if method == "sinc":
        out = _sinc_path(crystal, geometry, np.asarray(lambda_s, float), np.asarray(lambda_i, float), theta)
    elif method == "gaussian":
        out = _gaussian_path(crystal, geometry, np.asarray(lambda_s, float), np.asarray(lambda_i, float), theta)
    elif method == "quadrature":
        out = _quadrature_path(crystal, geometry, lambda_s, lambda_i, theta, order=order)
    else:
        raise UsageError(f"unknown EPMF method {method!r}")
    out = np.asarray(out, dtype=complex)
    return complex(out) if out.ndim == 0 else out


def epmf_function(crystal, geometry, method=DEFAULT_METHOD, order=DEFAULT_ORDER):
    return lambda ls, li: epmf_amplitude(crystal, geometry, ls, li, method=method, order=order)


def epmf_grid(crystal, geometry, signal_axis, idler_axis, method=DEFAULT_METHOD, order=DEFAULT_ORDER, epmf=None):
    fn = epmf or epmf_function(crystal, geometry, method, order)
    S, I = np.meshgrid(signal_axis, idler_axis, indexing="ij")
    return JointSpectrumGrid(signal_axis, idler_axis, fn(S, I)).normalize()


# ---------------------------------------------------------------- pump


def pump_envelope(pump, lambda_s, lambda_i):
    """Gaussian pump amplitude in the sum frequency (real, peak 1)."""
    if pump.kind == "cw":
        raise UsageError("a CW pump is a delta function in the sum frequency; use cw_slice")
    lp = pump.center_wavelength
    # detuning and FWHM both in inverse-wavelength units, 1/nm
    detuning = 1.0 / np.asarray(lambda_s, float) + 1.0 / np.asarray(lambda_i, float) - 1.0 / lp
    fwhm = pump.bandwidth_fwhm / lp ** 2
    return np.exp(-2.0 * math.log(2.0) * (detuning / fwhm) ** 2)


def joint_spectrum(crystal, geometry, pump, signal_axis=None, idler_axis=None, *,
                   method=DEFAULT_METHOD, epmf=None):
    """psi = Theta * A(ws + wi) on the grid, normalized.

    ``epmf`` may be a precomputed JointSpectrumGrid on the same axes or a
    callable (lambda_s, lambda_i) -> amplitude replacing the crystal model.
    """
    if pump.kind != "pulsed":
        raise UsageError("joint_spectrum needs a pulsed pump; use cw_slice for CW")
    if signal_axis is None or idler_axis is None:
        signal_axis, idler_axis = default_axes()
    signal_axis, idler_axis = np.asarray(signal_axis, float), np.asarray(idler_axis, float)
    if signal_axis.size < MIN_GRID or idler_axis.size < MIN_GRID:
        raise UsageError(f"grid must be at least {MIN_GRID}x{MIN_GRID}")
    if isinstance(epmf, JointSpectrumGrid):
        if epmf.amplitude.shape != (signal_axis.size, idler_axis.size):
            raise UsageError("precomputed EPMF grid does not match the requested axes")
        theta = epmf.amplitude
    else:
        fn = epmf or epmf_function(crystal, geometry, method)
        S, I = np.meshgrid(signal_axis, idler_axis, indexing="ij")
        theta = fn(S, I)
    S, I = np.meshgrid(signal_axis, idler_axis, indexing="ij")
    psi = theta * pump_envelope(pump, S, I)
    return JointSpectrumGrid(signal_axis, idler_axis, psi).normalize()


# ---------------------------------------------------------------- CW slices


def _refine_peak(f, axis, values):
    """Peak of ``f`` near the grid maximum: root of the symmetric difference f(x + h) - f(x - h)."""
    k = int(np.argmax(values))
    if k == 0 or k == axis.size - 1:
        return float(axis[k]), float(values[k])
    lo, hi = axis[k - 1], axis[k + 1]
    h = 1e-3 * min(axis[k] - lo, hi - axis[k])
    g = lambda x: f(x + h) - f(x - h)
    if not (g(lo) > 0 > g(hi)):
        return float(axis[k]), float(values[k])
    x = brentq(g, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    return float(x), float(f(x))


def _half_crossing(f, axis, values, k, half, step):
    j = k
    while 0 <= j + step < axis.size and values[j + step] >= half:
        j += step
    if not 0 <= j + step < axis.size:
        return math.nan
    a, b = sorted((axis[j], axis[j + step]))
    return brentq(lambda x: f(x) - half, a, b, xtol=1e-12, rtol=1e-15)


def cw_slice(crystal, geometry, pump_wavelength, signal_axis, *, method=DEFAULT_METHOD, epmf=None):
    """Diagonal slice of the EPMF for a monochromatic pump.

    The idler axis is implied by energy conservation. The returned amplitude
    is normalized so that sum |a|^2 d(lambda_s) = 1.
    """
    if not CW_PUMP_RANGE[0] <= pump_wavelength <= CW_PUMP_RANGE[1]:
        raise DomainError(f"CW pump wavelength must lie in {CW_PUMP_RANGE} nm")
    if epmf is None:
        # the crystal orientation is fixed; only the pump color changes
        fn = epmf_function(crystal, geometry, method)
    else:
        fn = epmf
    signal_axis = np.asarray(signal_axis, dtype=float)
    idler_axis = conjugate_wavelength(pump_wavelength, signal_axis)
    amp = np.asarray(fn(signal_axis, idler_axis), dtype=complex)
    peak = np.max(np.abs(amp))
    if not peak >= 1e-12:
        raise NoSignalError(f"no signal on the {pump_wavelength} nm slice")

    def intensity(x):
        return float(np.abs(fn(np.asarray(x, float), conjugate_wavelength(pump_wavelength, x))) ** 2)

    values = np.abs(amp) ** 2
    center, top = _refine_peak(intensity, signal_axis, values)
    k = int(np.argmax(values))
    left = _half_crossing(intensity, signal_axis, values, k, 0.5 * top, -1)
    right = _half_crossing(intensity, signal_axis, values, k, 0.5 * top, +1)
    norm = math.fsum(values * cell_widths(signal_axis))
    return CwSlice(pump_wavelength, signal_axis, idler_axis, amp / math.sqrt(norm), center, right - left)


# ---------------------------------------------------------------- metrics


def _fwhm_1d(axis, density):
    half = 0.5 * density.max()
    above = np.flatnonzero(density >= half)
    lo_i, hi_i = above[0], above[-1]
    if lo_i == 0 or hi_i == axis.size - 1:
        return math.nan
    left = np.interp(half, [density[lo_i - 1], density[lo_i]], [axis[lo_i - 1], axis[lo_i]])
    right = np.interp(half, [density[hi_i + 1], density[hi_i]], [axis[hi_i + 1], axis[hi_i]])
    return float(right - left)


def schmidt_coefficients(grid):
    """Squared Schmidt coefficients (eigenvalues of the reduced state), summing to 1."""
    ws, wi = cell_widths(grid.signal_axis), cell_widths(grid.idler_axis)
    B = grid.amplitude * np.sqrt(ws)[:, None] * np.sqrt(wi)[None, :]
    sv = np.linalg.svd(B, compute_uv=False)
    lam = sv ** 2
    return lam / math.fsum(lam)


def metrics(grid):
    if not grid.normalized:
        raise UsageError("metrics need a normalized grid")
    w = grid.cell_weights
    p = grid.intensity * w
    total = math.fsum(p.ravel())
    p = p / total
    S, I = np.meshgrid(grid.signal_axis, grid.idler_axis, indexing="ij")
    ms = math.fsum((p * S).ravel())
    mi = math.fsum((p * I).ravel())
    ds, di = S - ms, I - mi
    vss = math.fsum((p * ds * ds).ravel())
    vii = math.fsum((p * di * di).ravel())
    vsi = math.fsum((p * ds * di).ravel())
    pearson = vsi / math.sqrt(vss * vii) if vss > 0 and vii > 0 else 0.0
    pearson = float(np.clip(pearson, -1.0, 1.0))

    lam = schmidt_coefficients(grid)
    K = 1.0 / math.fsum(lam ** 2)

    evals, evecs = np.linalg.eigh(np.array([[vss, vsi], [vsi, vii]]))
    vx, vy = evecs[:, np.argmax(evals)]
    angle = math.degrees(math.atan2(vy, vx))
    if angle <= -90.0:
        angle += 180.0
    elif angle > 90.0:
        angle -= 180.0

    ps = p.sum(axis=1) / cell_widths(grid.signal_axis)
    pi = p.sum(axis=0) / cell_widths(grid.idler_axis)
    return CorrelationMetrics(
        pearson=pearson,
        schmidt_number=K,
        purity=1.0 / K,
        fwhm_signal=_fwhm_1d(grid.signal_axis, ps),
        fwhm_idler=_fwhm_1d(grid.idler_axis, pi),
        ridge_angle=angle,
        center_signal=ms,
        center_idler=mi,
    )


# ---------------------------------------------------------------- decorrelation


def _golden_min(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


def decorrelation_scan(crystal, geometry, bandwidth_range, samples=9, signal_axis=None, idler_axis=None,
                       *, pump_wavelength=None, method=DEFAULT_METHOD, epmf=None, tol=1e-3):
    """Pump bandwidth (nm) minimizing |pearson|, by coarse scan plus golden-section refinement."""
    lo, hi = bandwidth_range
    if not (lo > 0 and hi >= lo):
        raise UsageError("bandwidth range must be positive and ordered")
    if samples < 3:
        raise UsageError("decorrelation scan needs at least 3 samples")
    if signal_axis is None or idler_axis is None:
        signal_axis, idler_axis = default_axes()
    lp = pump_wavelength or geometry.pump_wavelength
    if isinstance(epmf, JointSpectrumGrid):
        theta = epmf
    else:
        S, I = np.meshgrid(signal_axis, idler_axis, indexing="ij")
        fn = epmf or epmf_function(crystal, geometry, method)
        theta = JointSpectrumGrid(signal_axis, idler_axis, fn(S, I))

    cache = {}

    def evaluate(bw):
        if bw not in cache:
            grid = joint_spectrum(crystal, geometry, PumpSpec("pulsed", lp, bw), signal_axis, idler_axis,
                                  epmf=theta)
            cache[bw] = metrics(grid)
        return cache[bw]

    if hi == lo:
        return DecorrelationResult(lo, evaluate(lo), True, [(lo, evaluate(lo).pearson)])

    coarse = np.linspace(lo, hi, samples)
    scores = [abs(evaluate(float(b)).pearson) for b in coarse]
    k = int(np.argmin(scores))
    a, b = coarse[max(k - 1, 0)], coarse[min(k + 1, samples - 1)]
    best, _ = _golden_min(lambda bw: abs(evaluate(bw).pearson), float(a), float(b), tol)
    if abs(evaluate(float(coarse[k])).pearson) < abs(evaluate(best).pearson):
        best = float(coarse[k])
    at_boundary = k in (0, samples - 1)
    return DecorrelationResult(best, evaluate(best), at_boundary,
                               [(float(b_), evaluate(float(b_)).pearson) for b_ in coarse])
