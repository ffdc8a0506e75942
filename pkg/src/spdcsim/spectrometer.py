"""
Dispersive-fiber spectrometer: time-of-flight forward model, resolution
budget, calibration and spectrum reconstruction.

Times in ps, wavelengths in nm, fiber lengths in m.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dispersion import C_M_PER_S, fiber_dispersion, fiber_group_index
from .errors import DomainError, SingularResolutionError, UsageError

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
EXTRAPOLATION_LIMIT = 0.10
# |D| below this (ps/(nm km)) is treated as zero; the finite-difference noise floor of D is ~3e-5
D_SINGULAR = 1e-3


@dataclass(frozen=True)
class DetectorSpec:
    label: str = "detector"
    jitter_fwhm: float = 0.0  # ps
    efficiency: float = 1.0
    dark_count_rate: float = 0.0  # Hz
    gated: bool = False
    gate_width: float | None = None  # ns
    gate_delay: float | None = None  # ns after the trigger click; None centers the gate on the pairs

    def __post_init__(self):
        if not self.jitter_fwhm >= 0:
            raise DomainError("jitter_fwhm must be >= 0")
        if not 0 <= self.efficiency <= 1:
            raise DomainError("efficiency must lie in [0, 1]")
        if not self.dark_count_rate >= 0:
            raise DomainError("dark_count_rate must be >= 0")
        if self.gated and not (self.gate_width is not None and self.gate_width > 0):
            raise DomainError("a gated detector needs gate_width > 0")
        if not self.gated and (self.gate_width is not None or self.gate_delay is not None):
            raise DomainError("gate settings given for a free-running detector")
        if self.gate_delay is not None and self.gate_delay < 0:
            raise DomainError("gate_delay must be >= 0")

    @property
    def jitter_sigma(self):
        return self.jitter_fwhm / FWHM_PER_SIGMA


@dataclass
class TimingHistogram:
    bin_width: float  # ps
    origin: float  # ps, left edge of the first bin
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(self.counts < 0):
            raise UsageError("histogram counts must be non-negative")
        if not self.bin_width > 0:
            raise UsageError("bin width must be positive")

    @property
    def edges(self):
        return self.origin + self.bin_width * np.arange(self.counts.size + 1)

    @property
    def centers(self):
        return self.origin + self.bin_width * (np.arange(self.counts.size) + 0.5)

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass
class CalibrationFit:
    """Polynomial lambda(t) = sum c_k (t - t0)^k, coefficients lowest order first."""

    order: int
    coefficients: list
    t0: float
    references: list  # (wavelength_nm, time_ps)
    residuals: list = field(default_factory=list)  # nm, fit - reference

    def wavelength(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, float) - self.t0, self.coefficients)

    def slope(self, t):
        d = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(np.asarray(t, float) - self.t0, d)

    @property
    def time_span(self):
        ts = [t for _, t in self.references]
        return min(ts), max(ts)

    def to_dict(self):
        return {
            "coefficients": [float(c) for c in self.coefficients],
            "order": self.order,
            "references": [[float(w), float(t)] for w, t in self.references],
            "residuals": [float(r) for r in self.residuals],
            "t0": float(self.t0),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["order"]), list(d["coefficients"]), float(d["t0"]),
                   [tuple(r) for r in d["references"]], list(d.get("residuals", [])))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class ReconstructedSpectrum:
    lambda_s: np.ndarray
    density: np.ndarray  # counts per nm
    bin_width_nm: np.ndarray
    lambda_i: np.ndarray | None = None
    extrapolated: np.ndarray | None = None  # per-bin warning flags

    @property
    def total(self):
        return math.fsum(self.density * self.bin_width_nm)


def arrival_time(fiber, wavelength, offset=0.0):
    """Group delay through ``fiber`` in ps, plus a fixed offset."""
    lam = np.asarray(wavelength, dtype=float)
    if fiber.length == 0:
        t = np.full(lam.shape, float(offset))
    else:
        ng = fiber_group_index(fiber, lam * 1e-3)
        t = fiber.length * ng / C_M_PER_S * 1e12 + offset
    return float(t) if np.ndim(t) == 0 else t


def timing_uncertainty(det_a, det_b, tagger_resolution):
    """Quadrature sum of both detector jitters and the tagger resolution (ps FWHM)."""
    return math.sqrt(det_a.jitter_fwhm ** 2 + det_b.jitter_fwhm ** 2 + tagger_resolution ** 2)


def resolution(fiber_a, fiber_b, det_a, det_b, tagger_resolution, wavelength):
    """Spectral resolution in nm: dt_eff / (|D| L_eff), L_eff the mean fiber length."""
    dt = timing_uncertainty(det_a, det_b, tagger_resolution)
    lam_um = wavelength * 1e-3
    d = 0.5 * (fiber_dispersion(fiber_a, lam_um) + fiber_dispersion(fiber_b, lam_um))  # ps/(nm km)
    l_eff = 0.5 * (fiber_a.length + fiber_b.length) * 1e-3  # km
    spread = abs(d) * l_eff
    if abs(d) < D_SINGULAR or spread == 0:
        raise SingularResolutionError(
            f"no usable dispersion at {wavelength} nm (D = {d:.3g} ps/(nm km), L = {l_eff} km)"
        )
    return dt / spread


def calibrate(references, order=1):
    """Least-squares lambda(t) through (wavelength_nm, relative_time_ps) references."""
    refs = [(float(w), float(t)) for w, t in references]
    if order not in (1, 2):
        raise UsageError("calibration order must be 1 (affine) or 2 (quadratic)")
    if len(refs) < order + 1:
        raise UsageError(f"order-{order} calibration needs at least {order + 1} references")
    waves = [w for w, _ in refs]
    if len(set(waves)) != len(waves):
        raise UsageError("duplicate reference wavelengths")
    times = np.array([t for _, t in refs])
    if len(set(times.tolist())) != len(times):
        raise UsageError("duplicate reference times")
    t0 = float(np.mean(times))
    coef = np.polynomial.polynomial.polyfit(times - t0, np.array(waves), order)
    fit = CalibrationFit(order, [float(c) for c in coef], t0, refs)
    fit.residuals = [float(fit.wavelength(t) - w) for w, t in refs]
    return fit


def reconstruct_spectrum(hist, fit, pump_wavelength=None):
    """Map histogram bins to wavelength; intensities become counts per nm."""
    if hist.counts.size == 0:
        raise UsageError("empty histogram")
    edges_nm = fit.wavelength(hist.edges)
    lam = fit.wavelength(hist.centers)
    width = np.abs(np.diff(edges_nm))
    if np.any(width == 0):
        raise UsageError("calibration is flat over a histogram bin")
    density = hist.counts / width

    lo, hi = fit.time_span
    span = hi - lo
    margin = EXTRAPOLATION_LIMIT * span if span > 0 else 0.0
    c = hist.centers
    flags = (c < lo - margin) | (c > hi + margin)

    lam_i = None
    if pump_wavelength is not None:
        lam_i = 1.0 / (1.0 / pump_wavelength - 1.0 / lam)
    order = np.argsort(lam, kind="stable")
    return ReconstructedSpectrum(
        lam[order], density[order], width[order],
        None if lam_i is None else lam_i[order], flags[order],
    )
