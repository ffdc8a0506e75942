"""Shared simulation and fitting helpers for the test suite."""

import math

import numpy as np
from scipy.optimize import curve_fit, nnls

from spdcsim.epmf import cell_widths, cw_slice
from spdcsim.montecarlo import default_gate_delay, gate_duty_cycle, histogram, rate_budget, simulate
from spdcsim.phasematching import conjugate_wavelength
from spdcsim.spectrometer import arrival_time


def nondegenerate_slice(ref, crystal_1538):
    axis = np.linspace(1500.0, 1600.0, 401)
    return cw_slice(crystal_1538, ref.geometry, ref.pump.center_wavelength, axis)


def gate_window(ref):
    fa, fb = ref.fibers
    det_b = ref.detectors[1]
    res, bw = ref.tagger_resolution, ref.analysis["bin_width"]
    delay = default_gate_delay(fa, fb, det_b.gate_width, 2 * ref.pump.center_wavelength)
    lo = math.floor(delay * 1e3 / res) * res
    return delay, (lo, lo + math.ceil((det_b.gate_width * 1e3 + res) / bw) * bw)


def run_histogram(ref, spectrum, polarizer, seed, duration, asymmetry=1.0):
    fa, fb = ref.fibers
    da, db = ref.detectors
    acq = ref.acquisition
    delay, window = gate_window(ref)
    rec = simulate(spectrum, fa, fb, da, db, acq["coupling_efficiency"], acq["pair_rate"], duration,
                   ref.tagger_resolution, polarizer, asymmetry, seed, gate_delay=delay,
                   pump_wavelength=ref.pump.center_wavelength)
    return rec, histogram(rec, ref.analysis["bin_width"], window)


def branch_delays(ref, lambda_o):
    """Noiseless (e-trigger, o-trigger) gated-minus-trigger delays in ps."""
    fa, fb = ref.fibers
    lambda_e = conjugate_wavelength(ref.pump.center_wavelength, lambda_o)
    return (arrival_time(fb, lambda_o) - arrival_time(fa, lambda_e),
            arrival_time(fb, lambda_e) - arrival_time(fa, lambda_o))


def _gauss(x, mu, sigma):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def _two_peaks(x, a1, mu1, s1, a2, mu2, s2, floor):
    return a1 * _gauss(x, mu1, s1) + a2 * _gauss(x, mu2, s2) + floor


def fit_two_peaks(hist, guesses, sigma=500.0):
    """Least-squares fit of two Gaussians on a flat floor; returns (mu1, s1, mu2, s2)."""
    x, y = hist.centers, hist.counts.astype(float)
    p0 = []
    for mu in guesses:
        near = np.abs(x - mu) < sigma
        p0 += [float(y[near].max()) if near.any() else 1.0, mu, sigma]
    p0.append(max(float(np.median(y)), 0.0))
    popt, _ = curve_fit(_two_peaks, x, y, p0=p0, sigma=np.sqrt(np.maximum(y, 1.0)), maxfev=20000)
    return popt[1], abs(popt[2]), popt[4], abs(popt[5])


def peak_amplitudes(hist, shape):
    """Non-negative amplitudes of two fixed Gaussian shapes plus a floor."""
    mu1, s1, mu2, s2 = shape
    x = hist.centers
    design = np.column_stack([_gauss(x, mu1, s1), _gauss(x, mu2, s2), np.ones_like(x)])
    coef, _ = nnls(design, hist.counts.astype(float))
    return coef[0], coef[1]


def two_sample_chi2(n, m, min_count=10):
    """Chi-square statistic and degrees of freedom for two Poisson histograms of equal exposure."""
    n, m = np.asarray(n, float), np.asarray(m, float)
    use = (n + m) >= min_count
    return float(np.sum((n[use] - m[use]) ** 2 / (n[use] + m[use]))), int(use.sum())


def reduced_density_schmidt(grid):
    """K = 1 / Tr(rho_s^2) from the reduced density matrix of the cell-weighted amplitude."""
    w = np.sqrt(np.outer(cell_widths(grid.signal_axis), cell_widths(grid.idler_axis)))
    psi = grid.amplitude * w
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2))
    rho = psi @ psi.conj().T
    ev = np.linalg.eigvalsh(rho)
    return 1.0 / np.sum(ev ** 2)


def rates_vs_budget(ref, spectrum, duration=100.0, seed=21):
    """Observed trigger and gated counts against the closed-form budget: (observed, expected, z) pairs."""
    fa, fb = ref.fibers
    da, db = ref.detectors
    acq = ref.acquisition
    delay, _ = gate_window(ref)
    rec = simulate(spectrum, fa, fb, da, db, acq["coupling_efficiency"], acq["pair_rate"], duration,
                   ref.tagger_resolution, seed=seed, gate_delay=delay)
    b0 = rate_budget(acq["pair_rate"], acq["coupling_efficiency"], da.efficiency, db.efficiency,
                     da.dark_count_rate, db.dark_count_rate, 0.0)
    b = rate_budget(acq["pair_rate"], acq["coupling_efficiency"], da.efficiency, db.efficiency,
                    da.dark_count_rate, db.dark_count_rate, gate_duty_cycle(b0.singles_a, db.gate_width))
    out = []
    for observed, rate in ((len(rec.times("trigger")), b.singles_a), (len(rec.times("gated")), b.gated)):
        expected = rate * duration
        out.append((observed, expected, abs(observed - expected) / math.sqrt(expected)))
    return out
