"""
Monte Carlo of the coincidence experiment.

Pairs are emitted as a Poisson process with wavelengths drawn from a CW
slice or a joint spectrum. Each photon is routed to arm A (free-running
trigger detector) or arm B (gated detector), propagated through its fiber,
detected with efficiency and Gaussian jitter, and time-tagged at the tagger
resolution. Arm-B clicks are only registered inside the gates opened by
arm-A clicks, and both detectors add Poisson dark counts.

Random streams are derived from ``(seed, chunk index)`` so the output does
not depend on how chunks are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .epmf import CwSlice, JointSpectrumGrid, cell_edges, cell_widths
from .errors import DomainError, UsageError
from .phasematching import conjugate_wavelength
from .spectrometer import TimingHistogram, arrival_time

CHANNELS = ("trigger", "gated")
POLARIZERS = ("e", "o", "none")
PS_PER_S = 1e12

_DETECT_STREAM = 1
_THIN_STREAM = 2


@dataclass
class PairEvents:
    lambda_o: np.ndarray  # nm
    lambda_e: np.ndarray  # nm
    emission_time: np.ndarray  # ps
    o_to_a: np.ndarray  # True: o -> A, e -> B
    duration: float  # s

    def __len__(self):
        return self.lambda_o.size


@dataclass
class EventRecords:
    channel: np.ndarray  # 0 trigger, 1 gated
    timestamp: np.ndarray  # int64 ps, multiples of resolution, ascending
    resolution: float  # ps

    def __len__(self):
        return self.timestamp.size

    def times(self, channel):
        return self.timestamp[self.channel == CHANNELS.index(channel)]

    def to_csv(self):
        lines = ["channel,time_ps"]
        lines += [f"{CHANNELS[c]},{t}" for c, t in zip(self.channel.tolist(), self.timestamp.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text, resolution):
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:] if ln.strip()]
        channel = np.array([CHANNELS.index(r[0].strip()) for r in rows], dtype=np.int8)
        stamp = np.array([int(r[1]) for r in rows], dtype=np.int64)
        return cls(channel, stamp, resolution)


@dataclass(frozen=True)
class RateBudget:
    singles_a: float
    coincidences: float
    accidentals: float

    @property
    def gated(self):
        return self.coincidences + self.accidentals


class _SpectrumSampler:
    """Inverse-CDF sampling of a discrete spectrum with uniform dithering inside each cell."""

    def __init__(self, spectrum, pump_wavelength=None):
        if not getattr(spectrum, "normalized", False):
            raise UsageError("spectrum must be normalized before sampling")
        if isinstance(spectrum, CwSlice):
            self.two_d = False
            self.pump_wavelength = spectrum.pump_wavelength
            p = np.abs(spectrum.amplitude) ** 2 * cell_widths(spectrum.signal_axis)
            self.edges = (cell_edges(spectrum.signal_axis),)
        elif isinstance(spectrum, JointSpectrumGrid):
            self.two_d = True
            self.pump_wavelength = pump_wavelength
            p = (spectrum.intensity * spectrum.cell_weights).ravel()
            self.edges = (cell_edges(spectrum.signal_axis), cell_edges(spectrum.idler_axis))
            self.shape = spectrum.amplitude.shape
        else:
            raise UsageError("spectrum must be a CwSlice or a JointSpectrumGrid")
        total = math.fsum(p)
        if abs(total - 1.0) > 1e-6:
            raise UsageError(f"spectrum is not normalized (total {total:.6g})")
        self.cdf = np.cumsum(p) / total
        self.cdf[-1] = 1.0

    def _dither(self, edges, idx, rng):
        return edges[idx] + rng.random(idx.size) * (edges[idx + 1] - edges[idx])

    def draw(self, n, rng):
        idx = np.minimum(np.searchsorted(self.cdf, rng.random(n), side="right"), self.cdf.size - 1)
        if not self.two_d:
            lam_o = self._dither(self.edges[0], idx, rng)
            return lam_o, conjugate_wavelength(self.pump_wavelength, lam_o)
        i, j = np.unravel_index(idx, self.shape)
        return self._dither(self.edges[0], i, rng), self._dither(self.edges[1], j, rng)


def _chunks(duration, chunk_duration):
    n = max(1, math.ceil(duration / chunk_duration - 1e-12)) if duration > 0 else 0
    return [(k, k * chunk_duration, min((k + 1) * chunk_duration, duration)) for k in range(n)]


def sample_pairs(spectrum, pair_rate, duration, seed, *, chunk_duration=1.0, workers=1, pump_wavelength=None):
    """Poisson stream of photon pairs over ``duration`` seconds.

    For a 2-D joint spectrum the signal axis is the ordinary photon.
    """
    if not pair_rate > 0:
        raise UsageError("pair rate must be positive")
    if duration < 0 or not chunk_duration > 0:
        raise UsageError("duration must be >= 0 and chunk_duration > 0")
    sampler = _SpectrumSampler(spectrum, pump_wavelength)

    def run(chunk):
        k, start, end = chunk
        rng = np.random.default_rng([seed, k])
        n = rng.poisson(pair_rate * (end - start))
        t = np.sort(rng.uniform(start * PS_PER_S, end * PS_PER_S, n))
        lam_o, lam_e = sampler.draw(n, rng)
        o_to_a = rng.random(n) < 0.5
        return lam_o, lam_e, t, o_to_a

    chunks = _chunks(duration, chunk_duration)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    if not parts:
        empty = np.empty(0)
        return PairEvents(empty, empty.copy(), empty.copy(), np.empty(0, dtype=bool), float(duration))
    lam_o, lam_e, t, arm = (np.concatenate(x) for x in zip(*parts))
    return PairEvents(lam_o, lam_e, t, arm, float(duration))


def _check_detectors(det_a, det_b, polarizer, asymmetry, coupling_efficiency, tagger_resolution):
    if polarizer not in POLARIZERS:
        raise UsageError(f"polarizer must be one of {POLARIZERS}, got {polarizer!r}")
    if det_a.gated or not det_b.gated:
        raise UsageError("arm A must be free-running and arm B gated")
    if not 0 <= asymmetry <= 1:
        raise UsageError("asymmetry must lie in [0, 1]")
    if not 0 <= coupling_efficiency <= 1:
        raise UsageError("coupling efficiency must lie in [0, 1]")
    if not tagger_resolution > 0:
        raise UsageError("tagger resolution must be positive")


def _trigger_filter(pairs, polarizer, asymmetry):
    """Extra survival factor of the arm-A photon from the polarizer and walk-off asymmetry."""
    f = np.where(pairs.o_to_a, asymmetry, 1.0)
    if polarizer == "e":
        f = np.where(pairs.o_to_a, 0.0, f)
    elif polarizer == "o":
        f = np.where(pairs.o_to_a, f, 0.0)
    return f


def default_gate_delay(fiber_a, fiber_b, gate_width_ns, wavelength):
    """Gate delay (ns) centering the gate on the arm-B minus arm-A transit time at ``wavelength`` nm."""
    center = arrival_time(fiber_b, wavelength) - arrival_time(fiber_a, wavelength)
    return max(0.0, center * 1e-3 - 0.5 * gate_width_ns)


def _mean_wavelength(pairs):
    if not len(pairs):
        return 1550.0
    return float(np.mean(np.concatenate([pairs.lambda_o, pairs.lambda_e])))


def _transit(fiber, wavelength):
    """Fiber transit time (ps) by interpolation on a dense table of the exact model.

    Table spacing is at most 0.05 nm, where the interpolation error is far
    below 1 fs for kilometre fibers.
    """
    if wavelength.size == 0:
        return np.empty(0)
    lo, hi = float(wavelength.min()), float(wavelength.max())
    n = int(min(8193, max(2, math.ceil((hi - lo) / 0.05) + 1)))
    grid = np.linspace(lo, hi, n)
    return np.interp(wavelength, grid, arrival_time(fiber, grid))


def _quantize(t, res):
    return (np.floor(t / res) * res).astype(np.int64)


def _detection_stream(pairs, keep_a, keep_b, fiber_a, fiber_b, det_a, det_b, tagger_resolution,
                      gate_delay, rng):
    lam_a = np.where(pairs.o_to_a, pairs.lambda_o, pairs.lambda_e)
    lam_b = np.where(pairs.o_to_a, pairs.lambda_e, pairs.lambda_o)

    ia, ib = np.flatnonzero(keep_a), np.flatnonzero(keep_b)
    t_a = pairs.emission_time[ia] + _transit(fiber_a, lam_a[ia]) + rng.normal(0.0, det_a.jitter_sigma, ia.size)
    t_b = pairs.emission_time[ib] + _transit(fiber_b, lam_b[ib]) + rng.normal(0.0, det_b.jitter_sigma, ib.size)

    span = pairs.duration * PS_PER_S
    n_dark_a = rng.poisson(det_a.dark_count_rate * pairs.duration)
    triggers = np.sort(np.concatenate([t_a, rng.uniform(0.0, span, n_dark_a)]))

    if gate_delay is None:
        gate_delay = det_b.gate_delay if det_b.gate_delay is not None else \
            default_gate_delay(fiber_a, fiber_b, det_b.gate_width, _mean_wavelength(pairs))
    width = det_b.gate_width * 1e3
    starts = triggers + gate_delay * 1e3

    gate = np.searchsorted(starts, t_b, side="right") - 1
    inside = (gate >= 0) & (t_b < starts[np.maximum(gate, 0)] + width)
    cand_t, cand_g = t_b[inside], gate[inside]

    n_dark = rng.poisson(det_b.dark_count_rate * width / PS_PER_S, starts.size)
    dark_g = np.repeat(np.arange(starts.size), n_dark)
    dark_t = starts[dark_g] + rng.random(dark_g.size) * width
    cand_t = np.concatenate([cand_t, dark_t])
    cand_g = np.concatenate([cand_g, dark_g])
    # the gated detector registers at most one click per gate
    order = np.lexsort((cand_t, cand_g))
    _, first = np.unique(cand_g[order], return_index=True)
    gated = cand_t[order][first]

    trig_q = _quantize(triggers, tagger_resolution)
    gated_q = _quantize(gated, tagger_resolution)
    trig_q, gated_q = trig_q[trig_q >= 0], gated_q[gated_q >= 0]
    channel = np.concatenate([np.zeros(trig_q.size, np.int8), np.ones(gated_q.size, np.int8)])
    stamp = np.concatenate([trig_q, gated_q])
    order = np.lexsort((channel, stamp))
    return EventRecords(channel[order], stamp[order], float(tagger_resolution))


def detect(pairs, fiber_a, fiber_b, det_a, det_b, coupling_efficiency, tagger_resolution,
           polarizer="none", asymmetry=1.0, seed=0, gate_delay=None):
    """Detection and time tagging of an explicit pair stream.

    ``asymmetry`` scales the survival of the o-photon trigger branch
    (o -> A, e -> B); ``polarizer`` acts on arm A only.
    """
    _check_detectors(det_a, det_b, polarizer, asymmetry, coupling_efficiency, tagger_resolution)
    rng = np.random.default_rng([seed, _DETECT_STREAM])
    n = len(pairs)
    p_a = coupling_efficiency * det_a.efficiency * _trigger_filter(pairs, polarizer, asymmetry)
    keep_a = rng.random(n) < p_a
    keep_b = rng.random(n) < coupling_efficiency * det_b.efficiency
    return _detection_stream(pairs, keep_a, keep_b, fiber_a, fiber_b, det_a, det_b, tagger_resolution,
                             gate_delay, rng)


def simulate(spectrum, fiber_a, fiber_b, det_a, det_b, coupling_efficiency, pair_rate, duration,
             tagger_resolution, polarizer="none", asymmetry=1.0, seed=0, *, chunk_duration=1.0,
             workers=1, gate_delay=None, pump_wavelength=None):
    """Equivalent in distribution to ``detect(sample_pairs(...))`` but only generates
    pairs with at least one photon surviving coupling and detection efficiency.

    A thinned Poisson process is again Poisson, so pairs are drawn at rate
    pair_rate * P(any survives) and the survival pattern is drawn conditionally.
    """
    _check_detectors(det_a, det_b, polarizer, asymmetry, coupling_efficiency, tagger_resolution)
    p_a = coupling_efficiency * det_a.efficiency
    p_b = coupling_efficiency * det_b.efficiency
    p_any = 1.0 - (1.0 - p_a) * (1.0 - p_b)
    if p_any == 0:
        pairs = sample_pairs(spectrum, 1.0, 0.0, seed, pump_wavelength=pump_wavelength)
        pairs.duration = float(duration)
    else:
        pairs = sample_pairs(spectrum, pair_rate * p_any, duration, seed, chunk_duration=chunk_duration,
                             workers=workers, pump_wavelength=pump_wavelength)
    rng = np.random.default_rng([seed, _THIN_STREAM])
    n = len(pairs)
    u = rng.random(n) * p_any
    a_only = p_a * (1.0 - p_b)
    b_only = (1.0 - p_a) * p_b
    keep_a = (u < a_only) | (u >= a_only + b_only)
    keep_b = u >= a_only
    keep_a &= rng.random(n) < _trigger_filter(pairs, polarizer, asymmetry)
    return _detection_stream(pairs, keep_a, keep_b, fiber_a, fiber_b, det_a, det_b, tagger_resolution,
                             gate_delay, rng)


def histogram(records, bin_width, window):
    """Histogram of gated-minus-trigger delays (ps) inside ``window``.

    Each gated record is paired with the latest trigger that leaves its delay
    at or above the window start.
    """
    res = records.resolution
    if not bin_width > 0 or abs(round(bin_width / res) * res - bin_width) > 1e-9 * res or round(bin_width / res) < 1:
        raise UsageError(f"bin width {bin_width} ps is not a positive multiple of the tagger resolution {res} ps")
    lo, hi = window
    if not hi > lo:
        raise UsageError("empty histogram window")
    nbins = int(math.ceil((hi - lo) / bin_width - 1e-12))
    trig = records.times("trigger")
    gated = records.times("gated")
    if trig.size == 0 or gated.size == 0:
        return TimingHistogram(bin_width, lo, np.zeros(nbins, dtype=np.int64))
    k = np.searchsorted(trig, gated - lo, side="right") - 1
    ok = k >= 0
    dt = (gated[ok] - trig[k[ok]]).astype(float)
    dt = dt[(dt >= lo) & (dt < lo + nbins * bin_width)]
    idx = np.floor((dt - lo) / bin_width).astype(np.int64)
    return TimingHistogram(bin_width, lo, np.bincount(idx, minlength=nbins))


def rate_budget(pair_rate, coupling_efficiency, efficiency_a, efficiency_b, dark_a, dark_b, gate_duty):
    """First-order expected rates (Hz); multi-pair emission neglected."""
    for name, v in (("coupling_efficiency", coupling_efficiency), ("efficiency_a", efficiency_a),
                    ("efficiency_b", efficiency_b), ("gate_duty", gate_duty)):
        if not 0 <= v <= 1:
            raise DomainError(f"{name} must lie in [0, 1]")
    if pair_rate < 0 or dark_a < 0 or dark_b < 0:
        raise DomainError("rates must be non-negative")
    singles_a = pair_rate * coupling_efficiency * efficiency_a + dark_a
    coincidences = pair_rate * coupling_efficiency ** 2 * efficiency_a * efficiency_b
    accidentals = (dark_b + pair_rate * coupling_efficiency * efficiency_b) * gate_duty
    return RateBudget(singles_a, coincidences, accidentals)


def gate_duty_cycle(trigger_rate, gate_width_ns):
    return min(1.0, trigger_rate * gate_width_ns * 1e-9)


def peak_separation(fiber_a, fiber_b, lambda_o, lambda_e):
    """Delay between the two arm-assignment peaks, (L_A + L_B) |n_g(e) - n_g(o)| / c, in ps."""
    from .dispersion import C_M_PER_S, fiber_group_index

    dn = fiber_group_index(fiber_a, lambda_e * 1e-3) - fiber_group_index(fiber_a, lambda_o * 1e-3)
    return (fiber_a.length + fiber_b.length) * abs(dn) / C_M_PER_S * PS_PER_S
