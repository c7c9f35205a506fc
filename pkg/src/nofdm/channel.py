"""Linear optical link impairments.

Stages run in a fixed order: chromatic dispersion, WSS cascade, carrier
frequency offset with laser phase noise, sampling-clock offset, then ASE
loading to a target OSNR. :func:`propagate` treats the transmitted frame as
repeating (as an arbitrary waveform generator plays it) and returns a capture
window that starts ``margin`` samples before the frame, so dispersive edge
effects and timing-loop warm-up fall outside the frame of interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChannelSpec",
    "FiberSpec",
    "WssSpec",
    "apply_cd",
    "apply_cfo_phase_noise",
    "apply_clock_offset",
    "apply_wss_cascade",
    "calibrate_wss",
    "cd_memory_samples",
    "cd_phase",
    "load_osnr",
    "measure_osnr",
    "noise_variance_for_osnr",
    "propagate",
    "wss_bandwidth",
    "wss_response",
]

C_LIGHT = 299_792_458.0
OSNR_REF_BW = 12.5e9


@dataclass(frozen=True)
class FiberSpec:
    spans: int = 25
    span_km: float = 80.0
    dispersion_ps_nm_km: float = 17.0
    wavelength_nm: float = 1550.1

    def __post_init__(self):
        if self.spans < 0 or self.span_km < 0 or self.dispersion_ps_nm_km < 0 or self.wavelength_nm <= 0:
            raise ValueError("fiber parameters must be non-negative")

    @property
    def length_m(self) -> float:
        return self.spans * self.span_km * 1e3

    @property
    def beta(self) -> float:
        """Accumulated ``D * lambda^2 * L / c`` in seconds squared."""
        d = self.dispersion_ps_nm_km * 1e-6  # s/m^2
        lam = self.wavelength_nm * 1e-9
        return d * lam**2 * self.length_m / C_LIGHT


def cd_phase(n: int, sample_rate: float, fiber: FiberSpec) -> np.ndarray:
    """Quadratic spectral phase ``-pi D lambda^2 f^2 L / c`` on the FFT grid."""
    f = np.fft.fftfreq(n, 1 / sample_rate)
    return -np.pi * fiber.beta * f**2


def apply_cd(waveform, sample_rate: float, fiber: FiberSpec, inverse: bool = False) -> np.ndarray:
    """All-pass chromatic dispersion (``inverse=True`` compensates it). Circular over the last axis."""
    w = np.asarray(waveform, dtype=complex)
    if fiber.length_m == 0:
        return w.copy()
    ph = cd_phase(w.shape[-1], sample_rate, fiber)
    return np.fft.ifft(np.fft.fft(w, axis=-1) * np.exp((-1j if inverse else 1j) * ph), axis=-1)


def cd_memory_samples(sample_rate: float, bandwidth: float, fiber: FiberSpec) -> int:
    """Delay spread across ``bandwidth`` in samples (group-delay difference)."""
    # group delay is beta * f, so the spread over the band is beta * bandwidth
    return int(math.ceil(fiber.beta * bandwidth * sample_rate))


@dataclass(frozen=True)
class WssSpec:
    """Cascade of identical super-Gaussian passbands (bandwidths in GHz)."""

    cascade: int = 3
    bw3_ghz: float = 121.94
    order: float = 11.04
    grid_ghz: float = 125.0

    def __post_init__(self):
        if self.cascade < 0 or self.order < 1 or self.bw3_ghz <= 0:
            raise ValueError("invalid WSS parameters")


def wss_response(f, spec: WssSpec) -> np.ndarray:
    """Amplitude response of the whole cascade at frequencies ``f`` (Hz)."""
    x = np.abs(2 * np.asarray(f, dtype=float) / (spec.bw3_ghz * 1e9))
    return np.exp(-spec.cascade * math.log(2) / 2 * x ** (2 * spec.order))


def wss_bandwidth(spec: WssSpec, level_db: float = 10.0) -> float:
    """Two-sided bandwidth (GHz) at which the cascade power response is ``-level_db``."""
    if spec.cascade == 0:
        return math.inf
    ratio = level_db * math.log(10) / 10 / (spec.cascade * math.log(2))
    return spec.bw3_ghz * ratio ** (1 / (2 * spec.order))


def calibrate_wss(targets, order: float | None = None, grid_ghz: float = 125.0) -> tuple[WssSpec, dict]:
    """Fit per-filter 3-dB bandwidth (and order, unless fixed) to ``(cascade, bw10_ghz)`` targets.

    With ``order`` fixed the fit is one-dimensional least squares on the
    bandwidths. With ``order=None`` and at least two distinct cascade counts,
    ``log bw10`` is linear in ``log cascade`` and both parameters are fitted.
    Raises ValueError when the targets widen with cascade depth.
    Returns the spec and a residual report.
    """
    pts = sorted((int(k), float(b)) for k, b in targets)
    if not pts or any(k < 1 or b <= 0 for k, b in pts):
        raise ValueError("targets need cascade >= 1 and positive bandwidths")
    for (k1, b1), (k2, b2) in zip(pts, pts[1:]):
        if k2 > k1 and b2 >= b1:
            raise ValueError(f"infeasible targets: bandwidth does not shrink from {k1} to {k2} filters")
    ks = np.array([k for k, _ in pts], float)
    bws = np.array([b for _, b in pts])
    c = math.log(10) / math.log(2)
    if order is None:
        if np.unique(ks).size < 2:
            order = 4.0
        else:
            # log bw10 = log B3 + (log c - log K) / (2 n)
            slope, icpt = np.polyfit(np.log(ks), np.log(bws), 1)
            order = -1 / (2 * slope)
            spec = WssSpec(1, float(math.exp(icpt - math.log(c) / (2 * order))), float(order), grid_ghz)
            return _report(spec, pts)
    g = (c / ks) ** (1 / (2 * order))
    b3 = float((g @ bws) / (g @ g))
    return _report(WssSpec(1, b3, float(order), grid_ghz), pts)


def _report(spec: WssSpec, pts):
    fitted = [wss_bandwidth(WssSpec(k, spec.bw3_ghz, spec.order, spec.grid_ghz)) for k, _ in pts]
    residuals = [f - b for f, (_, b) in zip(fitted, pts)]
    return spec, {"targets": pts, "fitted_ghz": fitted, "residual_ghz": residuals}


def apply_wss_cascade(waveform, sample_rate: float, spec: WssSpec) -> np.ndarray:
    w = np.asarray(waveform, dtype=complex)
    if spec.cascade == 0:
        return w.copy()
    if spec.grid_ghz * 1e9 >= sample_rate:
        raise ValueError("WSS grid must be narrower than the sample rate")
    h = wss_response(np.fft.fftfreq(w.shape[-1], 1 / sample_rate), spec)
    return np.fft.ifft(np.fft.fft(w, axis=-1) * h, axis=-1)


def apply_cfo_phase_noise(waveform, sample_rate: float, cfo_hz: float, linewidth_hz: float, rng) -> np.ndarray:
    """Rotate by ``exp(j(2 pi df t + phi(t)))``; ``phi`` is a Wiener process common to both polarizations."""
    if linewidth_hz < 0:
        raise ValueError("linewidth must be non-negative")
    w = np.asarray(waveform, dtype=complex)
    n = w.shape[-1]
    t = np.arange(n) / sample_rate
    phase = 2 * np.pi * cfo_hz * t
    if linewidth_hz > 0:
        steps = rng.normal(0.0, math.sqrt(2 * np.pi * linewidth_hz / sample_rate), n)
        steps[0] = 0.0
        phase = phase + np.cumsum(steps)
    return w * np.exp(1j * phase)


def _sinc_interp(x, positions, half_taps: int = 24, beta: float = 8.0, periodic: bool = False):
    """Windowed-sinc (Kaiser) evaluation of ``x`` at fractional sample positions."""
    positions = np.asarray(positions, dtype=float)
    chunk = 1 << 14
    if positions.size > chunk:
        parts = [_sinc_interp(x, positions[s : s + chunk], half_taps, beta, periodic) for s in range(0, positions.size, chunk)]
        return np.concatenate(parts, axis=-1)
    x = np.asarray(x)
    base = np.floor(positions).astype(np.int64)
    frac = positions - base
    k = np.arange(-half_taps + 1, half_taps + 1)
    idx = base[:, None] + k[None, :]
    d = frac[:, None] - k[None, :]
    u = np.clip(1 - (d / half_taps) ** 2, 0.0, None)
    taps = np.sinc(d) * np.i0(beta * np.sqrt(u)) / np.i0(beta)
    n = x.shape[-1]
    if periodic:
        idx %= n
        return (x[..., idx] * taps).sum(-1)
    valid = (idx >= 0) & (idx < n)
    return (x[..., np.clip(idx, 0, n - 1)] * (taps * valid)).sum(-1)


def apply_clock_offset(waveform, ppm: float, periodic: bool = False) -> np.ndarray:
    """Resample so that output sample ``n`` is the input at ``n (1 + ppm 1e-6)``.

    The sampling phase relative to the input grid drifts linearly by
    ``ppm 1e-6`` samples per sample. Output length equals input length;
    positions beyond the input are zero unless ``periodic``.
    """
    if abs(ppm) >= 1000:
        raise ValueError("clock offset must be below 1000 ppm")
    w = np.asarray(waveform, dtype=complex)
    if ppm == 0:
        return w.copy()
    pos = np.arange(w.shape[-1]) * (1 + ppm * 1e-6)
    return _sinc_interp(w, pos, periodic=periodic)


def noise_variance_for_osnr(signal_power: float, sample_rate: float, osnr_db: float) -> float:
    """Complex noise variance per polarization sample.

    ``signal_power`` is the total over both polarizations; the ASE power in
    the 12.5 GHz reference bandwidth is ``signal_power / OSNR``, split equally
    between polarizations and spread white over ``sample_rate``.
    """
    if math.isinf(osnr_db) and osnr_db > 0:
        return 0.0
    return signal_power * sample_rate / (2 * 10 ** (osnr_db / 10) * OSNR_REF_BW)


def load_osnr(waveform, sample_rate: float, osnr_db: float, rng, signal_power: float | None = None):
    """Add circular white Gaussian noise to a ``(2, n)`` dual-polarization waveform."""
    w = np.asarray(waveform, dtype=complex)
    if math.isinf(osnr_db) and osnr_db > 0:
        return w.copy()
    p = float(np.sum(np.mean(np.abs(w) ** 2, axis=-1))) if signal_power is None else signal_power
    var = noise_variance_for_osnr(p, sample_rate, osnr_db)
    noise = rng.normal(0.0, math.sqrt(var / 2), w.shape + (2,))
    return w + noise[..., 0] + 1j * noise[..., 1]


def measure_osnr(noisy, clean, sample_rate: float) -> float:
    """OSNR (dB) from a periodogram estimate of the noise PSD, given the clean reference."""
    noise = np.asarray(noisy) - np.asarray(clean)
    psd = np.mean(np.abs(np.fft.fft(noise, axis=-1)) ** 2, axis=-1) / noise.shape[-1] / sample_rate
    n0_total = float(psd.sum())  # per-pol PSDs summed
    p_sig = float(np.sum(np.mean(np.abs(clean) ** 2, axis=-1)))
    return 10 * math.log10(p_sig / (n0_total * OSNR_REF_BW))


@dataclass(frozen=True)
class ChannelSpec:
    """Impairment settings. ``osnr_db = inf`` disables noise."""

    osnr_db: float = math.inf
    cfo_hz: float = 0.0
    linewidth_hz: float = 0.0
    clock_ppm: float = 0.0
    fiber: FiberSpec = FiberSpec(spans=0)
    wss: WssSpec = WssSpec(cascade=0)


@dataclass
class Capture:
    samples: np.ndarray  # (2, n) received dual-polarization samples
    sample_rate: float
    margin: int  # samples of leading context before the frame start (diagnostic only)
    clean: np.ndarray | None = None  # noiseless version, kept only when requested


def propagate(
    tx: np.ndarray,
    sample_rate: float,
    spec: ChannelSpec,
    rng_phase,
    rng_noise,
    margin: int = 4096,
    keep_clean: bool = False,
) -> Capture:
    """Pass a repeating ``(2, n)`` frame through the link and capture ``n + 2 margin`` samples."""
    tx = np.asarray(tx, dtype=complex)
    n = tx.shape[-1]
    w = apply_cd(tx, sample_rate, spec.fiber)
    w = apply_wss_cascade(w, sample_rate, spec.wss)
    # periodic extension around the frame, long enough for the clock drift and interpolator
    pad = 64
    ext = margin + pad + int(math.ceil(abs(spec.clock_ppm) * 1e-6 * (n + 2 * margin)))
    length = n + 2 * margin
    w = w[:, (np.arange(-ext, n + ext)) % n]
    w = apply_cfo_phase_noise(w, sample_rate, spec.cfo_hz, spec.linewidth_hz, rng_phase)
    pos = ext - margin + np.arange(length) * (1 + spec.clock_ppm * 1e-6)
    if spec.clock_ppm:
        w = np.stack([_sinc_interp(p, pos) for p in w])
    else:
        w = w[:, ext - margin : ext - margin + length]
    clean = w if keep_clean else None
    power = float(np.sum(np.mean(np.abs(tx) ** 2, axis=-1)))
    w = load_osnr(w, sample_rate, spec.osnr_db, rng_noise, signal_power=power)
    return Capture(w, sample_rate, margin, clean)
