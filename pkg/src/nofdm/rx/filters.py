"""Receiver front-end filters: CD compensation, matched RRC and the tone notch."""

from __future__ import annotations

import math

import numpy as np
from scipy import signal

from ..channel import FiberSpec, apply_cd
from ..tx import rrc_taps

__all__ = ["cdc", "matched_filter", "notch_coefficients", "notch_filter", "notch_response"]


def cdc(waveform, sample_rate: float, fiber: FiberSpec) -> np.ndarray:
    """Frequency-domain chromatic dispersion compensation (exact inverse of ``apply_cd``)."""
    return apply_cd(waveform, sample_rate, fiber, inverse=True)


def matched_filter(waveform, rolloff: float = 0.01, sps: int = 2, span: int = 1024) -> np.ndarray:
    """Receive RRC filter, scaled so a Tx/Rx cascade has unit gain at the symbol instants."""
    h = rrc_taps(rolloff, sps, span) / math.sqrt(sps)
    w = np.atleast_2d(np.asarray(waveform, dtype=complex))
    n = w.shape[-1]
    H = np.fft.fft(np.roll(np.pad(h, (0, n - h.size)), -(h.size // 2))) if n >= h.size else None
    if H is None:
        out = np.stack([np.convolve(p, h, mode="same") for p in w])
    else:
        out = np.fft.ifft(np.fft.fft(w, axis=-1) * H, axis=-1)
    return out if np.ndim(waveform) > 1 else out[0]


def notch_coefficients(theta: float, r0: float):
    if not 0.0 < r0 < 1.0:
        raise ValueError("notch pole radius r0 must lie in (0, 1) for stability")
    if not 0.0 < theta < np.pi:
        raise ValueError("notch frequency theta must lie in (0, pi)")
    c = math.cos(theta)
    return np.array([1.0, -2 * c, 1.0]), np.array([1.0, -2 * r0 * c, r0**2])


def notch_response(theta: float, r0: float, omega) -> np.ndarray:
    """``H(e^{j omega})`` of the notch."""
    b, a = notch_coefficients(theta, r0)
    _, h = signal.freqz(b, a, worN=np.atleast_1d(omega))
    return h


def notch_filter(waveform, theta: float, r0: float = 0.9995) -> np.ndarray:
    """Causal second-order notch ``(1 - 2cos(theta) z^-1 + z^-2) / (1 - 2 r0 cos(theta) z^-1 + r0^2 z^-2)``.

    The coefficients are real, so one pass removes both ``+theta`` and
    ``-theta``. Applied along the last axis.
    """
    b, a = notch_coefficients(theta, r0)
    return signal.lfilter(b, a, np.asarray(waveform), axis=-1)
