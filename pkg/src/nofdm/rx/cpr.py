"""Pilot-based carrier phase recovery."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CprResult", "cpr_pilot", "pilot_phasors"]


def pilot_phasors(received, reference) -> np.ndarray:
    """Correlation ``sum_k P(k) conj(ref(k))`` per pilot (last axis are subcarriers)."""
    return np.sum(np.asarray(received) * np.conj(reference), axis=-1)


@dataclass
class CprResult:
    theta: np.ndarray  # phase (rad) at the requested times
    pilot_theta: np.ndarray  # smoothed, unwrapped phase of each pilot window (at its mean time)
    residual_cfo: float  # Hz
    pilot_snr: float
    low_confidence: bool


def _smooth(z, window: int):
    window = min(window, len(z))
    if window <= 1:
        return z
    k = np.ones(window)
    return np.convolve(z, k, mode="same")


def cpr_pilot(
    phasors,
    pilot_times,
    times,
    symbol_duration: float,
    window: int = 15,
    pilot_snr: float | None = None,
    min_snr: float = 1.0,
) -> CprResult:
    """Phase trace from pilot phasors, linearly interpolated to ``times``.

    Phasors are averaged over a centred window of ``window`` pilots before
    taking the angle (each angle is placed at the mean time of the pilots in
    its window), the pilot angles are unwrapped, and the residual
    frequency offset is the least-squares slope divided by ``2 pi``.
    Times are in symbol periods; ``symbol_duration`` converts to seconds.
    """
    z = np.asarray(phasors)
    pt = np.asarray(pilot_times, dtype=float)
    if z.size == 0:
        raise ValueError("no pilots")
    ang = np.unwrap(np.angle(_smooth(z, window)))
    # windows are truncated at the ends, so each smoothed phase refers to the
    # mean time of the pilots it actually covers (exact for a linear phase)
    t_eff = _smooth(pt, window) / _smooth(np.ones_like(pt), window)
    slope = np.polyfit(t_eff, ang, 1)[0] if pt.size > 1 else 0.0
    t = np.asarray(times, dtype=float)
    # outside the centroid range, continue with the fitted slope
    theta = np.interp(t, t_eff, ang)
    theta = np.where(t < t_eff[0], ang[0] + slope * (t - t_eff[0]), theta)
    theta = np.where(t > t_eff[-1], ang[-1] + slope * (t - t_eff[-1]), theta)
    cfo = slope / (2 * np.pi * symbol_duration)
    snr = np.inf if pilot_snr is None else pilot_snr
    return CprResult(theta, ang, float(cfo), float(snr), bool(snr < min_snr))
