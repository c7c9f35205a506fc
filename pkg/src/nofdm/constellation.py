"""Gray-labelled QPSK / square-QAM mapping, hard decisions and bit LLRs.

Labels are per dimension: for QPSK a bit 0 maps to +1/sqrt(2); for 16-QAM a
dimension carries (sign, amplitude) bits with levels
``+1: 00, +3: 01, -1: 10, -3: 11`` (Gray along the axis). Symbol bit order is
``[I bits..., Q bits...]`` for each symbol.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "QAM16_SCALE",
    "QPSK_SCALE",
    "bits_to_qam16",
    "bits_to_qpsk",
    "constellation_points",
    "hard_decision",
    "llr_qam16",
    "llr_qpsk",
    "qam16_to_bits",
    "qpsk_to_bits",
]

QPSK_SCALE = 1 / math.sqrt(2)
QAM16_SCALE = 1 / math.sqrt(10)  # uniform 16-QAM with levels {+-1, +-3} at unit energy


def bits_to_qpsk(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % 2:
        raise ValueError(f"QPSK needs an even number of bits, got {bits.size}")
    b = bits.reshape(-1, 2)
    return ((1 - 2.0 * b[:, 0]) + 1j * (1 - 2.0 * b[:, 1])) * QPSK_SCALE


def qpsk_to_bits(symbols) -> np.ndarray:
    s = np.asarray(symbols).ravel()
    return np.stack([s.real < 0, s.imag < 0], axis=1).astype(np.uint8).ravel()


def _pam4_levels(sign_bits, amp_bits):
    return (1 - 2.0 * sign_bits) * (1 + 2.0 * amp_bits)


def bits_to_qam16(bits, scale: float = QAM16_SCALE) -> np.ndarray:
    """Map groups of 4 bits ``(sI, aI, sQ, aQ)`` to 16-QAM points times ``scale``."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % 4:
        raise ValueError(f"16-QAM needs a multiple of 4 bits, got {bits.size}")
    b = bits.reshape(-1, 4)
    return (_pam4_levels(b[:, 0], b[:, 1]) + 1j * _pam4_levels(b[:, 2], b[:, 3])) * scale


def qam16_to_bits(symbols, scale: float = QAM16_SCALE) -> np.ndarray:
    s = np.asarray(symbols).ravel() / scale
    out = np.empty((s.size, 4), dtype=np.uint8)
    for dim, v in ((0, s.real), (2, s.imag)):
        out[:, dim] = v < 0
        out[:, dim + 1] = np.abs(v) > 2
    return out.ravel()


def constellation_points(order: int, scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All points and their bit labels, shape ``(order,)`` and ``(order, log2 order)``."""
    m = int(round(math.log2(order)))
    labels = ((np.arange(order)[:, None] >> np.arange(m)[::-1]) & 1).astype(np.uint8)
    if order == 4:
        return bits_to_qpsk(labels.ravel()), labels
    if order == 16:
        return bits_to_qam16(labels.ravel(), QAM16_SCALE if scale is None else scale), labels
    raise ValueError(f"unsupported constellation order {order}")


def _pam_decide(v, levels):
    idx = np.abs(v[..., None] - levels).argmin(axis=-1)
    return levels[idx]


def hard_decision(symbols, order: int = 4, scale: float | None = None) -> np.ndarray:
    """Nearest-point decision on a square QAM grid (shape preserving)."""
    s = np.asarray(symbols)
    if order == 4:
        sc = QPSK_SCALE if scale is None else scale
        return (np.where(s.real < 0, -1.0, 1.0) + 1j * np.where(s.imag < 0, -1.0, 1.0)) * sc
    if order == 16:
        sc = QAM16_SCALE if scale is None else scale
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
        return (_pam_decide(s.real / sc, levels) + 1j * _pam_decide(s.imag / sc, levels)) * sc
    raise ValueError(f"unsupported constellation order {order}")


def llr_qpsk(symbols, noise_variance) -> np.ndarray:
    """Per-bit LLRs (positive favours bit 0) for Gray QPSK at unit symbol energy.

    ``noise_variance`` is the complex noise variance (scalar or broadcastable
    to ``symbols``); each dimension carries half of it.
    """
    s = np.asarray(symbols)
    var = np.broadcast_to(np.asarray(noise_variance, dtype=float), s.shape)
    if np.any(var <= 0):
        raise ValueError("noise variance must be positive")
    g = 2 * math.sqrt(2) / var
    return np.stack([g * s.real, g * s.imag], axis=-1).ravel()


def llr_qam16(symbols, noise_variance, priors=None, scale: float = QAM16_SCALE) -> np.ndarray:
    """Exact bit LLRs for 16-QAM with optional per-point prior probabilities.

    ``priors`` follows the label order of :func:`constellation_points`.
    """
    s = np.asarray(symbols)
    var = np.broadcast_to(np.asarray(noise_variance, dtype=float), s.shape).ravel()
    s = s.ravel()
    if np.any(var <= 0):
        raise ValueError("noise variance must be positive")
    pts, labels = constellation_points(16, scale)
    logp = np.zeros(16) if priors is None else np.log(np.asarray(priors, dtype=float))
    metric = -np.abs(s[:, None] - pts[None, :]) ** 2 / var[:, None] + logp[None, :]
    out = np.empty((s.size, 4))
    for bit in range(4):
        m0 = np.where(labels[:, bit] == 0, metric, -np.inf)
        m1 = np.where(labels[:, bit] == 1, metric, -np.inf)
        out[:, bit] = np.logaddexp.reduce(m0, axis=1) - np.logaddexp.reduce(m1, axis=1)
    return out.ravel()
