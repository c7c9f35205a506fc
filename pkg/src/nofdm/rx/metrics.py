"""Bit error counting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcinv

__all__ = ["BerCount", "ber_count", "osnr_to_ebn0_db", "qpsk_ber", "qpsk_ebn0_for_ber"]


@dataclass
class BerCount:
    errors: int
    total: int

    @property
    def ber(self) -> float:
        return self.errors / self.total if self.total else math.nan

    def __add__(self, other: "BerCount") -> "BerCount":
        return BerCount(self.errors + other.errors, self.total + other.total)


def ber_count(decided, reference, groups=None, n_groups: int | None = None):
    """Count bit errors. With ``groups`` (one label per bit) also return per-group counts."""
    a = np.asarray(decided).ravel()
    b = np.asarray(reference).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} decided vs {b.size} reference bits")
    err = a != b
    total = BerCount(int(err.sum()), int(a.size))
    if groups is None:
        return total
    g = np.asarray(groups).ravel()
    n = int(g.max()) + 1 if n_groups is None else n_groups
    e = np.bincount(g, weights=err, minlength=n).astype(int)
    t = np.bincount(g, minlength=n)
    return total, [BerCount(int(x), int(y)) for x, y in zip(e, t)]


def qpsk_ber(ebn0_db):
    """Gray-coded QPSK bit error ratio in AWGN."""
    return 0.5 * erfc(np.sqrt(10 ** (np.asarray(ebn0_db) / 10)))


def qpsk_ebn0_for_ber(ber):
    """Inverse of :func:`qpsk_ber` in dB."""
    return 20 * np.log10(erfcinv(2 * np.asarray(ber, dtype=float)))


def osnr_to_ebn0_db(osnr_db, symbol_rate: float, bits_per_symbol: int = 2, data_fraction: float = 1.0, ref_bw: float = 12.5e9):
    """Equivalent Eb/N0 (dB) of a dual-polarization signal at the given OSNR.

    OSNR counts the whole launched power (both polarizations) against ASE in
    ``ref_bw``; ``data_fraction`` is the share of that power carrying data
    (the rest being, e.g., pilot tones).
    """
    esn0 = 10 ** (np.asarray(osnr_db, dtype=float) / 10) * ref_bw / symbol_rate * data_fraction
    return 10 * np.log10(esn0 / bits_per_symbol)
