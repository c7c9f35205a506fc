"""Probabilistic amplitude shaping for 16-QAM.

The Maxwell-Boltzmann family ``P(x) ~ exp(-lam |x|^2)`` over unscaled 16-QAM
factorises into two independent PAM-4 dimensions, each with a uniform sign and
a binary amplitude in ``{1, 3}``. Shaping therefore reduces to drawing
amplitude sequences with the right proportion of 3s, which a binary
constant-composition distribution matcher does exactly and invertibly:
``k`` data bits select one of the ``C(n, n3)`` length-``n`` sequences
containing ``n3`` ones (lexicographic unranking).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .constellation import bits_to_qam16, constellation_points

__all__ = ["PcsShaper", "ccdm_decode", "ccdm_encode", "coded_bits_ratio", "pcs16_shape"]


def _hb(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def _p3(lam: float) -> float:
    # P(|x|=3) / P(|x|=1) = exp(-8 lam)
    return 1.0 / (1.0 + math.exp(8.0 * lam))


def ccdm_encode(value: int, n: int, n_ones: int) -> np.ndarray:
    """Unrank ``value`` into the ``value``-th length-``n`` sequence with ``n_ones`` ones."""
    total = math.comb(n, n_ones)
    if not 0 <= value < total:
        raise ValueError("rank out of range")
    out = np.zeros(n, dtype=np.uint8)
    w, r = n_ones, value
    for i in range(n):
        m = n - i
        if w == 0:
            break
        zeros_first = total * (m - w) // m  # C(m-1, w)
        if r < zeros_first:
            total = zeros_first
        else:
            out[i] = 1
            r -= zeros_first
            total -= zeros_first  # C(m-1, w-1)
            w -= 1
    return out


def ccdm_decode(seq) -> int:
    """Inverse of :func:`ccdm_encode`."""
    seq = np.asarray(seq, dtype=np.uint8)
    n, w = seq.size, int(seq.sum())
    total, r = math.comb(n, w), 0
    for i in range(n):
        m = n - i
        if w == 0:
            break
        zeros_first = total * (m - w) // m
        if seq[i]:
            r += zeros_first
            total -= zeros_first
            w -= 1
        else:
            total = zeros_first
    return r


def _bits_to_int(bits) -> int:
    b = np.asarray(bits, dtype=np.uint8)
    return int.from_bytes(np.packbits(b, bitorder="big").tobytes(), "big") >> ((-b.size) % 8) if b.size else 0


def _int_to_bits(value: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros(0, dtype=np.uint8)
    nbytes = (k + 7) // 8
    raw = np.frombuffer((value << (nbytes * 8 - k)).to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="big")[:k]


@dataclass(frozen=True)
class PcsShaper:
    """MB-shaped 16-QAM at a target entropy with a per-dimension amplitude matcher.

    Parameters
    ----------
    entropy : float
        Target symbol entropy in bits, ``2 < entropy <= 4``.
    block_length : int
        Amplitudes per matcher block.
    """

    entropy: float
    block_length: int = 1200
    lam: float = field(init=False)
    n_ones: int = field(init=False)
    bits_per_block: int = field(init=False)

    def __post_init__(self):
        if not 2.0 < self.entropy <= 4.0:
            raise ValueError(f"entropy {self.entropy} is not reachable with 16-QAM (need 2 < H <= 4)")
        if self.block_length < 2:
            raise ValueError("block_length must be at least 2")
        hb = self.entropy / 2.0 - 1.0
        if hb >= 1.0 - 1e-12:
            lam = 0.0
        else:
            # H_b(p3(lam)) decreases monotonically for lam >= 0
            lam = brentq(lambda v: _hb(_p3(v)) - hb, 0.0, 10.0, xtol=1e-14)
        object.__setattr__(self, "lam", lam)
        n_ones = int(round(_p3(lam) * self.block_length))
        object.__setattr__(self, "n_ones", n_ones)
        object.__setattr__(self, "bits_per_block", math.comb(self.block_length, n_ones).bit_length() - 1)

    @property
    def p3(self) -> float:
        """Target probability of amplitude 3 on one dimension."""
        return _p3(self.lam)

    @property
    def realized_p3(self) -> float:
        return self.n_ones / self.block_length

    def probabilities(self, realized: bool = False) -> np.ndarray:
        """Point probabilities in the label order of ``constellation_points(16)``."""
        p3 = self.realized_p3 if realized else self.p3
        _, labels = constellation_points(16)
        # labels are (sI, aI, sQ, aQ); an amplitude bit of 1 selects level 3
        amp = lambda a: np.where(a == 1, p3, 1 - p3) / 2  # noqa: E731
        return amp(labels[:, 1]) * amp(labels[:, 3])

    def symbol_entropy(self, realized: bool = False) -> float:
        p = self.probabilities(realized)
        return float(-(p * np.log2(p)).sum())

    @property
    def scale(self) -> float:
        """Grid scale giving unit mean energy at the realized composition."""
        return 1.0 / math.sqrt(2.0 * (1 + 8 * self.realized_p3))

    @property
    def label_expansion(self) -> float:
        """Label bits carried per bit of entropy (4 / H)."""
        return 4.0 / self.entropy

    def match(self, bits) -> np.ndarray:
        """Data bits (multiple of ``bits_per_block``) to amplitude bits (1 means |x| = 3)."""
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        k = self.bits_per_block
        if bits.size % k:
            raise ValueError(f"need a multiple of {k} bits, got {bits.size}")
        if self.n_ones == 0:
            return np.zeros(bits.size // k * self.block_length if k else 0, dtype=np.uint8)
        blocks = [ccdm_encode(_bits_to_int(b), self.block_length, self.n_ones) for b in bits.reshape(-1, k)]
        return np.concatenate(blocks) if blocks else np.zeros(0, dtype=np.uint8)

    def dematch(self, amp_bits) -> np.ndarray:
        """Inverse of :meth:`match`; blocks with the wrong composition are clipped to a valid rank."""
        amp_bits = np.asarray(amp_bits, dtype=np.uint8).ravel()
        if amp_bits.size % self.block_length:
            raise ValueError(f"need a multiple of {self.block_length} amplitudes")
        k = self.bits_per_block
        out = []
        for blk in amp_bits.reshape(-1, self.block_length):
            w = int(blk.sum())
            if w != self.n_ones:
                # a decoding error broke the composition: pick the nearest valid sequence
                order = np.argsort(-blk.astype(int), kind="stable")
                blk = np.zeros_like(blk)
                blk[order[: self.n_ones]] = 1
            r = ccdm_decode(blk)
            out.append(_int_to_bits(min(r, (1 << k) - 1), k))
        return np.concatenate(out) if out else np.zeros(0, dtype=np.uint8)


def pcs16_shape(bits, entropy: float, block_length: int = 1200) -> tuple[np.ndarray, int]:
    """Shape a bit stream into MB-distributed 16-QAM symbols.

    Each matcher block consumes ``bits_per_block`` amplitude bits plus one
    uniform sign bit per dimension. Returns the symbols and the number of
    input bits consumed (trailing bits that do not fill a block are left).
    """
    shaper = PcsShaper(entropy, block_length)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    per_block = shaper.bits_per_block + block_length
    n_blocks = bits.size // per_block
    if n_blocks == 0:
        return np.zeros(0, complex), 0
    used = bits[: n_blocks * per_block].reshape(n_blocks, per_block)
    amps = shaper.match(used[:, : shaper.bits_per_block].ravel())
    signs = used[:, shaper.bits_per_block :].ravel()
    labels = np.stack([signs, amps], axis=1).reshape(-1, 4)
    return bits_to_qam16(labels.ravel(), shaper.scale), n_blocks * per_block


def coded_bits_ratio(
    bits_per_symbol: float = 4,
    baud_ratio: float = 0.875,
    fec_overhead: float = 0.2,
    reference_bits_per_symbol: float = 2,
) -> float:
    """Coded label bits of a shaped format relative to a uniform reference format.

    Counts raw label bits per second at the shaped format's baud rate
    (``baud_ratio`` times the reference), divided by the FEC expansion, against
    the reference format's label bits at full baud rate.
    """
    if fec_overhead < 0 or baud_ratio <= 0:
        raise ValueError("invalid rate parameters")
    return bits_per_symbol * baud_ratio / (1 + fec_overhead) / reference_bits_per_symbol
