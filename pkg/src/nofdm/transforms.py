"""Non-orthogonal FDM symbol generation and demodulation.

Three equivalent generators are provided for an N-subcarrier symbol with
compression factor alpha = b/c:

* :func:`ifrft_direct` -- direct O(N^2) summation (the reference),
* :func:`nofdm_mod_cn_ifft` -- one zero-stuffed cN-point inverse FFT,
* :func:`nofdm_mod_multi_ifft` -- c phase-rotated N-point inverse FFTs.

:class:`PrunedPlan` implements a radix-2 decimation-in-time trellis restricted
to the butterflies that touch a non-zero input and feed a kept output, and
counts the complex multiplications it actually performs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "CompressionFactor",
    "OpCount",
    "PruneSpec",
    "PrunedPlan",
    "SCHEMES",
    "count_ops",
    "count_multi_ifft",
    "ifrft_direct",
    "interference_matrix",
    "modulation_matrix",
    "nofdm_demod",
    "nofdm_mod",
    "nofdm_mod_cn_ifft",
    "nofdm_mod_multi_ifft",
    "prune_savings",
]

SCHEMES = ("ifrft", "cn-ifft", "multi-ifft", "pruned-cn-ifft")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class CompressionFactor:
    """Rational subcarrier-spacing compression alpha = b/c, kept in lowest terms."""

    b: int
    c: int

    def __post_init__(self):
        if self.b <= 0 or self.c <= 0:
            raise ValueError(f"b and c must be positive, got {self.b}/{self.c}")
        if self.b > self.c:
            raise ValueError(f"compression factor must not exceed 1, got {self.b}/{self.c}")
        g = math.gcd(self.b, self.c)
        if g != 1:
            object.__setattr__(self, "b", self.b // g)
            object.__setattr__(self, "c", self.c // g)

    @classmethod
    def from_value(cls, alpha: float | str | Fraction, max_denominator: int = 1000) -> "CompressionFactor":
        """Build from a float/str like ``0.875`` or ``"7/8"``."""
        frac = Fraction(alpha).limit_denominator(max_denominator)
        return cls(frac.numerator, frac.denominator)

    @property
    def alpha(self) -> float:
        return self.b / self.c

    @property
    def is_orthogonal(self) -> bool:
        return self.b == self.c

    def __str__(self) -> str:
        return f"{self.b}/{self.c}"


@dataclass(frozen=True)
class OpCount:
    complex_mults: int
    complex_adds: int
    kind: str = "measured"  # "measured", "upper-bound" or "formula"

    def __post_init__(self):
        if self.complex_mults < 0 or self.complex_adds < 0:
            raise ValueError("operation counts must be non-negative")

    def as_dict(self) -> dict:
        return {"complex_mults": self.complex_mults, "complex_adds": self.complex_adds, "kind": self.kind}


@dataclass(frozen=True)
class PruneSpec:
    """Pruning of a 2^Q point transform with 2^I non-zero inputs and 2^O kept outputs."""

    Q: int
    I: int
    O: int

    def __post_init__(self):
        if self.Q <= 0:
            raise ValueError(f"Q must be positive, got {self.Q}")
        if not (0 <= self.I <= self.Q and 0 <= self.O <= self.Q):
            raise ValueError(f"need 0 <= I, O <= Q, got Q={self.Q}, I={self.I}, O={self.O}")

    @classmethod
    def for_nofdm(cls, n_sub: int, cf: CompressionFactor) -> "PruneSpec":
        size = cf.c * n_sub
        if not (_is_pow2(size) and _is_pow2(n_sub)):
            raise ValueError(f"cN = {size} and N = {n_sub} must be powers of two")
        q = size.bit_length() - 1
        i = n_sub.bit_length() - 1
        return cls(q, i, i)


def _as_symbols(X) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    if X.ndim == 0 or X.shape[-1] == 0:
        raise ValueError("empty input")
    return X


@lru_cache(maxsize=64)
def _modulation_matrix(n_sub: int, b: int, c: int) -> np.ndarray:
    n = np.arange(n_sub)
    A = np.exp(2j * np.pi * np.outer(n, n) * b / (c * n_sub)) / math.sqrt(n_sub)
    A.setflags(write=False)
    return A


def modulation_matrix(n_sub: int, cf: CompressionFactor) -> np.ndarray:
    """Return A with A[n, k] = exp(j 2 pi n k alpha / N) / sqrt(N)."""
    if n_sub < 1:
        raise ValueError("N must be >= 1")
    return _modulation_matrix(n_sub, cf.b, cf.c)


def ifrft_direct(X, cf: CompressionFactor) -> np.ndarray:
    """Direct-summation inverse fractional transform.

    Operates on the last axis, so ``X`` may hold a batch of symbols.
    """
    X = _as_symbols(X)
    n_sub = X.shape[-1]
    n = np.arange(n_sub)
    out = np.zeros(X.shape, dtype=complex)
    for k in range(n_sub):
        out += X[..., k : k + 1] * np.exp(2j * np.pi * n * k * cf.b / (cf.c * n_sub))
    return out / math.sqrt(n_sub)


def nofdm_mod_cn_ifft(X, cf: CompressionFactor) -> np.ndarray:
    """Zero-stuffed cN-point inverse FFT generator, keeping the first N outputs."""
    X = _as_symbols(X)
    n_sub = X.shape[-1]
    size = cf.c * n_sub
    if not _is_pow2(size):
        return X @ modulation_matrix(n_sub, cf).T
    Y = np.zeros(X.shape[:-1] + (size,), dtype=complex)
    Y[..., np.arange(n_sub) * cf.b] = X
    x = np.fft.ifft(Y, axis=-1) * size
    return x[..., :n_sub] / math.sqrt(n_sub)


def nofdm_mod_multi_ifft(X, cf: CompressionFactor) -> np.ndarray:
    """Generator built from c N-point inverse FFTs, phase rotated and summed."""
    X = _as_symbols(X)
    n_sub = X.shape[-1]
    size = cf.c * n_sub
    if not _is_pow2(size):
        return X @ modulation_matrix(n_sub, cf).T
    Y = np.zeros(X.shape[:-1] + (size,), dtype=complex)
    Y[..., np.arange(n_sub) * cf.b] = X
    n = np.arange(n_sub)
    out = np.zeros(X.shape, dtype=complex)
    for i in range(cf.c):
        branch = np.fft.ifft(Y[..., i :: cf.c], axis=-1) * n_sub
        out += np.exp(2j * np.pi * n * i / size) * branch
    return out / math.sqrt(n_sub)


def prune_savings(spec: PruneSpec) -> float:
    """Fraction of butterfly multiplications removed by pruning.

    Two-branch closed form for a radix-2 trellis with 2^I contiguous non-zero
    inputs and 2^O kept outputs. The I + O < Q branch is returned as written
    and can exceed 1 for I = 0; :class:`PrunedPlan` gives the measured count.
    """
    Q, I, O = spec.Q, spec.I, spec.O
    if I + O >= Q:
        return (2 * Q - I - O - 2 * (1 - 2.0 ** (O - Q))) / Q
    return (Q - I - 2.0 ** (I + 1 - Q) * (1 - 2.0**O)) / Q


class PrunedPlan:
    """Radix-2 decimation-in-time FFT restricted to live butterflies.

    A butterfly ``(u, v) -> (u + w v, u - w v)`` is live when ``v`` can be
    non-zero and at least one of its outputs is needed downstream; each live
    butterfly costs one complex multiplication (``w * v``) regardless of the
    twiddle value, matching the usual upper-bound convention.
    ``nontrivial_mults`` additionally discounts twiddles in {1, -1, j, -j}.

    Parameters
    ----------
    size : int
        Transform length, a power of two.
    nonzero_inputs, kept_outputs : sequence of int
        Natural-order indices of the inputs that may be non-zero and of the
        outputs that are wanted.
    inverse : bool
        Use ``exp(+j...)`` twiddles (unnormalized inverse DFT).
    """

    def __init__(self, size: int, nonzero_inputs, kept_outputs, inverse: bool = True):
        if not _is_pow2(size) or size < 2:
            raise ValueError(f"pruned plan needs a power-of-two size >= 2, got {size}")
        self.size = size
        self.q = size.bit_length() - 1
        self.inverse = inverse
        self.nonzero_inputs = np.asarray(sorted(set(int(i) for i in nonzero_inputs)))
        self.kept_outputs = np.asarray([int(k) for k in kept_outputs])
        if self.nonzero_inputs.size and (self.nonzero_inputs.min() < 0 or self.nonzero_inputs.max() >= size):
            raise ValueError("input index out of range")
        if self.kept_outputs.size and (self.kept_outputs.min() < 0 or self.kept_outputs.max() >= size):
            raise ValueError("output index out of range")
        self._build()

    def _build(self):
        n, q = self.size, self.q
        rev = np.array([int(format(i, f"0{q}b")[::-1], 2) for i in range(n)])
        self._rev = rev
        live = np.zeros(n, dtype=bool)
        live[rev[self.nonzero_inputs]] = True  # position in bit-reversed storage
        lives = [live]
        for s in range(1, q + 1):
            half = 1 << (s - 1)
            blk = live.reshape(-1, 2, half)
            merged = blk[:, 0, :] | blk[:, 1, :]
            live = np.repeat(merged[:, None, :], 2, axis=1).reshape(n)
            lives.append(live)

        need = np.zeros(n, dtype=bool)
        need[self.kept_outputs] = True
        sign = 1.0 if self.inverse else -1.0
        stages = []
        mults = trivial = adds = 0
        for s in range(q, 0, -1):
            half = 1 << (s - 1)
            span = 1 << s
            prev = lives[s - 1]
            top = (np.arange(n).reshape(-1, span)[:, :half]).ravel()
            bot = top + half
            used = need[top] | need[bot]
            has_v = used & prev[bot]
            has_u = used & prev[top]
            sel = has_v | has_u
            tw_exp = (top % span) * (n // span)
            w = np.exp(sign * 2j * np.pi * tw_exp / n)
            stages.append(
                {
                    "top": top[sel],
                    "bot": bot[sel],
                    "w": w[sel],
                    "u_live": has_u[sel],
                    "v_live": has_v[sel],
                    "want_top": need[top][sel],
                    "want_bot": need[bot][sel],
                }
            )
            mults += int(has_v.sum())
            trivial += int((has_v & (tw_exp % (n // 4 if n >= 4 else 1) == 0)).sum())
            both = has_u & has_v
            adds += int((both & need[top]).sum() + (both & need[bot]).sum())
            new_need = np.zeros(n, dtype=bool)
            new_need[top[has_u]] = True
            new_need[bot[has_v]] = True
            need = new_need
        self._stages = stages[::-1]
        self.mults = mults
        self.nontrivial_mults = mults - trivial
        self.adds = adds

    @property
    def op_count(self) -> OpCount:
        return OpCount(self.mults, self.adds, "measured")

    def execute(self, x) -> np.ndarray:
        """Run the pruned trellis on the last axis; returns the kept outputs only."""
        x = np.asarray(x, dtype=complex)
        if x.shape[-1] != self.size:
            raise ValueError(f"expected last axis of length {self.size}, got {x.shape[-1]}")
        buf = np.zeros(x.shape, dtype=complex)
        buf[..., self._rev[self.nonzero_inputs]] = x[..., self.nonzero_inputs]
        for st in self._stages:
            u = buf[..., st["top"]]
            v = buf[..., st["bot"]] * st["w"]
            buf[..., st["top"]] = u + v
            buf[..., st["bot"]] = u - v
        return buf[..., self.kept_outputs]


@lru_cache(maxsize=32)
def _nofdm_plan(n_sub: int, b: int, c: int, inverse: bool) -> PrunedPlan:
    size = c * n_sub
    if inverse:
        # x_n = sum_k X_k W^{(n b) k}: contiguous inputs, outputs at n*b
        return PrunedPlan(size, range(n_sub), np.arange(n_sub) * b, inverse=True)
    # P_k = sum_n x_n W^{-n (k b)}: same shape, conjugate twiddles
    return PrunedPlan(size, range(n_sub), np.arange(n_sub) * b, inverse=False)


def nofdm_mod(X, cf: CompressionFactor, scheme: str = "pruned-cn-ifft") -> np.ndarray:
    """Modulate with a named scheme (see :data:`SCHEMES`)."""
    X = _as_symbols(X)
    n_sub = X.shape[-1]
    if scheme == "ifrft":
        return ifrft_direct(X, cf)
    if scheme == "cn-ifft":
        return nofdm_mod_cn_ifft(X, cf)
    if scheme == "multi-ifft":
        return nofdm_mod_multi_ifft(X, cf)
    if scheme != "pruned-cn-ifft":
        raise ValueError(f"unknown scheme {scheme!r}")
    size = cf.c * n_sub
    if not _is_pow2(size) or size < 2:
        return X @ modulation_matrix(n_sub, cf).T
    plan = _nofdm_plan(n_sub, cf.b, cf.c, True)
    padded = np.zeros(X.shape[:-1] + (size,), dtype=complex)
    padded[..., :n_sub] = X
    return plan.execute(padded) / math.sqrt(n_sub)


def nofdm_demod(x, cf: CompressionFactor) -> np.ndarray:
    """Matched demodulation ``A^H x`` over the last axis (pruned forward trellis)."""
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("empty input")
    n_sub = x.shape[-1]
    size = cf.c * n_sub
    if not _is_pow2(size) or size < 2:
        return x @ modulation_matrix(n_sub, cf).conj()
    plan = _nofdm_plan(n_sub, cf.b, cf.c, False)
    padded = np.zeros(x.shape[:-1] + (size,), dtype=complex)
    padded[..., :n_sub] = x
    return plan.execute(padded) / math.sqrt(n_sub)


def interference_matrix(n_sub: int, cf: CompressionFactor) -> np.ndarray:
    """ICI matrix ``C = A^H A``; C[k, l] = (1/N) sum_n exp(j 2 pi n alpha (l - k) / N)."""
    A = modulation_matrix(n_sub, cf)
    C = A.conj().T @ A
    C[np.diag_indices(n_sub)] = 1.0
    return C


def _trivial(num: int, den: int) -> bool:
    """True when exp(2j pi num/den) is one of +-1, +-j (a free multiplication)."""
    return (4 * num) % den == 0


def count_multi_ifft(n_sub: int, cf: CompressionFactor) -> OpCount | None:
    """Measured cost of :func:`nofdm_mod_multi_ifft`, skipping trivial factors.

    Counts the non-trivial twiddles of each radix-2 N-point inverse FFT that
    receives a non-zero input, plus the non-trivial output rotations of those
    branches. Additions are counted in full. This sits below the closed-form
    bound that :func:`count_ops` reports for the same scheme.
    """
    size = cf.c * n_sub
    if not (_is_pow2(size) and _is_pow2(n_sub)):
        return None
    live = sorted({(k * cf.b) % cf.c for k in range(n_sub)})
    fft_mults = 0
    half = 1
    while half < n_sub:
        fft_mults += (n_sub // (2 * half)) * sum(not _trivial(j, 2 * half) for j in range(half))
        half *= 2
    rot_mults = sum(not _trivial(n * i, size) for i in live for n in range(n_sub))
    fft_adds = n_sub * (n_sub.bit_length() - 1)
    return OpCount(len(live) * fft_mults + rot_mults, len(live) * fft_adds + (len(live) - 1) * n_sub)


def count_ops(scheme: str, n_sub: int, cf: CompressionFactor) -> OpCount | None:
    """Arithmetic cost of generating one symbol.

    FFT-based schemes report the closed-form upper bounds; the pruned scheme
    reports the count measured on its trellis (see :func:`count_multi_ifft`
    for the measured multi-IFFT count). Returns ``None`` for FFT-based
    schemes when cN is not a power of two.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "ifrft":
        return OpCount(n_sub * n_sub, n_sub * (n_sub - 1), "formula")
    size = cf.c * n_sub
    if not (_is_pow2(size) and _is_pow2(n_sub)):
        return None
    if scheme == "cn-ifft":
        q = size.bit_length() - 1
        return OpCount(size * q // 2, size * q, "upper-bound")
    if scheme == "multi-ifft":
        logn = n_sub.bit_length() - 1
        return OpCount(size * logn // 2 + size, size * logn + (cf.c - 1) * n_sub, "upper-bound")
    return _nofdm_plan(n_sub, cf.b, cf.c, True).op_count
