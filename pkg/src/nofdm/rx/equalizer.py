"""2x2 time-domain MIMO equalizer with decision-directed LMS updates.

Taps are stored as ``taps[out, in, l]``: ``taps[0, 1]`` is the filter from
the Y input to the X output. Output sample ``n`` uses the centred window
``r(n + c - l)`` with ``c = (L - 1) // 2``, so a centre spike is a pass-through.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["EqualizerState", "ddlms_update", "mimo_equalize", "windows"]


@dataclass
class EqualizerState:
    taps: np.ndarray | None = None
    mu: float = 1e-3
    theta: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @classmethod
    def center_spike(cls, n_taps: int = 25, mu: float = 1e-3) -> "EqualizerState":
        if n_taps < 1:
            raise ValueError("need at least one tap")
        taps = np.zeros((2, 2, n_taps), dtype=complex)
        c = (n_taps - 1) // 2
        taps[0, 0, c] = taps[1, 1, c] = 1.0
        return cls(taps, mu)

    @property
    def n_taps(self) -> int:
        if self.taps is None:
            raise RuntimeError("equalizer state is not initialized")
        return self.taps.shape[-1]


def windows(r, positions, n_taps: int) -> np.ndarray:
    """Sliding windows ``R[i, n, l] = r_i(positions[n] + c - l)``; out of range reads zero."""
    r = np.atleast_2d(r)
    c = (n_taps - 1) // 2
    idx = np.asarray(positions)[:, None] + c - np.arange(n_taps)[None, :]
    ok = (idx >= 0) & (idx < r.shape[1])
    return r[:, np.clip(idx, 0, r.shape[1] - 1)] * ok


def mimo_equalize(R, state: EqualizerState) -> np.ndarray:
    """``p_o(n) = sum_i r_i(n-window) . conj(w_{o,i})`` for windows from :func:`windows`."""
    if state.taps is None:
        raise RuntimeError("equalizer state is not initialized")
    return np.einsum("inl,oil->on", R, np.conj(state.taps))


def ddlms_update(state: EqualizerState, error, R, theta=None, mu: float | None = None) -> EqualizerState:
    """In-place LMS step ``w_{o,i} += mu e^{-j theta_o} sum_n conj(err_o(n)) r_i(n-window)``.

    ``error`` is ``d - s`` in the phase-corrected domain, shape ``(2, n)``.
    """
    mu = state.mu if mu is None else mu
    if mu <= 0:
        raise ValueError("step size must be positive")
    if state.taps is None:
        raise RuntimeError("equalizer state is not initialized")
    theta = state.theta if theta is None else np.asarray(theta, dtype=float)
    g = np.conj(np.atleast_2d(error)) * np.exp(-1j * theta)[:, None]
    state.taps += mu * np.einsum("on,inl->oil", g, R)
    return state
