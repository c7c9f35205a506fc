"""Iterative ICI cancellation for non-orthogonal multicarrier symbols.

At iteration ``m`` of ``M`` the decision threshold is ``dd = 1 - m / M``.
Symbols whose distance to every decision boundary (per dimension, in units
of the constellation grid scale) is at least ``dd`` are replaced by their
hard decisions; the rest pass through unchanged. For QPSK that region is the
square ``|Re|, |Im| >= dd / sqrt(2)``, i.e. the outer corner of each
quadrant.

The cancellation step is ``S_m = P - (C - I) S_hat_{m-1}`` with ``S_0 = P``.
"""

from __future__ import annotations

import numpy as np

from ..constellation import QAM16_SCALE, QPSK_SCALE, hard_decision

__all__ = ["conventional_id", "decision_mask", "id_thresholds", "ldpc_assisted_id"]


def id_thresholds(M: int) -> np.ndarray:
    if M < 1:
        raise ValueError("M must be at least 1")
    return 1 - np.arange(1, M + 1) / M


def _boundary_distance(v, order: int):
    v = np.abs(v)
    if order == 4:
        return v
    # 16-QAM per-dimension boundaries at 0 and 2 (grid units)
    return np.where(v < 2, np.minimum(v, 2 - v), v - 2)


def decision_mask(S, dd: float, order: int = 4, scale: float | None = None) -> np.ndarray:
    """True where a symbol lies in the hard-decision region for threshold ``dd``."""
    sc = (QPSK_SCALE if order == 4 else QAM16_SCALE) if scale is None else scale
    S = np.asarray(S) / sc
    return (_boundary_distance(S.real, order) >= dd) & (_boundary_distance(S.imag, order) >= dd)


def _check(P, C):
    P = np.asarray(P)
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or P.shape[-1] != C.shape[0]:
        raise ValueError(f"symbol length {P.shape[-1]} does not match interference matrix {C.shape}")
    return P, C


def conventional_id(P, C, M: int = 5, order: int = 4, scale: float | None = None) -> list[np.ndarray]:
    """Return ``[S_1, ..., S_M]`` for demodulated symbols ``P`` (last axis: subcarriers)."""
    P, C = _check(P, C)
    G = (C - np.eye(C.shape[0])).T
    S = P
    out = []
    for dd in id_thresholds(M):
        hard = hard_decision(S, order, scale)
        S_hat = np.where(decision_mask(S, dd, order, scale), hard, S)
        S = P - S_hat @ G
        out.append(S)
    return out


def ldpc_assisted_id(P, C, S_tilde) -> np.ndarray:
    """One extra cancellation pass with symbols re-mapped from a partial LDPC decode."""
    P, C = _check(P, C)
    S_tilde = np.asarray(S_tilde)
    if S_tilde.shape != P.shape:
        raise ValueError("re-mapped symbols do not match the demodulated block")
    return P - S_tilde @ (C - np.eye(C.shape[0])).T
