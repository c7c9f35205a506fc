"""Frame synchronization and frequency offset estimation on the training sequence.

The training sequence is one base block repeated; its two halves are
identical, and so is every pair of base periods. Timing uses the summed
power of per-period correlations (robust to frequency offset). The offset
is estimated at the base-period lag (wide range) and refined at the half
lag (fine resolution), each against the lag phase of the known sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

__all__ = ["SyncError", "SyncResult", "frame_sync_foe", "lag_frequency"]


class SyncError(RuntimeError):
    pass


@dataclass
class SyncResult:
    offset: int  # chip index of the training-sequence start
    cfo: float  # estimated frequency offset in cycles per chip
    cfo_coarse: float
    peak_ratio: float


def lag_frequency(rx, ref, lag: int, skip: int = 0) -> float:
    """Frequency offset (cycles/sample) from the lag-``lag`` autocorrelation of rx against ref."""
    rx, ref = np.atleast_2d(rx), np.atleast_2d(ref)
    a = np.sum(rx[:, skip + lag :] * np.conj(rx[:, skip : rx.shape[1] - lag]))
    b = np.sum(ref[:, skip + lag :] * np.conj(ref[:, skip : ref.shape[1] - lag]))
    return float(np.angle(a * np.conj(b)) / (2 * np.pi * lag))


def frame_sync_foe(
    chips,
    ts_chips,
    period: int,
    search: slice | None = None,
    threshold: float = 0.1,
) -> SyncResult:
    """Locate ``ts_chips`` (shape ``(pols, L)``) in ``chips`` and estimate the frequency offset.

    ``period`` is the base-block length in chips; the sequence must repeat
    with this period (up to a constant phase). ``threshold`` bounds the
    normalized correlation peak below which a sync failure is raised.
    """
    chips = np.atleast_2d(chips)
    ts = np.atleast_2d(ts_chips)
    length = ts.shape[1]
    reps = length // period
    if reps < 2 or length % period:
        raise ValueError("training sequence must hold at least two whole periods")
    base = ts[:, :period]
    # correlate every received pol with every known pol (robust to pol mixing)
    corr = np.stack(
        [signal.correlate(chips[p], base[q], mode="valid") for p in range(chips.shape[0]) for q in range(ts.shape[0])]
    )
    pw = np.sum(np.abs(corr) ** 2, axis=0)
    n_start = pw.size - (reps - 1) * period
    if n_start <= 0:
        raise SyncError("capture shorter than the training sequence")
    metric = sum(pw[r * period : r * period + n_start] for r in range(reps))
    if search is not None:
        mask = np.zeros(n_start, bool)
        mask[search] = True
        metric = np.where(mask, metric, 0.0)
    d = int(np.argmax(metric))
    # Cauchy-Schwarz bound of the metric, so the ratio lies in [0, 1]
    bound = np.sum(np.abs(chips[:, d : d + length]) ** 2) * np.sum(np.abs(base) ** 2)
    ratio = float(metric[d] / max(bound, 1e-300))
    if ratio < threshold:
        raise SyncError(f"training sequence not found (normalized peak {ratio:.3f})")
    seg = chips[:, d : d + length]
    coarse = lag_frequency(seg, ts, period, skip=period)
    half = length // 2
    fine = lag_frequency(seg, ts, half, skip=period)
    # resolve the fine estimate's ambiguity (multiples of 1/half) with the coarse one
    k = round((coarse - fine) * half)
    cfo = fine + k / half
    return SyncResult(d, cfo, coarse, ratio)
