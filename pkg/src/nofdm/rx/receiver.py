"""End-to-end receiver DSP.

Stage order: CDC, matched RRC, tone timing recovery, decimation to one chip
per sample, frame sync and FOE, tone notch, AGC, band un-centring, 2x2 MIMO
equalizer (centre taps from a least-squares fit to the TS, LMS-trained on
the TS, then DD-LMS), pilot CPR, iterative ICI
cancellation, demapping, LDPC decoding (conventional and LDPC-assisted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..channel import FiberSpec
from ..constellation import bits_to_qam16, bits_to_qpsk, hard_decision, llr_qam16, llr_qpsk, qam16_to_bits, qpsk_to_bits
from ..fec import LdpcCode, ldpc_decode, segment_decode
from ..transforms import interference_matrix, modulation_matrix
from ..tx import (
    FrameLayout,
    TxConfig,
    band_center,
    band_offset,
    pcs_codeword_labels,
    pcs_labels_to_codewords,
    pilot_symbol,
    training_block,
)
from .cpr import cpr_pilot, pilot_phasors
from .detection import conventional_id, ldpc_assisted_id
from .equalizer import EqualizerState, ddlms_update, mimo_equalize, windows
from .filters import cdc, matched_filter, notch_filter
from .metrics import BerCount, ber_count
from .sync import SyncError, frame_sync_foe
from .timing import timing_recovery

__all__ = ["RxConfig", "RxResult", "frame_rows", "receive"]


@dataclass(frozen=True)
class RxConfig:
    """Receiver parameters."""

    taps: int = 25
    mu: float = 1e-4
    mu_train: float = 1e-4
    train_epochs: int = 1
    lms_batch: int = 1
    id_iterations: int = 5
    feedback_iteration: int = 3
    ldpc_budget: int = 50
    inner_iterations: int = 25
    assisted_id: bool = True
    ted_block: int = 1024
    ted_half_width: int = 2
    loop_kp: float = 0.01
    loop_ki: float = 0.0001
    notch_r0: float = 0.9995
    cpr_window: int = 15
    compensate_cd: bool = True

    def __post_init__(self):
        if not 0 <= self.feedback_iteration <= self.id_iterations:
            raise ValueError("feedback iteration must lie within the ID iterations")
        if not 0 <= self.inner_iterations < self.ldpc_budget:
            raise ValueError("inner LDPC iterations must leave part of the budget")


@dataclass
class FrameRows:
    payload: np.ndarray
    pilots: np.ndarray
    ts: np.ndarray
    total: int


def frame_rows(layout: FrameLayout, n_payload: int) -> FrameRows:
    """Row indices of the frame structure (mirrors ``build_frame``)."""
    start = layout.data_start()
    groups = layout.n_groups(n_payload)
    group_rows = start + np.arange(groups)[:, None] * (1 + layout.pilot_spacing)
    slots = (group_rows + 1 + np.arange(layout.pilot_spacing)[None, :]).ravel()
    ts = np.arange(layout.guard_symbols, start)
    return FrameRows(slots[:n_payload], group_rows[:, 0], ts, layout.frame_symbols(n_payload))


@dataclass
class RxResult:
    pre_fec: BerCount
    pre_fec_subcarrier: list
    post_fec: BerCount
    post_fec_assisted: BerCount | None
    pre_fec_assisted: BerCount | None
    cfo_hz: float
    residual_cfo_hz: float
    clock_ppm: float
    frame_offset: int
    sync_peak: float
    timing_low_confidence: bool
    cpr_low_confidence: bool
    noise_variance: float
    traces: dict = field(default_factory=dict)


def _symbols_to_bits(S, order, scale):
    if order == 4:
        return qpsk_to_bits(hard_decision(S, 4))
    return qam16_to_bits(hard_decision(S, 16, scale), scale)


def receive(
    samples,
    tx_cfg: TxConfig,
    rx_cfg: RxConfig,
    code: LdpcCode,
    n_codewords: int,
    fiber: FiberSpec | None = None,
    reference=None,
    keep_traces: bool = False,
) -> RxResult:
    """Recover a frame from ``(2, n)`` captured samples.

    ``reference`` is the transmitted ``Transmission`` and is only used for
    bit-error counting after detection.
    """
    sps, n_sub, cf = tx_cfg.sps, tx_cfg.n_sub, tx_cfg.cf
    layout = tx_cfg.layout
    order = tx_cfg.order
    shaper = tx_cfg.shaper()
    scale = shaper.scale if shaper else None
    rs = tx_cfg.symbol_rate
    traces = {}

    # --- front end ---------------------------------------------------------
    w = np.asarray(samples, dtype=complex)
    if fiber is not None and rx_cfg.compensate_cd:
        w = cdc(w, tx_cfg.sample_rate, fiber)
    w = matched_filter(w, tx_cfg.rolloff, sps, tx_cfg.rrc_span)
    tr = timing_recovery(
        w,
        sps,
        layout.tone_divisor,
        rx_cfg.ted_block,
        rx_cfg.ted_half_width,
        rx_cfg.loop_kp,
        rx_cfg.loop_ki,
    )
    chips = tr.samples[:, ::sps]
    clock_ppm = tr.slope(skip=min(8, max(len(tr.trace) - 2, 0))) * 1e6 if len(tr.trace) > 2 else 0.0
    if keep_traces:
        traces["timing_phase"] = (tr.block_starts, tr.trace)

    # --- sync / FOE ----------------------------------------------------------
    n_pay = n_codewords * code.n // int(math.log2(order)) // (2 * n_sub)
    g_chips = layout.guard_symbols * n_sub
    ts_grid = [np.tile(training_block(n_sub, layout, p), (layout.ts_repeats, 1)) for p in range(2)]
    A = modulation_matrix(n_sub, cf)
    ts_unc = np.stack([(g @ A.T).ravel() for g in ts_grid])
    ts_chips = band_center(ts_unc, n_sub, cf, start=g_chips)
    period = layout.ts_base_symbols * n_sub
    # the frame may repeat inside the capture: only accept a start whose whole
    # frame (plus the equalizer window) lies within it
    span = (layout.frame_symbols(n_pay) - layout.guard_symbols) * n_sub + rx_cfg.taps
    last = chips.shape[1] - span
    if last <= 0:
        raise SyncError("capture shorter than one frame")
    sync = frame_sync_foe(chips, ts_chips, period, search=slice(0, last + 1))
    n = np.arange(chips.shape[1])
    chips = chips * np.exp(-2j * np.pi * sync.cfo * n)
    chips = notch_filter(chips, 2 * np.pi / layout.tone_divisor, rx_cfg.notch_r0)
    # AGC: unit mean power per polarization keeps the LMS step size meaningful
    chips = chips / math.sqrt(np.mean(np.abs(chips) ** 2))
    f0 = sync.offset - g_chips  # chip index of frame row 0
    chips = chips * np.exp(2j * np.pi * band_offset(n_sub, cf) * (n - f0))

    # --- equalizer training on the TS ---------------------------------------
    rows = frame_rows(layout, n_pay)
    eq = EqualizerState.center_spike(rx_cfg.taps, rx_cfg.mu)
    L = rx_cfg.taps
    row_pos = lambda r: f0 + r * n_sub + np.arange(n_sub)  # noqa: E731
    # scale the centre taps by the least-squares 2x2 inverse of the TS channel,
    # so a common gain, phase or static pol rotation does not have to be learned
    ts_pos = np.concatenate([row_pos(r) for r in rows.ts])
    H = chips[:, ts_pos] @ ts_unc.conj().T @ np.linalg.inv(ts_unc @ ts_unc.conj().T)
    eq.taps[:, :, (L - 1) // 2] = np.conj(np.linalg.inv(H))
    for _ in range(rx_cfg.train_epochs):
        for j, r in enumerate(rows.ts):
            R = windows(chips, row_pos(r), L)
            p = mimo_equalize(R, eq)
            d = ts_unc[:, j * n_sub : (j + 1) * n_sub]
            ddlms_update(eq, d - p, R, np.zeros(2), rx_cfg.mu_train)

    # --- data: pilot + payload groups ----------------------------------------
    C = interference_matrix(n_sub, cf)
    Ah = A.conj().T
    pilots = np.stack([pilot_symbol(n_sub, p) for p in range(2)])
    pilot_ref = pilots @ C.T  # noiseless demodulated pilot
    pilot_chips = pilots @ A.T
    n_groups = rows.pilots.size
    P_raw_pilot = np.empty((n_groups, 2, n_sub), complex)
    P_raw = np.empty((n_pay, 2, n_sub), complex)
    z_hist = np.zeros((n_groups, 2), complex)
    win = rx_cfg.cpr_window
    spacing = layout.pilot_spacing
    pend_err, pend_R = [], []
    for gi, pr in enumerate(rows.pilots):
        R = windows(chips, row_pos(pr), L)
        p = mimo_equalize(R, eq)
        P_raw_pilot[gi] = p @ Ah.T
        z_hist[gi] = pilot_phasors(P_raw_pilot[gi], pilot_ref)
        theta = np.angle(z_hist[max(0, gi - win + 1) : gi + 1].sum(axis=0))
        ddlms_update(eq, pilot_chips - p * np.exp(-1j * theta)[:, None], R, theta)
        for s in range(spacing):
            idx = gi * spacing + s
            if idx >= n_pay:
                break
            R = windows(chips, row_pos(rows.payload[idx]), L)
            p = mimo_equalize(R, eq)
            P_raw[idx] = p @ Ah.T
            P = P_raw[idx] * np.exp(-1j * theta)[:, None]
            if cf.is_orthogonal or rx_cfg.feedback_iteration == 0:
                S = P
            else:
                S = conventional_id(P, C, rx_cfg.id_iterations, order, scale)[rx_cfg.feedback_iteration - 1]
            err = (hard_decision(S, order, scale) - S) @ A.T
            pend_err.append(err)
            pend_R.append(R)
            if len(pend_err) >= rx_cfg.lms_batch:
                ddlms_update(eq, np.concatenate(pend_err, 1), np.concatenate(pend_R, 1), theta)
                pend_err, pend_R = [], []

    # --- CPR with a centred window, then final detection ---------------------
    t_sym = n_sub / rs
    theta_data = np.empty((n_pay, 2))
    theta_pilot = np.empty((n_groups, 2))
    cpr_info = []
    for pol in range(2):
        res = cpr_pilot(z_hist[:, pol], rows.pilots, np.r_[rows.payload, rows.pilots], t_sym, win)
        theta_data[:, pol], theta_pilot[:, pol] = res.theta[:n_pay], res.theta[n_pay:]
        cpr_info.append(res)
    P = P_raw * np.exp(-1j * theta_data)[..., None]
    pil = P_raw_pilot * np.exp(-1j * theta_pilot)[..., None]
    noise_var = np.mean(np.abs(pil - pilot_ref[None]) ** 2, axis=0)  # (2, n_sub)
    sig = np.mean(np.abs(pilot_ref) ** 2)
    pilot_snr = float(sig / max(noise_var.mean(), 1e-300) * n_sub)
    cpr_low = pilot_snr < 1.0
    if keep_traces:
        traces["cpr_phase"] = (rows.payload, theta_data)
        traces["taps"] = eq.taps.copy()

    ofdm = cf.is_orthogonal
    S_M = P if ofdm else conventional_id(P, C, rx_cfg.id_iterations, order, scale)[-1]
    var = np.broadcast_to(np.maximum(noise_var, 1e-12)[None], S_M.shape)

    def to_stream(grid):
        # (n_pay, 2, n_sub) -> codeword-ordered symbols (n_cw, syms)
        flat = np.empty(grid.size, grid.dtype)
        flat[0::2] = grid[:, 0].ravel()
        flat[1::2] = grid[:, 1].ravel()
        return flat.reshape(n_codewords, -1)

    def from_stream(stream):
        flat = np.asarray(stream).ravel()
        return np.stack([flat[0::2].reshape(n_pay, n_sub), flat[1::2].reshape(n_pay, n_sub)], axis=1)

    def llrs_for(S):
        s, v = to_stream(S), to_stream(var)
        if order == 4:
            return llr_qpsk(s, v).reshape(n_codewords, code.n)
        lab = llr_qam16(s, v, shaper.probabilities(realized=True), scale).reshape(n_codewords, code.n)
        return pcs_labels_to_codewords(lab, code)

    def codeword_symbols(cw):
        if order == 4:
            return bits_to_qpsk(cw.ravel())
        return bits_to_qam16(pcs_codeword_labels(cw, code).ravel(), scale)

    llr = llrs_for(S_M)
    conv = ldpc_decode(llr, code, rx_cfg.ldpc_budget)

    assisted = None
    if rx_cfg.assisted_id and not ofdm:
        seg = segment_decode(llr, code, rx_cfg.inner_iterations, budget=rx_cfg.ldpc_budget)
        S_tilde = from_stream(codeword_symbols(seg.bits))
        S_next = ldpc_assisted_id(P, C, S_tilde)
        assisted = (S_next, ldpc_decode(llrs_for(S_next), code, rx_cfg.ldpc_budget - rx_cfg.inner_iterations))

    # --- metrics -------------------------------------------------------------
    pre = pre_sub = post = post_a = pre_a = None
    if reference is not None:
        bits_per_sym = int(math.log2(order))
        ref_bits = _symbols_to_bits(reference.symbols, order, scale)
        sub_stream = np.empty(2 * n_pay * n_sub, int)
        sub_stream[0::2] = np.tile(np.arange(n_sub), n_pay)
        sub_stream[1::2] = np.tile(np.arange(n_sub), n_pay)
        sub = np.repeat(sub_stream, bits_per_sym)  # subcarrier of each stream bit
        pre, pre_sub = ber_count(_symbols_to_bits(to_stream(S_M), order, scale), ref_bits, sub, n_sub)
        post = ber_count(conv.info_bits, reference.info_bits)
        if assisted is not None:
            pre_a = ber_count(_symbols_to_bits(to_stream(assisted[0]), order, scale), ref_bits)
            post_a = ber_count(assisted[1].info_bits, reference.info_bits)

    return RxResult(
        pre_fec=pre,
        pre_fec_subcarrier=pre_sub,
        post_fec=post,
        post_fec_assisted=post_a,
        pre_fec_assisted=pre_a,
        cfo_hz=float(sync.cfo * rs),
        residual_cfo_hz=float(np.mean([c.residual_cfo for c in cpr_info])),
        clock_ppm=float(clock_ppm),
        frame_offset=int(sync.offset),
        sync_peak=sync.peak_ratio,
        timing_low_confidence=tr.low_confidence,
        cpr_low_confidence=bool(cpr_low),
        noise_variance=float(noise_var.mean()),
        traces=traces,
    )
