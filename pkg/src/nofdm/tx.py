"""Transmitter: bits -> FEC -> symbols -> frame -> NOFDM/OFDM chips -> RRC -> tones.

Frame layout per polarization, in multicarrier-symbol units::

    [guard][TS: base block repeated][pilot, data x P][pilot, data x P]...[tail]

The guard symbols are random and let the timing loop settle before the
training sequence arrives; the tail keeps the last payload symbols clear of
filter edge effects. Chips are band-centred so the occupied band
(width ``alpha * Rs``) sits symmetrically around DC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .constellation import bits_to_qam16, bits_to_qpsk
from .fec import LdpcCode, ldpc_encode
from .pcs import PcsShaper
from .transforms import CompressionFactor, nofdm_mod

__all__ = [
    "FrameLayout",
    "Frame",
    "TxConfig",
    "TxWaveform",
    "Transmission",
    "band_center",
    "build_frame",
    "deframe",
    "insert_tones",
    "map_qpsk",
    "modulate",
    "occupied_bandwidth",
    "pcs_codeword_labels",
    "pcs_labels_to_codewords",
    "rrc_isi_db",
    "rrc_shape",
    "rrc_taps",
    "tone_power_fraction",
    "training_block",
    "transmit",
]

MODULATIONS = ("qpsk-ofdm", "qpsk-nofdm", "pcs16-ofdm")


@dataclass(frozen=True)
class FrameLayout:
    """Frame and tone parameters shared by transmitter and receiver."""

    ts_base_symbols: int = 8
    ts_repeats: int = 16
    pilot_spacing: int = 4
    guard_symbols: int = 96
    tail_symbols: int = 32
    tone_divisor: int = 4
    tone_ratio_db: float = 13.0

    def __post_init__(self):
        counts = [self.ts_base_symbols, self.ts_repeats, self.pilot_spacing, self.tone_divisor]
        if min(counts) < 1 or self.guard_symbols < 0 or self.tail_symbols < 0:
            raise ValueError("frame layout counts must be positive")
        if self.ts_repeats % 2:
            raise ValueError("ts_repeats must be even (two identical halves)")

    @property
    def ts_symbols(self) -> int:
        return self.ts_base_symbols * self.ts_repeats

    def n_groups(self, payload_symbols: int) -> int:
        return -(-payload_symbols // self.pilot_spacing)

    def frame_symbols(self, payload_symbols: int) -> int:
        groups = self.n_groups(payload_symbols)
        return self.guard_symbols + self.ts_symbols + groups * (1 + self.pilot_spacing) + self.tail_symbols

    def data_start(self) -> int:
        return self.guard_symbols + self.ts_symbols


def _known_qpsk(n: int, tag: int) -> np.ndarray:
    # fixed sequences known to both ends, independent of the scenario seed
    rng = np.random.default_rng([0x5EED, tag])
    return bits_to_qpsk(rng.integers(0, 2, 2 * n, dtype=np.uint8))


def training_block(n_sub: int, layout: FrameLayout, pol: int) -> np.ndarray:
    """Known TS base block, shape ``(ts_base_symbols, n_sub)``."""
    return _known_qpsk(layout.ts_base_symbols * n_sub, 10 + pol).reshape(layout.ts_base_symbols, n_sub)


def pilot_symbol(n_sub: int, pol: int) -> np.ndarray:
    """Known pilot vector on all subcarriers for polarization ``pol``."""
    return _known_qpsk(n_sub, 20 + pol)


@dataclass
class Frame:
    grid: np.ndarray  # (n_symbols, n_sub) complex
    payload_rows: np.ndarray  # row index of each payload symbol
    pilot_rows: np.ndarray
    ts_rows: np.ndarray
    n_payload: int


def build_frame(payload, layout: FrameLayout, n_sub: int, pol: int = 0, rng=None) -> Frame:
    """Assemble one polarization's symbol grid.

    ``payload`` is a flat array of subcarrier values (length divisible by
    ``n_sub``) or an ``(n, n_sub)`` grid. The last pilot group is padded with
    copies of the pilot if the payload does not fill it.
    """
    payload = np.asarray(payload, dtype=complex)
    if payload.ndim == 1:
        if payload.size % n_sub:
            raise ValueError(f"payload length {payload.size} is not a multiple of {n_sub} subcarriers")
        payload = payload.reshape(-1, n_sub)
    if payload.ndim != 2 or payload.shape[1] != n_sub:
        raise ValueError("payload grid does not match the subcarrier count")
    rng = np.random.default_rng(0) if rng is None else rng
    n_pay = payload.shape[0]
    total = layout.frame_symbols(n_pay)
    pilot = pilot_symbol(n_sub, pol)
    grid = np.empty((total, n_sub), dtype=complex)
    g = layout.guard_symbols
    grid[:g] = bits_to_qpsk(rng.integers(0, 2, 2 * g * n_sub, dtype=np.uint8)).reshape(g, n_sub)
    ts_rows = np.arange(g, g + layout.ts_symbols)
    grid[ts_rows] = np.tile(training_block(n_sub, layout, pol), (layout.ts_repeats, 1))
    start = layout.data_start()
    groups = layout.n_groups(n_pay)
    group_rows = start + np.arange(groups)[:, None] * (1 + layout.pilot_spacing)
    pilot_rows = group_rows[:, 0]
    slot_rows = (group_rows + 1 + np.arange(layout.pilot_spacing)[None, :]).ravel()
    grid[pilot_rows] = pilot
    grid[slot_rows[n_pay:]] = pilot
    payload_rows = slot_rows[:n_pay]
    grid[payload_rows] = payload
    tail = start + groups * (1 + layout.pilot_spacing)
    t = layout.tail_symbols
    grid[tail:] = bits_to_qpsk(rng.integers(0, 2, 2 * t * n_sub, dtype=np.uint8)).reshape(t, n_sub)
    return Frame(grid, payload_rows, pilot_rows, ts_rows, n_pay)


def deframe(grid, frame: Frame) -> np.ndarray:
    """Extract payload symbols ``(n_payload, n_sub)`` from a grid laid out like ``frame``."""
    return np.asarray(grid)[frame.payload_rows]


def band_offset(n_sub: int, cf: CompressionFactor) -> float:
    """Centre frequency of the subcarrier comb in cycles per chip."""
    return (n_sub - 1) * cf.alpha / (2 * n_sub)


def band_center(chips, n_sub: int, cf: CompressionFactor, start: int = 0, inverse: bool = False) -> np.ndarray:
    """Shift the subcarrier comb to be symmetric about DC (or undo it).

    ``start`` is the global chip index of the first element, so partial
    streams can be shifted consistently.
    """
    chips = np.asarray(chips)
    n = start + np.arange(chips.shape[-1])
    sign = 1.0 if inverse else -1.0
    return chips * np.exp(sign * 2j * np.pi * band_offset(n_sub, cf) * n)


def modulate(grid, cf: CompressionFactor, scheme: str = "cn-ifft") -> np.ndarray:
    """Grid ``(n_symbols, n_sub)`` to a band-centred serial chip stream."""
    grid = np.asarray(grid)
    chips = nofdm_mod(grid, cf, scheme).ravel()
    return band_center(chips, grid.shape[1], cf)


def rrc_taps(rolloff: float, sps: int, span: int) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response over ``span`` symbols."""
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError("rolloff must lie in [0, 1]")
    if sps < 1 + rolloff:
        raise ValueError("sps must be at least 1 + rolloff")
    n = np.arange(-span * sps // 2, span * sps // 2 + 1)
    t = n / sps
    b = rolloff
    h = np.empty(t.size)
    if b == 0:
        h = np.sinc(t)
    else:
        sing = np.isclose(np.abs(4 * b * t), 1.0)
        tt = t[~sing]
        num = np.sin(np.pi * tt * (1 - b)) + 4 * b * tt * np.cos(np.pi * tt * (1 + b))
        den = np.pi * tt * (1 - (4 * b * tt) ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            h[~sing] = np.where(tt == 0, 1 - b + 4 * b / np.pi, num / np.where(den == 0, 1, den))
        h[sing] = b / math.sqrt(2) * (
            (1 + 2 / np.pi) * math.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * math.cos(np.pi / (4 * b))
        )
    return h / np.linalg.norm(h)


def rrc_isi_db(rolloff: float, sps: int, span: int) -> float:
    """Worst residual ISI tap (dB) of the Tx/Rx RRC cascade at symbol spacing."""
    h = rrc_taps(rolloff, sps, span)
    rc = np.convolve(h, h)
    mid = rc.size // 2
    isi = np.delete(rc[mid % sps :: sps], mid // sps)
    return float(20 * np.log10(np.abs(isi).max() / rc[mid]))


def rrc_shape(chips, rolloff: float = 0.01, sps: int = 2, span: int = 1024, max_isi_db: float = -40.0) -> np.ndarray:
    """Upsample by ``sps`` and filter with an RRC pulse (output length ``len * sps``).

    Raises ValueError when the truncated cascade would exceed ``max_isi_db``.
    """
    if rrc_isi_db(rolloff, sps, span) > max_isi_db:
        raise ValueError(f"RRC span {span} is too short for rolloff {rolloff}")
    h = rrc_taps(rolloff, sps, span)
    chips = np.asarray(chips)
    up = np.zeros(chips.size * sps, dtype=complex)
    up[::sps] = chips
    full = signal.oaconvolve(up, h * math.sqrt(sps))
    d = h.size // 2
    return full[d : d + up.size]


def insert_tones(waveform, sps: int, divisor: int = 4, ratio_db: float = 13.0, power: float | None = None):
    """Add a cosine at ``baud / divisor`` (tones at +-baud/divisor).

    Total tone power equals ``power * 10**(-ratio_db/10)`` where ``power``
    defaults to the waveform's mean power. The cosine has zero phase at
    sample 0.
    """
    if divisor < 2:
        raise ValueError("tone divisor must be at least 2")
    if 1.0 / divisor >= sps / 2:
        raise ValueError("tone frequency exceeds the Nyquist frequency of the sample rate")
    waveform = np.asarray(waveform)
    if math.isinf(ratio_db):
        return waveform.copy()
    p = float(np.mean(np.abs(waveform) ** 2)) if power is None else power
    amp = math.sqrt(2 * p * 10 ** (-ratio_db / 10))
    n = np.arange(waveform.shape[-1])
    return waveform + amp * np.cos(2 * np.pi * n / (sps * divisor))


def tone_power_fraction(ratio_db: float) -> float:
    return 10 ** (-ratio_db / 10)


def occupied_bandwidth(waveform, sample_rate: float, fraction: float = 0.99) -> float:
    """Two-sided bandwidth containing ``fraction`` of the power, centred on the spectrum median.

    Leading axes (polarizations) are summed into one power spectrum.
    """
    x = np.asarray(waveform)
    psd = np.abs(np.fft.fftshift(np.fft.fft(x, axis=-1), axes=-1)) ** 2
    psd = psd.reshape(-1, x.shape[-1]).sum(axis=0)
    f = np.fft.fftshift(np.fft.fftfreq(x.shape[-1], 1 / sample_rate))
    c = np.cumsum(psd) / psd.sum()
    lo = f[np.searchsorted(c, (1 - fraction) / 2)]
    hi = f[np.searchsorted(c, 1 - (1 - fraction) / 2)]
    return float(hi - lo)


def map_qpsk(bits) -> np.ndarray:
    return bits_to_qpsk(bits)


@dataclass(frozen=True)
class TxConfig:
    """Transmitter parameters (physical rates in Hz)."""

    modulation: str = "qpsk-nofdm"
    n_sub: int = 8
    alpha: str = "7/8"
    baud_rate: float = 130e9
    pcs_baud_ratio: float = 0.875
    sps: int = 2
    rolloff: float = 0.01
    rrc_span: int = 1024
    entropy: float = 2.6
    pcs_block: int = 1200
    scheme: str = "cn-ifft"
    layout: FrameLayout = field(default_factory=FrameLayout)

    def __post_init__(self):
        if self.modulation not in MODULATIONS:
            raise ValueError(f"unknown modulation {self.modulation!r}; expected one of {MODULATIONS}")

    @property
    def cf(self) -> CompressionFactor:
        if self.modulation != "qpsk-nofdm":
            return CompressionFactor(1, 1)
        return CompressionFactor.from_value(self.alpha)

    @property
    def symbol_rate(self) -> float:
        """Chip rate in Hz (the PCS format runs at a reduced rate)."""
        return self.baud_rate * (self.pcs_baud_ratio if self.modulation == "pcs16-ofdm" else 1.0)

    @property
    def sample_rate(self) -> float:
        return self.symbol_rate * self.sps

    @property
    def order(self) -> int:
        return 16 if self.modulation == "pcs16-ofdm" else 4

    def shaper(self) -> PcsShaper | None:
        return PcsShaper(self.entropy, self.pcs_block) if self.order == 16 else None


@dataclass
class TxWaveform:
    x: np.ndarray
    y: np.ndarray
    sample_rate: float
    baud_rate: float
    sps: int

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ValueError("polarizations must have equal length")

    def stacked(self) -> np.ndarray:
        return np.stack([self.x, self.y])


@dataclass
class Transmission:
    """Everything the receiver and the metrics need to know about one frame."""

    config: TxConfig
    waveform: TxWaveform
    frames: tuple[Frame, Frame]
    info_bits: np.ndarray  # (n_cw, k) FEC information bits
    codewords: np.ndarray  # (n_cw, n)
    data_bits: np.ndarray  # net user bits (equals info_bits for QPSK)
    symbols: np.ndarray  # (n_cw, n / log2 order) transmitted symbols per codeword


def _pcs_split(code: LdpcCode):
    n_dims = code.n // 2
    n_sign_info = code.k - n_dims
    if n_sign_info < 0:
        raise ValueError("code rate too low for amplitude shaping (needs k >= n/2)")
    return n_dims, n_sign_info


def pcs_codeword_labels(codewords, code: LdpcCode) -> np.ndarray:
    """Codewords to 16-QAM label bits ``(sI, aI, sQ, aQ)`` per symbol.

    FEC information holds the amplitude bits first, then uniform sign data;
    parity bits become the remaining signs.
    """
    cw = np.atleast_2d(codewords)
    n_dims, _ = _pcs_split(code)
    info = cw[:, code.info_idx]
    amps = info[:, :n_dims]
    signs = np.concatenate([info[:, n_dims:], cw[:, code.parity_idx]], axis=1)
    return np.stack([signs, amps], axis=-1).reshape(cw.shape[0], -1)


def pcs_labels_to_codewords(label_values, code: LdpcCode) -> np.ndarray:
    """Inverse of :func:`pcs_codeword_labels` (works on bits or LLRs)."""
    lv = np.asarray(label_values).reshape(-1, code.n // 2, 2)
    signs, amps = lv[..., 0], lv[..., 1]
    n_dims, n_sign_info = _pcs_split(code)
    out = np.empty((lv.shape[0], code.n), dtype=lv.dtype)
    out[:, code.info_idx] = np.concatenate([amps, signs[:, :n_sign_info]], axis=1)
    out[:, code.parity_idx] = signs[:, n_sign_info:]
    return out


def _encode_payload(cfg: TxConfig, code: LdpcCode, n_cw: int, rng):
    if cfg.order == 4:
        info = rng.integers(0, 2, (n_cw, code.k), dtype=np.uint8)
        cw = ldpc_encode(info, code)
        return info, cw, info.ravel(), bits_to_qpsk(cw.ravel()).reshape(n_cw, -1)
    shaper = cfg.shaper()
    n_dims, n_sign_info = _pcs_split(code)
    if n_dims % shaper.block_length:
        raise ValueError(f"matcher block {shaper.block_length} must divide {n_dims} amplitudes per codeword")
    blocks = n_dims // shaper.block_length
    match_bits = rng.integers(0, 2, (n_cw, blocks * shaper.bits_per_block), dtype=np.uint8)
    sign_bits = rng.integers(0, 2, (n_cw, n_sign_info), dtype=np.uint8)
    amps = np.stack([shaper.match(b) for b in match_bits])
    info = np.concatenate([amps, sign_bits], axis=1)
    cw = ldpc_encode(info, code)
    labels = pcs_codeword_labels(cw, code)
    data = np.concatenate([match_bits, sign_bits], axis=1).ravel()
    return info, cw, data, bits_to_qam16(labels.ravel(), shaper.scale).reshape(n_cw, -1)


def transmit(cfg: TxConfig, code: LdpcCode, n_codewords: int, rng) -> Transmission:
    """Generate one dual-polarization frame carrying ``n_codewords`` codewords.

    Symbols alternate between polarizations (even to X, odd to Y).
    """
    if n_codewords < 1:
        raise ValueError("need at least one codeword")
    info, cw, data, syms = _encode_payload(cfg, code, n_codewords, rng)
    flat = syms.ravel()
    if flat.size % (2 * cfg.n_sub):
        raise ValueError("codeword symbols do not fill whole multicarrier symbols on both polarizations")
    frames = tuple(build_frame(flat[p::2], cfg.layout, cfg.n_sub, pol=p, rng=rng) for p in range(2))
    pols = []
    for fr in frames:
        chips = modulate(fr.grid, cfg.cf, cfg.scheme)
        w = rrc_shape(chips, cfg.rolloff, cfg.sps, cfg.rrc_span)
        w /= math.sqrt(np.mean(np.abs(w) ** 2))
        pols.append(insert_tones(w, cfg.sps, cfg.layout.tone_divisor, cfg.layout.tone_ratio_db, power=1.0))
    wf = TxWaveform(pols[0], pols[1], cfg.sample_rate, cfg.symbol_rate, cfg.sps)
    return Transmission(cfg, wf, frames, info, cw, data, syms)
