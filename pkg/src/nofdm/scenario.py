"""Scenario configuration, seeding and sweep orchestration.

A scenario is a nested key-value tree (YAML on disk) that maps one-to-one
onto :class:`ScenarioConfig`. Its digest is the SHA-256 of the canonical
JSON form, so two configs with the same digest run the same experiment.

Randomness is derived per ``(point, stage)`` from the master seed with
``numpy.random.SeedSequence(seed, spawn_key=(point, stage))``; adding a
stage therefore never shifts the streams of existing ones.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import ChannelSpec, FiberSpec, WssSpec, calibrate_wss, propagate, wss_bandwidth
from .fec import default_code
from .rx import RxConfig, receive
from .transforms import count_ops
from .tx import TxConfig, occupied_bandwidth, transmit

__all__ = [
    "ImpairmentSpec",
    "ScenarioConfig",
    "ScenarioError",
    "SweepSpec",
    "DEFAULT_WSS_PATH",
    "WSS_TARGETS",
    "calibrate_default_wss",
    "default_wss",
    "derive_rng",
    "load_experiment",
    "rosnr",
    "run_scenario",
    "run_sweep",
    "sweep_csv",
]

# stage identifiers for the seed tree
STAGE_TX, STAGE_PHASE, STAGE_NOISE = 0, 1, 2

# 10-dB bandwidth targets (cascade count -> GHz) used for the default WSS model
WSS_TARGETS = ((3, 122.5), (11, 115.5))

_MODULATIONS = {"QPSK-OFDM": "qpsk-ofdm", "QPSK-NOFDM": "qpsk-nofdm", "PCS16-OFDM": "pcs16-ofdm"}


DEFAULT_WSS_PATH = Path(__file__).with_name("data") / "wss_default.json"


def default_wss(cascade: int = 3) -> WssSpec:
    """WSS model from the shipped calibration file (falls back to the built-in fit)."""
    try:
        d = json.loads(DEFAULT_WSS_PATH.read_text(encoding="utf-8"))
        return WssSpec(cascade, float(d["bw3_ghz"]), float(d["order"]), float(d["grid_ghz"]))
    except (OSError, KeyError, ValueError):
        return WssSpec(cascade)


class ScenarioError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``snapshot`` describes its inputs."""

    def __init__(self, stage: str, cause: BaseException, snapshot: dict | None = None):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.snapshot = snapshot or {}


@dataclass(frozen=True)
class ImpairmentSpec:
    """Link impairments. ``osnr_db = None`` means noiseless."""

    osnr_db: float | None = None
    cfo_hz: float = 0.0
    linewidth_hz: float = 0.0
    clock_ppm: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    modulation: str = "QPSK-NOFDM"
    tx: TxConfig = field(default_factory=TxConfig)
    fiber: FiberSpec = field(default_factory=lambda: FiberSpec(spans=25))
    wss: WssSpec = field(default_factory=default_wss)
    impairments: ImpairmentSpec = field(default_factory=ImpairmentSpec)
    rx: RxConfig = field(default_factory=RxConfig)
    seed: int = 1
    info_bits: int = 100_000
    capture_margin: int = 24576
    rosnr_threshold: float = 2.4e-2

    def __post_init__(self):
        if self.modulation not in _MODULATIONS:
            raise ValueError(f"modulation must be one of {sorted(_MODULATIONS)}, got {self.modulation!r}")
        if self.tx.modulation != _MODULATIONS[self.modulation]:
            object.__setattr__(self, "tx", dataclasses.replace(self.tx, modulation=_MODULATIONS[self.modulation]))
        if self.info_bits < 1 or self.seed < 0:
            raise ValueError("info_bits must be positive and seed non-negative")
        if self.capture_margin % 8 or self.capture_margin < 0:
            raise ValueError("capture_margin must be a non-negative multiple of 8")
        if not 0 < self.rosnr_threshold < 0.5:
            raise ValueError("rosnr_threshold must lie in (0, 0.5)")

    # --- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = _to_plain(self)
        d["tx"].pop("modulation")  # carried by the top-level key
        return d

    @classmethod
    def from_dict(cls, data: dict | None) -> "ScenarioConfig":
        return _from_plain(cls, dict(data or {}), "")

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))

    def with_value(self, path: str, value) -> "ScenarioConfig":
        """Copy with the dotted ``path`` (e.g. ``impairments.osnr_db``) set to ``value``."""
        d = self.to_dict()
        keys = path.split(".")
        node = d
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise KeyError(f"unknown config path {path!r}")
            node = node[k]
        if keys[-1] not in node:
            raise KeyError(f"unknown config path {path!r}")
        node[keys[-1]] = value
        return ScenarioConfig.from_dict(d)

    @property
    def n_codewords(self) -> int:
        return max(1, math.ceil(self.info_bits / default_code().k))


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ValueError("non-finite values are not representable in a config")
    return obj


def _from_plain(cls, data: dict, where: str, base=None):
    """Build ``cls`` from a plain mapping, starting from ``base`` (default: ``cls()``).

    Nested sections start from the parent's default instance, so e.g. a
    partial ``wss`` block keeps the calibrated passband of the default.
    """
    if not isinstance(data, dict):
        raise ValueError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"{where or 'config'}: unknown keys {sorted(unknown)}")
    base = cls() if base is None else base
    kwargs = {}
    for name, value in data.items():
        current = getattr(base, name)
        key = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(current):
            kwargs[name] = _from_plain(type(current), value, key, current)
        else:
            kwargs[name] = _coerce(current, value, key)
    return dataclasses.replace(base, **kwargs)


def _coerce(default, value, key):
    if value is None:
        return None
    if default is None:  # optional numbers such as osnr_db
        default = 0.0
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{key}: expected a boolean")
        return value
    if isinstance(default, int):
        try:
            num = float(value) if isinstance(value, str) else value
        except ValueError:
            num = None
        if isinstance(num, bool) or not isinstance(num, (int, float)) or not math.isfinite(num) or int(num) != num:
            raise ValueError(f"{key}: expected an integer, got {value!r}")
        return int(num)
    if isinstance(default, float):
        try:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{key}: expected a number, got {value!r}") from None
    if isinstance(default, str):
        return str(value)
    return value


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter. ``seed_policy`` is ``"common"`` (every point reuses
    the point-0 streams, so points differ only in the swept value) or
    ``"independent"`` (one stream family per grid index)."""

    param: str
    values: tuple
    seed_policy: str = "common"

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("sweep value list is empty")
        if self.seed_policy not in ("common", "independent"):
            raise ValueError("seed_policy must be 'common' or 'independent'")
        object.__setattr__(self, "values", tuple(self.values))


def load_experiment(path) -> tuple[ScenarioConfig, SweepSpec | None]:
    """Load a YAML file holding a scenario plus an optional top-level ``sweep`` block."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    sweep = data.pop("sweep", None)
    cfg = ScenarioConfig.from_dict(data)
    if sweep is None:
        return cfg, None
    if not isinstance(sweep, dict) or set(sweep) - {"param", "values", "seed_policy"}:
        raise ValueError(f"{path}: sweep block needs 'param' and 'values' (optional 'seed_policy')")
    return cfg, SweepSpec(sweep["param"], tuple(sweep.get("values") or ()), sweep.get("seed_policy", "common"))


def derive_rng(seed: int, point: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, stage)))


def _g(x: float) -> float:
    # fixed 10 significant digits: keeps reports identical across BLAS thread counts
    return float(f"{x:.10g}") if math.isfinite(x) else x


def net_spectral_efficiency(tr) -> float:
    """Net user bits per second per hertz of the launched dual-pol frame.

    Uses this simulator's own accounting: every overhead carried by the
    frame (training sequence, pilots, tones, FEC parity, PCS redundancy)
    lowers the user bit count or lengthens the frame, and the bandwidth is
    the 99% power bandwidth of the launched waveform.
    """
    w = tr.waveform
    duration = w.x.size / w.sample_rate
    return tr.data_bits.size / duration / occupied_bandwidth(w.stacked(), w.sample_rate)


def run_scenario(config: ScenarioConfig, point: int = 0, keep_traces: bool = False) -> dict:
    """Run tx -> channel -> rx once and return the metrics report (plain dict).

    Raises :class:`ScenarioError` naming the failing stage.
    """
    code = default_code()
    tx_cfg = config.tx
    n_cw = config.n_codewords
    imp = config.impairments
    snap = {"digest": config.digest, "point": point, "n_codewords": n_cw}
    try:
        tr = transmit(tx_cfg, code, n_cw, derive_rng(config.seed, point, STAGE_TX))
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise ScenarioError("tx", exc, snap) from exc
    spec = ChannelSpec(
        osnr_db=math.inf if imp.osnr_db is None else imp.osnr_db,
        cfo_hz=imp.cfo_hz,
        linewidth_hz=imp.linewidth_hz,
        clock_ppm=imp.clock_ppm,
        fiber=config.fiber,
        wss=config.wss,
    )
    snap["tx_samples"] = int(tr.waveform.x.size)
    net_se = net_spectral_efficiency(tr)
    try:
        cap = propagate(
            tr.waveform.stacked(),
            tx_cfg.sample_rate,
            spec,
            derive_rng(config.seed, point, STAGE_PHASE),
            derive_rng(config.seed, point, STAGE_NOISE),
            margin=config.capture_margin,
        )
    except Exception as exc:  # noqa: BLE001
        raise ScenarioError("channel", exc, snap) from exc
    try:
        res = receive(cap.samples, tx_cfg, config.rx, code, n_cw, fiber=config.fiber, reference=tr, keep_traces=keep_traces)
    except Exception as exc:  # noqa: BLE001
        raise ScenarioError("rx", exc, snap) from exc

    ops = count_ops("pruned-cn-ifft" if tx_cfg.scheme == "cn-ifft" else tx_cfg.scheme, tx_cfg.n_sub, tx_cfg.cf)
    report = {
        "config_digest": config.digest,
        "seed": config.seed,
        "point": point,
        "modulation": config.modulation,
        "info_bits": int(n_cw * code.k),
        "pre_fec_ber": _g(res.pre_fec.ber),
        "pre_fec_errors": res.pre_fec.errors,
        "pre_fec_bits": res.pre_fec.total,
        "post_fec_ber": _g(res.post_fec.ber),
        "post_fec_errors": res.post_fec.errors,
        "pre_fec_ber_assisted": None if res.pre_fec_assisted is None else _g(res.pre_fec_assisted.ber),
        "post_fec_ber_assisted": None if res.post_fec_assisted is None else _g(res.post_fec_assisted.ber),
        "post_fec_errors_assisted": None if res.post_fec_assisted is None else res.post_fec_assisted.errors,
        "subcarrier_ber": [_g(b.ber) for b in res.pre_fec_subcarrier],
        "cfo_hz": _g(res.cfo_hz),
        "residual_cfo_hz": _g(res.residual_cfo_hz),
        "clock_ppm": _g(res.clock_ppm),
        "frame_offset": res.frame_offset,
        "sync_peak": _g(res.sync_peak),
        "noise_variance": _g(res.noise_variance),
        "timing_low_confidence": res.timing_low_confidence,
        "cpr_low_confidence": res.cpr_low_confidence,
        "complex_mults_per_symbol": None if ops is None else ops.complex_mults,
        "net_se": _g(net_se),
    }
    if keep_traces:
        report["_traces"] = res.traces
    return report


def _point_job(args):
    base, param, value, index, point = args
    cfg = ScenarioConfig.from_dict(base).with_value(param, value)
    try:
        rep = run_scenario(cfg, point=point)
        rep["error"] = None
    except (ScenarioError, ValueError, KeyError) as exc:
        stage = getattr(exc, "stage", "config")
        rep = {"config_digest": cfg.digest if isinstance(exc, ScenarioError) else None, "error": f"{stage}: {exc}"}
    rep["index"] = index
    rep["param"] = param
    rep["value"] = value
    return rep


def run_sweep(config: ScenarioConfig, sweep: SweepSpec, workers: int = 1) -> list[dict]:
    """One report per grid value, in grid order; failed points carry an ``error`` entry."""
    for v in sweep.values:
        config.with_value(sweep.param, v)  # validate the whole grid before running
    base = config.to_dict()
    jobs = [
        (base, sweep.param, v, i, 0 if sweep.seed_policy == "common" else i) for i, v in enumerate(sweep.values)
    ]
    if workers <= 1:
        return [_point_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_job, jobs))


_CSV_HEAD = [
    "index",
    "param",
    "value",
    "pre_fec_ber",
    "post_fec_ber",
    "pre_fec_ber_assisted",
    "post_fec_ber_assisted",
    "cfo_hz",
    "residual_cfo_hz",
    "clock_ppm",
    "complex_mults_per_symbol",
    "net_se",
    "config_digest",
    "error",
]


def sweep_csv(reports: list[dict]) -> str:
    """Render sweep reports as CSV text (per-subcarrier BERs as ``ber_sc<k>`` columns)."""
    n_sc = max((len(r.get("subcarrier_ber") or []) for r in reports), default=0)
    head = _CSV_HEAD[:7] + [f"ber_sc{k}" for k in range(n_sc)] + _CSV_HEAD[7:]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for r in reports:
        sc = list(r.get("subcarrier_ber") or []) + [None] * n_sc
        row = [r.get(k) for k in _CSV_HEAD[:7]] + sc[:n_sc] + [r.get(k) for k in _CSV_HEAD[7:]]
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def rosnr(osnr_db, ber, threshold: float) -> float | None:
    """OSNR at which BER crosses ``threshold`` (log-BER linear interpolation), or None."""
    x = np.asarray(osnr_db, dtype=float)
    y = np.asarray(ber, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    ly = np.log10(np.maximum(y, 1e-12))
    lt = math.log10(threshold)
    for i in range(len(x) - 1):
        if (ly[i] - lt) * (ly[i + 1] - lt) <= 0 and ly[i] != ly[i + 1]:
            return float(x[i] + (lt - ly[i]) * (x[i + 1] - x[i]) / (ly[i + 1] - ly[i]))
    return None


def calibrate_default_wss(path=None, targets=WSS_TARGETS) -> dict:
    """Fit the WSS model to ``targets`` and optionally write it as JSON to ``path``.

    The targets are measured end-to-end responses, so the fitted per-filter
    parameters also absorb the transceiver's own roll-off.
    """
    spec, report = calibrate_wss(targets)
    out = {
        "bw3_ghz": round(spec.bw3_ghz, 4),
        "order": round(spec.order, 4),
        "grid_ghz": spec.grid_ghz,
        "targets": [list(t) for t in report["targets"]],
        "fitted_bw10_ghz": [round(wss_bandwidth(WssSpec(k, spec.bw3_ghz, spec.order)), 4) for k, _ in targets],
        "residual_ghz": [round(r, 6) + 0.0 for r in report["residual_ghz"]],
    }
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def quick(config: ScenarioConfig, info_bits: int = 10_000) -> ScenarioConfig:
    """The CI profile: same scenario at a reduced bit budget."""
    return dataclasses.replace(config, info_bits=min(config.info_bits, info_bits))


def default_workers() -> int:
    return max(1, min(8, (os.cpu_count() or 1)))

