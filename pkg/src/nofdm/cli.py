"""Command-line entry point: ``nofdm run|sweep|calibrate-wss|selftest``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .io import write_dump, write_json, write_trace_csv
from .scenario import (
    DEFAULT_WSS_PATH,
    WSS_TARGETS,
    ScenarioConfig,
    ScenarioError,
    SweepSpec,
    calibrate_default_wss,
    default_workers,
    load_experiment,
    quick,
    rosnr,
    run_scenario,
    run_sweep,
    sweep_csv,
)


def _parse_values(text: str) -> tuple:
    vals = tuple(yaml.safe_load(tok.strip()) for tok in text.split(",") if tok.strip())
    if not vals:
        raise argparse.ArgumentTypeError("empty value list")
    return vals


def _load(args) -> tuple[ScenarioConfig, SweepSpec | None]:
    cfg, sweep = load_experiment(args.config) if args.config else (ScenarioConfig(), None)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.quick:
        cfg = quick(cfg)
    return cfg, sweep


def _dump_traces(traces: dict, out: Path) -> None:
    tdir = out / "traces"
    if "timing_phase" in traces:
        starts, tau = traces["timing_phase"]
        write_trace_csv(tdir / "timing_phase.csv", {"sample": starts, "tau_samples": tau})
        write_dump(tdir / "timing_phase", np.asarray(tau), {"x": "block start sample", "unit": "samples"})
    if "cpr_phase" in traces:
        rows, theta = traces["cpr_phase"]
        write_trace_csv(tdir / "cpr_phase.csv", {"row": rows, "theta_x": theta[:, 0], "theta_y": theta[:, 1]})
    if "taps" in traces:
        write_dump(tdir / "equalizer_taps", traces["taps"], {"axes": ["out", "in", "tap"]})


def cmd_run(args) -> int:
    cfg, _ = _load(args)
    out = Path(args.out_dir)
    try:
        report = run_scenario(cfg, keep_traces=args.dump_traces or not args.no_figures)
    except ScenarioError as exc:
        write_json(out / "error.json", {"stage": exc.stage, "error": str(exc), "snapshot": exc.snapshot})
        print(f"error: {exc}", file=sys.stderr)
        return 2
    traces = report.pop("_traces", {})
    write_json(out / "report.json", report)
    (out / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
    # one row per run, appended so repeated runs build a table
    row = dict(report, index=0, param="", value="", error=None)
    csv_path = out / "runs.csv"
    text = sweep_csv([row])
    if csv_path.exists():
        text = text.split("\n", 1)[1]
    with open(csv_path, "a", encoding="utf-8") as fh:
        fh.write(text)
    if args.dump_traces:
        _dump_traces(traces, out)
    if not args.no_figures:
        from .plotting import plot_run

        plot_run(report, traces, out / "figures")
    print(
        f"{cfg.modulation}: pre-FEC BER {report['pre_fec_ber']:.3e}, post-FEC BER {report['post_fec_ber']:.3e}"
        f" ({report['info_bits']} info bits) -> {out / 'report.json'}"
    )
    return 0


def cmd_sweep(args) -> int:
    cfg, sweep = _load(args)
    if args.param or args.values:
        if not (args.param and args.values):
            print("error: --param and --values go together", file=sys.stderr)
            return 2
        sweep = SweepSpec(args.param, args.values, args.seed_policy or "common")
    elif sweep is None:
        print("error: the config has no sweep block; pass --param and --values", file=sys.stderr)
        return 2
    elif args.seed_policy:
        sweep = dataclasses.replace(sweep, seed_policy=args.seed_policy)
    out = Path(args.out_dir)
    reports = run_sweep(cfg, sweep, workers=args.workers)
    (out).mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(reports), encoding="utf-8")
    summary = {"config_digest": cfg.digest, "seed": cfg.seed, "param": sweep.param, "values": list(sweep.values)}
    if sweep.param == "impairments.osnr_db":
        ok = [r for r in reports if not r.get("error")]
        for key in ("pre_fec_ber", "pre_fec_ber_assisted"):
            if ok and all(r.get(key) is not None for r in ok):
                summary[f"rosnr_db_{key}"] = rosnr([r["value"] for r in ok], [r[key] for r in ok], cfg.rosnr_threshold)
        summary["rosnr_threshold"] = cfg.rosnr_threshold
    write_json(out / "report.json", {"summary": summary, "points": reports})
    (out / "config.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
    if not args.no_figures:
        from .plotting import plot_sweep

        plot_sweep(reports, out / "figures", cfg.rosnr_threshold if sweep.param == "impairments.osnr_db" else None)
    for r in reports:
        if r.get("error"):
            print(f"  {sweep.param}={r['value']}: ERROR {r['error']}")
        else:
            print(f"  {sweep.param}={r['value']}: pre-FEC {r['pre_fec_ber']:.3e}  post-FEC {r['post_fec_ber']:.3e}")
    print(f"-> {out / 'sweep.csv'}")
    return 1 if any(r.get("error") for r in reports) else 0


def _parse_target(text: str) -> tuple[int, float]:
    try:
        k, bw = text.split(":")
        return int(k), float(bw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected CASCADE:GHZ, got {text!r}") from None


def cmd_calibrate(args) -> int:
    targets = tuple(args.target) if args.target else WSS_TARGETS
    try:
        out = calibrate_default_wss(args.output, targets)
    except ValueError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return 2
    for (k, bw), fit in zip(out["targets"], out["fitted_bw10_ghz"]):
        print(f"  {k:2d} filters: target {bw:.2f} GHz, fitted {fit:.2f} GHz")
    print(f"per-filter 3-dB bandwidth {out['bw3_ghz']} GHz, order {out['order']} -> {args.output}")
    return 0


def _selftest_checks():
    from .rx.detection import conventional_id, id_thresholds
    from .transforms import CompressionFactor, count_ops, ifrft_direct, interference_matrix, nofdm_mod

    rng = np.random.default_rng(0)
    cf = CompressionFactor(7, 8)
    X = (rng.choice([-1, 1], (200, 8)) + 1j * rng.choice([-1, 1], (200, 8))) / np.sqrt(2)
    ref = ifrft_direct(X, cf)
    err = max(np.linalg.norm(nofdm_mod(X, cf, s) - ref) / np.linalg.norm(ref) for s in ("cn-ifft", "multi-ifft", "pruned-cn-ifft"))
    yield "generation schemes agree", err < 1e-9, f"max rel. error {err:.1e}"
    mults = count_ops("pruned-cn-ifft", 8, cf).complex_mults
    yield "pruned transform cost", mults == 56, f"{mults} complex multiplications"
    S = conventional_id(X @ interference_matrix(8, cf).T, interference_matrix(8, cf), 5)[-1]
    ok = np.allclose(S, X) and np.allclose(id_thresholds(5), [0.8, 0.6, 0.4, 0.2, 0.0])
    yield "noiseless ICI cancellation", bool(ok), "exact recovery at M=5"
    out = calibrate_default_wss(None)
    yield "WSS calibration", max(abs(r) for r in out["residual_ghz"]) < 2.0, f"fitted {out['fitted_bw10_ghz']} GHz"
    cfg = ScenarioConfig.from_dict({"info_bits": 8000, "fiber": {"spans": 0}, "wss": {"cascade": 0}})
    a, b = run_scenario(cfg), run_scenario(cfg)
    yield "noiseless loopback", a["post_fec_ber"] == 0 and a["pre_fec_ber"] == 0, f"pre-FEC {a['pre_fec_ber']}"
    yield "determinism", a == b, "identical reports"


def cmd_selftest(args) -> int:
    failed = 0
    for name, ok, detail in _selftest_checks():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        failed += not ok
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nofdm", description="Non-orthogonal multicarrier coherent link simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("config", nargs=None if config_required else "?", help="scenario YAML file")
        sp.add_argument("--seed", type=int, default=None, help="override the master seed")
        sp.add_argument("--out-dir", default="out", help="output directory (default: out)")
        sp.add_argument("--quick", action="store_true", help="CI profile: 10^4 info bits per point")
        sp.add_argument("--dump-traces", action="store_true", help="write per-stage trace dumps")
        sp.add_argument("--no-figures", action="store_true", help="skip rendering PNG figures")

    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one config parameter")
    common(s)
    s.add_argument("--param", help="dotted config path, e.g. impairments.osnr_db")
    s.add_argument("--values", type=_parse_values, help="comma-separated values")
    s.add_argument("--seed-policy", choices=("common", "independent"))
    s.add_argument("--workers", type=int, default=default_workers())
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate-wss", help="fit the WSS model to 10-dB bandwidth targets")
    c.add_argument("--target", type=_parse_target, action="append", help="CASCADE:GHZ (repeatable)")
    c.add_argument("--output", default=str(DEFAULT_WSS_PATH), help="JSON file to write")
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("selftest", help="fast internal consistency checks")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    code = args.func(args)
    if args.command != "selftest":
        print(f"done in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
