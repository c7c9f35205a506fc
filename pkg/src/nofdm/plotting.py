"""Report figures (rendered off-screen to PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_run", "plot_sweep"]


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata so reruns produce identical files
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_run(report: dict, traces: dict | None, out_dir) -> list[Path]:
    """Per-subcarrier BER bars, plus timing and carrier-phase traces when available."""
    out = Path(out_dir)
    paths = []
    sc = report.get("subcarrier_ber") or []
    if sc:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.bar(np.arange(len(sc)), np.maximum(sc, 1e-7), color="tab:blue")
        ax.set_yscale("log")
        ax.set_xlabel("subcarrier")
        ax.set_ylabel("pre-FEC BER")
        ax.set_title(f"{report.get('modulation', '')}  BER {report.get('pre_fec_ber', float('nan')):.2e}")
        paths.append(_save(fig, out / "subcarrier_ber.png"))
    traces = traces or {}
    if "timing_phase" in traces:
        starts, tau = traces["timing_phase"]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(np.asarray(starts), np.asarray(tau), lw=1)
        ax.set_xlabel("sample index")
        ax.set_ylabel("timing phase [samples]")
        ax.set_title(f"clock offset {report.get('clock_ppm', 0.0):.2f} ppm")
        paths.append(_save(fig, out / "timing_phase.png"))
    if "cpr_phase" in traces:
        rows, theta = traces["cpr_phase"]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        theta = np.asarray(theta)
        for p, name in enumerate("XY"):
            ax.plot(np.asarray(rows), theta[:, p], lw=1, label=name)
        ax.set_xlabel("frame row")
        ax.set_ylabel("carrier phase [rad]")
        ax.legend()
        paths.append(_save(fig, out / "cpr_phase.png"))
    return paths


def plot_sweep(reports: list[dict], out_dir, threshold: float | None = None) -> list[Path]:
    """BER against the swept value (categorical axis for non-numeric values)."""
    ok = [r for r in reports if not r.get("error")]
    if not ok:
        return []
    param = ok[0]["param"]
    vals = [r["value"] for r in ok]
    numeric = all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals)
    x = np.asarray(vals, float) if numeric else np.arange(len(vals))
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    floor = 1e-7
    for key, label, style in (
        ("pre_fec_ber", "pre-FEC", "o-"),
        ("post_fec_ber", "post-FEC", "s--"),
        ("pre_fec_ber_assisted", "pre-FEC (assisted ID)", "^-"),
        ("post_fec_ber_assisted", "post-FEC (assisted ID)", "v--"),
    ):
        y = [r.get(key) for r in ok]
        if any(v is None for v in y):
            continue
        ax.semilogy(x, np.maximum(np.asarray(y, float), floor), style, label=label)
    if threshold is not None:
        ax.axhline(threshold, color="gray", lw=0.8, ls=":", label=f"threshold {threshold:g}")
    if not numeric:
        ax.set_xticks(x, [str(v) for v in vals])
    ax.set_xlabel(param)
    ax.set_ylabel("BER")
    ax.legend(fontsize=8)
    paths = [_save(fig, Path(out_dir) / "sweep_ber.png")]
    if all(r.get("subcarrier_ber") for r in ok):
        fig, ax = plt.subplots(figsize=(5.5, 3.6))
        for xv, r in zip(vals, ok):
            sc = np.maximum(np.asarray(r["subcarrier_ber"], float), floor)
            ax.semilogy(np.arange(sc.size), sc, "o-", label=str(xv))
        ax.set_xlabel("subcarrier")
        ax.set_ylabel("pre-FEC BER")
        ax.legend(fontsize=7, title=param)
        paths.append(_save(fig, Path(out_dir) / "sweep_subcarrier_ber.png"))
    return paths
