"""Evaluation outputs: the metrics CSV, grayscale PGM field dumps, and
matplotlib summary figures rendered next to the CSV."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CSV_COLUMNS = ("channel", "lead_hours", "rmse", "acc",
               "ensemble_spread", "coverage_1sigma", "coverage_2sigma")


@dataclass(frozen=True)
class MetricsRow:
    channel: str
    lead_hours: float
    rmse: float
    acc: float
    ensemble_spread: float
    coverage_1sigma: float
    coverage_2sigma: float


def write_metrics_csv(path: str | Path, rows: list[MetricsRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.channel, f"{r.lead_hours:g}", repr(r.rmse), repr(r.acc),
                             repr(r.ensemble_spread), repr(r.coverage_1sigma),
                             repr(r.coverage_2sigma)])


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(MetricsRow(
                channel=rec["channel"], lead_hours=float(rec["lead_hours"]),
                rmse=float(rec["rmse"]), acc=float(rec["acc"]),
                ensemble_spread=float(rec["ensemble_spread"]),
                coverage_1sigma=float(rec["coverage_1sigma"]),
                coverage_2sigma=float(rec["coverage_2sigma"])))
    return rows


def _to_gray(panel: np.ndarray) -> np.ndarray:
    lo, hi = float(panel.min()), float(panel.max())
    if hi == lo:
        return np.zeros(panel.shape, dtype=np.uint8)
    scaled = (panel - lo) / (hi - lo) * 255.0
    return np.round(scaled).astype(np.uint8)


def write_pgm(path: str | Path, panels: list[np.ndarray]) -> None:
    """Stack 2-d panels vertically into one binary PGM (P5, maxval 255);
    each panel is scaled by its own min/max."""
    image = np.vstack([_to_gray(p) for p in panels])
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def dump_field_pgms(out_dir: str | Path, truth: np.ndarray, pred: np.ndarray,
                    channel_names: tuple[str, ...], lead_hours: float) -> list[Path]:
    """One three-row PGM per channel: truth, prediction, difference."""
    out_dir = Path(out_dir)
    paths = []
    for ci, name in enumerate(channel_names):
        path = out_dir / f"fields_{name}_lead{lead_hours:g}h.pgm"
        write_pgm(path, [truth[..., ci], pred[..., ci], pred[..., ci] - truth[..., ci]])
        paths.append(path)
    return paths


def skill_figure(rows: list[MetricsRow], path: str | Path) -> None:
    """RMSE and ACC against lead time, one line per channel."""
    channels = sorted({r.channel for r in rows})
    fig, (ax_rmse, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    for ch in channels:
        sub = sorted((r for r in rows if r.channel == ch), key=lambda r: r.lead_hours)
        leads = [r.lead_hours for r in sub]
        ax_rmse.plot(leads, [r.rmse for r in sub], marker="o", label=ch)
        ax_acc.plot(leads, [r.acc for r in sub], marker="o", label=ch)
    ax_rmse.set_xlabel("lead time (h)")
    ax_rmse.set_ylabel("weighted RMSE")
    ax_acc.set_xlabel("lead time (h)")
    ax_acc.set_ylabel("ACC")
    ax_acc.set_ylim(-1.05, 1.05)
    ax_rmse.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def spread_figure(rows: list[MetricsRow], path: str | Path) -> None:
    """Ensemble spread growth and coverage against lead time."""
    channels = sorted({r.channel for r in rows})
    fig, (ax_spread, ax_cov) = plt.subplots(1, 2, figsize=(9, 3.5))
    for ch in channels:
        sub = sorted((r for r in rows if r.channel == ch), key=lambda r: r.lead_hours)
        leads = [r.lead_hours for r in sub]
        ax_spread.plot(leads, [r.ensemble_spread for r in sub], marker="o", label=ch)
        ax_cov.plot(leads, [r.coverage_1sigma for r in sub], marker="o", label=f"{ch} 1σ")
        ax_cov.plot(leads, [r.coverage_2sigma for r in sub], marker="s",
                    linestyle="--", label=f"{ch} 2σ")
    ax_spread.set_xlabel("lead time (h)")
    ax_spread.set_ylabel("ensemble spread")
    ax_cov.set_xlabel("lead time (h)")
    ax_cov.set_ylabel("coverage")
    ax_cov.set_ylim(0, 1.05)
    ax_spread.legend(fontsize=8)
    ax_cov.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def field_figure(truth: np.ndarray, pred: np.ndarray,
                 channel_names: tuple[str, ...], lead_hours: float,
                 path: str | Path) -> None:
    """Three-row panel per channel: truth on top, prediction, difference."""
    n_ch = len(channel_names)
    fig, axes = plt.subplots(3, n_ch, figsize=(3.2 * n_ch, 6.5), squeeze=False)
    for ci, name in enumerate(channel_names):
        diff = pred[..., ci] - truth[..., ci]
        for row, (panel, title) in enumerate(
                [(truth[..., ci], f"{name} truth"),
                 (pred[..., ci], f"{name} prediction"),
                 (diff, f"{name} difference")]):
            ax = axes[row][ci]
            im = ax.imshow(panel, origin="lower", aspect="auto",
                           cmap="coolwarm" if row == 2 else "viridis")
            ax.set_title(title, fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
            fig.colorbar(im, ax=ax, shrink=0.8)
    fig.suptitle(f"lead {lead_hours:g} h")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
