"""Figure rendering for the analyze path.

Renders the standard report figures as PNG files next to the delimited
output: cascade-size histograms on a semi-log scale with their exponential
fit lines, ensemble time-series bands, and firm-size cCDF bands. Analytics
stays pure; this module only consumes its outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import analytics
from .records import RunRecord

SETTING_COLORS = {1: "tab:red", 2: "tab:blue", 3: "tab:green", 4: "tab:olive"}


def _color(setting: int) -> str:
    return SETTING_COLORS.get(setting, f"C{setting % 10}")


def plot_cascade_histograms(
    cascades_by_setting: dict[int, list[analytics.Cascade]],
    path: Path,
    bin_width: float = analytics.DEFAULT_BIN_WIDTH,
) -> None:
    settings = sorted(cascades_by_setting)
    fig, axes = plt.subplots(
        len(settings), 1, figsize=(7, 2.2 * len(settings)), sharex=True, squeeze=False
    )
    for ax, setting in zip(axes[:, 0], settings):
        sizes = np.array([c.size for c in cascades_by_setting[setting]])
        if sizes.size == 0:
            ax.set_ylabel(f"{setting} model(s)")
            continue
        edges = np.arange(0.0, 1.0 + bin_width, bin_width)
        counts, _ = np.histogram(sizes, bins=edges)
        centers = (edges[:-1] + edges[1:]) / 2
        mask = counts > 0
        ax.semilogy(centers[mask], counts[mask], "o", ms=3, color=_color(setting))
        try:
            fit = analytics.fit_exponential_slope(sizes, bin_width)
            xs = np.linspace(*fit.fit_range, 50)
            level = np.interp(fit.fit_range[0], centers[mask], counts[mask])
            ax.semilogy(
                xs,
                level * np.exp(-fit.lambda_hat * (xs - fit.fit_range[0])),
                "--",
                color="black",
                lw=1,
                label=f"slope {fit.lambda_hat:.0f}",
            )
            ax.legend(loc="upper right", fontsize=8)
        except ValueError:
            pass
        ax.set_ylabel(f"{setting} model(s)")
    axes[-1, 0].set_xlabel("cascade size (share of firms)")
    fig.suptitle("Bankruptcy cascade sizes")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bands(
    records_by_setting: dict[int, list[RunRecord]],
    metric: str,
    path: Path,
    burn_in: int = 0,
) -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    for setting in sorted(records_by_setting):
        records = records_by_setting[setting]
        stack = np.vstack([r.series[metric] for r in records])[:, burn_in:]
        steps = records[0].series["step"][burn_in:]
        bands = analytics.ensemble_bands(stack)
        color = _color(setting)
        ax.plot(steps, bands["mean"], color=color, lw=1, label=f"{setting} model(s)")
        ax.fill_between(steps, bands["q25"], bands["q75"], color=color, alpha=0.2, lw=0)
    ax.set_xlabel("step (month)")
    ax.set_ylabel(metric.replace("_", " "))
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_ccdf(band: analytics.CCDFBand, path: Path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(band.x_median, band.levels, color="tab:blue", label="median")
    ax.loglog(band.x_mean, band.levels, "--", color="tab:blue", label="mean")
    ax.fill_betweenx(
        band.levels, band.x_q25, band.x_q75, color="tab:blue", alpha=0.2, lw=0
    )
    ax.set_xlabel("firm capital")
    ax.set_ylabel("P(size >= x)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(
    records_by_setting: dict[int, list[RunRecord]],
    ccdf_bands: dict[tuple[int, str], analytics.CCDFBand],
    out_dir: str | Path,
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    burn_in = next(iter(records_by_setting.values()))[0].burn_in if records_by_setting else 0

    cascades = {
        setting: analytics.collect_cascades(records)
        for setting, records in records_by_setting.items()
    }
    p = out_dir / "cascade_sizes.png"
    plot_cascade_histograms(cascades, p)
    written.append(p)

    for metric in ("premium_insurance", "active_insurers", "uninsured", "available_insurance"):
        p = out_dir / f"bands_{metric}.png"
        plot_bands(records_by_setting, metric, p, burn_in)
        written.append(p)

    for (setting, kind), band in sorted(ccdf_bands.items()):
        p = out_dir / f"ccdf_{kind}_setting_{setting}.png"
        plot_ccdf(band, p, f"{kind} size cCDF, {setting} model(s)")
        written.append(p)
    return written
