"""Analysis outputs: delimited text files derived from an output tree.

Produced by `catinsim analyze`:

    cascades_setting_<nu>.csv     one row per bankruptcy cascade
    summary.csv                   per-setting decay slope and tail counts
    bands_<metric>.csv            per-step ensemble mean/median/IQR by setting
    ccdf_<kind>_setting_<nu>.csv  firm-size cCDF bands (x per survival level)

All files carry a header row; floats are round-trip formatted.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import analytics
from .records import RunRecord

BAND_METRICS = [
    "premium_insurance",
    "premium_reinsurance",
    "capital_insurance",
    "capital_reinsurance",
    "available_insurance",
    "available_reinsurance",
    "active_insurers",
    "active_reinsurers",
    "uninsured",
    "profit_insurance",
    "non_recovered_count",
]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(c) for c in row) + "\n")


def write_cascades(out_dir: Path, setting: int, cascades: list[analytics.Cascade]) -> Path:
    path = out_dir / f"cascades_setting_{setting}.csv"
    _write_csv(
        path,
        ["start_step", "end_step", "exit_count", "firms_at_start", "size"],
        (
            (c.start_step, c.end_step, c.exit_count, c.firms_at_start, c.size)
            for c in cascades
        ),
    )
    return path


def write_summary(out_dir: Path, summary: dict[int, dict]) -> Path:
    path = out_dir / "summary.csv"
    _write_csv(
        path,
        ["setting", "cascades", "total_exits", "lambda_hat", "tail_events_gt_10pct"],
        (
            (
                row["setting"],
                row["cascades"],
                row["total_exits"],
                row["lambda_hat"],
                row["tail_events"],
            )
            for _, row in sorted(summary.items())
        ),
    )
    return path


def write_bands(
    out_dir: Path, records_by_setting: dict[int, list[RunRecord]], metric: str
) -> Path:
    settings = sorted(records_by_setting)
    bands = {}
    steps = None
    for setting in settings:
        records = records_by_setting[setting]
        stack = np.vstack([r.series[metric] for r in records])
        bands[setting] = analytics.ensemble_bands(stack)
        steps = records[0].series["step"]
    header = ["step"]
    for setting in settings:
        for stat in ("mean", "median", "q25", "q75"):
            header.append(f"s{setting}_{stat}")
    rows = []
    for i, t in enumerate(steps):
        row = [int(t)]
        for setting in settings:
            b = bands[setting]
            row.extend([b["mean"][i], b["median"][i], b["q25"][i], b["q75"][i]])
        rows.append(row)
    path = out_dir / f"bands_{metric}.csv"
    _write_csv(path, header, rows)
    return path


def snapshot_capitals(
    records: list[RunRecord], step: int, kind: str
) -> list[np.ndarray]:
    """Per-replication firm capital vectors at a snapshot step."""
    out = []
    for record in records:
        snap = record.snapshots.get(step)
        if snap is None:
            continue
        out.append(np.asarray(snap[kind], dtype=float))
    return out


def write_ccdf(
    out_dir: Path, setting: int, kind: str, band: analytics.CCDFBand
) -> Path:
    path = out_dir / f"ccdf_{kind}_setting_{setting}.csv"
    _write_csv(
        path,
        ["survival_level", "x_mean", "x_median", "x_q25", "x_q75"],
        (
            (band.levels[i], band.x_mean[i], band.x_median[i], band.x_q25[i], band.x_q75[i])
            for i in range(len(band.levels))
        ),
    )
    return path


def analyze_tree(
    records_by_setting: dict[int, list[RunRecord]],
    out_dir: str | Path,
    snapshot_step: int | None = None,
) -> dict:
    """Run the full analysis pass; returns {written: [...], summary: {...}}."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    summary = analytics.table_summary(records_by_setting)
    written.append(write_summary(out_dir, summary))
    for setting, records in sorted(records_by_setting.items()):
        cascades = analytics.collect_cascades(records)
        written.append(write_cascades(out_dir, setting, cascades))
    for metric in BAND_METRICS:
        written.append(write_bands(out_dir, records_by_setting, metric))

    ccdf_bands: dict[tuple[int, str], analytics.CCDFBand] = {}
    for setting, records in sorted(records_by_setting.items()):
        steps = sorted({s for r in records for s in r.snapshots})
        if snapshot_step is not None:
            steps = [snapshot_step] if snapshot_step in steps else []
        for kind in ("insurers", "reinsurers"):
            for step in steps[:1]:
                samples = snapshot_capitals(records, step, kind)
                if not samples:
                    continue
                band = analytics.firm_size_ccdf(samples)
                ccdf_bands[(setting, kind)] = band
                written.append(write_ccdf(out_dir, setting, kind, band))
    return {"written": written, "summary": summary, "ccdf_bands": ccdf_bands}
