"""Per-replication output: step-level metric series plus capital snapshots.

One RunRecord per (setting, replication). The time series go to a CSV with
one row per step; firm-level capital snapshots (used for firm-size
distributions) go to a JSON sidecar. Formats are versioned through the run
manifest; floats are written with round-trip precision so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RECORD_SCHEMA = "catinsim/run-record/1"

COLUMNS = [
    "step",
    "premium_insurance",
    "premium_reinsurance",
    "capital_insurance",
    "capital_reinsurance",
    "available_insurance",
    "available_reinsurance",
    "active_insurers",
    "active_reinsurers",
    "firms_at_start",
    "entries",
    "defaults",
    "exits",
    "uninsured",
    "policies",
    "treaties",
    "catbonds",
    "non_recovered_count",
    "non_recovered_amount",
    "profit_insurance",
    "profit_reinsurance",
    "event_count",
    "event_damage_fraction",
    "economy_balance",
    "total_money",
]

_INT_COLUMNS = {
    "step",
    "active_insurers",
    "active_reinsurers",
    "firms_at_start",
    "entries",
    "defaults",
    "exits",
    "uninsured",
    "policies",
    "treaties",
    "catbonds",
    "non_recovered_count",
    "event_count",
}


@dataclass
class RunRecord:
    setting: int
    replication: int
    t_max: int
    burn_in: int
    series: dict[str, np.ndarray] = field(default_factory=dict)
    snapshots: dict[int, dict[str, list[float]]] = field(default_factory=dict)

    @classmethod
    def allocate(cls, setting: int, replication: int, t_max: int, burn_in: int) -> "RunRecord":
        series = {
            name: np.zeros(t_max, dtype=np.int64 if name in _INT_COLUMNS else np.float64)
            for name in COLUMNS
        }
        series["step"] = np.arange(t_max, dtype=np.int64)
        return cls(setting, replication, t_max, burn_in, series)

    def set(self, step: int, **values) -> None:
        for name, value in values.items():
            self.series[name][step] = value

    def post_burn_in(self, name: str) -> np.ndarray:
        return self.series[name][self.burn_in:]

    def write(self, csv_path: str | Path) -> None:
        csv_path = Path(csv_path)
        with open(csv_path, "w") as fh:
            fh.write(",".join(COLUMNS) + "\n")
            cols = [self.series[name] for name in COLUMNS]
            ints = [name in _INT_COLUMNS for name in COLUMNS]
            for i in range(self.t_max):
                cells = [
                    str(int(col[i])) if is_int else format(float(col[i]), ".17g")
                    for col, is_int in zip(cols, ints)
                ]
                fh.write(",".join(cells) + "\n")
        if self.snapshots:
            payload = {
                "schema": RECORD_SCHEMA,
                "setting": self.setting,
                "replication": self.replication,
                "snapshots": {
                    str(step): snap for step, snap in sorted(self.snapshots.items())
                },
            }
            with open(self.snapshot_path(csv_path), "w") as fh:
                json.dump(payload, fh, sort_keys=True)
                fh.write("\n")

    @staticmethod
    def snapshot_path(csv_path: str | Path) -> Path:
        csv_path = Path(csv_path)
        return csv_path.with_suffix(".snapshots.json")

    @classmethod
    def read(cls, csv_path: str | Path, setting: int, replication: int, burn_in: int) -> "RunRecord":
        csv_path = Path(csv_path)
        data = np.genfromtxt(csv_path, delimiter=",", names=True)
        if data.ndim == 0:  # single-row file
            data = data.reshape(1)
        series = {}
        for name in COLUMNS:
            col = data[name]
            series[name] = col.astype(np.int64) if name in _INT_COLUMNS else col.astype(np.float64)
        record = cls(setting, replication, len(series["step"]), burn_in, series)
        snap_path = cls.snapshot_path(csv_path)
        if snap_path.exists():
            with open(snap_path) as fh:
                payload = json.load(fh)
            record.snapshots = {
                int(step): snap for step, snap in payload["snapshots"].items()
            }
        return record
