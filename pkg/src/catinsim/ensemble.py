"""Ensemble execution: M replications x diversity settings, in parallel.

Each replication id maps to one event profile shared by every setting, so
the settings of a replication face identical catastrophe schedules.
Replications are independent workers; outputs are written incrementally,
one CSV (plus snapshot sidecar) per (setting, replication), under

    out/
      manifest.json
      runs/setting_<nu>/rep_<id>.csv[.snapshots.json]

The manifest carries the resolved configuration, the settings list, the
replication count and the master seed: everything needed to reproduce the
tree bit for bit.
"""

from __future__ import annotations

import json
import multiprocessing as mp
import os
import traceback
from pathlib import Path

from . import __version__
from .config import RunConfig
from .engine import run_replication
from .records import RunRecord

MANIFEST_SCHEMA = "catinsim/manifest/1"
MANIFEST_NAME = "manifest.json"


def default_workers() -> int:
    env = os.environ.get("CATINSIM_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_path(out_dir: Path, setting: int, replication: int) -> Path:
    return Path(out_dir) / "runs" / f"setting_{setting}" / f"rep_{replication}.csv"


def _run_one(args: tuple) -> tuple[int, int, str | None]:
    config_dict, setting, replication, out_dir = args
    try:
        cfg = RunConfig(**{**config_dict, "diversity": setting,
                           "snapshot_steps": tuple(config_dict["snapshot_steps"])})
        record = run_replication(cfg, replication)
        path = run_path(Path(out_dir), setting, replication)
        path.parent.mkdir(parents=True, exist_ok=True)
        record.write(path)
        return setting, replication, None
    except Exception:
        return setting, replication, traceback.format_exc()


def write_manifest(out_dir: Path, config: RunConfig, settings: list[int], replications: int) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "config": config.as_dict(),
        "settings": list(settings),
        "replications": replications,
        "master_seed": config.master_seed,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(out_dir: Path) -> dict:
    with open(Path(out_dir) / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"unrecognized manifest schema in {out_dir}")
    return manifest


def run_ensemble(
    config: RunConfig,
    settings: list[int],
    replications: int,
    out_dir: str | Path,
    workers: int | None = None,
) -> dict:
    """Execute the ensemble; failures are recorded per run, not fatal.

    Returns a summary dict with the manifest path and any failed runs.
    """
    cfg = config.validate()
    out_dir = Path(out_dir)
    write_manifest(out_dir, cfg, settings, replications)
    config_dict = cfg.as_dict()
    tasks = [
        (config_dict, setting, replication, str(out_dir))
        for setting in settings
        for replication in range(replications)
    ]
    workers = workers or default_workers()
    failures: list[dict] = []
    if workers <= 1 or len(tasks) == 1:
        results = map(_run_one, tasks)
        for setting, replication, error in results:
            if error:
                failures.append({"setting": setting, "replication": replication, "error": error})
    else:
        with mp.get_context("spawn").Pool(workers) as pool:
            for setting, replication, error in pool.imap_unordered(_run_one, tasks):
                if error:
                    failures.append(
                        {"setting": setting, "replication": replication, "error": error}
                    )
    if failures:
        with open(out_dir / "failures.json", "w") as fh:
            json.dump(failures, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return {
        "out_dir": str(out_dir),
        "runs": len(tasks) - len(failures),
        "failures": failures,
    }


def load_records(out_dir: str | Path) -> dict[int, list[RunRecord]]:
    """Read every run in an output tree, grouped by setting."""
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir)
    burn_in = manifest["config"]["burn_in"]
    by_setting: dict[int, list[RunRecord]] = {}
    for setting in manifest["settings"]:
        records = []
        run_dir = out_dir / "runs" / f"setting_{setting}"
        if not run_dir.exists():
            continue
        for path in sorted(run_dir.glob("rep_*.csv"), key=lambda p: int(p.stem.split("_")[1])):
            replication = int(path.stem.split("_")[1])
            records.append(RunRecord.read(path, setting, replication, burn_in))
        by_setting[setting] = records
    return by_setting
