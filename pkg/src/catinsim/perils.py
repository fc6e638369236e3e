"""Catastrophe event profiles: when, where, how big, how allocated.

All peril randomness for a replication is drawn up front into an immutable
:class:`EventProfile`, keyed only by (master seed, replication). Replaying
the same profile under different diversity settings is what isolates the
effect of risk-model diversity from luck.

Event times come from a Poisson process per region (exponential separations
with rate ``lam`` per step), discretized to the integer step they fall in.
Multiple events hitting one region in one step are merged by summing damage
fractions, capped at 1. Event sizes are truncated-Pareto fractions of the
region's insured value; each event carries a frozen allocation seed so the
per-risk split is reproducible too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .distributions import TruncatedPareto

PROFILE_SCHEMA = "catinsim/event-profile/1"


def region_of_risk(n_risks: int, n_regions: int) -> np.ndarray:
    """Fixed risk -> region assignment (round-robin; sizes differ by <= 1)."""
    return np.arange(n_risks, dtype=np.int64) % n_regions


@dataclass(frozen=True)
class CatastropheEvent:
    region: int
    time: int
    total_damage_fraction: float
    allocation_seed: int

    def allocate(self, n_risks_in_region: int) -> np.ndarray:
        """Frozen per-risk damage fractions for this event."""
        from .distributions import allocate_fractions

        stream = rngmod.allocation_stream(self.allocation_seed)
        return allocate_fractions(self.total_damage_fraction, n_risks_in_region, stream)


@dataclass(frozen=True)
class EventProfile:
    replication_id: int
    lam: float
    sigma: float
    n_regions: int
    t_max: int
    master_seed: int
    events: tuple[CatastropheEvent, ...] = field(default=())

    def events_at(self, step: int) -> list[CatastropheEvent]:
        return [e for e in self.events if e.time == step]

    def by_step(self) -> dict[int, list[CatastropheEvent]]:
        out: dict[int, list[CatastropheEvent]] = {}
        for e in self.events:
            out.setdefault(e.time, []).append(e)
        return out


def draw_event_times(lam: float, t_max: int, region: int, stream: np.random.Generator) -> list[int]:
    """Integer steps at which events occur in one region.

    Accumulates exponential(lam) separations from time zero and floors each
    arrival to the step it falls in; arrivals at or beyond t_max are dropped.
    lam = 0 or t_max = 0 yield no events.
    """
    if lam < 0:
        raise ValueError(f"event rate must be >= 0, got {lam}")
    if t_max <= 0 or lam == 0:
        return []
    times: list[int] = []
    t = 0.0
    while True:
        # draw in blocks to limit generator call overhead
        seps = stream.exponential(1.0 / lam, size=64)
        for s in seps:
            t += s
            if t >= t_max:
                return times
            times.append(int(t))


def draw_total_damage(sigma: float, stream: np.random.Generator, size: int | None = None):
    """Truncated-Pareto total damage fraction(s) in [0.25, 1]."""
    return TruncatedPareto(sigma).sample(stream, size)


def allocate_losses(event: CatastropheEvent, n_risks_in_region: int) -> np.ndarray:
    """Per-risk damage fractions d_i in [0, 1] for every risk in the region."""
    return event.allocate(n_risks_in_region)


def build_event_profile(
    replication_id: int,
    *,
    lam: float,
    sigma: float,
    n_regions: int,
    t_max: int,
    master_seed: int,
) -> EventProfile:
    """Full catastrophe schedule for one replication.

    Pure function of its arguments: every draw comes from a substream keyed
    on (master_seed, replication, region, purpose), so the profile is
    independent of the diversity setting and of anything firms do.
    """
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    if n_regions < 1:
        raise ValueError(f"need at least one region, got {n_regions}")
    events: list[CatastropheEvent] = []
    for region in range(n_regions):
        times = draw_event_times(
            lam, t_max, region,
            rngmod.substream(master_seed, replication_id, region, rngmod.EVENT_TIMES),
        )
        if not times:
            continue
        sizes = draw_total_damage(
            sigma,
            rngmod.substream(master_seed, replication_id, region, rngmod.EVENT_SIZES),
            size=len(times),
        )
        merged: dict[int, float] = {}
        for t, d in zip(times, sizes):
            merged[t] = min(merged.get(t, 0.0) + float(d), 1.0)
        for t in sorted(merged):
            events.append(
                CatastropheEvent(
                    region=region,
                    time=t,
                    total_damage_fraction=merged[t],
                    allocation_seed=rngmod.allocation_seed(master_seed, replication_id, region, t),
                )
            )
    events.sort(key=lambda e: (e.time, e.region))
    return EventProfile(
        replication_id=replication_id,
        lam=lam,
        sigma=sigma,
        n_regions=n_regions,
        t_max=t_max,
        master_seed=master_seed,
        events=tuple(events),
    )


def save_profile(profile: EventProfile, path) -> None:
    """Write a profile as JSON lines: one header record, then one per event."""
    with open(path, "w") as fh:
        header = {
            "schema": PROFILE_SCHEMA,
            "replication_id": profile.replication_id,
            "lambda": profile.lam,
            "sigma": profile.sigma,
            "n_regions": profile.n_regions,
            "t_max": profile.t_max,
            "master_seed": profile.master_seed,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for e in profile.events:
            fh.write(
                json.dumps(
                    {
                        "region": e.region,
                        "time": e.time,
                        "damage_fraction": e.total_damage_fraction,
                        "allocation_seed": e.allocation_seed,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_profile(path) -> EventProfile:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != PROFILE_SCHEMA:
            raise ValueError(f"unrecognized profile schema: {header.get('schema')!r}")
        events = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            events.append(
                CatastropheEvent(
                    region=rec["region"],
                    time=rec["time"],
                    total_damage_fraction=rec["damage_fraction"],
                    allocation_seed=rec["allocation_seed"],
                )
            )
    return EventProfile(
        replication_id=header["replication_id"],
        lam=header["lambda"],
        sigma=header["sigma"],
        n_regions=header["n_regions"],
        t_max=header["t_max"],
        master_seed=header["master_seed"],
        events=tuple(events),
    )
