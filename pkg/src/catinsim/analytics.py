"""Post-processing of run records into the systemic-risk statistics.

A cascade is a maximal run of consecutive steps that each contain at least
one firm leaving the market; its size B is total exits over the run divided
by the firm count at the run's first step. The headline statistics pool the
exit series (insolvencies plus under-employment wind-downs: B is a share of
exiting firms); `collect_cascades` takes the series name, so defaults-only
cascades remain available. Cascade-size distributions decay roughly
exponentially, so the tail is summarized by the semi-log slope of the
histogram (steeper slope = thinner tail = less systemic risk) and by the
raw count of cascades hitting more than 10% of firms.

Everything here is a pure function of recorded series; analytics can be
re-run offline against archived output trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import RunRecord

TAIL_THRESHOLD = 0.10
DEFAULT_BIN_WIDTH = 0.01


@dataclass(frozen=True)
class Cascade:
    start_step: int
    end_step: int
    exit_count: int
    firms_at_start: int

    @property
    def size(self) -> float:
        return self.exit_count / self.firms_at_start


@dataclass(frozen=True)
class TailFit:
    lambda_hat: float
    bin_width: float
    fit_range: tuple[float, float]
    r_squared: float
    n_samples: int


def segment_cascades(
    defaults: np.ndarray, firms_at_start: np.ndarray, burn_in: int = 0
) -> list[Cascade]:
    """Maximal runs of consecutive steps with defaults, after burn-in."""
    defaults = np.asarray(defaults)
    firms_at_start = np.asarray(firms_at_start)
    if defaults.shape != firms_at_start.shape:
        raise ValueError("defaults and firm series must be aligned")
    cascades: list[Cascade] = []
    start = None
    total = 0
    for t in range(burn_in, len(defaults)):
        if defaults[t] > 0:
            if start is None:
                start = t
                total = 0
            total += int(defaults[t])
        elif start is not None:
            cascades.append(Cascade(start, t - 1, total, int(firms_at_start[start])))
            start = None
    if start is not None:
        cascades.append(
            Cascade(start, len(defaults) - 1, total, int(firms_at_start[start]))
        )
    return cascades


def collect_cascades(records: list[RunRecord], series: str = "exits") -> list[Cascade]:
    out: list[Cascade] = []
    for record in records:
        out.extend(
            segment_cascades(
                record.series[series],
                record.series["firms_at_start"],
                record.burn_in,
            )
        )
    return out


def fit_exponential_slope(samples, bin_width: float = DEFAULT_BIN_WIDTH) -> TailFit:
    """Least-squares line through (bin center, log count) over nonempty bins.

    Histogram covers (0, 1] with fixed-width bins; the slope magnitude is
    the decay rate of the size distribution. Bins are weighted by their
    counts (log of a Poisson count has variance ~ 1/count), which keeps the
    near-empty tail bins from flattening the estimate.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("no samples to fit")
    edges = np.arange(0.0, 1.0 + bin_width, bin_width)
    counts, _ = np.histogram(samples, bins=edges)
    centers = (edges[:-1] + edges[1:]) / 2
    nonempty = counts > 0
    if nonempty.sum() < 2:
        raise ValueError("need at least two nonempty bins to fit a slope")
    x = centers[nonempty]
    y = np.log(counts[nonempty].astype(float))
    slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(counts[nonempty].astype(float)))
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TailFit(
        lambda_hat=float(-slope),
        bin_width=bin_width,
        fit_range=(float(x.min()), float(x.max())),
        r_squared=r2,
        n_samples=int(samples.size),
    )


def count_tail_events(cascades: list[Cascade], threshold: float = TAIL_THRESHOLD) -> int:
    """Cascades bankrupting more than `threshold` of the firms present."""
    return sum(1 for c in cascades if c.size > threshold)


def ensemble_bands(series: np.ndarray) -> dict[str, np.ndarray]:
    """Pointwise mean / median / interquartile band across replications.

    `series` is (replications, steps); quartiles use linear interpolation.
    """
    series = np.atleast_2d(np.asarray(series, dtype=float))
    return {
        "mean": series.mean(axis=0),
        "median": np.median(series, axis=0),
        "q25": np.percentile(series, 25, axis=0),
        "q75": np.percentile(series, 75, axis=0),
    }


def lag_autocorrelation(series: np.ndarray, lag: int) -> float:
    series = np.asarray(series, dtype=float)
    if len(series) <= lag + 1:
        raise ValueError("series too short for requested lag")
    a, b = series[:-lag], series[lag:]
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


@dataclass(frozen=True)
class CCDFBand:
    """Ensemble of empirical complementary CDFs of firm size (capital).

    `grid` is the shared size grid with per-replication cCDF values on it;
    the band statistics are evaluated in the x direction: at each survival
    level, the mean/median/quartiles of the capital value across
    replications.
    """

    grid: np.ndarray
    values: np.ndarray  # (replications, len(grid)) survival probabilities
    levels: np.ndarray
    x_mean: np.ndarray
    x_median: np.ndarray
    x_q25: np.ndarray
    x_q75: np.ndarray


def empirical_ccdf(sizes: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """P(size >= x) on the given grid; nonincreasing from 1 toward 0."""
    sizes = np.sort(np.asarray(sizes, dtype=float))
    if sizes.size == 0:
        raise ValueError("empty size sample")
    idx = np.searchsorted(sizes, grid, side="left")
    return (sizes.size - idx) / sizes.size


def _quantile_at_level(sizes: np.ndarray, level: float) -> float:
    """Largest size whose survival probability is still >= level."""
    sizes = np.sort(np.asarray(sizes, dtype=float))
    k = int(np.ceil(level * sizes.size))
    k = min(max(k, 1), sizes.size)
    return float(sizes[sizes.size - k])


def firm_size_ccdf(
    capital_samples: list[np.ndarray],
    n_grid: int = 200,
    n_levels: int = 99,
) -> CCDFBand:
    """Per-replication cCDFs on a shared log grid plus x-direction bands.

    `capital_samples` holds one array of firm capitals per replication
    (taken from a snapshot step).
    """
    samples = [np.asarray(s, dtype=float) for s in capital_samples if len(s)]
    if not samples:
        raise ValueError("no non-empty capital snapshots")
    low = min(s.min() for s in samples)
    high = max(s.max() for s in samples)
    low = max(low, 1e-9)
    grid = np.geomspace(low, max(high, low * (1 + 1e-9)), n_grid)
    values = np.vstack([empirical_ccdf(s, grid) for s in samples])
    levels = np.linspace(0.01, 0.99, n_levels)
    x_at_level = np.empty((len(samples), n_levels))
    for i, s in enumerate(samples):
        for j, level in enumerate(levels):
            x_at_level[i, j] = _quantile_at_level(s, level)
    return CCDFBand(
        grid=grid,
        values=values,
        levels=levels,
        x_mean=x_at_level.mean(axis=0),
        x_median=np.median(x_at_level, axis=0),
        x_q25=np.percentile(x_at_level, 25, axis=0),
        x_q75=np.percentile(x_at_level, 75, axis=0),
    )


def table_summary(
    records_by_setting: dict[int, list[RunRecord]], series: str = "exits"
) -> dict[int, dict]:
    """Per-setting cascade-tail summary: decay slope and >10% event count."""
    out: dict[int, dict] = {}
    for setting, records in sorted(records_by_setting.items()):
        cascades = collect_cascades(records, series)
        sizes = np.array([c.size for c in cascades])
        row: dict = {
            "setting": setting,
            "cascades": len(cascades),
            "tail_events": count_tail_events(cascades),
            "total_exits": int(sizes.size and sum(c.exit_count for c in cascades)),
        }
        try:
            row["lambda_hat"] = fit_exponential_slope(sizes).lambda_hat
        except ValueError:
            row["lambda_hat"] = float("nan")
        out[setting] = row
    return out
