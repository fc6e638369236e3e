"""Firm state and lifecycle: capital accounting, entry, and the two exit routes.

Firms earn interest on capital, pay out a fixed share of positive step
profit as dividends, and leave the market either bankrupt (settlement finds
claims above resources) or under-employed: a firm whose committed capital
share stays below its employment threshold for tau consecutive steps winds
down. Committed capital is the requirement of the underwriting rule,
mu times the combined perceived VaR.

The arithmetic helpers are array-capable so the engine can apply them to
whole firm vectors; the dataclasses carry the per-firm bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .riskmodels import RiskModel

INSURER = 0
REINSURER = 1

ACTIVE = 0
EXITED_BANKRUPT = 1
EXITED_UNDEREMPLOYED = 2

STATUS_NAMES = {
    ACTIVE: "active",
    EXITED_BANKRUPT: "exited_bankrupt",
    EXITED_UNDEREMPLOYED: "exited_underemployed",
}


@dataclass
class Firm:
    id: int
    kind: int  # INSURER or REINSURER
    capital: float
    risk_model: RiskModel
    n_regions: int
    entered_step: int = 0
    status: int = ACTIVE
    underemployment_clock: int = 0
    exposure: np.ndarray = field(default=None)  # inward insured value by region

    def __post_init__(self) -> None:
        if self.exposure is None:
            self.exposure = np.zeros(self.n_regions)

    @property
    def active(self) -> bool:
        return self.status == ACTIVE


@dataclass(frozen=True)
class EntryConfig:
    entry_rate_insurer: float
    entry_rate_reinsurer: float
    initial_capital_insurer: float
    initial_capital_reinsurer: float
    initial_insurers: int
    initial_reinsurers: int

    def __post_init__(self) -> None:
        for name in ("entry_rate_insurer", "entry_rate_reinsurer"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise ValueError(f"{name} must be a probability, got {p}")
        if self.initial_capital_reinsurer <= self.initial_capital_insurer:
            raise ValueError("reinsurer entry capital must exceed insurer entry capital")


def accrue_interest(capital, interest_rate: float):
    """Interest earned this step (paid by the economy ledger)."""
    return np.asarray(capital, dtype=float) * interest_rate


def dividend_amount(profit, dividend_share: float):
    """max(0, share * profit): no dividend in loss-making steps."""
    d = np.maximum(0.0, dividend_share * np.asarray(profit, dtype=float))
    return float(d) if d.ndim == 0 else d


def employed_share(capital, mu: float, combined_var):
    """Share of capital committed by underwriting, capped at 1.

    Firms at or below zero capital count as fully employed: they have
    nothing idle to wind down over.
    """
    capital = np.asarray(capital, dtype=float)
    committed = mu * np.asarray(combined_var, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(capital > 0, np.minimum(committed / capital, 1.0), 1.0)
    return float(share) if share.ndim == 0 else share


def update_exit_clock(clock, employed, gamma: float):
    """Consecutive under-employment counter: increments below gamma, else resets."""
    out = np.where(np.asarray(employed) < gamma, np.asarray(clock) + 1, 0)
    return int(out) if out.ndim == 0 else out


def should_exit(clock, tau: int):
    result = np.asarray(clock) >= tau
    return bool(result) if result.ndim == 0 else result


def pro_rata(available: float, dues: np.ndarray) -> np.ndarray:
    """Distribute available cash over claims, pro-rata when short."""
    dues = np.asarray(dues, dtype=float)
    total = dues.sum()
    if total <= available or total == 0:
        return dues.copy()
    return dues * (available / total)


def process_entry(
    entry: EntryConfig,
    models: list[RiskModel],
    n_regions: int,
    step: int,
    next_id: int,
    entry_rng: np.random.Generator,
    model_rng: np.random.Generator,
    reinsurance_enabled: bool = True,
) -> list[Firm]:
    """Stochastic market entry: at most one firm per kind per step.

    Entrants pick their risk model uniformly from the setting's model set.
    """
    # Both uniforms are always drawn so the insurer entry pattern is identical
    # between runs with and without a reinsurance sector.
    u_insurer, u_reinsurer = entry_rng.random(2)
    entrants: list[Firm] = []
    if u_insurer < entry.entry_rate_insurer:
        model = models[int(model_rng.integers(len(models)))]
        entrants.append(
            Firm(
                id=next_id,
                kind=INSURER,
                capital=entry.initial_capital_insurer,
                risk_model=model,
                n_regions=n_regions,
                entered_step=step,
            )
        )
        next_id += 1
    if reinsurance_enabled and u_reinsurer < entry.entry_rate_reinsurer:
        model = models[int(model_rng.integers(len(models)))]
        entrants.append(
            Firm(
                id=next_id,
                kind=REINSURER,
                capital=entry.initial_capital_reinsurer,
                risk_model=model,
                n_regions=n_regions,
                entered_step=step,
            )
        )
    return entrants


def founding_firms(entry: EntryConfig, models: list[RiskModel], n_regions: int) -> list[Firm]:
    """Initial population; risk models assigned round-robin to match the
    setting's usage shares exactly."""
    firms = []
    fid = 0
    for j in range(entry.initial_insurers):
        firms.append(
            Firm(fid, INSURER, entry.initial_capital_insurer, models[j % len(models)], n_regions)
        )
        fid += 1
    for j in range(entry.initial_reinsurers):
        firms.append(
            Firm(fid, REINSURER, entry.initial_capital_reinsurer, models[j % len(models)], n_regions)
        )
        fid += 1
    return firms
