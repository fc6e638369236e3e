"""Global price formation and the rest-of-economy ledger.

Premiums are global per-step rates per unit of cover, linear and decreasing
in the relevant sector's total capital, clamped to a band around the fair
premium. The fair premium equals expected losses per unit insured value per
step (event rate times mean damage fraction), so price = fair premium means
premiums offset claims on average.

The rest of the economy (customers, shareholders, institutional investors)
is one quasi-agent with a large but finite endowment. Every monetary
transfer in the simulation debits one account and credits another, which
makes total money a conserved quantity and mis-booked flows loud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import TruncatedPareto


def fair_premium_rate(event_rate: float, sigma: float) -> float:
    """Expected loss per unit insured value per step: lambda * E[damage]."""
    return event_rate * TruncatedPareto(sigma).mean()


@dataclass(frozen=True)
class PremiumModel:
    """Capital-linear premium with hard bounds.

    rate(K) = clip(fair * max_factor - sensitivity * K / normalizer,
                   fair * min_factor, fair * max_factor)

    The insurance market prices on insurer capital, the reinsurance market
    on reinsurer capital with a steeper sensitivity.
    """

    fair_premium: float
    min_factor: float
    max_factor: float
    sensitivity: float
    normalizer: float = 1.0

    def rate(self, total_capital: float) -> float:
        raw = self.fair_premium * self.max_factor - self.sensitivity * total_capital / self.normalizer
        return float(
            np.clip(raw, self.fair_premium * self.min_factor, self.fair_premium * self.max_factor)
        )

    @property
    def floor(self) -> float:
        return self.fair_premium * self.min_factor

    @property
    def ceiling(self) -> float:
        return self.fair_premium * self.max_factor


@dataclass
class EconomyLedger:
    """The rest-of-economy quasi-agent: balance plus per-category flow totals.

    Categories with positive totals on `inflows` moved money into the
    economy (claims, dividends, coupons, returned principal, wind-downs);
    `outflows` track money leaving it (premiums, interest, entry capital,
    escrowed principal).
    """

    balance: float
    inflows: dict[str, float] = field(default_factory=dict)
    outflows: dict[str, float] = field(default_factory=dict)

    def pay_out(self, amount: float, category: str) -> None:
        """Economy pays `amount` to the insurance sector."""
        if amount < 0:
            raise ValueError(f"transfer amounts must be >= 0, got {amount}")
        self.balance -= amount
        self.outflows[category] = self.outflows.get(category, 0.0) + amount
        if self.balance < 0:
            raise RuntimeError("economy endowment exhausted; raise economy_endowment")

    def receive(self, amount: float, category: str) -> None:
        if amount < 0:
            raise ValueError(f"transfer amounts must be >= 0, got {amount}")
        self.balance += amount
        self.inflows[category] = self.inflows.get(category, 0.0) + amount


def ledger_transfer(ledger: EconomyLedger, firm_capital: dict, firm_id: int,
                    amount: float, category: str, to_firm: bool) -> None:
    """Atomic double-entry transfer between the economy and one firm."""
    if amount < 0:
        raise ValueError(f"transfer amounts must be >= 0, got {amount}")
    if amount == 0:
        return
    if to_firm:
        ledger.pay_out(amount, category)
        firm_capital[firm_id] += amount
    else:
        firm_capital[firm_id] -= amount
        ledger.receive(amount, category)
