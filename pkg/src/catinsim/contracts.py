"""Instruments and settlement: policies, excess-of-loss treaties, CAT bonds.

A policy claim for per-risk damage fraction d is ``min(excess, d*value) -
deductible`` when the damaged value exceeds the deductible, else zero. An
excess-of-loss layer on a gross regional loss pays
``min(max(loss - attachment, 0), limit - attachment)``.

``settle_step`` runs the recovery waterfall for all events due in one step:
gross customer claims per insurer, treaty and CAT-bond recoveries on each
insurer's gross regional loss, then insolvency resolution. Reinsurers are
resolved first so a defaulting reinsurer's pro-rata haircut propagates to
its cedents within the same step; insurers that still cannot cover their
customer claims pay out pro-rata and exit. Claims the defaulting party
cannot pay are recorded as non-recovered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TERM = 12  # contract length in steps, insurance and reinsurance alike

# Payee sentinel for customer-side claims (customers live in the economy ledger).
CUSTOMERS = -1


def policy_claim(d, value, deductible, excess):
    """Claim paid on a policy for damage fraction d (scalar or array)."""
    d = np.asarray(d, dtype=float)
    damaged = d * value
    claim = np.where(damaged > deductible, np.minimum(excess, damaged) - deductible, 0.0)
    return float(claim) if claim.ndim == 0 else claim


def layer_recovery(gross_loss, attachment, limit):
    """Excess-of-loss payout on a gross loss for the layer [attachment, limit]."""
    gross_loss = np.asarray(gross_loss, dtype=float)
    rec = np.clip(gross_loss - attachment, 0.0, None)
    rec = np.minimum(rec, np.asarray(limit) - np.asarray(attachment))
    return float(rec) if rec.ndim == 0 else rec


@dataclass
class InsurancePolicy:
    insurer: int
    risk_id: int
    region: int
    value: float
    deductible: float
    excess: float
    premium_rate: float
    start: int
    term: int = TERM

    def claim(self, d: float) -> float:
        return policy_claim(d, self.value, self.deductible, self.excess)


@dataclass
class ReinsuranceTreaty:
    id: int
    cedent: int
    reinsurer: int
    region: int
    attachment: float
    limit: float
    premium_rate: float
    start: int
    term: int = TERM
    # loss-equivalent exposure of the layer: expected layer loss divided by
    # expected full loss, so rate x base is fair exactly when the rate equals
    # the fair premium. Defaults to the layer width.
    premium_base: float | None = None

    def __post_init__(self) -> None:
        if not 0 < self.attachment < self.limit:
            raise ValueError(
                f"treaty layer requires 0 < attachment < limit, got "
                f"[{self.attachment}, {self.limit}]"
            )
        if self.premium_base is None:
            self.premium_base = self.width

    @property
    def width(self) -> float:
        return self.limit - self.attachment

    @property
    def step_premium(self) -> float:
        return self.premium_rate * self.premium_base

    def recovery(self, gross_regional_loss: float) -> float:
        return layer_recovery(gross_regional_loss, self.attachment, self.limit)


@dataclass
class CatBond:
    id: int
    issuer: int
    region: int
    attachment: float
    limit: float
    coupon_rate: float
    start: int
    term: int = TERM
    coupon_base: float | None = None  # loss-equivalent exposure, like treaties
    principal: float = field(init=False)
    remaining_principal: float = field(init=False)

    def __post_init__(self) -> None:
        if not 0 < self.attachment < self.limit:
            raise ValueError(
                f"bond layer requires 0 < attachment < limit, got "
                f"[{self.attachment}, {self.limit}]"
            )
        self.principal = self.limit - self.attachment
        self.remaining_principal = self.principal
        if self.coupon_base is None:
            self.coupon_base = self.principal

    @property
    def step_coupon(self) -> float:
        return self.coupon_rate * self.coupon_base

    def recovery(self, gross_regional_loss: float) -> float:
        """Escrow pays the layer while liquid: capped by remaining principal."""
        return min(
            layer_recovery(gross_regional_loss, self.attachment, self.limit),
            self.remaining_principal,
        )

    def draw(self, amount: float) -> None:
        self.remaining_principal -= amount
        if self.remaining_principal < -1e-9:
            raise RuntimeError("CAT bond escrow overdrawn")
        self.remaining_principal = max(self.remaining_principal, 0.0)


@dataclass
class ClaimRecord:
    step: int
    payer: int
    payee: int  # firm id, or CUSTOMERS
    amount_due: float
    amount_paid: float

    @property
    def shortfall(self) -> float:
        return self.amount_due - self.amount_paid


@dataclass
class SettlementResult:
    capital_delta: dict[int, float]
    bankruptcies: list[int]
    claim_records: list[ClaimRecord]
    customer_payout: float  # cash leaving firms toward policyholders
    bond_payouts: dict[int, float]  # bond id -> escrow drawn
    non_recovered_count: int
    non_recovered_amount: float


_ABS_TOL = 1e-9


def settle_step(
    step: int,
    gross_by_insurer: dict[int, dict[int, float]],
    claimant_counts: dict[int, int],
    covers: dict[tuple[int, int], ReinsuranceTreaty | CatBond],
    capital: dict[int, float],
) -> SettlementResult:
    """Joint waterfall for every event due this step.

    gross_by_insurer maps insurer -> region -> gross customer claims.
    claimant_counts maps insurer -> number of claiming policies.
    covers maps (firm, region) -> active outward treaty or CAT bond.
    capital is read-only; changes come back in the result.
    """
    records: list[ClaimRecord] = []
    bankrupt: list[int] = []
    delta: dict[int, float] = {}
    bond_payouts: dict[int, float] = {}
    nonrec_count = 0
    nonrec_amount = 0.0

    # Recoveries owed per reinsurer, and per cedent, on gross regional losses.
    treaty_due: dict[int, list[tuple[int, float]]] = {}  # reinsurer -> [(cedent, amt)]
    recovery_in: dict[int, float] = {}
    for insurer, by_region in gross_by_insurer.items():
        for region, gross in by_region.items():
            cover = covers.get((insurer, region))
            if cover is None or gross <= 0:
                continue
            if isinstance(cover, ReinsuranceTreaty):
                amt = cover.recovery(gross)
                if amt > 0:
                    treaty_due.setdefault(cover.reinsurer, []).append((insurer, amt))
            else:
                amt = cover.recovery(gross)
                if amt > 0:
                    cover.draw(amt)
                    bond_payouts[cover.id] = bond_payouts.get(cover.id, 0.0) + amt
                    recovery_in[insurer] = recovery_in.get(insurer, 0.0) + amt

    # Reinsurers first: a default haircuts every cedent pro-rata.
    for reinsurer, dues in sorted(treaty_due.items()):
        total_due = sum(amt for _, amt in dues)
        cash = capital[reinsurer]
        if total_due > cash + _ABS_TOL:
            ratio = cash / total_due if total_due > 0 else 0.0
            for cedent, amt in dues:
                paid = amt * ratio
                records.append(ClaimRecord(step, reinsurer, cedent, amt, paid))
                recovery_in[cedent] = recovery_in.get(cedent, 0.0) + paid
                nonrec_count += 1
                nonrec_amount += amt - paid
            delta[reinsurer] = delta.get(reinsurer, 0.0) - cash
            bankrupt.append(reinsurer)
        else:
            for cedent, amt in dues:
                records.append(ClaimRecord(step, reinsurer, cedent, amt, amt))
                recovery_in[cedent] = recovery_in.get(cedent, 0.0) + amt
            delta[reinsurer] = delta.get(reinsurer, 0.0) - total_due

    # Insurers settle customer claims net of whatever recoveries arrived.
    customer_payout = 0.0
    for insurer, by_region in sorted(gross_by_insurer.items()):
        gross_total = sum(by_region.values())
        if gross_total <= 0:
            continue
        resources = capital[insurer] + recovery_in.get(insurer, 0.0)
        if gross_total > resources + _ABS_TOL:
            records.append(ClaimRecord(step, insurer, CUSTOMERS, gross_total, resources))
            customer_payout += resources
            nonrec_count += claimant_counts.get(insurer, 0)
            nonrec_amount += gross_total - resources
            delta[insurer] = delta.get(insurer, 0.0) - capital[insurer]
            bankrupt.append(insurer)
        else:
            records.append(ClaimRecord(step, insurer, CUSTOMERS, gross_total, gross_total))
            customer_payout += gross_total
            delta[insurer] = (
                delta.get(insurer, 0.0) + recovery_in.get(insurer, 0.0) - gross_total
            )

    return SettlementResult(
        capital_delta=delta,
        bankruptcies=bankrupt,
        claim_records=records,
        customer_payout=customer_payout,
        bond_payouts=bond_payouts,
        non_recovered_count=nonrec_count,
        non_recovered_amount=nonrec_amount,
    )


def settle_event(
    step: int,
    gross_by_insurer_region: dict[int, float],
    region: int,
    claimant_counts: dict[int, int],
    covers: dict[tuple[int, int], ReinsuranceTreaty | CatBond],
    capital: dict[int, float],
) -> SettlementResult:
    """Settle a single event: the one-event view of ``settle_step``."""
    gross = {ins: {region: g} for ins, g in gross_by_insurer_region.items()}
    return settle_step(step, gross, claimant_counts, covers, capital)
