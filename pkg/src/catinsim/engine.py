"""The per-step scheduler tying perils, firms, contracts and the market together.

Each step runs a fixed phase order:

1. interest accrual; policy premium, treaty premium and coupon collection
2. settlement of catastrophes due this step, including insolvency resolution
3. dividends on positive step profit
4. contract expiry and renewal (policies, treaties, maturing CAT bonds)
5. exits (under-employment), then stochastic entry
6. premium update from the fresh capital snapshot
7. customer matching, reinsurance matching, CAT bond issuance
8. metrics appended; money-conservation trap

Events settle before dividends so catastrophe losses suppress that step's
dividend; premiums update before matching so new contracts price on current
capital. Renewals (phase 4) therefore price at the previous step's rate.

Firm-level hot state lives in preallocated numpy arrays indexed by firm id;
policies are flat per-risk arrays. Treaties and CAT bonds are real objects
with a compact array cache for the vectorized VaR math.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import contracts, firms as firms_mod, riskmodels
from .config import RunConfig
from .contracts import CatBond, ReinsuranceTreaty
from .distributions import TruncatedPareto
from .firms import EntryConfig, INSURER, REINSURER
from .market import EconomyLedger, PremiumModel, fair_premium_rate
from .perils import EventProfile, build_event_profile, region_of_risk
from .records import RunRecord
from .rng import (
    CUSTOMER_MATCHING,
    ENTRY,
    MODEL_ASSIGNMENT,
    REINSURANCE_MATCHING,
    substream,
)

# cover_kind codes in the firm arrays
NO_COVER = 0
TREATY = 1
BOND = 2

_CONSERVATION_TRAP = 1e-9  # relative per-step drift that trips the bug trap


class ConservationError(RuntimeError):
    """Money appeared from nothing or vanished into nothing."""


@dataclass
class _TreatyBook:
    """Active treaties plus a lazily rebuilt array view for vector math."""

    treaties: dict[int, ReinsuranceTreaty] = field(default_factory=dict)
    _dirty: bool = True
    _arrays: tuple | None = None

    def add(self, treaty: ReinsuranceTreaty) -> None:
        self.treaties[treaty.id] = treaty
        self._dirty = True

    def remove(self, treaty_id: int) -> ReinsuranceTreaty | None:
        t = self.treaties.pop(treaty_id, None)
        if t is not None:
            self._dirty = True
        return t

    def arrays(self):
        """(ids, cedent, reinsurer, region, attachment, limit, width, step_premium)."""
        if self._dirty:
            ts = list(self.treaties.values())
            self._arrays = (
                np.array([t.id for t in ts], dtype=np.int64),
                np.array([t.cedent for t in ts], dtype=np.int64),
                np.array([t.reinsurer for t in ts], dtype=np.int64),
                np.array([t.region for t in ts], dtype=np.int64),
                np.array([t.attachment for t in ts], dtype=np.float64),
                np.array([t.limit for t in ts], dtype=np.float64),
                np.array([t.width for t in ts], dtype=np.float64),
                np.array([t.step_premium for t in ts], dtype=np.float64),
            )
            self._dirty = False
        return self._arrays

    def __len__(self) -> int:
        return len(self.treaties)


class World:
    """Mutable state of one replication under one diversity setting."""

    def __init__(self, config: RunConfig, profile: EventProfile, replication: int):
        cfg = config.validate()
        if profile.n_regions != cfg.n_regions or profile.t_max < cfg.t_max:
            raise ValueError("event profile does not match the configured horizon")
        self.cfg = cfg
        self.profile = profile
        self.replication = replication
        self.t = 0

        n = cfg.n_regions
        self.n = n
        self.damage_dist = TruncatedPareto(cfg.tail_exponent)
        self.mean_damage = self.damage_dist.mean()
        self.q = riskmodels.event_quantile(cfg.var_exceedance, cfg.tail_exponent)
        self.models = riskmodels.build_model_set(
            cfg.diversity, n, cfg.risk_model_inaccuracy, cfg.var_exceedance
        )
        self.fair_premium = fair_premium_rate(cfg.event_rate, cfg.tail_exponent)
        self.premium_model_ins = PremiumModel(
            self.fair_premium, cfg.premium_min_factor, cfg.premium_max_factor,
            cfg.sensitivity_insurance, cfg.premium_capital_normalizer,
        )
        self.premium_model_re = PremiumModel(
            self.fair_premium, cfg.premium_min_factor, cfg.premium_max_factor,
            cfg.sensitivity_reinsurance, cfg.premium_capital_normalizer,
        )

        # Risks: flat arrays over the H insurable risks.
        h = cfg.n_risks
        self.region_of = region_of_risk(h, n)
        self.region_risks = [np.nonzero(self.region_of == r)[0] for r in range(n)]
        self.r_insurer = np.full(h, -1, dtype=np.int64)
        self.r_premium = np.zeros(h)  # monetary per step
        self.r_expiry = np.full(h, -1, dtype=np.int64)
        self.r_hold = np.full(h, -1, dtype=np.int64)  # step of last rejected renewal

        # Firms: preallocated arrays; ids are slots, never reused.
        cap = cfg.initial_insurers + cfg.initial_reinsurers + 2 * cfg.t_max + 8
        self.capital = np.zeros(cap)
        self.kind = np.zeros(cap, dtype=np.int8)
        self.alive = np.zeros(cap, dtype=bool)
        self.status = np.full(cap, firms_mod.ACTIVE, dtype=np.int8)
        self.model_of = np.zeros(cap, dtype=np.int16)
        self.percep = np.ones((cap, n))
        self.exposure = np.zeros((cap, n))
        self.clock = np.zeros(cap, dtype=np.int32)
        self.cover_kind = np.zeros((cap, n), dtype=np.int8)
        self.cover_attach = np.zeros((cap, n))
        self.cover_width = np.zeros((cap, n))
        self.seek_fail = np.zeros((cap, n), dtype=np.int32)
        self.step_profit = np.zeros(cap)
        self.entered = np.zeros(cap, dtype=np.int32)
        self.n_firms = 0

        # Contracts
        self.treaty_book = _TreatyBook()
        self.bonds: dict[int, CatBond] = {}
        self.cover_ref: dict[tuple[int, int], tuple[str, int]] = {}
        self.expiry_schedule: dict[int, list[tuple[str, int]]] = {}
        self._next_contract_id = 0

        # Money
        self.economy = EconomyLedger(cfg.economy_endowment)
        self.total_money_0 = cfg.economy_endowment

        # Behaviour streams (peril streams are baked into the profile).
        seed, nu = cfg.master_seed, cfg.diversity
        self.entry_rng = substream(seed, replication, nu, ENTRY)
        self.model_rng = substream(seed, replication, nu, MODEL_ASSIGNMENT)
        self.match_rng = substream(seed, replication, nu, CUSTOMER_MATCHING)
        self.reins_rng = substream(seed, replication, nu, REINSURANCE_MATCHING)

        self.entry_config = EntryConfig(
            cfg.entry_rate_insurer, cfg.entry_rate_reinsurer,
            cfg.initial_capital_insurer, cfg.initial_capital_reinsurer,
            cfg.initial_insurers, cfg.initial_reinsurers,
        )
        for firm in firms_mod.founding_firms(
            self.entry_config, self.models, n
        ):
            if firm.kind == REINSURER and not cfg.reinsurance_enabled:
                continue
            self._register_firm(firm.kind, firm.risk_model.id, firm.capital)

        self.events_by_step = profile.by_step()
        self.record = RunRecord.allocate(cfg.diversity, replication, cfg.t_max, cfg.burn_in)

        self.premium_ins = self.premium_model_ins.rate(self._sector_capital(INSURER))
        self.premium_re = self.premium_model_re.rate(self._sector_capital(REINSURER))

        # step scratch
        self._entries_this_step = 0
        self._defaults_this_step = 0
        self._exits_this_step = 0
        self._nonrec_count = 0
        self._nonrec_amount = 0.0

    # ------------------------------------------------------------------ setup

    def _register_firm(self, kind: int, model_id: int, capital: float) -> int:
        fid = self.n_firms
        self.n_firms += 1
        model = self.models[model_id]
        self.capital[fid] = capital
        self.kind[fid] = kind
        self.alive[fid] = True
        self.status[fid] = firms_mod.ACTIVE
        self.model_of[fid] = model_id
        self.percep[fid] = model.factors(self.n)
        self.exposure[fid] = 0.0
        self.clock[fid] = 0
        self.cover_kind[fid] = NO_COVER
        self.seek_fail[fid] = 0
        self.entered[fid] = self.t
        self.economy.pay_out(capital, "entry_capital")
        return fid

    # -------------------------------------------------------------- VaR state

    def var_vectors(self) -> np.ndarray:
        """(n_firms, n) perceived per-region VaR for every live firm.

        Insurers: truncated-Pareto event quantile times regional exposure,
        net of the active outward layer, distorted by the firm's risk model.
        Reinsurers: sum of inward treaty layer recoveries at each cedent's
        quantile loss, distorted likewise.
        """
        nf = self.n_firms
        gross = self.q * self.exposure[:nf]
        # min/max net-of-layer form: exactly gross when uncovered (attach =
        # width = 0) and exactly the attachment while inside the layer
        net = np.minimum(gross, self.cover_attach[:nf]) + np.maximum(
            gross - (self.cover_attach[:nf] + self.cover_width[:nf]), 0.0
        )
        v = net * self.percep[:nf]
        is_re = self.kind[:nf] == REINSURER
        v[is_re] = 0.0
        if len(self.treaty_book):
            _, ced, rein, reg, att, _, width, _ = self.treaty_book.arrays()
            g = self.q * self.exposure[ced, reg]
            inward = np.clip(g - att, 0.0, width)
            acc = np.zeros((nf, self.n))
            np.add.at(acc, (rein, reg), inward)
            v[is_re] = (acc * self.percep[:nf])[is_re]
        v[~self.alive[:nf]] = 0.0
        return v

    def gross_var_vectors(self) -> np.ndarray:
        """Perceived per-region VaR gross of outward covers.

        This is the business-volume measure behind the employment share: a
        hedged book still employs the capital that underwrote it. The
        underwriting capacity rule keeps using the net vectors.
        """
        nf = self.n_firms
        v = (self.q * self.exposure[:nf]) * self.percep[:nf]
        is_re = self.kind[:nf] == REINSURER
        v[is_re] = 0.0
        if len(self.treaty_book):
            _, ced, rein, reg, att, _, width, _ = self.treaty_book.arrays()
            g = self.q * self.exposure[ced, reg]
            inward = np.clip(g - att, 0.0, width)
            acc = np.zeros((nf, self.n))
            np.add.at(acc, (rein, reg), inward)
            v[is_re] = (acc * self.percep[:nf])[is_re]
        v[~self.alive[:nf]] = 0.0
        return v

    def _treaty_var_contribution(self, treaty: ReinsuranceTreaty) -> float:
        """Perceived VaR the treaty currently adds to its reinsurer's region."""
        gross = self.q * float(self.exposure[treaty.cedent, treaty.region])
        rec = contracts.layer_recovery(gross, treaty.attachment, treaty.limit)
        return rec * float(self.percep[treaty.reinsurer, treaty.region])

    def _sector_capital(self, kind: int) -> float:
        nf = self.n_firms
        mask = self.alive[:nf] & (self.kind[:nf] == kind)
        return float(self.capital[:nf][mask].sum())

    # ------------------------------------------------------------------- step

    def step(self) -> None:
        t = self.t
        if t >= self.cfg.t_max:
            raise RuntimeError("stepping past configured horizon")
        firms_at_start = int(self.alive[: self.n_firms].sum())
        self._entries_this_step = 0
        self._defaults_this_step = 0
        self._exits_this_step = 0
        self._nonrec_count = 0
        self._nonrec_amount = 0.0
        self.step_profit[: self.n_firms] = 0.0

        self._phase_collect()
        self._phase_settle()
        self._phase_dividends()
        self._phase_expiry_renewal()
        self._phase_exit_entry()
        self._phase_premium_update()
        self._phase_matching()
        self._phase_metrics(firms_at_start)
        self.t += 1

    # phase 1 -----------------------------------------------------------------

    def _phase_collect(self) -> None:
        nf = self.n_firms
        live = self.alive[:nf]

        interest = firms_mod.accrue_interest(self.capital[:nf], self.cfg.interest_rate)
        interest[~live] = 0.0
        total_interest = float(interest.sum())
        if total_interest > 0:
            self.economy.pay_out(total_interest, "interest")
            self.capital[:nf] += interest
            self.step_profit[:nf] += interest

        insured = self.r_insurer >= 0
        if insured.any():
            income = np.bincount(
                self.r_insurer[insured], weights=self.r_premium[insured], minlength=nf
            )[:nf]
            total = float(income.sum())
            self.economy.pay_out(total, "premiums")
            self.capital[:nf] += income
            self.step_profit[:nf] += income

        # treaty premiums and coupons; firms that cannot pay lose their covers
        self._collect_cover_payments()

    def _cover_payments_due(self) -> np.ndarray:
        due = np.zeros(self.n_firms)
        if len(self.treaty_book):
            _, ced, _, _, _, _, _, premium = self.treaty_book.arrays()
            np.add.at(due, ced, premium)
        for bond in self.bonds.values():
            due[bond.issuer] += bond.step_coupon
        return due

    def _collect_cover_payments(self) -> None:
        nf = self.n_firms
        due = self._cover_payments_due()
        broke = np.nonzero(due > self.capital[:nf] + 1e-9)[0]
        for fid in broke:
            # unaffordable cover payments: covers lapse unpaid this step
            for region in range(self.n):
                self._terminate_cover(int(fid), region, return_principal=True)

        if len(self.treaty_book):
            _, ced, rein, _, _, _, _, premium = self.treaty_book.arrays()
            paid = np.bincount(ced, weights=premium, minlength=nf)[:nf]
            received = np.bincount(rein, weights=premium, minlength=nf)[:nf]
            self.capital[:nf] += received - paid
            self.step_profit[:nf] += received - paid
        coupon_total = 0.0
        for bond in self.bonds.values():
            coupon = bond.step_coupon
            self.capital[bond.issuer] -= coupon
            self.step_profit[bond.issuer] -= coupon
            coupon_total += coupon
        if coupon_total > 0:
            self.economy.receive(coupon_total, "coupons")

    # phase 2 -----------------------------------------------------------------

    def _phase_settle(self) -> None:
        events = self.events_by_step.get(self.t, [])
        if not events:
            return
        gross: dict[int, dict[int, float]] = {}
        claimants: dict[int, int] = {}
        for event in events:
            rids = self.region_risks[event.region]
            d = event.allocate(len(rids))
            claims = contracts.policy_claim(
                d,
                self.cfg.risk_value,
                self.cfg.deductible_fraction * self.cfg.risk_value,
                self.cfg.excess_fraction * self.cfg.risk_value,
            )
            holders = self.r_insurer[rids]
            insured = holders >= 0
            if not insured.any():
                continue
            per_firm = np.bincount(holders[insured], weights=claims[insured], minlength=self.n_firms)
            counts = np.bincount(
                holders[insured & (claims > 0)], minlength=self.n_firms
            ) if (insured & (claims > 0)).any() else np.zeros(self.n_firms, dtype=np.int64)
            for fid in np.nonzero(per_firm > 0)[0]:
                gross.setdefault(int(fid), {})[event.region] = float(per_firm[fid])
                claimants[int(fid)] = claimants.get(int(fid), 0) + int(counts[fid])
        if not gross:
            return

        covers = {}
        involved = set(gross)
        for (fid, region), (ckind, cid) in self.cover_ref.items():
            if fid in gross and region in gross[fid]:
                obj = (
                    self.treaty_book.treaties[cid] if ckind == "treaty" else self.bonds[cid]
                )
                covers[(fid, region)] = obj
                if ckind == "treaty":
                    involved.add(obj.reinsurer)
        capital_view = {fid: float(self.capital[fid]) for fid in involved}

        result = contracts.settle_step(self.t, gross, claimants, covers, capital_view)

        for fid, delta in result.capital_delta.items():
            self.capital[fid] += delta
            self.step_profit[fid] += delta
        if result.customer_payout > 0:
            self.economy.receive(result.customer_payout, "claims")
        for bond_id, amount in result.bond_payouts.items():
            # escrow already drawn on the bond object; resize the issuer's cover
            bond = self.bonds[bond_id]
            self.cover_width[bond.issuer, bond.region] = bond.remaining_principal
        for fid in result.bankruptcies:
            self._wind_down(fid, firms_mod.EXITED_BANKRUPT)
        self._defaults_this_step = len(result.bankruptcies)
        self._nonrec_count = result.non_recovered_count
        self._nonrec_amount = result.non_recovered_amount

    # phase 3 -----------------------------------------------------------------

    def _phase_dividends(self) -> None:
        nf = self.n_firms
        live = self.alive[:nf]
        dividends = firms_mod.dividend_amount(self.step_profit[:nf], self.cfg.dividend_share)
        dividends = np.where(live, dividends, 0.0)
        total = float(dividends.sum())
        if total > 0:
            self.capital[:nf] -= dividends
            self.economy.receive(total, "dividends")

    # phase 4 -----------------------------------------------------------------

    def _phase_expiry_renewal(self) -> None:
        t = self.t
        expiring = np.nonzero((self.r_insurer >= 0) & (self.r_expiry == t))[0]
        if len(expiring):
            incumbents = self.r_insurer[expiring].copy()
            np.add.at(
                self.exposure,
                (incumbents, self.region_of[expiring]),
                -self.cfg.risk_value,
            )
            self.r_insurer[expiring] = -1
            accepted = self._place_policies(expiring, incumbents, self.premium_ins)
            rejected = expiring[~accepted]
            self.r_hold[rejected] = t  # no second approach this step

        due = self.expiry_schedule.pop(t, [])
        if due:
            # shared VaR snapshot for the renewal decisions, updated in place
            # as renewals form
            self._reins_v = self.var_vectors()
            for ckind, cid in due:
                if ckind == "treaty":
                    treaty = self.treaty_book.treaties.get(cid)
                    if treaty is None:
                        continue
                    contribution = self._treaty_var_contribution(treaty)
                    self._terminate_treaty(treaty)
                    self._reins_v[treaty.reinsurer, treaty.region] -= contribution
                    self._attempt_treaty_renewal(treaty)
                else:
                    bond = self.bonds.get(cid)
                    if bond is None:
                        continue
                    self._dissolve_bond(bond)
            del self._reins_v

    def _attempt_treaty_renewal(self, old: ReinsuranceTreaty) -> None:
        cedent, region, reinsurer = old.cedent, old.region, old.reinsurer
        if not (self.alive[cedent] and self.alive[reinsurer]):
            return
        exposure = float(self.exposure[cedent, region])
        if exposure <= 0:
            return
        # renewal is only wanted while the cedent actually needs the capacity
        gross_combined = float(
            (self.q * self.exposure[cedent] * self.percep[cedent]).max()
        )
        employed = firms_mod.employed_share(
            float(self.capital[cedent]), self.cfg.margin_of_safety, gross_combined
        )
        if employed < self.cfg.employment_threshold_insurer:
            return
        if self._try_form_treaty(cedent, region, reinsurer, exposure):
            return
        self.seek_fail[cedent, region] += 1

    # phase 5 -----------------------------------------------------------------

    def _phase_exit_entry(self) -> None:
        nf = self.n_firms
        cfg = self.cfg
        live = self.alive[:nf]
        if live.any():
            combined = self.gross_var_vectors().max(axis=1)
            employed = firms_mod.employed_share(
                self.capital[:nf], cfg.margin_of_safety, combined
            )
            gamma = np.where(
                self.kind[:nf] == INSURER,
                cfg.employment_threshold_insurer,
                cfg.employment_threshold_reinsurer,
            )
            tau = np.where(
                self.kind[:nf] == INSURER, cfg.exit_time_insurer, cfg.exit_time_reinsurer
            )
            new_clock = firms_mod.update_exit_clock(self.clock[:nf], employed, gamma)
            new_clock[~live] = 0
            self.clock[:nf] = new_clock
            for fid in np.nonzero(live & firms_mod.should_exit(new_clock, tau))[0]:
                residual = float(self.capital[fid])
                if residual > 0:
                    self.economy.receive(residual, "wind_down")
                    self.capital[fid] = 0.0
                self._wind_down(int(fid), firms_mod.EXITED_UNDEREMPLOYED)
                self._exits_this_step += 1

        entrants = firms_mod.process_entry(
            self.entry_config, self.models, self.n, self.t,
            next_id=self.n_firms,
            entry_rng=self.entry_rng,
            model_rng=self.model_rng,
            reinsurance_enabled=cfg.reinsurance_enabled,
        )
        for firm in entrants:
            self._register_firm(firm.kind, firm.risk_model.id, firm.capital)
        self._entries_this_step = len(entrants)

    # phase 6 -----------------------------------------------------------------

    def _phase_premium_update(self) -> None:
        self.premium_ins = self.premium_model_ins.rate(self._sector_capital(INSURER))
        self.premium_re = self.premium_model_re.rate(self._sector_capital(REINSURER))

    # phase 7 -----------------------------------------------------------------

    @staticmethod
    def _capital_weights(capital: np.ndarray) -> np.ndarray:
        """Approach probabilities proportional to capital (uniform fallback)."""
        weights = np.clip(capital, 0.0, None)
        total = weights.sum()
        if total <= 0:
            return np.full(len(capital), 1.0 / len(capital))
        return weights / total

    def _phase_matching(self) -> None:
        t = self.t
        nf = self.n_firms
        pool = np.nonzero((self.r_insurer < 0) & (self.r_hold != t))[0]
        active_insurers = np.nonzero(self.alive[:nf] & (self.kind[:nf] == INSURER))[0]
        if len(pool) and len(active_insurers):
            # customers gravitate toward capitalized insurers; this size-biased
            # flow is what lets winners compound into a long-tailed size
            # distribution
            weights = self._capital_weights(self.capital[active_insurers])
            choice = self.match_rng.choice(len(active_insurers), size=len(pool), p=weights)
            targets = active_insurers[choice]
            self._place_policies(pool, targets, self.premium_ins)

        self._match_reinsurance()

    def _net_var_column(self, fids: np.ndarray, exposure_col: np.ndarray, region: int) -> np.ndarray:
        """Perceived VaR in one region for the given insurers at hypothetical exposure."""
        gross = self.q * exposure_col
        attach = self.cover_attach[fids, region]
        net = np.minimum(gross, attach) + np.maximum(
            gross - (attach + self.cover_width[fids, region]), 0.0
        )
        return net * self.percep[fids, region]

    def _place_policies(
        self, risk_ids: np.ndarray, targets: np.ndarray, premium_rate: float
    ) -> np.ndarray:
        """Offer each risk to its target insurer; returns acceptance mask.

        Candidates are processed region by region in index order, each
        (insurer, region) batch through the prefix-acceptance rule, risks in
        id order within a batch. The underwriting math runs on the compact
        set of firms that actually received candidates.
        """
        cfg = self.cfg
        accepted = np.zeros(len(risk_ids), dtype=bool)
        nf = self.n_firms
        eligible = self.alive[:nf] & (self.kind[:nf] == INSURER)
        fids = np.unique(targets)
        fids = fids[eligible[fids]]
        if not len(fids):
            return accepted
        slot_of = np.full(nf, -1, dtype=np.int64)
        slot_of[fids] = np.arange(len(fids))
        v = self.var_vectors()[fids]
        capital = self.capital[fids]

        for region in range(self.n):
            sel = np.nonzero(self.region_of[risk_ids] == region)[0]
            if not len(sel):
                continue
            rids = risk_ids[sel]
            tg = targets[sel]
            ok = slot_of[tg] >= 0
            rids, tg, sel = rids[ok], tg[ok], sel[ok]
            if not len(rids):
                continue
            slots = slot_of[tg]
            order = np.argsort(slots, kind="stable")
            rids, tg, sel, slots = rids[order], tg[order], sel[order], slots[order]
            batch = np.bincount(slots, minlength=len(fids))

            counts = riskmodels.accept_counts(
                v,
                region,
                self.exposure[fids, region].copy(),
                cfg.risk_value,
                self.q,
                self.cover_attach[fids, region],
                self.cover_width[fids, region],
                self.percep[fids, region],
                batch,
                capital,
                cfg.margin_of_safety,
                cfg.eta_balance,
            )

            # rank of each candidate within its insurer's batch, in id order
            group_start = np.searchsorted(slots, slots, side="left")
            rank = np.arange(len(slots)) - group_start
            take = rank < counts[slots]
            if take.any():
                chosen = rids[take]
                owners = tg[take]
                self.r_insurer[chosen] = owners
                self.r_premium[chosen] = premium_rate * cfg.risk_value
                self.r_expiry[chosen] = self.t + cfg.contract_term
                np.add.at(self.exposure, (owners, region), cfg.risk_value)
                accepted[sel[take]] = True
            v[:, region] = self._net_var_column(fids, self.exposure[fids, region], region)
        return accepted

    def _match_reinsurance(self) -> None:
        nf = self.n_firms
        cfg = self.cfg
        # Cover is sought to increase capacity: only firms whose capital is
        # substantially committed (employed beyond their exit threshold) hedge.
        v = self.var_vectors()
        employed = firms_mod.employed_share(
            self.capital[:nf], cfg.margin_of_safety, self.gross_var_vectors().max(axis=1)
        )
        seekers = []
        for fid in np.nonzero(
            self.alive[:nf]
            & (self.kind[:nf] == INSURER)
            & (employed >= cfg.employment_threshold_insurer)
        )[0]:
            for region in range(self.n):
                if (
                    self.exposure[fid, region] > 0
                    and self.cover_kind[fid, region] == NO_COVER
                ):
                    seekers.append((int(fid), region))
        if not seekers:
            return
        reinsurers = np.nonzero(self.alive[:nf] & (self.kind[:nf] == REINSURER))[0]
        self._reins_v = v  # updated incrementally on treaty formation
        for fid, region in seekers:
            exposure = float(self.exposure[fid, region])
            if cfg.catbonds_enabled and self.seek_fail[fid, region] >= cfg.catbond_trigger_failures:
                self._issue_cat_bond(fid, region, exposure)
                continue
            if not len(reinsurers):
                self.seek_fail[fid, region] += 1
                continue
            weights = self._capital_weights(self.capital[reinsurers])
            reinsurer = int(reinsurers[self.reins_rng.choice(len(reinsurers), p=weights)])
            if self._try_form_treaty(fid, region, reinsurer, exposure):
                self.seek_fail[fid, region] = 0
            else:
                self.seek_fail[fid, region] += 1
        del self._reins_v

    def _draw_attachment(self, exposure: float) -> tuple[float, float]:
        cfg = self.cfg
        frac = self.reins_rng.uniform(cfg.attachment_fraction_min, cfg.attachment_fraction_max)
        return frac * exposure, cfg.treaty_limit_fraction * exposure

    def _layer_base(self, exposure: float, attachment: float, limit: float) -> float:
        """Loss-equivalent exposure of a layer: expected layer loss over
        expected full loss, in value units."""
        frac = self.damage_dist.expected_layer_fraction(
            attachment / exposure, limit / exposure
        )
        return exposure * frac / self.mean_damage

    def _try_form_treaty(
        self, cedent: int, region: int, reinsurer: int, exposure: float
    ) -> bool:
        """Cedent proposes a layer; the reinsurer applies its underwriting rules."""
        cfg = self.cfg
        attachment, limit = self._draw_attachment(exposure)
        if not attachment < limit:
            return False
        increment = contracts.layer_recovery(self.q * exposure, attachment, limit)
        increment *= self.percep[reinsurer, region]
        v = getattr(self, "_reins_v", None)
        if v is None:
            v = self.var_vectors()
        current = v[reinsurer]
        candidate = current.copy()
        candidate[region] += increment
        if not riskmodels.capital_sufficient(
            self.capital[reinsurer], cfg.margin_of_safety, candidate.max()
        ):
            return False
        if not riskmodels.balance_check(
            current, candidate, float(self.capital[reinsurer]), cfg.eta_balance, self.n
        ):
            return False
        treaty = ReinsuranceTreaty(
            id=self._next_contract_id,
            cedent=cedent,
            reinsurer=reinsurer,
            region=region,
            attachment=attachment,
            limit=limit,
            premium_rate=self.premium_re,
            start=self.t,
            term=cfg.contract_term,
            premium_base=self._layer_base(exposure, attachment, limit),
        )
        self._next_contract_id += 1
        self.treaty_book.add(treaty)
        self.cover_ref[(cedent, region)] = ("treaty", treaty.id)
        self.cover_kind[cedent, region] = TREATY
        self.cover_attach[cedent, region] = attachment
        self.cover_width[cedent, region] = treaty.width
        self.expiry_schedule.setdefault(self.t + cfg.contract_term, []).append(
            ("treaty", treaty.id)
        )
        if hasattr(self, "_reins_v"):
            self._reins_v[reinsurer, region] += increment
        return True

    def _issue_cat_bond(self, issuer: int, region: int, exposure: float) -> None:
        cfg = self.cfg
        attachment, limit = self._draw_attachment(exposure)
        if not attachment < limit:
            return
        bond = CatBond(
            id=self._next_contract_id,
            issuer=issuer,
            region=region,
            attachment=attachment,
            limit=limit,
            coupon_rate=self.premium_re + cfg.catbond_spread * self.fair_premium,
            start=self.t,
            term=cfg.contract_term,
            coupon_base=self._layer_base(exposure, attachment, limit),
        )
        self._next_contract_id += 1
        self.economy.pay_out(bond.principal, "catbond_principal")
        self.bonds[bond.id] = bond
        self.cover_ref[(issuer, region)] = ("bond", bond.id)
        self.cover_kind[issuer, region] = BOND
        self.cover_attach[issuer, region] = attachment
        self.cover_width[issuer, region] = bond.remaining_principal
        self.expiry_schedule.setdefault(self.t + cfg.contract_term, []).append(
            ("bond", bond.id)
        )
        self.seek_fail[issuer, region] = 0

    # phase 8 -----------------------------------------------------------------

    def _phase_metrics(self, firms_at_start: int) -> None:
        nf = self.n_firms
        t = self.t
        live = self.alive[:nf]
        is_ins = self.kind[:nf] == INSURER
        v = self.var_vectors()
        combined = v.max(axis=1)
        excess = np.clip(self.capital[:nf] - self.cfg.margin_of_safety * combined, 0.0, None)
        excess[~live] = 0.0

        events = self.events_by_step.get(t, [])
        escrow = sum(b.remaining_principal for b in self.bonds.values())
        cap_live = np.where(live, self.capital[:nf], 0.0)
        total_money = float(cap_live.sum()) + escrow + self.economy.balance
        drift = abs(total_money - self.total_money_0) / self.total_money_0
        if drift > _CONSERVATION_TRAP * max(1, t + 1):
            raise ConservationError(
                f"step {t}: total money drifted by {drift:.3e} (relative)"
            )

        self.record.set(
            t,
            premium_insurance=self.premium_ins,
            premium_reinsurance=self.premium_re,
            capital_insurance=float(cap_live[is_ins].sum()),
            capital_reinsurance=float(cap_live[~is_ins].sum()),
            available_insurance=float(excess[is_ins & live].sum()),
            available_reinsurance=float(excess[~is_ins & live].sum()),
            active_insurers=int((live & is_ins).sum()),
            active_reinsurers=int((live & ~is_ins).sum()),
            firms_at_start=firms_at_start,
            entries=self._entries_this_step,
            defaults=self._defaults_this_step,
            exits=self._defaults_this_step + self._exits_this_step,
            uninsured=int((self.r_insurer < 0).sum()),
            policies=int((self.r_insurer >= 0).sum()),
            treaties=len(self.treaty_book),
            catbonds=len(self.bonds),
            non_recovered_count=self._nonrec_count,
            non_recovered_amount=self._nonrec_amount,
            profit_insurance=float(self.step_profit[:nf][live & is_ins].sum()),
            profit_reinsurance=float(self.step_profit[:nf][live & ~is_ins].sum()),
            event_count=len(events),
            event_damage_fraction=float(sum(e.total_damage_fraction for e in events)),
            economy_balance=self.economy.balance,
            total_money=total_money,
        )
        if t in self.cfg.snapshot_steps:
            self.record.snapshots[t] = {
                "insurers": sorted(float(c) for c in cap_live[live & is_ins]),
                "reinsurers": sorted(float(c) for c in cap_live[live & ~is_ins]),
            }

    # ------------------------------------------------------------- lifecycle

    def _terminate_treaty(self, treaty: ReinsuranceTreaty) -> None:
        self.treaty_book.remove(treaty.id)
        if self.cover_ref.get((treaty.cedent, treaty.region)) == ("treaty", treaty.id):
            del self.cover_ref[(treaty.cedent, treaty.region)]
            self.cover_kind[treaty.cedent, treaty.region] = NO_COVER
            self.cover_attach[treaty.cedent, treaty.region] = 0.0
            self.cover_width[treaty.cedent, treaty.region] = 0.0

    def _dissolve_bond(self, bond: CatBond) -> None:
        self.bonds.pop(bond.id, None)
        if bond.remaining_principal > 0:
            self.economy.receive(bond.remaining_principal, "catbond_principal_returned")
            bond.remaining_principal = 0.0
        if self.cover_ref.get((bond.issuer, bond.region)) == ("bond", bond.id):
            del self.cover_ref[(bond.issuer, bond.region)]
            self.cover_kind[bond.issuer, bond.region] = NO_COVER
            self.cover_attach[bond.issuer, bond.region] = 0.0
            self.cover_width[bond.issuer, bond.region] = 0.0

    def _terminate_cover(self, fid: int, region: int, return_principal: bool) -> None:
        ref = self.cover_ref.get((fid, region))
        if ref is None:
            return
        ckind, cid = ref
        if ckind == "treaty":
            treaty = self.treaty_book.treaties.get(cid)
            if treaty is not None:
                self._terminate_treaty(treaty)
        else:
            bond = self.bonds.get(cid)
            if bond is not None:
                self._dissolve_bond(bond)

    def _wind_down(self, fid: int, status: int) -> None:
        """Remove a firm from the market; contracts void, covers dissolve."""
        self.alive[fid] = False
        self.status[fid] = status
        # release customers back into the uninsured pool
        held = self.r_insurer == fid
        if held.any():
            self.r_insurer[held] = -1
        self.exposure[fid] = 0.0
        self.clock[fid] = 0
        self.seek_fail[fid] = 0
        # outward covers
        for region in range(self.n):
            self._terminate_cover(fid, region, return_principal=True)
        # inward treaties (as reinsurer) and remaining cedent-side treaties
        for treaty in [
            tr
            for tr in self.treaty_book.treaties.values()
            if tr.reinsurer == fid or tr.cedent == fid
        ]:
            self._terminate_treaty(treaty)

    # --------------------------------------------------------------- running

    def run(self) -> RunRecord:
        for _ in range(self.cfg.t_max):
            self.step()
        return self.record


def run_replication(
    config: RunConfig, replication: int, profile: EventProfile | None = None
) -> RunRecord:
    """One full simulation run; builds the keyed event profile if not given."""
    cfg = config.validate()
    if profile is None:
        profile = build_event_profile(
            replication,
            lam=cfg.event_rate,
            sigma=cfg.tail_exponent,
            n_regions=cfg.n_regions,
            t_max=cfg.t_max,
            master_seed=cfg.master_seed,
        )
    world = World(cfg, profile, replication)
    return world.run()
