"""Run configuration: defaults, flat key=value config files, validation.

The config file format is flat ``key = value`` text (``#`` comments), chosen
for diffability in experiment archives. An empty file resolves to the
standard parameter set. Unknown keys and out-of-range values raise
:class:`ConfigError` naming the offender; the resolved configuration is
echoed verbatim into every output manifest so a run is reproducible from
its manifest alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration input."""


@dataclass
class RunConfig:
    # Horizon and experiment design
    t_max: int = 4000
    burn_in: int = 1200
    replications: int = 400
    diversity: int = 1  # number of distinct risk models in use (nu)
    master_seed: int = 0

    # Underwriting
    margin_of_safety: float = 2.0  # mu
    var_exceedance: float = 0.005  # alpha
    eta_balance: float = 0.5
    dividend_share: float = 0.4  # rho
    interest_rate: float = 0.001  # xi

    # Firm population
    initial_capital_insurer: float = 80_000.0
    initial_capital_reinsurer: float = 2_000_000.0
    initial_insurers: int = 20
    initial_reinsurers: int = 4
    entry_rate_insurer: float = 0.3
    entry_rate_reinsurer: float = 0.05
    employment_threshold_insurer: float = 0.6  # gamma_i
    exit_time_insurer: int = 24  # tau_i
    employment_threshold_reinsurer: float = 0.4  # gamma_r
    exit_time_reinsurer: int = 48  # tau_r

    # Perils
    event_rate: float = 0.03  # lambda, per region per step
    tail_exponent: float = 2.0  # sigma
    n_regions: int = 4
    n_risks: int = 20_000  # H

    # Risk models
    risk_model_inaccuracy: float = 2.0  # zeta

    # Pricing
    premium_min_factor: float = 0.70
    premium_max_factor: float = 1.35
    sensitivity_insurance: float = 1.29e-9
    sensitivity_reinsurance: float = 1.55e-9
    premium_capital_normalizer: float = 1.0

    # Contracts
    risk_value: float = 1000.0
    deductible_fraction: float = 0.0  # of risk value
    excess_fraction: float = 1.0  # of risk value
    contract_term: int = 12
    attachment_fraction_min: float = 0.25
    attachment_fraction_max: float = 0.30
    treaty_limit_fraction: float = 1.0  # of cedent's regional insured value
    catbond_trigger_failures: int = 5
    catbond_spread: float = 0.02  # additive spread as a fraction of the fair premium

    # Sector toggles
    reinsurance_enabled: bool = True
    catbonds_enabled: bool = True

    # Economy
    economy_endowment: float = 1e10

    # Analytics
    snapshot_steps: tuple[int, ...] = (1000,)

    def validate(self) -> "RunConfig":
        err = []
        if self.t_max < 1:
            err.append("t_max must be >= 1")
        if not 0 <= self.burn_in <= self.t_max:
            err.append("burn_in must lie in [0, t_max]")
        if self.replications < 1:
            err.append("replications must be >= 1")
        if not 1 <= self.diversity <= self.n_regions:
            err.append(f"diversity must be in [1, {self.n_regions}]")
        if self.margin_of_safety < 1:
            err.append("margin_of_safety must be >= 1")
        if not 0 < self.var_exceedance < 1:
            err.append("var_exceedance must be in (0, 1)")
        if not 0 <= self.eta_balance <= 1:
            err.append("eta_balance must be in [0, 1]")
        if not 0 <= self.dividend_share <= 1:
            err.append("dividend_share must be in [0, 1]")
        if self.interest_rate < 0:
            err.append("interest_rate must be >= 0")
        for key in ("entry_rate_insurer", "entry_rate_reinsurer"):
            if not 0 <= getattr(self, key) <= 1:
                err.append(f"{key} must be a probability in [0, 1]")
        if self.initial_capital_reinsurer <= self.initial_capital_insurer:
            err.append("initial_capital_reinsurer must exceed initial_capital_insurer")
        if self.initial_insurers < 0 or self.initial_reinsurers < 0:
            err.append("initial firm counts must be >= 0")
        for key in ("employment_threshold_insurer", "employment_threshold_reinsurer"):
            if not 0 <= getattr(self, key) <= 1:
                err.append(f"{key} must be in [0, 1]")
        if self.exit_time_insurer < 1 or self.exit_time_reinsurer < 1:
            err.append("exit times must be >= 1")
        if self.event_rate < 0:
            err.append("event_rate must be >= 0")
        if self.tail_exponent <= 0:
            err.append("tail_exponent must be > 0")
        if self.n_regions < 1:
            err.append("n_regions must be >= 1")
        if self.n_risks < self.n_regions:
            err.append("n_risks must be >= n_regions")
        if self.risk_model_inaccuracy < 1:
            err.append("risk_model_inaccuracy must be >= 1")
        if not 0 < self.premium_min_factor <= self.premium_max_factor:
            err.append("premium factors must satisfy 0 < min <= max")
        if self.sensitivity_insurance < 0 or self.sensitivity_reinsurance < 0:
            err.append("premium sensitivities must be >= 0")
        if self.premium_capital_normalizer <= 0:
            err.append("premium_capital_normalizer must be > 0")
        if self.risk_value <= 0:
            err.append("risk_value must be > 0")
        if not 0 <= self.deductible_fraction < self.excess_fraction <= 1:
            err.append("need 0 <= deductible_fraction < excess_fraction <= 1")
        if self.contract_term < 1:
            err.append("contract_term must be >= 1")
        if not 0 < self.attachment_fraction_min <= self.attachment_fraction_max:
            err.append("attachment fractions must satisfy 0 < min <= max")
        if not self.attachment_fraction_max < self.treaty_limit_fraction <= 1:
            err.append("need attachment_fraction_max < treaty_limit_fraction <= 1")
        if self.catbond_trigger_failures < 1:
            err.append("catbond_trigger_failures must be >= 1")
        if self.catbond_spread < 0:
            err.append("catbond_spread must be >= 0")
        if self.economy_endowment <= 0:
            err.append("economy_endowment must be > 0")
        if any(s < 0 for s in self.snapshot_steps):
            err.append("snapshot_steps must be >= 0")
        if err:
            raise ConfigError("; ".join(err))
        return self

    def replaced(self, **overrides) -> "RunConfig":
        return dataclasses.replace(self, **overrides).validate()

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["snapshot_steps"] = list(self.snapshot_steps)
        return d


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if ftype == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "tuple[int, ...]":
            if not raw:
                return ()
            return tuple(int(part) for part in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None
    raise ConfigError(f"unhandled config field type for {key!r}: {ftype}")


def parse_config_text(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    return RunConfig(**values).validate()


def load_config(path: str | Path | None) -> RunConfig:
    """Load and validate; None means pure defaults."""
    if path is None:
        return RunConfig().validate()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text())


@dataclass(frozen=True)
class GridCell:
    margin_of_safety: float
    reinsurance_enabled: bool

    @property
    def label(self) -> str:
        re = "re" if self.reinsurance_enabled else "nore"
        mu = f"{self.margin_of_safety:g}".replace(".", "p")
        return f"mu{mu}_{re}"


@dataclass(frozen=True)
class ExperimentGrid:
    """The four-cell experiment: margin of safety {2, 1} x reinsurance on/off."""

    cells: tuple[GridCell, ...] = (
        GridCell(2.0, True),
        GridCell(2.0, False),
        GridCell(1.0, True),
        GridCell(1.0, False),
    )

    def configs(self, base: RunConfig) -> list[tuple[GridCell, RunConfig]]:
        out = []
        seen = set()
        for cell in self.cells:
            if cell in seen:
                raise ConfigError(f"duplicate grid cell {cell.label}")
            seen.add(cell)
            out.append(
                (
                    cell,
                    base.replaced(
                        margin_of_safety=cell.margin_of_safety,
                        reinsurance_enabled=cell.reinsurance_enabled,
                    ),
                )
            )
        return out
