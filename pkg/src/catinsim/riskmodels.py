"""Imperfect risk models, per-region VaR estimation and underwriting rules.

A risk model underestimates its blind-spot region by a factor ``zeta`` and
overestimates every other region by the same factor, so all models built for
one world are of identical quality and differ only in where they err.

Firms quantify risk as the per-event value-at-risk in each region: the
(1 - alpha) quantile of the truncated-Pareto damage fraction times the
exposed value, combined across regions with a maximum. Underwriting requires

* capital >= mu * max over regions of perceived VaR, and
* the portfolio to stay balanced: a candidate is acceptable if it does not
  raise the standard deviation of the per-region VaR vector, or if that
  standard deviation stays below eta * capital / n.

``max_acceptable`` solves, in closed vectorized form, how many identical
candidates a firm would accept if it evaluated them one at a time under
those two rules; it is the bulk path used for customer matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import TruncatedPareto


@dataclass(frozen=True)
class RiskModel:
    """Distortion profile: which region is underestimated, and by how much."""

    id: int
    underestimated_region: int
    zeta: float
    alpha: float

    def __post_init__(self) -> None:
        if self.zeta < 1:
            raise ValueError(f"zeta must be >= 1, got {self.zeta}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")

    def factors(self, n_regions: int) -> np.ndarray:
        """Per-region multiplier applied to the true VaR estimate."""
        f = np.full(n_regions, self.zeta)
        f[self.underestimated_region] = 1.0 / self.zeta
        return f


def build_model_set(n_models: int, n_regions: int, zeta: float, alpha: float) -> list[RiskModel]:
    """The first n_models of the rotation: model i underestimates region i."""
    if not 1 <= n_models <= n_regions:
        raise ValueError(f"need 1 <= n_models <= {n_regions}, got {n_models}")
    return [
        RiskModel(id=i, underestimated_region=i, zeta=zeta, alpha=alpha)
        for i in range(n_models)
    ]


def event_quantile(alpha: float, sigma: float) -> float:
    """Damage fraction exceeded by an event with probability alpha."""
    return float(TruncatedPareto(sigma).ppf(1.0 - alpha))


def true_regional_var(insured_value: float, alpha: float, sigma: float) -> float:
    """Per-event VaR of a regional exposure: quantile x exposed value."""
    if insured_value < 0:
        raise ValueError(f"insured value must be >= 0, got {insured_value}")
    return event_quantile(alpha, sigma) * insured_value


def perceived_regional_var(model: RiskModel, region: int, true_var):
    """true_var / zeta in the model's blind-spot region, true_var * zeta elsewhere."""
    if region == model.underestimated_region:
        return true_var / model.zeta
    return true_var * model.zeta


def combined_var(per_region_vars) -> float:
    """Maximum-combination approximation of the portfolio VaR."""
    vars_ = np.asarray(per_region_vars, dtype=float)
    if vars_.size == 0:
        raise ValueError("combined_var needs at least one regional VaR")
    return float(vars_.max())


def capital_sufficient(capital, mu: float, combined) -> bool | np.ndarray:
    """Capital covers the combined VaR with margin of safety mu."""
    result = np.asarray(capital) >= mu * np.asarray(combined)
    return bool(result) if result.ndim == 0 else result


def balance_check(
    current_vars,
    candidate_vars,
    capital: float,
    eta_balance: float,
    n_regions: int,
) -> bool:
    """Accept if the candidate portfolio is no less balanced, or balanced enough.

    Balance is the (population) standard deviation of the per-region VaR
    vector; "balanced enough" means below eta_balance * capital / n_regions.
    """
    std_now = float(np.std(np.asarray(current_vars, dtype=float)))
    std_new = float(np.std(np.asarray(candidate_vars, dtype=float)))
    return std_new <= std_now or std_new < eta_balance * capital / n_regions


def accept_counts(
    var_vectors: np.ndarray,
    region: int,
    exposure: np.ndarray,
    unit_value: float,
    quantile: float,
    attach: np.ndarray,
    width: np.ndarray,
    percep: np.ndarray,
    batch_sizes: np.ndarray,
    capital: np.ndarray,
    mu: float,
    eta_balance: float,
) -> np.ndarray:
    """How many candidates from an identical batch each firm accepts.

    Each accepted candidate adds ``unit_value`` to the firm's exposure in
    ``region``; the region's perceived VaR after m acceptances is

        y(m) = (g - clip(g - attach, 0, width)) * percep,  g = quantile * (E + m*v)

    (attach = width = 0 encodes no outward layer). The result is equivalent
    to offering each firm its batch one candidate at a time under the
    capital rule (capital >= mu * combined VaR) and the balance rule: both
    are prefix properties along the batch, because y is nondecreasing in m
    and the VaR-vector standard deviation falls toward balance and then
    rises, so the largest acceptable prefix is found by bisection.

    Returns the (F,) accepted counts; inputs are not modified.
    """
    batch_sizes = np.asarray(batch_sizes, dtype=np.int64)
    n_firms = batch_sizes.shape[0]
    offered = batch_sizes > 0
    if not offered.any():
        return np.zeros(n_firms, dtype=np.int64)
    n_regions = var_vectors.shape[1]
    cap_limit = capital / mu
    threshold = eta_balance * capital / n_regions

    # Balance is a quadratic in the region's VaR y: population variance
    # var(y) = ((s2_rest + y^2) - (s1_rest + y)^2 / n) / n, minimized at
    # y_star; std(m) <= std(m-1) is exactly (y(m)-y_star)^2 <= (y(m-1)-y_star)^2.
    rest = var_vectors.copy()
    y0 = rest[:, region].copy()
    rest[:, region] = -np.inf
    max_rest = rest.max(axis=1)
    max_rest[~np.isfinite(max_rest)] = 0.0  # single-region worlds
    s1_rest = var_vectors.sum(axis=1) - y0
    s2_rest = (var_vectors * var_vectors).sum(axis=1) - y0 * y0
    thr_sq = threshold * threshold
    y_star = s1_rest / max(n_regions - 1, 1)
    cap_base = max_rest <= cap_limit

    def y_at(m: np.ndarray) -> np.ndarray:
        # net-of-layer loss written as min/max so the flat stretch inside the
        # layer is exactly constant in floating point (also exact for no
        # cover, attach = width = 0, and for a depleted layer, width = 0)
        g = quantile * (exposure + m * unit_value)
        net = np.minimum(g, attach) + np.maximum(g - (attach + width), 0.0)
        return net * percep

    def var_of(y: np.ndarray) -> np.ndarray:
        s1 = s1_rest + y
        return (s2_rest + y * y - s1 * s1 / n_regions) / n_regions

    def acceptable(m: np.ndarray) -> np.ndarray:
        # True where the m-th candidate of the batch would be accepted (m >= 1),
        # given all earlier candidates were accepted.
        y = y_at(m)
        cap_ok = cap_base & (y <= cap_limit)
        if n_regions == 1:
            return cap_ok  # a one-region VaR vector is always perfectly balanced
        d = y - y_star
        d_prev = y_at(m - 1) - y_star
        bal_ok = (d * d <= d_prev * d_prev) | (var_of(y) < thr_sq)
        return cap_ok & bal_ok

    def prefix_bisect(known: np.ndarray, ceiling: np.ndarray, active: np.ndarray) -> np.ndarray:
        """Largest m in [known, ceiling] whose whole prefix is acceptable.

        Valid only where `acceptable` is a prefix property over that range,
        i.e. within one strictly monotone segment of y.
        """
        lo = known.copy()
        hi = ceiling.copy()
        live = active & (hi > lo)
        probe_hi = np.maximum(np.where(live, hi, 1), 1)
        ok_hi = acceptable(probe_hi) & live
        lo[ok_hi] = hi[ok_hi]
        live = live & ~ok_hi
        while live.any():
            mid = (lo + hi + 1) // 2
            probe = np.where(live, mid, 1)
            ok = acceptable(probe)
            take = live & ok
            lo[take] = mid[take]
            drop = live & ~ok
            hi[drop] = mid[drop] - 1
            live = live & (lo < hi)
        return lo

    # The candidate path y(m) is piecewise linear: rising below the cover's
    # attachment, flat while the marginal loss falls inside the layer, rising
    # again beyond the limit. Acceptance is sequential, so the search walks
    # these segments: bisection inside each rising segment (where acceptance
    # is a prefix property), an exact check at the plateau entry (y can jump
    # relative to its predecessor), and a free pass along the flat stretch
    # (equal std, unchanged combined VaR).
    gv = quantile * unit_value
    g0 = quantile * exposure
    with np.errstate(divide="ignore", invalid="ignore"):
        frontier = np.where(gv > 0, (attach - g0) / gv, np.inf)
        m_pre = np.ceil(frontier - 1e-12).astype(np.int64) - 1  # last m with g(m) < attach
        back = np.where(gv > 0, (attach + width - g0) / gv, -np.inf)
        m_post = np.floor(back + 1e-12).astype(np.int64)  # last m with g(m) <= limit
    m_pre = np.clip(m_pre, 0, batch_sizes)
    m_post = np.clip(m_post, m_pre, batch_sizes)
    flat = width > 0

    counts = prefix_bisect(
        np.zeros(n_firms, dtype=np.int64),
        np.where(flat, m_pre, batch_sizes),
        offered,
    )
    # plateau entry: the first candidate at or inside the layer
    alive = offered & flat & (counts == m_pre) & (batch_sizes > m_pre)
    if alive.any():
        entry = np.where(alive, m_pre + 1, 1)
        ok_entry = acceptable(entry) & alive
        counts[ok_entry] = np.minimum(m_post, batch_sizes)[ok_entry]  # flat stretch passes
        alive = ok_entry & (batch_sizes > m_post)
        if alive.any():
            counts = prefix_bisect(counts, batch_sizes, alive)
    return counts


def sequential_acceptable(
    var_vector: np.ndarray,
    region: int,
    increment: float,
    batch_size: int,
    capital: float,
    mu: float,
    eta_balance: float,
) -> int:
    """Reference one-at-a-time evaluation of the underwriting rules.

    Slow path kept as the behavioural definition that ``max_acceptable``
    must match; used by tests and available for audits.
    """
    v = np.asarray(var_vector, dtype=float).copy()
    n = v.size
    accepted = 0
    for _ in range(batch_size):
        candidate = v.copy()
        candidate[region] += increment
        if not capital_sufficient(capital, mu, candidate.max()):
            break
        if not balance_check(v, candidate, capital, eta_balance, n):
            break
        v = candidate
        accepted += 1
    return accepted
