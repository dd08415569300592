"""Waterfilling power allocation for partial and statistical CSIT.

In log-power coordinates the surrogate J is strictly concave, and its KKT
conditions collapse to a single water level mu: every relay transmits at
p_i = min(mu / gamma_gi, P_i). Candidate levels come from assuming the j
smallest P_i*gamma_gi products are capped,

    mu_j = (1 + sum_{i<=j} P_(i) gamma_g(i)) / j,   j = 1..M,

clamping each into the feasible interval [1/M, mu_M] and recomputing the
capped set from the clamped level itself. The best candidate under J is
the optimizer. Every relay ends up strictly positive: silence is never
optimal when only the second hop is uncertain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import PowerAllocation
from .objectives import log_objective_J


def _check_caps(obj, caps) -> np.ndarray:
    caps = np.asarray(caps, dtype=np.float64)
    if caps.shape != (obj.M,):
        raise ValueError(f"caps must have shape ({obj.M},)")
    if not np.all(np.isfinite(caps)) or np.any(caps <= 0.0):
        raise ValueError("caps must be finite and strictly positive")
    return caps


def _mu_interval(pg: np.ndarray) -> tuple[float, float]:
    m = pg.shape[0]
    return 1.0 / m, float((1.0 + np.sum(pg)) / m)


@dataclass(frozen=True)
class WaterLevelCandidates:
    """Candidate water levels and their objective values.

    order is the stable ascending permutation of P_i*gamma_gi; mu holds the
    raw candidates mu_j, mu_clamped their projections onto
    [mu_min, mu_max], feasible marks candidates already inside, and
    J_values is J evaluated at the clamped levels with membership taken
    from each level itself.
    """

    order: np.ndarray
    mu: np.ndarray
    mu_clamped: np.ndarray
    feasible: np.ndarray
    mu_min: float
    mu_max: float
    J_values: np.ndarray


@dataclass(frozen=True)
class WaterfillResult:
    """Solved allocation plus the candidate table that produced it."""

    allocation: PowerAllocation
    mu_star: float
    J_star: float
    at_cap: np.ndarray
    candidates: WaterLevelCandidates
    gamma_g: np.ndarray

    CSV_HEADER = "relay,gamma_g,P,p,at_cap,mu_star"

    def to_csv_rows(self) -> list[str]:
        """Rows of (relay, gamma_g, P, p, at_cap, mu_star), one per relay."""
        rows = []
        for i in range(self.allocation.M):
            rows.append(
                f"{i},{self.gamma_g[i]:.17g},{self.allocation.caps[i]:.17g},"
                f"{self.allocation.p[i]:.17g},{int(self.at_cap[i])},{self.mu_star:.17g}"
            )
        return rows


def J_of_mu(obj, mu: float, caps) -> float:
    """Surrogate objective as a function of the water level.

    Levels outside [mu_min, mu_max] are clamped with a warning. With
    C the uncapped set and Cbar its complement,

        J = |C| ln(mu) - sum_C ln(gamma_gi) + sum_Cbar ln(P_i)
            - M ln(1 + |C| mu + sum_Cbar P_i gamma_gi) + sum_i ln(a_i),

    which equals log_objective_J at p_i = min(mu/gamma_gi, P_i). A relay
    with P_i*gamma_gi == mu counts as capped; the two branches agree there.
    """
    caps = _check_caps(obj, caps)
    pg = caps * obj.gamma_g
    mu_min, mu_max = _mu_interval(pg)
    if mu < mu_min or mu > mu_max:
        warnings.warn(
            f"water level {mu:g} outside [{mu_min:g}, {mu_max:g}]; clamping",
            stacklevel=2,
        )
        mu = min(max(mu, mu_min), mu_max)
    capped = pg <= mu
    n_free = int(obj.M - np.count_nonzero(capped))
    denom = 1.0 + n_free * mu + float(np.sum(pg[capped]))
    with np.errstate(divide="ignore"):
        return float(
            n_free * math.log(mu)
            - np.sum(np.log(obj.gamma_g[~capped]))
            + np.sum(np.log(caps[capped]))
            - obj.M * math.log(denom)
            + np.sum(np.log(obj.a))
        )


def derivative_J_wrt_mu(obj, mu: float, caps) -> float:
    """dJ/d(ln mu) at a fixed membership pattern.

    Equals |C| * (1 - M mu / (1 + |C| mu + sum_Cbar P_i gamma_gi)); zero at
    the interior optimum, positive below it, negative above it.
    """
    caps = _check_caps(obj, caps)
    pg = caps * obj.gamma_g
    capped = pg <= mu
    n_free = obj.M - int(np.count_nonzero(capped))
    denom = 1.0 + n_free * mu + float(np.sum(pg[capped]))
    return n_free * (1.0 - obj.M * mu / denom)


def water_level_candidates(obj, caps) -> WaterLevelCandidates:
    """Enumerate the M candidate levels and score them under J."""
    caps = _check_caps(obj, caps)
    pg = caps * obj.gamma_g
    order = np.argsort(pg, kind="stable")
    prefix = np.cumsum(pg[order])
    mu_raw = (1.0 + prefix) / np.arange(1, obj.M + 1)
    mu_min, mu_max = _mu_interval(pg)
    feasible = (mu_raw >= mu_min) & (mu_raw <= mu_max)
    mu_clamped = np.clip(mu_raw, mu_min, mu_max)
    j_values = np.array([J_of_mu(obj, float(mu), caps) for mu in mu_clamped])
    return WaterLevelCandidates(
        order=order,
        mu=mu_raw,
        mu_clamped=mu_clamped,
        feasible=feasible,
        mu_min=mu_min,
        mu_max=mu_max,
        J_values=j_values,
    )


def solve_waterfill(obj, caps) -> WaterfillResult:
    """Maximize J over the cap box via the candidate water levels.

    The returned allocation satisfies the KKT pattern: p_i = P_i exactly
    for relays with P_i*gamma_gi <= mu_star and p_i*gamma_gi = mu_star for
    the rest. Since mu_star >= 1/M > 0, no relay is ever silenced.
    """
    cands = water_level_candidates(obj, caps)
    caps = _check_caps(obj, caps)
    k = int(np.argmax(cands.J_values))
    mu_star = float(cands.mu_clamped[k])
    p = np.minimum(mu_star / obj.gamma_g, caps)
    at_cap = caps * obj.gamma_g <= mu_star
    return WaterfillResult(
        allocation=PowerAllocation(p=p, caps=caps),
        mu_star=mu_star,
        J_star=float(cands.J_values[k]),
        at_cap=at_cap,
        candidates=cands,
        gamma_g=obj.gamma_g.copy(),
    )


def solve_waterfill_batch(gamma_g: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Vectorized waterfilling over a batch of cap vectors.

    Args:
        gamma_g: second-hop variances, shape (M,), shared by the batch.
        caps: amplifier caps, shape (n, M).

    Returns:
        Allocations of shape (n, M). Implements the same candidate
        selection as solve_waterfill (the additive sum(ln a_i) term is
        dropped; it never affects the argmax).
    """
    gamma_g = np.asarray(gamma_g, dtype=np.float64)
    caps = np.asarray(caps, dtype=np.float64)
    n, m = caps.shape
    pg = caps * gamma_g
    pg_sorted = np.sort(pg, axis=1, kind="stable")
    prefix = np.cumsum(pg_sorted, axis=1)
    mu_raw = (1.0 + prefix) / np.arange(1, m + 1)
    mu_max = mu_raw[:, -1:]
    mu_cl = np.clip(mu_raw, 1.0 / m, mu_max)
    # candidate allocations: (n, M candidates, M relays)
    p_cand = np.minimum(mu_cl[:, :, None] / gamma_g[None, None, :], caps[:, None, :])
    denom = 1.0 + np.einsum("ijk,k->ij", p_cand, gamma_g)
    j_cand = np.sum(np.log(p_cand), axis=2) - m * np.log(denom)
    best = np.argmax(j_cand, axis=1)
    mu_star = np.take_along_axis(mu_cl, best[:, None], axis=1)
    return np.minimum(mu_star / gamma_g[None, :], caps)


def waterfill_m2_closed_form(obj, caps) -> PowerAllocation:
    """Two-relay waterfilling without candidate search.

    With s_i = P_i * gamma_gi: when s_2 >= s_1 + 1 relay 1 is capped and
    relay 2 takes p_2 = (1 + s_1)/gamma_g2; the mirrored case swaps roles;
    otherwise both relays are capped. Matches solve_waterfill exactly,
    including at the boundary where two branches coincide.
    """
    caps = _check_caps(obj, caps)
    if obj.M != 2:
        raise ValueError("closed form is defined for M = 2")
    g1, g2 = obj.gamma_g
    s1, s2 = caps[0] * g1, caps[1] * g2
    if s2 >= s1 + 1.0:
        p = np.array([caps[0], (1.0 + s1) / g2])
    elif s1 >= s2 + 1.0:
        p = np.array([(1.0 + s2) / g1, caps[1]])
    else:
        p = caps.copy()
    return PowerAllocation(p=p, caps=caps)


def grid_search_oracle(obj, caps, grid_points: int = 100_000) -> tuple[float, float]:
    """Best water level over a dense uniform grid plus the candidate set.

    Independent check for solve_waterfill: evaluates J directly from the
    definition at p(mu) for grid_points levels spanning [mu_min, mu_max]
    together with the clamped candidates, and returns (mu_best, J_best).
    """
    caps = _check_caps(obj, caps)
    pg = caps * obj.gamma_g
    mu_min, mu_max = _mu_interval(pg)
    cands = water_level_candidates(obj, caps)
    grid = np.linspace(mu_min, mu_max, grid_points)
    grid = np.concatenate([grid, cands.mu_clamped])

    order = np.argsort(pg, kind="stable")
    pg_sorted = pg[order]
    ln_caps_sorted = np.log(caps[order])
    ln_gamma_sorted = np.log(obj.gamma_g[order])
    prefix_pg = np.concatenate([[0.0], np.cumsum(pg_sorted)])
    prefix_ln_caps = np.concatenate([[0.0], np.cumsum(ln_caps_sorted)])
    prefix_ln_gamma = np.concatenate([[0.0], np.cumsum(ln_gamma_sorted)])
    with np.errstate(divide="ignore"):
        sum_ln_a = float(np.sum(np.log(obj.a)))

    # number of capped relays at each level (ties count as capped)
    idx = np.searchsorted(pg_sorted, grid, side="right")
    n_free = obj.M - idx
    denom = 1.0 + n_free * grid + prefix_pg[idx]
    ln_gamma_free = prefix_ln_gamma[obj.M] - prefix_ln_gamma[idx]
    j_vals = (
        n_free * np.log(grid)
        - ln_gamma_free
        + prefix_ln_caps[idx]
        - obj.M * np.log(denom)
        + sum_ln_a
    )
    best = int(np.argmax(j_vals))
    return float(grid[best]), float(j_vals[best])
