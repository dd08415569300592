"""Pairwise-error-probability objectives for the three CSIT regimes.

With perfect CSIT the Chernoff bound on the worst codeword pair is
exp(-eta * f0(p)) with

    f0(p) = sum_i alpha_i p_i / (1 + sum_i beta_i p_i),
    alpha_i = |h_i g_i|^2,  beta_i = |g_i|^2,

where eta folds the code's minimum eigenvalue and the source SNR. With
partial CSIT the bound is averaged over the second hop and tightened by a
saddle-point argument into prod_i (1 + rho_i)^-1; with statistical CSIT
the first hop is averaged too, which brings in the exponential integral.
The waterfilling solver maximizes the concave surrogate

    J(p) = sum_i ln(a_i p_i / (1 + sum_j gamma_gj p_j)),

which drops the +1 inside each log factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive_rng

_EULER_GAMMA = 0.5772156649015328606

# Fixed chunk size for Monte Carlo accumulation; summation over chunks is
# order-independent, so results do not depend on how work is distributed.
_MC_CHUNK = 10_000


def exp_integral_e1(x: float) -> float:
    """Exponential integral E1(x) = int_x^inf exp(-t)/t dt for x > 0.

    Power series below x = 1, modified Lentz continued fraction above;
    both are pushed to ~1e-15 relative so downstream bounds keep 1e-12
    absolute accuracy.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise ValueError("E1 requires x > 0")
    if x <= 1.0:
        # E1(x) = -gamma - ln x + sum_k (-1)^{k+1} x^k / (k * k!)
        total = -_EULER_GAMMA - math.log(x)
        term = x
        k = 1
        while abs(term) > 1e-17 * max(abs(total), 1.0):
            total += term
            k += 1
            term *= -x * (k - 1) / (k * k)
        return total
    # Lentz evaluation of E1(x) = e^-x / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 200):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x)


def _nonnegative_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d array")
    if not np.all(np.isfinite(v)) or np.any(v < 0.0):
        raise ValueError(f"{name} entries must be finite and non-negative")
    v = v.copy()
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class PerfectCsitObjective:
    """Coefficients of f0 for one channel realization."""

    alpha: np.ndarray
    beta: np.ndarray
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _nonnegative_vector(self.alpha, "alpha"))
        object.__setattr__(self, "beta", _nonnegative_vector(self.beta, "beta"))
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have equal length")
        if not np.isfinite(self.eta) or self.eta <= 0.0:
            raise ValueError("eta must be finite and strictly positive")

    @classmethod
    def from_channels(cls, h, g, eta: float) -> "PerfectCsitObjective":
        g2 = np.abs(np.asarray(g)) ** 2
        return cls(alpha=np.abs(np.asarray(h)) ** 2 * g2, beta=g2, eta=eta)

    @property
    def M(self) -> int:
        return self.alpha.shape[0]


def _check_powers(p, m: int, allow_zero: bool = True) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (m,):
        raise ValueError(f"p must have shape ({m},)")
    if not np.all(np.isfinite(p)):
        raise ValueError("p entries must be finite")
    if allow_zero:
        if np.any(p < 0.0):
            raise ValueError("p entries must be non-negative")
    elif np.any(p <= 0.0):
        raise ValueError("p entries must be strictly positive")
    return p


def f0_value(obj: PerfectCsitObjective, p) -> float:
    """Receive-SNR-like ratio maximized by the on-off allocation."""
    p = _check_powers(p, obj.M)
    return float(np.dot(obj.alpha, p) / (1.0 + np.dot(obj.beta, p)))


def f0_gradient(obj: PerfectCsitObjective, p) -> np.ndarray:
    """Gradient of f0; component i is (alpha_i(1+B) - beta_i A) / (1+B)^2.

    A and B are the active sums dot(alpha, p) and dot(beta, p). The i-th
    numerator only involves the other relays' terms, which is what makes
    the sign pattern usable as a stationarity certificate.
    """
    p = _check_powers(p, obj.M)
    a_sum = float(np.dot(obj.alpha, p))
    b_sum = float(np.dot(obj.beta, p))
    denom = 1.0 + b_sum
    return (obj.alpha * denom - obj.beta * a_sum) / (denom * denom)


def pep_bound_perfect(obj: PerfectCsitObjective, p) -> float:
    """Chernoff bound exp(-eta * f0(p)) on the dominant pairwise error."""
    return math.exp(-obj.eta * f0_value(obj, p))


def _validate_rate_coeffs(obj) -> None:
    object.__setattr__(obj, "a", _nonnegative_vector(obj.a, "a"))
    gg = np.asarray(obj.gamma_g, dtype=np.float64)
    if gg.shape != obj.a.shape:
        raise ValueError("gamma_g must match a in length")
    if not np.all(np.isfinite(gg)) or np.any(gg <= 0.0):
        raise ValueError("gamma_g entries must be finite and strictly positive")
    gg = gg.copy()
    gg.setflags(write=False)
    object.__setattr__(obj, "gamma_g", gg)


@dataclass(frozen=True)
class PartialCsitObjective:
    """Coefficients a_i = eta * gamma_gi * |h_i|^2 for the averaged bound."""

    a: np.ndarray
    gamma_g: np.ndarray

    def __post_init__(self):
        _validate_rate_coeffs(self)

    @classmethod
    def from_channels(cls, h, gamma_g, eta: float) -> "PartialCsitObjective":
        if not np.isfinite(eta) or eta <= 0.0:
            raise ValueError("eta must be finite and strictly positive")
        gamma_g = np.asarray(gamma_g, dtype=np.float64)
        return cls(a=eta * gamma_g * np.abs(np.asarray(h)) ** 2, gamma_g=gamma_g)

    @property
    def M(self) -> int:
        return self.a.shape[0]


@dataclass(frozen=True)
class StatisticalCsitObjective:
    """Same algebraic shape as the partial objective with a_i = eta*gamma_gi*gamma_hi."""

    a: np.ndarray
    gamma_g: np.ndarray

    def __post_init__(self):
        _validate_rate_coeffs(self)

    @classmethod
    def from_variances(cls, gamma_h, gamma_g, eta: float) -> "StatisticalCsitObjective":
        if not np.isfinite(eta) or eta <= 0.0:
            raise ValueError("eta must be finite and strictly positive")
        gamma_h = np.asarray(gamma_h, dtype=np.float64)
        gamma_g = np.asarray(gamma_g, dtype=np.float64)
        return cls(a=eta * gamma_g * gamma_h, gamma_g=gamma_g)

    @property
    def M(self) -> int:
        return self.a.shape[0]


def rho_values(obj, p) -> np.ndarray:
    """Per-relay effective SNR terms rho_i = a_i p_i / (1 + sum_j gamma_gj p_j)."""
    p = _check_powers(p, obj.M)
    return obj.a * p / (1.0 + float(np.dot(obj.gamma_g, p)))


def pep_bound_partial(obj: PartialCsitObjective, p) -> float:
    """Second-hop-averaged pairwise error bound prod_i (1 + rho_i)^-1."""
    return float(np.prod(1.0 / (1.0 + rho_values(obj, p))))


def f1_value(obj, p) -> float:
    """Exact log-domain objective sum_i ln(1 + rho_i).

    Equals -ln(pep_bound_partial). Exposed for evaluation and diagnostics
    only: it is neither concave nor convex in p, so the solver maximizes
    the concave surrogate J instead.
    """
    return float(np.sum(np.log1p(rho_values(obj, p))))


def pep_bound_statistical_exact(obj: StatisticalCsitObjective, p) -> float:
    """Fully averaged bound prod_i rho_i^-1 exp(1/rho_i) E1(1/rho_i).

    Requires every rho_i > 0; each factor lies in (0, 1).
    """
    rho = rho_values(obj, p)
    if np.any(rho <= 0.0):
        raise ValueError("statistical bound requires strictly positive rho_i")
    out = 1.0
    for r in rho:
        inv = 1.0 / r
        out *= inv * math.exp(inv) * exp_integral_e1(inv)
    return out


def pep_bound_statistical_asymptotic(obj: StatisticalCsitObjective, p) -> float:
    """High-SNR approximation prod_i ln(rho_i)/rho_i; NaN when any rho_i <= 1.

    The NaN flags an invalid-domain evaluation (the approximation only
    makes sense once every rho_i exceeds 1) without raising mid-sweep.
    """
    rho = rho_values(obj, p)
    if np.any(rho <= 1.0):
        return math.nan
    return float(np.prod(np.log(rho) / rho))


def log_objective_J(obj, p) -> float:
    """Concave surrogate J(p) = sum_i ln(a_i p_i / (1 + sum_j gamma_gj p_j)).

    Concave in the log-power coordinates p_tilde = ln p, which is the
    domain the waterfilling solver works in. Requires p_i > 0.
    """
    p = _check_powers(p, obj.M, allow_zero=False)
    denom = 1.0 + float(np.dot(obj.gamma_g, p))
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(obj.a * p)) - obj.M * math.log(denom))


@dataclass(frozen=True)
class SaddleComparison:
    """Monte Carlo estimate of the averaged PEP kernel vs its product bound."""

    mc_estimate: float
    mc_stderr: float
    bound: float
    rel_error: float

    @property
    def rel_error_stderr(self) -> float:
        """Delta-method standard error of rel_error (bound is deterministic)."""
        return self.mc_stderr * self.bound / self.mc_estimate**2


def saddle_point_error(h, gamma_g, p, eta: float, trials: int, seed: int) -> SaddleComparison:
    """Compare prod_i (1+rho_i)^-1 against direct Monte Carlo averaging.

    Estimates E_g[exp(-eta * sum_i |h_i|^2 p_i |g_i|^2 / (1 + sum_i p_i |g_i|^2))]
    with g_i ~ CN(0, gamma_gi) and returns the relative deviation of the
    saddle-point product bound from that estimate. Chunked accumulation
    with per-chunk derived streams keeps the result reproducible.
    """
    h = np.asarray(h, dtype=np.complex128)
    gamma_g = np.asarray(gamma_g, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if not (h.shape == gamma_g.shape == p.shape) or h.ndim != 1:
        raise ValueError("h, gamma_g and p must be 1-d arrays of equal length")
    if np.any(gamma_g <= 0.0) or np.any(p < 0.0):
        raise ValueError("gamma_g must be positive and p non-negative")
    if not np.isfinite(eta) or eta < 0.0:
        raise ValueError("eta must be finite and non-negative")
    if trials < 10_000:
        raise ValueError("trials must be at least 10000 for a usable error bar")

    h2 = np.abs(h) ** 2
    denom = 1.0 + float(np.dot(gamma_g, p))
    rho = eta * gamma_g * h2 * p / denom
    bound = float(np.prod(1.0 / (1.0 + rho)))

    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_idx = 0
    m = h2.shape[0]
    while done < trials:
        n = min(_MC_CHUNK, trials - done)
        rng = derive_rng(seed, chunk_idx)
        g = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) * np.sqrt(gamma_g / 2.0)
        g2 = np.abs(g) ** 2
        num = g2 @ (h2 * p)
        den = 1.0 + g2 @ p
        vals = np.exp(-eta * num / den)
        total += float(np.sum(vals))
        total_sq += float(np.sum(vals * vals))
        done += n
        chunk_idx += 1

    mc = total / trials
    var = max(total_sq / trials - mc * mc, 0.0)
    stderr = math.sqrt(var / trials)
    return SaddleComparison(
        mc_estimate=mc,
        mc_stderr=stderr,
        bound=bound,
        rel_error=abs(mc - bound) / mc,
    )
