"""Two-hop amplify-and-forward network model: configuration, channels, power caps.

The network has one source, M single-antenna relays and one destination,
with no direct source-destination link. A transmission block spans 2T
channel uses: T for the source broadcast, T for the relay retransmission.
Relay i scales its received block by a gain q_i = sqrt(p_i) and applies a
fixed unitary dispersion matrix; p_i is bounded by an amplifier cap that
depends on the power-constraint regime.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .rng import as_generator

# Allocations may exceed a cap by at most this relative slack (pure float
# round-off from expressions like min(mu/gamma, P)).
CAP_SLACK = 1e-12


class ConstraintKind(enum.Enum):
    """Relay power-constraint regime."""

    SHORT_TERM = "short_term"  # per-realization cap p_r / (p_s|h_i|^2 + N0)
    LONG_TERM = "long_term"    # average cap p_r / (p_s*gamma_hi + N0)


class CsitMode(enum.Enum):
    """What the transmitter side knows about the two hops."""

    PERFECT = "perfect"          # |h_i| and |g_i| per realization
    PARTIAL = "partial"          # |h_i| per realization, g_i in distribution
    STATISTICAL = "statistical"  # both hops in distribution only


# Knowledge of instantaneous h is what makes a short-term cap realizable,
# so the mode/constraint combinations are pinned rather than free.
_MODE_CONSTRAINTS = {
    CsitMode.PERFECT: ConstraintKind.SHORT_TERM,
    CsitMode.PARTIAL: ConstraintKind.SHORT_TERM,
    CsitMode.STATISTICAL: ConstraintKind.LONG_TERM,
}


def _positive_vector(x, m: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (m,):
        raise ValueError(f"{name} must have shape ({m},), got {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise ValueError(f"{name} entries must be finite and strictly positive")
    v = v.copy()
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of the relay network and its power budget.

    Args:
        M: number of relays.
        T: source block length in channel uses (codeword symbols per block).
        p_s: source transmit power per symbol, linear units.
        p_r: relay power budget per symbol, linear units.
        N0: noise power per complex dimension at relays and destination.
        gamma_h: source-to-relay channel variances, length M.
        gamma_g: relay-to-destination channel variances, length M.
        csit_mode: transmitter channel knowledge.
        constraint_kind: relay amplifier constraint regime.
    """

    M: int
    T: int
    p_s: float
    p_r: float
    N0: float
    gamma_h: np.ndarray
    gamma_g: np.ndarray
    csit_mode: CsitMode = CsitMode.PERFECT
    constraint_kind: ConstraintKind = ConstraintKind.SHORT_TERM

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        for name in ("p_s", "p_r", "N0"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0.0:
                raise ValueError(f"{name} must be finite and strictly positive")
        object.__setattr__(self, "gamma_h", _positive_vector(self.gamma_h, self.M, "gamma_h"))
        object.__setattr__(self, "gamma_g", _positive_vector(self.gamma_g, self.M, "gamma_g"))
        if not isinstance(self.csit_mode, CsitMode):
            object.__setattr__(self, "csit_mode", CsitMode(self.csit_mode))
        if not isinstance(self.constraint_kind, ConstraintKind):
            object.__setattr__(self, "constraint_kind", ConstraintKind(self.constraint_kind))
        expected = _MODE_CONSTRAINTS[self.csit_mode]
        if self.constraint_kind is not expected:
            raise ValueError(
                f"csit_mode {self.csit_mode.value!r} requires "
                f"constraint_kind {expected.value!r}, got {self.constraint_kind.value!r}"
            )


@dataclass(frozen=True)
class ChannelRealization:
    """One block-fading draw of both hops; f_i = h_i * g_i is the cascade."""

    h: np.ndarray
    g: np.ndarray
    f: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.complex128).copy()
        g = np.asarray(self.g, dtype=np.complex128).copy()
        if h.ndim != 1 or h.shape != g.shape:
            raise ValueError("h and g must be 1-d arrays of equal length")
        f = h * g
        for arr in (h, g, f):
            arr.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "f", f)

    @property
    def M(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class PowerAllocation:
    """Relay powers p together with the caps they were solved under."""

    p: np.ndarray
    caps: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).copy()
        caps = np.asarray(self.caps, dtype=np.float64).copy()
        if p.shape != caps.shape or p.ndim != 1:
            raise ValueError("p and caps must be 1-d arrays of equal length")
        if np.any(caps <= 0.0) or not np.all(np.isfinite(caps)):
            raise ValueError("caps must be finite and strictly positive")
        if np.any(p < 0.0) or np.any(p > caps * (1.0 + CAP_SLACK)):
            raise ValueError("allocation must satisfy 0 <= p_i <= caps_i")
        p.setflags(write=False)
        caps.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "caps", caps)

    @property
    def M(self) -> int:
        return self.p.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Boolean mask of relays transmitting with nonzero power."""
        return self.p > 0.0


def amplifier_caps(cfg: NetworkConfig, h: np.ndarray | None = None) -> np.ndarray:
    """Per-relay amplifier power caps P_i for the configured constraint.

    Short-term caps hold the instantaneous relay output at p_r and need the
    current first-hop draw; long-term caps hold it at p_r on average.
    """
    if cfg.constraint_kind is ConstraintKind.SHORT_TERM:
        if h is None:
            raise ValueError("short-term caps require the first-hop realization h")
        h = np.asarray(h)
        if h.shape != (cfg.M,):
            raise ValueError(f"h must have shape ({cfg.M},)")
        return cfg.p_r / (cfg.p_s * np.abs(h) ** 2 + cfg.N0)
    return cfg.p_r / (cfg.p_s * cfg.gamma_h + cfg.N0)


def sample_channels(cfg: NetworkConfig, seed_or_rng) -> ChannelRealization:
    """Draw one block-fading realization, h_i ~ CN(0, gamma_hi), g_i ~ CN(0, gamma_gi)."""
    rng = as_generator(seed_or_rng)
    h, g = sample_channel_batch(cfg, 1, rng)
    return ChannelRealization(h=h[0], g=g[0])


def sample_channel_batch(cfg: NetworkConfig, n: int, rng: np.random.Generator):
    """Draw n iid realizations at once; returns (H, G) of shape (n, M)."""
    shape = (n, cfg.M)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(cfg.gamma_h / 2.0)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(cfg.gamma_g / 2.0)
    return h, g


def overall_noise_variance(p: np.ndarray, g: np.ndarray, N0: float) -> float:
    """Per-dimension variance of the destination noise after relay forwarding.

    The forwarded relay noise and the local receiver noise combine into a
    spatially white term with variance N0 * (1 + sum_i p_i |g_i|^2).
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0):
        raise ValueError("relay powers must be non-negative")
    return float(N0 * (1.0 + np.sum(p * np.abs(np.asarray(g)) ** 2)))
