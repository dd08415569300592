"""On-off gradient power allocation under perfect CSIT.

f0 is quasi-linear in each coordinate, so its maximum over the box
[0, P_1] x ... x [0, P_M] sits at a vertex: every relay either transmits
at its cap or stays silent. The solver jumps all coordinates to the box
face selected by the current gradient sign and repeats until the sign
pattern reproduces itself, which certifies vertex stationarity. A relay
whose gradient component is exactly zero is turned off; either choice
leaves f0 unchanged, and silence saves relay power.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PowerAllocation
from .objectives import PerfectCsitObjective, f0_gradient, f0_value

MAX_ITERATIONS = 100
# Exhaustive enumeration beyond this many relays is off the table.
MAX_ORACLE_RELAYS = 20


@dataclass
class OnOffTrace:
    """Iterate history of one solver run.

    iterates[k] is the allocation after k updates; objective_values is
    aligned with it. converged is False only when the safeguard kicked in,
    in which case used_fallback tells whether the enumeration oracle
    supplied the final answer.
    """

    iterates: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    used_fallback: bool = False


@dataclass(frozen=True)
class M2Discriminant:
    """Sign certificates for the two-relay closed form.

    delta = alpha_1 beta_2 - beta_1 alpha_2 shares its sign with
    |h_1|^2 - |h_2|^2; xi1_at_cap2 and xi2_at_cap1 are the numerators of
    df0/dp_1 at p_2 = P_2 and df0/dp_2 at p_1 = P_1.
    """

    delta: float
    xi1_at_cap2: float
    xi2_at_cap1: float


def _check_caps(obj: PerfectCsitObjective, caps) -> np.ndarray:
    caps = np.asarray(caps, dtype=np.float64)
    if caps.shape != (obj.M,):
        raise ValueError(f"caps must have shape ({obj.M},)")
    if not np.all(np.isfinite(caps)) or np.any(caps <= 0.0):
        raise ValueError("caps must be finite and strictly positive")
    return caps


def feedback_bits(allocation: PowerAllocation) -> str:
    """On-off mask as a bitstring, relay 0 first; '1' means transmit at cap."""
    return "".join("1" if on else "0" for on in allocation.active)


def solve_onoff(
    obj: PerfectCsitObjective,
    caps,
    start: np.ndarray | None = None,
) -> tuple[PowerAllocation, OnOffTrace]:
    """Run the on-off gradient iteration from a vertex.

    Args:
        obj: perfect-CSIT objective coefficients.
        caps: per-relay amplifier caps P_i.
        start: optional boolean on-mask for the initial vertex; defaults
            to all relays on.

    Returns:
        (allocation, trace). The allocation is the stationary vertex; the
        trace records every iterate and f0 value along the way.

    The update is simultaneous across relays: p_i jumps to P_i when its
    gradient component is positive and to 0 otherwise. If the iteration
    cycles or exceeds the cap (not expected; the ascent is monotone), the
    exhaustive vertex oracle takes over for M <= 20 and the trace is
    flagged.
    """
    caps = _check_caps(obj, caps)
    m = obj.M
    if start is None:
        mask = np.ones(m, dtype=bool)
    else:
        mask = np.asarray(start, dtype=bool)
        if mask.shape != (m,):
            raise ValueError(f"start mask must have shape ({m},)")
        mask = mask.copy()

    trace = OnOffTrace()
    seen_prev = None  # mask two steps back, for two-step cycle detection
    for _ in range(MAX_ITERATIONS):
        p = np.where(mask, caps, 0.0)
        trace.iterates.append(p)
        trace.objective_values.append(f0_value(obj, p))
        new_mask = f0_gradient(obj, p) > 0.0
        if np.array_equal(new_mask, mask):
            trace.converged = True
            break
        if seen_prev is not None and np.array_equal(new_mask, seen_prev):
            break  # two-step cycle; safeguard below
        seen_prev = mask
        mask = new_mask
        trace.iterations += 1

    if not trace.converged:
        if m > MAX_ORACLE_RELAYS:
            raise RuntimeError(
                f"on-off iteration did not converge and M={m} exceeds the "
                f"enumeration fallback limit of {MAX_ORACLE_RELAYS}"
            )
        trace.used_fallback = True
        alloc = vertex_enumeration_oracle(obj, caps)
        trace.iterates.append(alloc.p.copy())
        trace.objective_values.append(f0_value(obj, alloc.p))
        return alloc, trace

    return PowerAllocation(p=np.where(mask, caps, 0.0), caps=caps), trace


def solve_onoff_batch(
    alpha: np.ndarray,
    beta: np.ndarray,
    caps: np.ndarray,
    history: int = 0,
    start: np.ndarray | None = None,
):
    """Vectorized on-off solve over a batch of instances.

    Args:
        alpha, beta, caps: arrays of shape (n, M).
        history: if positive, also return f0 at iterates 0..history-1
            (later columns hold the converged value once a row stops).
        start: optional (n, M) boolean on-pattern to start from; the
            default starts every row all-on, matching solve_onoff.

    Returns:
        (masks, iterations, fallback, objective_history) where masks is the
        stationary on-pattern, iterations counts updates until the sign
        pattern reproduced itself, fallback marks rows resolved by the
        enumeration oracle, and objective_history is None unless requested.

    The per-row update rule is identical to solve_onoff; the two are
    interchangeable and are cross-checked in the test suite.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    caps = np.asarray(caps, dtype=np.float64)
    n, m = alpha.shape
    ac = alpha * caps
    bc = beta * caps

    if start is None:
        masks = np.ones((n, m), dtype=bool)
    else:
        masks = np.array(start, dtype=bool)
        if masks.shape != (n, m):
            raise ValueError("start mask shape must match alpha")
    iterations = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    prev_masks = None
    cycled = np.zeros(n, dtype=bool)
    hist = np.zeros((n, history), dtype=np.float64) if history > 0 else None

    def record(step: int) -> None:
        if hist is not None and step < history:
            a_sum = np.sum(np.where(masks, ac, 0.0), axis=1)
            b_sum = np.sum(np.where(masks, bc, 0.0), axis=1)
            hist[:, step] = a_sum / (1.0 + b_sum)

    for step in range(MAX_ITERATIONS):
        record(step)
        a_sum = np.sum(np.where(masks, ac, 0.0), axis=1)
        b_sum = np.sum(np.where(masks, bc, 0.0), axis=1)
        # gradient sign: alpha_i (1 + B) - beta_i A > 0
        new_masks = alpha * (1.0 + b_sum)[:, None] - beta * a_sum[:, None] > 0.0
        stationary = np.all(new_masks == masks, axis=1)
        if prev_masks is not None:
            cycled |= ~done & ~stationary & np.all(new_masks == prev_masks, axis=1)
        done |= stationary
        advance = ~done & ~cycled
        if not np.any(advance):
            if hist is not None:
                # freeze remaining history columns at the converged objective
                for s in range(step + 1, history):
                    record(s)
            break
        prev_masks = masks.copy()
        masks = np.where(advance[:, None], new_masks, masks)
        iterations += advance

    fallback = ~done
    if np.any(fallback):
        for i in np.nonzero(fallback)[0]:
            obj = PerfectCsitObjective(alpha=alpha[i], beta=beta[i], eta=1.0)
            alloc = vertex_enumeration_oracle(obj, caps[i])
            masks[i] = alloc.p > 0.0
            if hist is not None:
                hist[i, :] = f0_value(obj, alloc.p)
    return masks, iterations, fallback, hist


def vertex_enumeration_oracle(obj: PerfectCsitObjective, caps) -> PowerAllocation:
    """Exact argmax of f0 over all 2^M vertices of the cap box.

    Ties go to the vertex with fewer active relays, then to the
    lexicographically smallest on-set. Refuses M > 20.
    """
    caps = _check_caps(obj, caps)
    m = obj.M
    if m > MAX_ORACLE_RELAYS:
        raise ValueError(f"vertex enumeration is limited to M <= {MAX_ORACLE_RELAYS}")
    ac = obj.alpha * caps
    bc = obj.beta * caps
    # bit i of the row index = relay i active
    masks = (np.arange(2**m)[:, None] >> np.arange(m)) & 1
    a_sums = masks @ ac
    b_sums = masks @ bc
    values = a_sums / (1.0 + b_sums)
    best = values.max()
    tied = np.nonzero(values == best)[0]
    if tied.size > 1:
        def key(idx: int):
            on = tuple(np.nonzero(masks[idx])[0])
            return (len(on), on)
        winner = min(tied, key=key)
    else:
        winner = tied[0]
    p = np.where(masks[winner].astype(bool), caps, 0.0)
    return PowerAllocation(p=p, caps=caps)


def verify_stationarity(obj: PerfectCsitObjective, allocation: PowerAllocation) -> bool:
    """Check the vertex optimality certificate from the gradient signs.

    True iff every active relay sees a strictly positive gradient and
    every silent relay a non-positive one. An exactly zero gradient at a
    cap therefore fails the certificate. Raises for non-vertex input.
    """
    caps = _check_caps(obj, allocation.caps)
    at_cap = allocation.p == caps
    at_zero = allocation.p == 0.0
    if not np.all(at_cap | at_zero):
        raise ValueError("stationarity certificate is defined for vertices only")
    grad = f0_gradient(obj, allocation.p)
    return bool(np.all(grad[at_cap] > 0.0) and np.all(grad[at_zero] <= 0.0))


def m2_discriminant(obj: PerfectCsitObjective, caps) -> M2Discriminant:
    """Closed-form sign certificates for the two-relay instance."""
    caps = _check_caps(obj, caps)
    if obj.M != 2:
        raise ValueError("discriminant is defined for M = 2")
    a1, a2 = obj.alpha
    b1, b2 = obj.beta
    delta = a1 * b2 - b1 * a2
    return M2Discriminant(
        delta=delta,
        xi1_at_cap2=a1 + delta * caps[1],
        xi2_at_cap1=a2 - delta * caps[0],
    )


def onoff_m2_closed_form(obj: PerfectCsitObjective, caps) -> PowerAllocation:
    """Two-relay optimum from the discriminant sign pattern, no iteration.

    The better first-hop relay always transmits; the other is silenced
    exactly when its gradient at the full-power corner is non-positive,
    i.e. when delta leaves the band (-alpha_1/P_2, alpha_2/P_1).
    """
    caps = _check_caps(obj, caps)
    d = m2_discriminant(obj, caps)
    if d.xi2_at_cap1 <= 0.0:
        p = np.array([caps[0], 0.0])
    elif d.xi1_at_cap2 <= 0.0:
        p = np.array([0.0, caps[1]])
    else:
        p = caps.copy()
    return PowerAllocation(p=p, caps=caps)
