"""Closed-form convergence-bound calculators and trace-dominance validation.

Three bounds on the expected optimality gap after T = R*H SGD steps:

* weighted-average bound — for the weighted average of the per-round global
  models under the 4/(mu*(a+t)) schedule;
* final-model bound — for the instantaneous global model under the
  2/(mu*(gamma+t)) schedule over the additive-noise MAC;
* fading final-model bound — the same quantity when only K of N users,
  censored at fading threshold h_min, participate per round.

All formulas are exact closed forms of the problem constants; the dominance
validator checks a Monte Carlo mean-gap curve against a bound round by round.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .types import ProblemConstants

logger = logging.getLogger(__name__)


def base_error_constant(c: ProblemConstants) -> float:
    """Noise-free error constant: local drift + gradient variance + heterogeneity.

    8*H^2*G^2 + (1/N^2)*sum(Mn2) + 6*L*Gamma
    """
    return 8.0 * c.H**2 * c.G2 + float(np.sum(c.Mn2)) / c.N**2 + 6.0 * c.L * c.Gamma


def channel_error_constant(c: ProblemConstants) -> float:
    """Error constant including channel noise: base + 4*d*H^2*G^2*sigma_w2/(P*N^2)."""
    return base_error_constant(c) + 4.0 * c.d * c.H**2 * c.G2 * c.sigma_w2 / (c.P * c.N**2)


def fading_channel_error_constant(
    c: ProblemConstants, participants: int, h_min: float
) -> float:
    """Fading counterpart: base + 4*d*H^2*G^2*sigma_w2/(P*K^2*h_min^2)."""
    if not (1 <= participants <= c.N):
        raise ValueError(f"participants must lie in [1, N={c.N}]")
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    return base_error_constant(c) + 4.0 * c.d * c.H**2 * c.G2 * c.sigma_w2 / (
        c.P * participants**2 * h_min**2
    )


def partial_participation_penalty(c: ProblemConstants, participants: int) -> float:
    """Penalty for aggregating K of N users: 4*(N-K)/(K*(N-1)) * H^2 * G^2."""
    if not (1 <= participants <= c.N):
        raise ValueError(f"participants must lie in [1, N={c.N}]")
    if c.N == 1:
        logger.info("partial_participation_penalty: N=1, defining the penalty as 0")
        return 0.0
    return 4.0 * (c.N - participants) / (participants * (c.N - 1)) * c.H**2 * c.G2


def weight_sum(shift: float, local_steps: int, rounds: int) -> float:
    """Sum of the averaging weights (shift + r*H)^2 over rounds r = 1..R.

    Always at least T^3/(3H) with T = R*H.
    """
    if shift <= 0:
        raise ValueError("shift must be positive")
    r = np.arange(1, rounds + 1, dtype=np.float64)
    return float(np.sum((shift + r * local_steps) ** 2))


@dataclass(frozen=True)
class BoundInputs:
    """Everything a bound evaluation needs besides the formula itself."""

    constants: ProblemConstants
    delta0: float  # (expected) squared distance of the initial model from optimum
    shift: float  # schedule shift: a (averaged-model) or gamma (final-model)
    total_steps: int  # T = R*H
    participants: int | None = None  # K, fading bound only
    h_min: float | None = None  # fading bound only

    def __post_init__(self):
        if self.delta0 < 0:
            raise ValueError("delta0 must be non-negative")
        h = self.constants.H
        if self.total_steps < h or self.total_steps % h != 0:
            raise ValueError(f"total_steps must be a positive multiple of H={h}")
        if self.shift <= 0:
            raise ValueError("shift must be positive")


BoundFn = Callable[[BoundInputs], float]


def bound_weighted_average(inputs: BoundInputs) -> float:
    """Bound on the expected gap of the weighted-average model after T steps."""
    c = inputs.constants
    a, t_total = inputs.shift, inputs.total_steps
    floor = max(16.0 * c.L / c.mu, float(c.H))
    # a 1e-9 relative tolerance absorbs summation-order noise in L/mu estimates
    if not a > floor * (1.0 - 1e-9):
        raise ValueError(f"weighted-average bound needs shift > {floor:.6g}, got {a:.6g}")
    rounds = t_total // c.H
    s = weight_sum(a, c.H, rounds)
    b = base_error_constant(c)
    term_drift = 4.0 * (t_total + rounds) / (3.0 * c.mu * s) * (2.0 * a + c.H + rounds - 1.0) * b
    term_noise = (
        16.0
        * c.d
        * t_total
        * c.H
        * c.G2
        * c.sigma_w2
        / (3.0 * c.mu * c.P * c.N**2 * s)
        * (2.0 * a + t_total + c.H)
    )
    term_init = c.mu * a**3 / (6.0 * s) * inputs.delta0
    return term_drift + term_noise + term_init


def _final_model_bound(inputs: BoundInputs, error_constant: float) -> float:
    c = inputs.constants
    gamma, t_total = inputs.shift, inputs.total_steps
    floor = max(8.0 * c.L / c.mu, float(c.H))
    if gamma < floor * (1.0 - 1e-9):
        raise ValueError(f"final-model bound needs shift >= {floor:.6g}, got {gamma:.6g}")
    numerator = 2.0 * c.L * max(4.0 * error_constant, c.mu**2 * gamma * inputs.delta0)
    return numerator / (c.mu**2 * (t_total + gamma))


def bound_final_model(inputs: BoundInputs) -> float:
    """Bound on the expected gap of the instantaneous model after T steps."""
    return _final_model_bound(inputs, channel_error_constant(inputs.constants))


def bound_final_model_fading(inputs: BoundInputs) -> float:
    """Final-model bound when K of N users participate over a fading channel."""
    if inputs.participants is None or inputs.h_min is None:
        raise ValueError("fading bound needs participants and h_min")
    c = inputs.constants
    total = fading_channel_error_constant(
        c, inputs.participants, inputs.h_min
    ) + partial_participation_penalty(c, inputs.participants)
    return _final_model_bound(inputs, total)


@dataclass(frozen=True)
class DominanceRow:
    t: int
    mean_gap: float
    bound: float
    satisfied: bool


@dataclass(frozen=True)
class DominanceReport:
    rows: tuple[DominanceRow, ...]

    @property
    def passed(self) -> bool:
        return all(row.satisfied for row in self.rows)

    @property
    def violations(self) -> tuple[DominanceRow, ...]:
        return tuple(row for row in self.rows if not row.satisfied)

    def summary(self) -> str:
        status = "PASS" if self.passed else f"FAIL ({len(self.violations)} rounds)"
        margin = min((row.bound / row.mean_gap for row in self.rows if row.mean_gap > 0), default=float("inf"))
        return f"dominance {status}; tightest bound/gap ratio {margin:.3g} over {len(self.rows)} rounds"


def validate_dominance(
    round_gaps: Sequence[tuple[int, float]],
    bound_fn: BoundFn,
    inputs: BoundInputs,
) -> DominanceReport:
    """Check a per-round Monte Carlo mean-gap curve against a bound.

    `round_gaps` is a sequence of (t, mean_gap) pairs with t the global step
    count at each communication round (a positive multiple of H).
    """
    h = inputs.constants.H
    rows = []
    for t, gap in round_gaps:
        t = int(t)
        if t <= 0 or t % h != 0:
            raise ValueError(f"round grid entry t={t} is not a positive multiple of H={h}")
        bound_value = bound_fn(replace(inputs, total_steps=t))
        rows.append(DominanceRow(t=t, mean_gap=float(gap), bound=bound_value, satisfied=gap <= bound_value))
    return DominanceReport(rows=tuple(rows))
