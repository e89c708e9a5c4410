"""COTAF codec: time-varying power precoding and server-side scaling.

Each round-r coefficient alpha_r normalizes the transmit power: it is the
power budget P divided by the maximal (over users) expected squared norm of
the model update sent that round. Users transmit sqrt(alpha_r) times their
update; the server divides the channel output by N*sqrt(alpha_r), so alpha
cancels on the signal and shrinks the effective noise as updates shrink.

The fading extension inverts the channel magnitude at the transmitter,
censors users whose fading falls below a threshold h_min, and selects a fixed
number of participants per round by channel quality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import FadingRealization
from .localsgd import DEFAULT_THETA0_STD, StepFn, local_pass
from .objectives import RidgeObjective
from .types import UserShard


@dataclass(frozen=True)
class AlphaSchedule:
    """Per-round precoding coefficients, positive and finite, 1-based rounds."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] == 0:
            raise ValueError("alpha schedule must be a non-empty 1-D array")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("alpha values must be positive and finite")
        object.__setattr__(self, "values", values)

    @property
    def rounds(self) -> int:
        return self.values.shape[0]

    def alpha_for_round(self, round_index: int) -> float:
        if not (1 <= round_index <= self.rounds):
            raise ValueError(f"round {round_index} outside schedule of {self.rounds} rounds")
        return float(self.values[round_index - 1])

    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.values])

    @classmethod
    def from_json(cls, text: str) -> "AlphaSchedule":
        return cls(np.asarray(json.loads(text), dtype=np.float64))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AlphaSchedule":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class FadingPolicy:
    """Censoring threshold and target participant count for fading rounds."""

    h_min: float
    participants: int

    def __post_init__(self):
        if self.h_min <= 0:
            raise ValueError("h_min must be positive")
        if self.participants < 1:
            raise ValueError("participants must be >= 1")


def precode(delta: np.ndarray, alpha: float) -> np.ndarray:
    """Scale a model update by sqrt(alpha); output power is alpha*||delta||^2."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return math.sqrt(alpha) * np.asarray(delta, dtype=np.float64)


def decode(
    y: np.ndarray, n_users: int, alpha: float, theta_prev: np.ndarray
) -> np.ndarray:
    """Recover the aggregated model: y / (N sqrt(alpha)) + previous global model.

    Over a noiseless channel with every user transmitting a precoded update,
    this equals the exact average of the users' local models.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    return np.asarray(y, dtype=np.float64) / (n_users * math.sqrt(alpha)) + theta_prev


def fading_precode(
    delta: np.ndarray, alpha: float, magnitude: float, phase: float, h_min: float
) -> np.ndarray | None:
    """Channel-inverting precoder with threshold censoring.

    Users with fading magnitude at or below h_min do not transmit (returns
    None). Otherwise the update is scaled by sqrt(alpha)*h_min/magnitude; the
    phase pre-correction cancels the channel phase exactly, so in this
    real-valued simulator only the magnitude enters. The attenuation
    h_min/magnitude < 1 keeps the expected transmit energy within budget.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if magnitude <= 0:
        raise ValueError("fading magnitude must be positive")
    if magnitude <= h_min:
        return None
    del phase  # cancelled exactly by the transmitter's pre-correction
    return (math.sqrt(alpha) * h_min / magnitude) * np.asarray(delta, dtype=np.float64)


def select_participants(
    fades: FadingRealization, policy: FadingPolicy
) -> tuple[int, ...] | None:
    """Pick the participants for one round by opportunistic carrier sensing.

    Users whose magnitude exceeds h_min contend with a backoff decreasing in
    channel quality, so the strongest K eligible users transmit. Returns
    1-based user ids, or None when fewer than K users are eligible (callers
    re-draw the fading for the round).
    """
    eligible = np.flatnonzero(fades.magnitudes > policy.h_min)
    if eligible.shape[0] < policy.participants:
        return None
    order = np.argsort(-fades.magnitudes[eligible], kind="stable")
    chosen = eligible[order[: policy.participants]]
    return tuple(sorted(int(i) + 1 for i in chosen))


def fading_decode(
    y: np.ndarray, k_size: int, alpha: float, h_min: float, theta_prev: np.ndarray
) -> np.ndarray:
    """Recover the participant-average model: y/(K sqrt(alpha) h_min) + previous."""
    if k_size < 1:
        raise ValueError("k_size must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if h_min <= 0:
        raise ValueError("h_min must be positive")
    return np.asarray(y, dtype=np.float64) / (k_size * math.sqrt(alpha) * h_min) + theta_prev


def estimate_alpha_mc(
    pilot_shards: Sequence[UserShard],
    lam: float,
    rounds: int,
    local_steps: int,
    power: float,
    pilot_trials: int,
    rng: np.random.Generator,
    *,
    step_fn: StepFn,
    theta0_std: float = DEFAULT_THETA0_STD,
) -> AlphaSchedule:
    """Estimate the precoding schedule by noise-free pilot runs.

    Runs noise-free local SGD on the pilot shards for pilot_trials trials
    (fresh Gaussian initialization each trial) and sets, per round,
    alpha_r = power / max over users of the trial-mean squared update norm.
    """
    if pilot_trials < 1:
        raise ValueError("pilot_trials must be >= 1")
    if rounds < 1 or local_steps < 1:
        raise ValueError("rounds and local_steps must be >= 1")
    if power <= 0:
        raise ValueError("power must be positive")
    if len(pilot_shards) == 0:
        raise ValueError("need at least one pilot shard")

    objective = RidgeObjective(lam)
    dim = pilot_shards[0].feature_dim
    sums = np.zeros((rounds, len(pilot_shards)))
    for _ in range(pilot_trials):
        theta = rng.normal(0.0, theta0_std, dim)
        for r in range(1, rounds + 1):
            t0 = (r - 1) * local_steps
            etas = [step_fn(t0 + j) for j in range(local_steps)]
            local_models = [
                local_pass(theta, shard, objective, etas, rng) for shard in pilot_shards
            ]
            for n, model in enumerate(local_models):
                diff = model - theta
                sums[r - 1, n] += diff @ diff
            theta = np.mean(local_models, axis=0)

    max_mean = sums.max(axis=1) / pilot_trials
    zero_rounds = np.flatnonzero(max_mean == 0)
    if zero_rounds.size:
        raise ValueError(
            f"all pilot updates are zero at round {int(zero_rounds[0]) + 1}; alpha undefined"
        )
    return AlphaSchedule(power / max_mean)


def alpha_upper_bound_schedule(
    local_steps: int, step_fn: StepFn, g2: float, power: float, rounds: int
) -> AlphaSchedule:
    """Analytic schedule alpha_r = P / (H^2 eta_{(r-1)H}^2 G^2).

    The denominator upper-bounds the expected squared update norm whenever G^2
    bounds the stochastic gradient second moment, so these alphas never exceed
    the pilot-estimated ones on the same run.
    """
    if local_steps < 1 or rounds < 1:
        raise ValueError("local_steps and rounds must be >= 1")
    if g2 <= 0:
        raise ValueError("g2 must be positive")
    if power <= 0:
        raise ValueError("power must be positive")
    etas = np.asarray([step_fn((r - 1) * local_steps) for r in range(1, rounds + 1)])
    if np.any(etas <= 0) or np.any(np.diff(etas) > 0):
        raise ValueError("step_fn must be positive and non-increasing")
    return AlphaSchedule(power / (local_steps**2 * etas**2 * g2))
