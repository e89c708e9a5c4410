"""Round orchestration: local SGD at every user, transmission over the channel,
server-side aggregation, and derived model sequences.

Time indexing: the global SGD-step counter t starts at 0 and is shared by all
users; communication happens after every block of H steps, i.e. round r spans
steps (r-1)H .. rH-1 and the server aggregates at t = rH.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import (
    AwgnMac,
    ChannelKind,
    FadingMac,
    FadingRealization,
    NoiselessOrthogonal,
    awgn_mac,
    fading_mac,
    orthogonal_noiseless,
    sample_rayleigh,
)
from .localsgd import DEFAULT_THETA0_STD, local_pass, sgd_step  # noqa: F401 (sgd_step re-exported)
from .objectives import RidgeObjective, global_loss
from .precoding import (
    AlphaSchedule,
    FadingPolicy,
    decode,
    fading_decode,
    fading_precode,
    precode,
    select_participants,
)
from .types import UserShard

SCHEMES = ("cotaf", "cotaf_fading", "non_precoded_ota", "noise_free_local_sgd")

# A fading round is re-drawn while fewer than K users are eligible; a run that
# needs more redraws than this is misconfigured (h_min far too high).
MAX_WAIT_REDRAWS = 100_000


def step_averaged_model(t: int, mu: float, a: float) -> float:
    """Decaying step size 4/(mu*(a+t)) used when the deliverable is the
    weighted-average model; valid for shift a > max(16*L/mu, H)."""
    return 4.0 / (mu * (a + t))


def step_final_model(t: int, mu: float, gamma: float) -> float:
    """Decaying step size 2/(mu*(gamma+t)) used when the deliverable is the
    final (instantaneous) model; valid for shift gamma >= max(8*L/mu, H)."""
    return 2.0 / (mu * (gamma + t))


@dataclass(frozen=True)
class StepSchedule:
    """Resolved step-size schedule: kind, shift parameter, and mu."""

    kind: str  # "averaged_model" | "final_model"
    shift: float
    mu: float

    def __post_init__(self):
        if self.kind not in ("averaged_model", "final_model"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.shift <= 0 or self.mu <= 0:
            raise ValueError("shift and mu must be positive")

    def eta(self, t: int) -> float:
        if self.kind == "averaged_model":
            return step_averaged_model(t, self.mu, self.shift)
        return step_final_model(t, self.mu, self.shift)

    def validate_against(self, smoothness: float, local_steps: int) -> None:
        """Enforce the shift lower bound given the smoothness constant L.

        A 1e-9 relative tolerance absorbs summation-order noise in L/mu.
        """
        ratio = smoothness / self.mu
        if self.kind == "averaged_model":
            floor = max(16.0 * ratio, float(local_steps))
            if not self.shift > floor * (1.0 - 1e-9):
                raise ValueError(
                    f"averaged_model schedule needs shift > {floor:.6g}, got {self.shift:.6g}"
                )
        else:
            floor = max(8.0 * ratio, float(local_steps))
            if self.shift < floor * (1.0 - 1e-9):
                raise ValueError(
                    f"final_model schedule needs shift >= {floor:.6g}, got {self.shift:.6g}"
                )


@dataclass(frozen=True)
class TrainerConfig:
    """Everything one training run needs besides data, channel, and streams."""

    scheme: str
    local_steps: int
    rounds: int
    step: StepSchedule
    ridge_lambda: float = 0.5
    theta0_std: float = DEFAULT_THETA0_STD
    power: float = 1.0
    non_precoded_gain: float | None = None
    fading: FadingPolicy | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.local_steps < 1 or self.rounds < 0:
            raise ValueError("local_steps must be >= 1 and rounds >= 0")
        if self.ridge_lambda < 0 or self.theta0_std < 0 or self.power <= 0:
            raise ValueError("invalid ridge_lambda / theta0_std / power")
        if self.scheme == "cotaf_fading" and self.fading is None:
            raise ValueError("cotaf_fading requires a FadingPolicy")

    @property
    def gain(self) -> float:
        """Amplitude gain of the non-precoded baseline (default sqrt(power))."""
        return math.sqrt(self.power) if self.non_precoded_gain is None else self.non_precoded_gain


@dataclass(frozen=True)
class TrialStreams:
    """Random streams owned by one training run.

    `users` holds one generator per user for SGD index sampling; `init` draws
    the initial model; `noise` and `fading` feed the channel. Paired scheme
    comparisons share init/users and give each scheme its own noise/fading.
    """

    init: np.random.Generator
    users: tuple[np.random.Generator, ...]
    noise: np.random.Generator | None = None
    fading: np.random.Generator | None = None


@dataclass(frozen=True)
class RoundTrace:
    """Per-round record of the global model and validation statistics."""

    round: int
    theta_global: np.ndarray
    gap: float
    tx_power_max: float
    tx_power_per_user: np.ndarray
    participants: tuple[int, ...] | None = None
    wait_count: int = 0


def _transmit_powers(signals: Sequence[np.ndarray]) -> np.ndarray:
    return np.asarray([float(x @ x) for x in signals])


def run_round(
    global_theta: np.ndarray,
    shards: Sequence[UserShard],
    config: TrainerConfig,
    alpha: float | None,
    channel: ChannelKind,
    streams: TrialStreams,
    round_index: int,
    f_star: float,
) -> tuple[np.ndarray, RoundTrace]:
    """One communication round: broadcast, H local steps per user, aggregate."""
    n_users = len(shards)
    if len(streams.users) != n_users:
        raise ValueError(f"need {n_users} user streams, got {len(streams.users)}")
    h = config.local_steps
    t0 = (round_index - 1) * h
    etas = [config.step.eta(t0 + j) for j in range(h)]
    objective = RidgeObjective(config.ridge_lambda)

    # Every user starts the round from the broadcast global model.
    local_models = [
        local_pass(global_theta, shards[n], objective, etas, streams.users[n])
        for n in range(n_users)
    ]
    deltas = [model - global_theta for model in local_models]

    participants: tuple[int, ...] | None = None
    wait_count = 0

    if config.scheme == "noise_free_local_sgd":
        received = orthogonal_noiseless(local_models)
        new_theta = np.mean(received, axis=0)
        powers = _transmit_powers(deltas)
    elif config.scheme == "cotaf":
        if not isinstance(channel, AwgnMac):
            raise ValueError("cotaf runs over an AwgnMac channel")
        if alpha is None:
            raise ValueError("cotaf needs an alpha coefficient")
        signals = [precode(delta, alpha) for delta in deltas]
        y = awgn_mac(signals, channel.sigma_w2, streams.noise, dim=global_theta.shape[0])
        new_theta = decode(y, n_users, alpha, global_theta)
        powers = _transmit_powers(signals)
    elif config.scheme == "non_precoded_ota":
        if not isinstance(channel, AwgnMac):
            raise ValueError("non_precoded_ota runs over an AwgnMac channel")
        gain = config.gain
        signals = [gain * delta for delta in deltas]
        y = awgn_mac(signals, channel.sigma_w2, streams.noise, dim=global_theta.shape[0])
        new_theta = y / (n_users * gain) + global_theta
        powers = _transmit_powers(signals)
    elif config.scheme == "cotaf_fading":
        if not isinstance(channel, FadingMac):
            raise ValueError("cotaf_fading runs over a FadingMac channel")
        if alpha is None:
            raise ValueError("cotaf_fading needs an alpha coefficient")
        policy = config.fading
        while True:
            fades = sample_rayleigh(n_users, channel.rayleigh_scale, streams.fading)
            participants = select_participants(fades, policy)
            if participants is not None:
                break
            wait_count += 1
            if wait_count > MAX_WAIT_REDRAWS:
                raise RuntimeError(
                    "fading round starved: h_min leaves fewer than K users eligible"
                )
        signals = []
        for uid in participants:
            signal = fading_precode(
                deltas[uid - 1],
                alpha,
                float(fades.magnitudes[uid - 1]),
                float(fades.phases[uid - 1]),
                policy.h_min,
            )
            assert signal is not None  # selected users all exceed h_min
            signals.append(signal)
        idx = [uid - 1 for uid in participants]
        sub_fades = FadingRealization(fades.magnitudes[idx], fades.phases[idx])
        y = fading_mac(signals, sub_fades, channel.sigma_w2, streams.noise)
        new_theta = fading_decode(y, len(participants), alpha, policy.h_min, global_theta)
        all_powers = np.zeros(n_users)
        all_powers[idx] = _transmit_powers(signals)
        powers = all_powers
    else:  # pragma: no cover - guarded by TrainerConfig
        raise ValueError(f"unknown scheme {config.scheme!r}")

    gap = global_loss(new_theta, shards, config.ridge_lambda) - f_star
    trace = RoundTrace(
        round=round_index,
        theta_global=new_theta,
        gap=gap,
        tx_power_max=float(powers.max()) if powers.size else 0.0,
        tx_power_per_user=powers,
        participants=participants,
        wait_count=wait_count,
    )
    return new_theta, trace


def run_training(
    shards: Sequence[UserShard],
    config: TrainerConfig,
    alpha_schedule: AlphaSchedule | None,
    channel: ChannelKind,
    streams: TrialStreams,
    f_star: float,
) -> list[RoundTrace]:
    """Full training run: Gaussian initial model, then `rounds` communication rounds."""
    needs_alpha = config.scheme in ("cotaf", "cotaf_fading")
    if needs_alpha:
        if alpha_schedule is None:
            raise ValueError(f"{config.scheme} needs an alpha schedule")
        if alpha_schedule.rounds < config.rounds:
            raise ValueError(
                f"alpha schedule covers {alpha_schedule.rounds} rounds, need {config.rounds}"
            )
    if config.scheme == "noise_free_local_sgd" and not isinstance(
        channel, (NoiselessOrthogonal, AwgnMac)
    ):
        raise ValueError("noise_free_local_sgd expects an orthogonal noiseless channel")

    dim = shards[0].feature_dim
    theta = streams.init.normal(0.0, config.theta0_std, dim)
    traces: list[RoundTrace] = []
    for r in range(1, config.rounds + 1):
        alpha = alpha_schedule.alpha_for_round(r) if needs_alpha else None
        try:
            theta, trace = run_round(
                theta, shards, config, alpha, channel, streams, r, f_star
            )
        except Exception as exc:
            raise RuntimeError(f"round {r}: {exc}") from exc
        traces.append(trace)
    return traces


def weighted_average_model(
    history: Sequence[tuple[int, np.ndarray]], a: float, local_steps: int
) -> np.ndarray:
    """Weighted average of per-round global models with weights (a + r*H)^2."""
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    weights = np.asarray([(a + r * local_steps) ** 2 for r, _ in history])
    stacked = np.stack([theta for _, theta in history])
    return (weights[:, None] * stacked).sum(axis=0) / weights.sum()
