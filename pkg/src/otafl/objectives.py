"""Regularized linear least-squares objective and bound-constant estimation.

The per-sample loss is l(s; theta) = 0.5*(s_s . theta - s_y)^2
+ (lam/2)*||theta||^2. Its Hessian does not depend on theta, so the
smoothness and strong-convexity constants of the global objective are exact
eigenvalues of the averaged Gram matrix plus lam*I rather than sampled
curvature estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .types import ProblemConstants, RegressionSample, UserShard, as_model_vector


class GradientOracle(Protocol):
    """Per-sample loss/gradient pair; the trainer works against this surface."""

    def loss(self, theta: np.ndarray, features: np.ndarray, target: float) -> float: ...

    def grad(self, theta: np.ndarray, features: np.ndarray, target: float) -> np.ndarray: ...


@dataclass(frozen=True)
class RidgeObjective:
    """Regularized linear least-squares loss with weight lam >= 0."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization weight must be non-negative")
        object.__setattr__(self, "lam", float(self.lam))

    def loss(self, theta: np.ndarray, features: np.ndarray, target: float) -> float:
        residual = features @ theta - target
        return 0.5 * residual * residual + 0.5 * self.lam * (theta @ theta)

    def grad(self, theta: np.ndarray, features: np.ndarray, target: float) -> np.ndarray:
        residual = features @ theta - target
        return residual * features + self.lam * theta


def ridge_loss(theta, sample: RegressionSample, lam: float) -> float:
    """Per-sample loss 0.5*(s_s.theta - s_y)^2 + (lam/2)*||theta||^2."""
    theta = as_model_vector(theta, dim=sample.features.shape[0])
    return float(RidgeObjective(lam).loss(theta, sample.features, sample.target))


def ridge_grad(theta, sample: RegressionSample, lam: float) -> np.ndarray:
    """Gradient of ridge_loss: (s_s.theta - s_y)*s_s + lam*theta."""
    theta = as_model_vector(theta, dim=sample.features.shape[0])
    return RidgeObjective(lam).grad(theta, sample.features, sample.target)


def _shard_loss(theta: np.ndarray, shard: UserShard, lam: float) -> float:
    residuals = shard.features @ theta - shard.targets
    return float(np.mean(0.5 * residuals * residuals) + 0.5 * lam * (theta @ theta))


def global_loss(theta, shards: Sequence[UserShard], lam: float) -> float:
    """Average over users of the per-user empirical loss."""
    if len(shards) == 0:
        raise ValueError("need at least one user shard")
    theta = as_model_vector(theta, dim=shards[0].feature_dim)
    return float(np.mean([_shard_loss(theta, shard, lam) for shard in shards]))


def global_grad(theta, shards: Sequence[UserShard], lam: float) -> np.ndarray:
    """Exact gradient of global_loss."""
    if len(shards) == 0:
        raise ValueError("need at least one user shard")
    theta = as_model_vector(theta, dim=shards[0].feature_dim)
    grads = []
    for shard in shards:
        residuals = shard.features @ theta - shard.targets
        grads.append(shard.features.T @ residuals / len(shard) + lam * theta)
    return np.mean(grads, axis=0)


def hessian(shards: Sequence[UserShard], lam: float) -> np.ndarray:
    """Hessian of the global objective: averaged Gram matrix + lam*I."""
    if len(shards) == 0:
        raise ValueError("need at least one user shard")
    d = shards[0].feature_dim
    gram = np.zeros((d, d))
    for shard in shards:
        gram += shard.features.T @ shard.features / len(shard)
    gram /= len(shards)
    return gram + lam * np.eye(d)


def _normal_equations(features: np.ndarray, targets: np.ndarray, lam: float) -> np.ndarray:
    gram = features.T @ features / features.shape[0] + lam * np.eye(features.shape[1])
    rhs = features.T @ targets / features.shape[0]
    return np.linalg.solve(gram, rhs)


def solve_optimum(shards: Sequence[UserShard], lam: float) -> tuple[np.ndarray, float]:
    """Exact minimizer of the global objective and its loss value.

    Solves the normal equations of the averaged objective. With lam = 0 the
    averaged Gram matrix must be full rank.
    """
    hess = hessian(shards, lam)
    if lam == 0:
        eigs = np.linalg.eigvalsh(hess)
        if eigs[0] <= 1e-12 * max(eigs[-1], 1.0):
            raise ValueError("singular normal equations with lam=0; add regularization")
    rhs = np.mean(
        [shard.features.T @ shard.targets / len(shard) for shard in shards], axis=0
    )
    theta_star = np.linalg.solve(hess, rhs)
    return theta_star, global_loss(theta_star, shards, lam)


@dataclass(frozen=True)
class ProbeBall:
    """Ball of model vectors over which the gradient-moment bounds are taken."""

    center: np.ndarray
    radius: float
    count: int = 32

    def __post_init__(self):
        object.__setattr__(self, "center", as_model_vector(self.center))
        if self.radius < 0:
            raise ValueError("probe radius must be non-negative")
        if self.count < 1:
            raise ValueError("probe count must be >= 1")

    def points(self, rng: np.random.Generator) -> np.ndarray:
        """Sample probe points uniformly in the ball, pinning a quarter of them
        to the shell where gradient norms peak, plus the center itself."""
        d = self.center.shape[0]
        directions = rng.standard_normal((self.count, d))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        directions /= norms
        radii = self.radius * rng.random(self.count) ** (1.0 / d)
        radii[: self.count // 4] = self.radius
        return np.vstack([self.center, self.center + radii[:, None] * directions])


def estimate_constants(
    shards: Sequence[UserShard],
    lam: float,
    probe_region: ProbeBall | np.ndarray,
    rng: np.random.Generator | None = None,
    *,
    H: int,
    P: float,
    sigma_w2: float,
    safety: float = 1.1,
) -> ProblemConstants:
    """Estimate the constants entering the convergence bounds.

    L and mu are the extreme eigenvalues of the exact (theta-independent)
    Hessian. G2 is the largest empirical second moment of per-sample gradients
    over the probe points and users, inflated by `safety`; Mn2 is the analogous
    per-user gradient variance. Gamma is computed exactly from the per-user
    closed-form optima. H, P and sigma_w2 are passed through into the record.
    """
    if len(shards) == 0:
        raise ValueError("need at least one user shard")
    if lam <= 0:
        raise ValueError("constant estimation requires lam > 0")
    if isinstance(probe_region, ProbeBall):
        if rng is None:
            raise ValueError("a probe ball needs an rng to draw points from")
        probes = probe_region.points(rng)
    else:
        probes = np.ascontiguousarray(probe_region, dtype=np.float64)
        if probes.ndim != 2 or probes.shape[0] == 0:
            raise ValueError("probe_region must be a non-empty (n, d) array")

    hess = hessian(shards, lam)
    try:
        eigs = np.linalg.eigvalsh(hess)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - numerically exotic
        raise ValueError(f"eigenvalue solver failed on the objective Hessian: {exc}")
    mu, smoothness = float(eigs[0]), float(eigs[-1])

    n_users = len(shards)
    g2 = 0.0
    mn2 = np.zeros(n_users)
    for n, shard in enumerate(shards):
        features, targets = shard.features, shard.targets
        sq_feature_norms = np.einsum("ij,ij->i", features, features)
        for theta in probes:
            residuals = features @ theta - targets
            projections = features @ theta
            theta_sq = theta @ theta
            # mean_i || r_i x_i + lam theta ||^2, expanded to avoid (D, d) temporaries
            second_moment = float(
                np.mean(
                    residuals * residuals * sq_feature_norms
                    + 2.0 * lam * residuals * projections
                )
                + lam * lam * theta_sq
            )
            mean_grad = features.T @ residuals / len(shard) + lam * theta
            variance = max(second_moment - float(mean_grad @ mean_grad), 0.0)
            g2 = max(g2, second_moment)
            mn2[n] = max(mn2[n], variance)

    _, f_star = solve_optimum(shards, lam)
    local_minima = []
    for shard in shards:
        theta_n = _normal_equations(shard.features, shard.targets, lam)
        local_minima.append(_shard_loss(theta_n, shard, lam))
    gamma = max(f_star - float(np.mean(local_minima)), 0.0)

    return ProblemConstants(
        L=smoothness,
        mu=mu,
        G2=safety * g2,
        Mn2=safety * mn2,
        Gamma=gamma,
        d=shards[0].feature_dim,
        N=n_users,
        H=H,
        P=P,
        sigma_w2=sigma_w2,
    )
