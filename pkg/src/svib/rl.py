"""A2C pieces: n-step bootstrapped returns and the per-particle objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError
from .networks import entropy, policy_value


@dataclass
class RLCoefficients:
    gamma: float = 0.99
    n_steps: int = 5
    value_coef: float = 0.5
    entropy_coef: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ContractError("gamma must lie in [0, 1)")
        if self.n_steps < 1:
            raise ContractError("n_steps must be at least 1")
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise ContractError("loss coefficients must be non-negative")


@dataclass
class RolloutBatch:
    """Transitions flattened time-major from ``[horizon, k_envs]``."""

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    truncated: np.ndarray
    bootstrap_values: np.ndarray
    returns: np.ndarray
    episode_returns: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.obs)
        for name in ("actions", "rewards", "dones", "truncated", "bootstrap_values", "returns"):
            if len(getattr(self, name)) != n:
                raise DimensionError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if not np.all(np.isfinite(self.returns)):
            raise ContractError("returns must be finite")

    def __len__(self):
        return len(self.obs)


def nstep_returns(rewards, dones, bootstrap_values, gamma, n, truncated=None):
    """``R_t = sum_{i=0}^{n-2} gamma^i r_{t+i} + gamma^{n-1} V_{t+n-1}``.

    ``bootstrap_values[t]`` is the value of the state reached by transition
    ``t``. A window stops early at the end of the rollout, at a horizon
    truncation (bootstrapping from the truncated state) or at a true
    terminal (no bootstrap). ``n`` counts as in the formula above, so a
    window holds ``n - 1`` rewards; ``n = 1`` is treated like ``n = 2``.
    Arrays may be ``[T]`` or time-major ``[T, k]``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    boot = np.asarray(bootstrap_values, dtype=np.float64)
    trunc = np.zeros_like(dones) if truncated is None else np.asarray(truncated, dtype=bool)
    if not (rewards.shape == dones.shape == boot.shape == trunc.shape):
        raise DimensionError(
            f"misaligned arrays: rewards {rewards.shape}, dones {dones.shape}, "
            f"bootstrap {boot.shape}, truncated {trunc.shape}"
        )
    if rewards.ndim == 2:
        cols = [nstep_returns(rewards[:, j], dones[:, j], boot[:, j], gamma, n, trunc[:, j]) for j in range(rewards.shape[1])]
        return np.stack(cols, axis=1)
    width = max(n - 1, 1)
    T = len(rewards)
    out = np.empty(T)
    for t in range(T):
        total, disc = 0.0, 1.0
        for i in range(t, min(t + width, T)):
            total += disc * rewards[i]
            disc *= gamma
            if dones[i] and not trunc[i]:
                break
            if trunc[i] or i == t + width - 1 or i == T - 1:
                total += disc * boot[i]
                break
        out[t] = total
    return out


def a2c_loss(theta, z, actions, returns, coeffs, m=1):
    """A2C objective ``J`` (to be maximised) averaged over states and particles.

    ``z`` holds ``m`` particles per state stacked state-major. Per particle

        J_i = log pi(a|z_i) * A - value_coef * (R - V(z_i))^2 + entropy_coef * H(pi(.|z_i))

    with the advantage ``A = R - mean_j V(z_j)`` held constant.

    Returns ``(J, per_particle, diagnostics)``.
    """
    actions = np.asarray(actions, dtype=np.int64)
    returns = np.asarray(returns, dtype=np.float64)
    if len(actions) == 0:
        raise ContractError("empty batch")
    if len(actions) != len(returns):
        raise DimensionError("actions and returns differ in length")
    z = ad.constant(z)
    if z.shape[0] != len(actions) * m:
        raise DimensionError(f"expected {len(actions) * m} particles, got {z.shape[0]}")

    log_probs, values = policy_value(theta, z)
    acts = np.repeat(actions, m)
    rets = np.repeat(returns, m)
    baseline = values.data.reshape(-1, m).mean(axis=1)
    adv = np.repeat(returns - baseline, m)

    logp = ad.pick(log_probs, acts)
    err = ad.square(ad.sub(rets, values))
    ent = entropy(log_probs)
    per = ad.mul(logp, adv) - ad.mul(err, coeffs.value_coef) + ad.mul(ent, coeffs.entropy_coef)
    J = ad.mean(per)
    diagnostics = {
        "policy_loss": float(-(logp.data * adv).mean()),
        "value_loss": float(err.data.mean()),
        "entropy": float(ent.data.mean()),
        "objective": float(J.data),
    }
    return J, per, diagnostics


def theta_gradient(J, theta):
    """``dJ/dtheta`` by a backward pass; returns a dict keyed like ``theta.parameters()``."""
    params = theta.parameters()
    for p in params.values():
        p.grad = None
    ad.backward(J)
    return {name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape)) for name, p in params.items()}
