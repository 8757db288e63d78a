"""Parameterised function families: the stochastic encoder ``phi(X, eps)``,
the policy/value heads, and the MINE statistics network ``T(X, Z)``.

Parameters live in plain dicts of leaf :class:`~svib.autodiff.Tensor`
objects so optimisers, checkpoints and finite-difference checks can treat
every family the same way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DimensionError, NumericDomainError

ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu}


@dataclass
class MLP:
    """Fully connected network ``x -> act(x W0 + b0) -> ... -> x Wk + bk``."""

    weights: list
    biases: list
    activation: str = "tanh"

    @classmethod
    def init(cls, sizes, rng, activation="tanh", out_scale=1.0):
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if i == len(sizes) - 2:
                w = w * out_scale
            weights.append(Tensor(w, requires_grad=True))
            biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
        return cls(weights, biases, activation)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def __call__(self, x):
        act = ACTIVATIONS[self.activation]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.matmul(h, w) + b
            if i < last:
                h = act(h)
        return h

    def named_parameters(self, prefix):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.{i}.weight"] = w
            out[f"{prefix}.{i}.bias"] = b
        return out


def _check_batch(x, dim, name):
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionError(f"{name} must have shape [batch x {dim}], got {x.shape}")


# --- encoder ----------------------------------------------------------------


@dataclass
class EncoderParams:
    """Weights of the map ``(X, eps) -> Z``; noise enters by concatenation."""

    net: MLP
    d_x: int
    d_noise: int
    d_z: int
    noise_var: float

    def __post_init__(self):
        if self.d_z >= self.d_x:
            raise ContractError(f"d_z ({self.d_z}) must be smaller than d_x ({self.d_x})")
        if self.noise_var <= 0:
            raise ContractError("noise variance must be positive")

    def parameters(self):
        return self.net.named_parameters("encoder")


def make_encoder(d_x, d_z, rng, d_noise=8, noise_var=0.1, hidden=(64, 64)):
    net = MLP.init([d_x + d_noise, *hidden, d_z], rng, activation="tanh")
    return EncoderParams(net, d_x, d_noise, d_z, noise_var)


def sample_noise(phi, count, rng, stochastic=True):
    if not stochastic:
        return np.zeros((count, phi.d_noise))
    return rng.normal(0.0, np.sqrt(phi.noise_var), size=(count, phi.d_noise))


def encode(phi, x, eps):
    """``Z = phi(x, eps)`` for a batch; both inputs are row-aligned."""
    x = ad.constant(x)
    _check_batch(x, phi.d_x, "x")
    eps = ad.constant(eps)
    if eps.shape != (x.shape[0], phi.d_noise):
        raise DimensionError(f"eps must have shape {(x.shape[0], phi.d_noise)}, got {eps.shape}")
    return phi.net(ad.concat([x, eps], axis=1))


@dataclass
class ParticleSet:
    """``M`` representation samples of one source state, still on the tape."""

    particles: Tensor
    source: np.ndarray
    eps: np.ndarray

    @property
    def m(self):
        return self.particles.shape[0]

    @property
    def values(self):
        return self.particles.data


def encode_particles(phi, x, m, rng, stochastic=True):
    """Draw ``m`` reparameterised samples ``Z_i = phi(x, eps_i)`` for one state."""
    if m < 1:
        raise ContractError("need at least one particle")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != phi.d_x:
        raise DimensionError(f"state has dimension {x.shape[0]}, encoder expects {phi.d_x}")
    eps = sample_noise(phi, m, rng, stochastic)
    z = encode(phi, np.broadcast_to(x, (m, phi.d_x)), eps)
    return ParticleSet(z, x, eps)


def encode_batch(phi, xs, m, rng, stochastic=True):
    """Particles for a batch of states, stacked state-major into ``[B*m, d_z]``.

    Rows ``b*m : (b+1)*m`` belong to state ``b``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    _check_batch(xs, phi.d_x, "states")
    rep = np.repeat(xs, m, axis=0)
    eps = sample_noise(phi, rep.shape[0], rng, stochastic)
    return encode(phi, rep, eps)


# --- policy / value heads ---------------------------------------------------


@dataclass
class PolicyValueParams:
    trunk: MLP
    policy: MLP
    value: MLP
    d_z: int
    n_actions: int

    def parameters(self):
        out = {}
        out.update(self.trunk.named_parameters("trunk"))
        out.update(self.policy.named_parameters("policy"))
        out.update(self.value.named_parameters("value"))
        return out


def make_policy_value(d_z, n_actions, rng, hidden=(64, 64)):
    # policy_value applies tanh to the trunk output before the heads
    trunk = MLP.init([d_z, *hidden], rng, activation="tanh")
    policy = MLP.init([hidden[-1], n_actions], rng, out_scale=0.01)
    value = MLP.init([hidden[-1], 1], rng)
    return PolicyValueParams(trunk, policy, value, d_z, n_actions)


def policy_value(theta, z):
    """Return ``(log_probs [B x A], values [B])`` for representations ``z``."""
    z = ad.constant(z)
    if z.ndim == 1:
        z = ad.reshape(z, (1, -1))
    _check_batch(z, theta.d_z, "z")
    h = ad.tanh(theta.trunk(z))
    logits = theta.policy(h)
    if not np.all(np.isfinite(logits.data)):
        raise NumericDomainError("policy logits are not finite")
    values = ad.reshape(theta.value(h), (-1,))
    return ad.log_softmax(logits), values


def entropy(log_probs):
    """Per-row entropy ``-sum p log p`` of a batch of log-distributions."""
    return ad.neg(ad.sum(ad.mul(ad.exp(log_probs), log_probs), axis=-1))


# --- statistics network -----------------------------------------------------


@dataclass
class StatisticsNetParams:
    net: MLP
    d_x: int
    d_z: int

    def parameters(self):
        return self.net.named_parameters("statistic")


def make_statistics_net(d_x, d_z, rng, hidden=128):
    net = MLP.init([d_x + d_z, hidden, 1], rng, activation="relu")
    return StatisticsNetParams(net, d_x, d_z)


def statistic(eta, x, z):
    """``T(x, z; eta)`` evaluated row-wise, shape ``[B]``."""
    x, z = ad.constant(x), ad.constant(z)
    _check_batch(x, eta.d_x, "x")
    _check_batch(z, eta.d_z, "z")
    if x.shape[0] != z.shape[0]:
        raise DimensionError(f"x and z batch sizes differ: {x.shape[0]} vs {z.shape[0]}")
    return ad.reshape(eta.net(ad.concat([x, z], axis=1)), (-1,))


# --- checkpoints --------------------------------------------------------------

CHECKPOINT_FORMAT = "svib.checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, arrays, meta=None):
    """Write named float arrays as JSON (see ``docs/formats.md``)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "arrays": [
            {"name": name, "shape": list(np.shape(a)), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
            for name, a in arrays.items()
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, separators=(",", ":")))
    return path


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    arrays = {}
    for entry in payload["arrays"]:
        arrays[entry["name"]] = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return arrays, payload.get("meta", {})


def assign(params, arrays):
    """Copy arrays into a parameter dict in place, checking shapes."""
    for name, t in params.items():
        if name not in arrays:
            raise KeyError(f"checkpoint lacks parameter {name}")
        if arrays[name].shape != t.shape:
            raise DimensionError(f"{name}: checkpoint shape {arrays[name].shape} != {t.shape}")
        t.data = arrays[name].copy()
