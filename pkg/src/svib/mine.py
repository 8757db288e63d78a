"""Mutual information neural estimation with the shuffle estimator.

    I(X; Z) >= mean_i T(x_i, z_i) - log mean_i exp T(x_i, z_pi(i))

where ``pi`` is a uniformly random permutation (fixed points allowed), so
the shuffled pairs stand in for samples from ``P(X) x P(Z)``. Values are in
nats.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, NumericDomainError
from .networks import encode_batch, make_statistics_net, statistic
from .optim import RMSProp
from .rl import a2c_loss


@dataclass
class ProbeConfig:
    interval: int = 2000
    batch_size: int = 64
    steps: int = 256
    lr: float = 7e-4
    reinitialize: bool = True
    hidden: int = 128

    def __post_init__(self):
        for name in ("interval", "batch_size", "steps", "hidden"):
            if getattr(self, name) <= 0:
                raise ContractError(f"probe {name} must be positive")
        if self.lr <= 0:
            raise ContractError("probe lr must be positive")


@dataclass
class MIRecord:
    update: int
    mi_nats: float
    steps: int
    batch_size: int

    def to_json(self):
        return {"record_type": "mi_probe", **asdict(self)}


def mine_lower_bound(eta, x, z, perm):
    """Shuffle estimator as a tape scalar, differentiable in ``eta`` (and ``x``, ``z``)."""
    n = x.shape[0]
    if n < 2:
        raise ContractError("MINE needs at least two pairs")
    z = ad.constant(z)
    joint = statistic(eta, x, z)
    marg = statistic(eta, x, ad.take_rows(z, perm))
    return ad.mean(joint) - (ad.logsumexp(marg, axis=0) - np.log(n))


def mine_estimate(eta, x, z, rng=None, perm=None):
    """Estimate ``I(X; Z)`` in nats on a batch of pairs."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[0] < 2:
        raise ContractError("MINE needs at least two pairs")
    if perm is None:
        perm = (rng or np.random.default_rng()).permutation(x.shape[0])
    return float(mine_lower_bound(eta, x, z, perm).data)


def standardize(a):
    """Zero-mean, unit-variance columns; constant columns are only centred.

    Mutual information is unchanged by invertible per-coordinate affine maps,
    and the statistics network trains far better on unit-scale inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    sd = a.std(axis=0)
    return (a - a.mean(axis=0)) / np.where(sd > 1e-8, sd, 1.0)


def train_probe(config, x, z, rng, eta=None, eval_x=None, eval_z=None, update=0):
    """Fit ``T`` by gradient ascent on minibatches of the pair pool.

    Each step draws ``batch_size`` pairs (the whole pool if smaller) and a
    fresh shuffle. The returned estimate is evaluated on ``eval_x/eval_z``
    (default: the whole pool) with one more shuffle.
    """
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if len(x) == 0:
        raise ContractError("no pairs to train the probe on")
    if eta is None or config.reinitialize:
        eta = make_statistics_net(x.shape[1], z.shape[1], rng, hidden=config.hidden)
    params = eta.parameters()
    opt = RMSProp(params, config.lr)
    n = min(config.batch_size, len(x))
    for _ in range(config.steps):
        idx = rng.choice(len(x), size=n, replace=False) if len(x) > n else np.arange(len(x))
        bound = mine_lower_bound(eta, x[idx], z[idx], rng.permutation(n))
        for p in params.values():
            p.grad = None
        ad.backward(bound)
        opt.step({k: p.grad for k, p in params.items()})
    ex = x if eval_x is None else np.asarray(eval_x, dtype=np.float64)
    ez = z if eval_z is None else np.asarray(eval_z, dtype=np.float64)
    estimate = mine_estimate(eta, ex, ez, perm=rng.permutation(len(ex)))
    return eta, MIRecord(update, estimate, config.steps, n)


def ec_trace(records):
    """Summarise an extraction-compression trace of :class:`MIRecord` objects."""
    if len(records) < 3:
        raise ContractError("need at least three MI records")
    values = np.array([r.mi_nats for r in records])
    peak = int(np.argmax(values))
    final = float(values[-1])
    compressed = peak < len(values) - 1 and final < values[peak]
    return {
        "peak_index": peak,
        "peak_step": records[peak].update,
        "peak_value": float(values[peak]),
        "final_value": final,
        "rose": bool(peak > 0 and values[peak] > values[0]),
        "compressed": bool(compressed),
        "note": "extraction then compression" if compressed else "no compression observed",
    }


# --- direct optimisation (experimental) ---------------------------------------


def mine_direct_objective(eta, x, z, per_sample_j, beta, perm):
    """``-beta mean T(x,z) + beta log mean exp(T(x, z') + J(z') / beta)`` on a batch.

    ``z'`` and ``J(z')`` are the shuffled representations and their own
    per-sample objectives. Evaluated with log-sum-exp, so large ``J / beta``
    cannot overflow.
    """
    n = x.shape[0]
    if n < 2:
        raise ContractError("need at least two pairs")
    z = ad.constant(z)
    j = ad.constant(per_sample_j)
    joint = statistic(eta, x, z)
    inner = statistic(eta, x, ad.take_rows(z, perm)) + ad.take_rows(j, perm) * (1.0 / beta)
    return ad.mean(joint) * (-beta) + (ad.logsumexp(inner, axis=0) - np.log(n)) * beta


def mine_direct_update(theta, phi, eta, batch, coeffs, beta, lr, rng):
    """One max-min step: ascend ``(theta, phi)``, descend ``eta``.

    Uses one particle per state. Returns the objective value before the step.
    """
    z = encode_batch(phi, batch.obs, 1, rng)
    _, per, _ = a2c_loss(theta, z, batch.actions, batch.returns, coeffs, m=1)
    perm = rng.permutation(len(batch))
    obj = mine_direct_objective(eta, batch.obs, z, per, beta, perm)
    groups = [theta.parameters(), phi.parameters(), eta.parameters()]
    for params in groups:
        for p in params.values():
            p.grad = None
    ad.backward(obj)
    for sign, params in zip((1.0, 1.0, -1.0), groups):
        for p in params.values():
            if p.grad is not None:
                p.data = p.data + sign * lr * p.grad
    if not all(np.all(np.isfinite(p.data)) for params in groups for p in params.values()):
        raise NumericDomainError("mine_direct_update produced non-finite parameters")
    return float(obj.data)
