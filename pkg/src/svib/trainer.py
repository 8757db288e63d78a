"""Training loop for the four variants.

``vanilla_a2c`` and ``a2c_noise`` update the encoder by plain backprop of
the A2C objective through a single path; the ``svib_*`` variants move the
encoder along the Stein direction of ``M`` particles per state. All
variants share the encoder constructor; vanilla only switches its noise off.
"""

from __future__ import annotations

import collections
import datetime
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .envs import VectorEnv, make_env
from .errors import TrainingError
from .mine import MIRecord, standardize, train_probe
from .networks import (
    assign,
    encode_batch,
    load_checkpoint,
    make_encoder,
    make_policy_value,
    policy_value,
    save_checkpoint,
)
from .optim import make_optimizer
from .rl import RolloutBatch, a2c_loss, nstep_returns
from .svgd import (
    fit_gaussian_prior,
    log_prior_grad,
    median_bandwidth_batched,
    phi_gradient,
    svgd_direction_batched,
    zeta,
)

SCHEMA_VERSION = 1


@dataclass
class TrainState:
    config: object
    theta: object
    phi: object
    opt_theta: object
    opt_phi: object
    envs: VectorEnv
    rngs: dict
    update: int = 0
    obs: np.ndarray | None = None
    running: np.ndarray | None = None
    recent_returns: collections.deque = field(default_factory=collections.deque)
    episodes: int = 0
    pool: collections.deque = field(default_factory=collections.deque)
    sink: object = None

    def arrays(self):
        """Parameters and optimiser accumulators keyed for a checkpoint."""
        out = {}
        for prefix, params, opt in (("theta", self.theta.parameters(), self.opt_theta), ("phi", self.phi.parameters(), self.opt_phi)):
            for name, p in params.items():
                out[f"{prefix}/{name}"] = p.data
            for name, a in opt.state_arrays().items():
                out[f"{prefix}_opt/{name}"] = a
        return out

    def param_hash(self):
        h = hashlib.sha256()
        for name, a in sorted(self.arrays().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()


def _env_factory(cfg, seed):
    e = cfg.env
    kwargs = {"horizon": e.horizon}
    return lambda: make_env(e.name, d_pad=e.d_pad, noise_scale=e.noise_scale, mix=e.mix, mix_seed=seed, **kwargs)


def init_state(config, sink=None):
    """Fresh parameters, optimisers, environments and RNG streams for ``config.seed``."""
    root = np.random.SeedSequence(config.seed)
    init_ss, act_ss, noise_ss, env_ss = root.spawn(4)
    init_rng = np.random.default_rng(init_ss)
    env_seeds = env_ss.generate_state(config.optim.num_envs).tolist()
    envs = VectorEnv(_env_factory(config, config.seed), env_seeds)
    m = config.model
    phi = make_encoder(envs.d_obs, m.d_z, init_rng, d_noise=m.noise_dim, noise_var=m.noise_var, hidden=tuple(m.encoder_hidden))
    theta = make_policy_value(m.d_z, envs.n_actions, init_rng, hidden=tuple(m.head_hidden))
    o = config.optim
    phi_lr = config.svgd.step_size if config.is_svib else o.lr
    state = TrainState(
        config=config,
        theta=theta,
        phi=phi,
        opt_theta=make_optimizer(o.optimizer, theta.parameters(), o.lr),
        opt_phi=make_optimizer(o.optimizer, phi.parameters(), phi_lr),
        envs=envs,
        rngs={"act": np.random.default_rng(act_ss), "noise": np.random.default_rng(noise_ss)},
        recent_returns=collections.deque(maxlen=o.return_window),
        pool=collections.deque(maxlen=o.probe_pool),
        sink=sink,
    )
    state.obs = envs.reset()
    state.running = np.zeros(len(envs))
    return state


def act(state, obs, greedy=False):
    """One particle per decision; returns actions and their probabilities."""
    with ad.no_grad():
        z = encode_batch(state.phi, obs, 1, state.rngs["noise"], state.config.stochastic_encoder)
        log_probs, _ = policy_value(state.theta, z)
    probs = np.exp(log_probs.data)
    if greedy:
        return probs.argmax(axis=1), probs
    u = state.rngs["act"].random(len(obs))[:, None]
    actions = (probs.cumsum(axis=1) < u).sum(axis=1)
    return np.minimum(actions, probs.shape[1] - 1), probs


def values_of(state, obs):
    with ad.no_grad():
        z = encode_batch(state.phi, obs, 1, state.rngs["noise"], state.config.stochastic_encoder)
        _, v = policy_value(state.theta, z)
    return v.data.copy()


def rollout(state, k_envs=None, horizon=None, greedy=False):
    """Collect ``horizon`` steps from the first ``k_envs`` environments."""
    cfg = state.config
    k = len(state.envs) if k_envs is None else k_envs
    horizon = cfg.optim.rollout_length if horizon is None else horizon
    if k != len(state.envs):
        state.envs.envs = state.envs.envs[:k]
        state.envs.seed_rngs = state.envs.seed_rngs[:k]
        state.obs, state.running = state.obs[:k], state.running[:k]
    obs_l, act_l, rew_l, done_l, trunc_l, final_l, finished = [], [], [], [], [], [], []
    for _ in range(horizon):
        actions, _ = act(state, state.obs, greedy)
        nxt, rewards, dones, truncs, final = state.envs.step(actions)
        obs_l.append(state.obs)
        act_l.append(actions)
        rew_l.append(rewards)
        done_l.append(dones)
        trunc_l.append(truncs)
        final_l.append(final)
        state.running += rewards
        for i in np.flatnonzero(dones):
            finished.append(float(state.running[i]))
            state.running[i] = 0.0
        state.obs = nxt
    obs = np.stack(obs_l)
    boot = values_of(state, np.concatenate(final_l)).reshape(horizon, k)
    returns = nstep_returns(np.stack(rew_l), np.stack(done_l), boot, cfg.rl.gamma, cfg.rl.n_steps, np.stack(trunc_l))
    flat = lambda a: a.reshape(horizon * k, *a.shape[2:])
    return RolloutBatch(
        obs=flat(obs),
        actions=flat(np.stack(act_l)),
        rewards=flat(np.stack(rew_l)),
        dones=flat(np.stack(done_l)),
        truncated=flat(np.stack(trunc_l)),
        bootstrap_values=flat(boot),
        returns=flat(returns),
        episode_returns=finished,
    )


def _grads(params):
    return {n: (p.grad.copy() if p.grad is not None else np.zeros(p.shape)) for n, p in params.items()}


def _check_finite(term, grads):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {term} ({name})")


def backprop_gradients(state, batch):
    """Single-path gradients of ``J`` for ``theta`` and ``phi`` (vanilla / noise variants)."""
    cfg = state.config
    tp, pp = state.theta.parameters(), state.phi.parameters()
    z = encode_batch(state.phi, batch.obs, 1, state.rngs["noise"], cfg.stochastic_encoder)
    J, _, diag = a2c_loss(state.theta, z, batch.actions, batch.returns, cfg.rl, m=1)
    ad.zero_grad(list(tp.values()) + list(pp.values()))
    ad.backward(J)
    return _grads(tp), _grads(pp), diag


def svib_gradients(state, batch):
    """``theta`` gradient of the particle-averaged ``J`` and the Stein ``phi`` gradient."""
    cfg = state.config
    M, beta = cfg.svgd.num_particles, cfg.svgd.beta
    tp, pp = state.theta.parameters(), state.phi.parameters()
    B = len(batch)
    z_tape = encode_batch(state.phi, batch.obs, M, state.rngs["noise"], True)
    z_leaf = ad.Tensor(z_tape.data.copy(), requires_grad=True)
    J, _, diag = a2c_loss(state.theta, z_leaf, batch.actions, batch.returns, cfg.rl, m=M)
    ad.zero_grad(list(tp.values()))
    ad.backward(J)
    theta_grads = _grads(tp)
    # J is the mean over B*M particles, so rescale to per-particle gradients
    grad_j = z_leaf.grad.reshape(B, M, -1) * (B * M)
    _check_finite("grad_Z J", {"z": grad_j})
    z = z_tape.data.reshape(B, M, -1)
    g = grad_j / beta
    if cfg.variant == "svib_gaussian":
        for b in range(B):
            score = log_prior_grad(fit_gaussian_prior(z[b]), z[b])
            g[b] += zeta(g[b], score, cfg.svgd.zeta_scale) * score
    directions = svgd_direction_batched(z, g, median_bandwidth_batched(z))
    _check_finite("stein direction", {"phi": directions})
    phi_grads = phi_gradient(z_tape, directions.reshape(B * M, -1), pp)
    return theta_grads, phi_grads, diag


def train_step(state, batch):
    """Simultaneous ``phi`` and ``theta`` update from one pre-update snapshot."""
    if state.config.is_svib:
        theta_grads, phi_grads, diag = svib_gradients(state, batch)
    else:
        theta_grads, phi_grads, diag = backprop_gradients(state, batch)
    _check_finite("theta gradient", theta_grads)
    _check_finite("phi gradient", phi_grads)
    state.opt_phi.step(phi_grads)
    state.opt_theta.step(theta_grads)
    state.update += 1
    return state, diag


# --- probes / persistence ---------------------------------------------------


def probe_mi(state, rng):
    """Fit a fresh statistics network on recent states and their current codes."""
    cfg = state.config
    x = np.asarray(state.pool)
    with ad.no_grad():
        z = encode_batch(state.phi, x, 1, rng, cfg.stochastic_encoder).data
    xs, zs = standardize(x), standardize(z)
    half = len(x) // 2
    _, record = train_probe(cfg.probe, xs[:half], zs[:half], rng, eval_x=xs[half:], eval_z=zs[half:], update=state.update)
    return record, x, z


def _dumps(record):
    return json.dumps(record, allow_nan=True)


def _emit(state, record):
    if state.sink is not None:
        state.sink.write(_dumps(record) + "\n")
        state.sink.flush()


def train_record(state, diag):
    recent = list(state.recent_returns)
    full = len(recent) == state.recent_returns.maxlen
    return {
        "schema": SCHEMA_VERSION,
        "record_type": "train",
        "update": state.update,
        "seed": state.config.seed,
        "variant": state.config.variant,
        "mean_return": float(np.mean(recent)) if full else None,
        "episodes": state.episodes,
        **diag,
    }


def save_state(state, path):
    meta = {"update": state.update, "seed": state.config.seed, "variant": state.config.variant}
    return save_checkpoint(path, state.arrays(), meta)


def restore_state(state, path):
    arrays, meta = load_checkpoint(path)
    for prefix, params in (("theta", state.theta.parameters()), ("phi", state.phi.parameters())):
        assign(params, {k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith(prefix + "/")})
    state.update = int(meta["update"])
    return state


@dataclass
class TrainResult:
    state: TrainState
    metrics: list
    mi_records: list
    checkpoints: list
    run_dir: Path | None = None


def runs_root():
    return Path(os.environ.get("SVIB_RUNS_DIR", "runs"))


def run_dir_for(config, root=None):
    root = runs_root() if root is None else Path(root)
    return root / config.config_hash() / str(config.seed)


def write_manifest(config, run_dir):
    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "variant": config.variant,
        "code_version": __version__,
        "config": config.to_dict(),
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = Path(run_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _probe_rng(config, update):
    # depends only on (seed, update) so probes never perturb training
    return np.random.default_rng(np.random.SeedSequence([config.seed, update, 0x5EED]))


def train(config, run_dir=None, save_pairs=False, progress=None):
    """Run ``config.optim.total_updates`` updates.

    With ``run_dir`` the metrics JSONL, checkpoints and manifest are written
    there; without it everything stays in memory. MI probes fire every
    ``probe.interval`` updates once the state pool holds enough states.
    """
    cfg = config
    sink = None
    ckpt_dir = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        ckpt_dir = run_dir / "checkpoints"
        try:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            write_manifest(cfg, run_dir)
            sink = open(run_dir / "metrics.jsonl", "w")
        except OSError as exc:
            raise OSError(f"cannot prepare run directory {run_dir}: {exc}") from exc
    metrics, mi_records, checkpoints = [], [], []

    def checkpoint(state):
        if ckpt_dir is not None:
            checkpoints.append(save_state(state, ckpt_dir / f"update_{state.update:07d}.json"))
        else:
            checkpoints.append(state.param_hash())

    try:
        state = init_state(cfg, sink)
        checkpoint(state)
        for _ in range(cfg.optim.total_updates):
            batch = rollout(state)
            state.pool.extend(batch.obs)
            state.recent_returns.extend(batch.episode_returns)
            state.episodes += len(batch.episode_returns)
            state, diag = train_step(state, batch)
            rec = train_record(state, diag)
            metrics.append(rec)
            _emit(state, rec)
            if state.update % cfg.probe.interval == 0 and len(state.pool) >= 4:
                record, x, z = probe_mi(state, _probe_rng(cfg, state.update))
                mi_records.append(record)
                row = {"schema": SCHEMA_VERSION, **record.to_json(), "seed": cfg.seed, "variant": cfg.variant}
                metrics.append(row)
                _emit(state, row)
                if save_pairs and run_dir is not None:
                    np.savez(run_dir / f"pairs_{state.update:07d}.npz", x=x, z=z)
            if state.update % cfg.optim.checkpoint_every == 0:
                checkpoint(state)
            if progress is not None:
                progress(state, rec)
    finally:
        if sink is not None:
            sink.close()
    return TrainResult(state, metrics, mi_records, checkpoints, run_dir)


def updates_to_threshold(metrics, threshold=0.9):
    """First update whose windowed mean return reaches ``threshold`` (``inf`` if never)."""
    for rec in metrics:
        if rec.get("record_type") == "train" and rec.get("mean_return") is not None and rec["mean_return"] >= threshold:
            return rec["update"]
    return float("inf")


def mi_trace(metrics):
    return [MIRecord(r["update"], r["mi_nats"], r["steps"], r["batch_size"]) for r in metrics if r.get("record_type") == "mi_probe"]
