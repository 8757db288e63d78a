import json

import numpy as np
import pytest

from svib import autodiff as ad
from svib import trainer
from svib.errors import TrainingError
from svib.networks import encode_batch, make_encoder
from svib.rl import a2c_loss, nstep_returns

GOLDEN_ONE_STEP = "db96d566bddc7571c2ee7c9559e342395486efc21a8187f71f136e141cdca23b"


def test_minimal_rollout(tiny_config):
    state = trainer.init_state(tiny_config())
    batch = trainer.rollout(state, k_envs=1, horizon=1)
    assert len(batch) == 1 and batch.obs.shape == (1, 35)


def test_rollout_returns_match_rl_core(tiny_config):
    state = trainer.init_state(tiny_config())
    batch = trainer.rollout(state, horizon=6)
    k = 2
    shape = (6, k)
    expected = nstep_returns(
        batch.rewards.reshape(shape), batch.dones.reshape(shape), batch.bootstrap_values.reshape(shape),
        0.99, 5, batch.truncated.reshape(shape),
    )
    np.testing.assert_array_equal(batch.returns, expected.ravel())


def test_greedy_deterministic_rollout(tiny_config):
    cfg = tiny_config("vanilla_a2c")
    cfg.env.d_pad = 0
    batches = [trainer.rollout(trainer.init_state(cfg), horizon=8, greedy=True) for _ in range(2)]
    for name in ("obs", "actions", "rewards", "returns"):
        assert np.array_equal(getattr(batches[0], name), getattr(batches[1], name))


def test_zero_learning_rate_is_null_update(tiny_config):
    for variant in ("vanilla_a2c", "svib_gaussian"):
        cfg = tiny_config(variant, lr=0.0)
        cfg.svgd.step_size = 0.0 if cfg.is_svib else cfg.svgd.step_size
        state = trainer.init_state(cfg)
        before = {k: p.data.copy() for k, p in {**state.theta.parameters(), **state.phi.parameters()}.items()}
        trainer.train_step(state, trainer.rollout(state))
        after = {**state.theta.parameters(), **state.phi.parameters()}
        assert state.update == 1
        assert all(np.array_equal(before[k], after[k].data) for k in before)


def test_svib_single_particle_reduces_to_scaled_backprop(tiny_config):
    cfg = tiny_config("svib_uniform")
    cfg.svgd.num_particles = 1
    cfg.svgd.beta = 0.05
    state = trainer.init_state(cfg)
    batch = trainer.rollout(state, horizon=4)
    state.rngs["noise"] = np.random.default_rng(42)
    _, phi_grads, _ = trainer.svib_gradients(state, batch)
    pp = state.phi.parameters()
    z = encode_batch(state.phi, batch.obs, 1, np.random.default_rng(42), True)
    J, _, _ = a2c_loss(state.theta, z, batch.actions, batch.returns, cfg.rl)
    ad.zero_grad(list(pp.values()))
    ad.backward(J * (1.0 / cfg.svgd.beta))
    for name, p in pp.items():
        denom = max(np.abs(p.grad).max(), 1e-300)
        assert np.abs(phi_grads[name] - p.grad).max() / denom < 1e-6


def test_svib_large_beta_finite(tiny_config):
    cfg = tiny_config("svib_uniform")
    cfg.svgd.beta = 1e12
    state = trainer.init_state(cfg)
    theta_g, phi_g, _ = trainer.svib_gradients(state, trainer.rollout(state))
    assert all(np.all(np.isfinite(g)) for g in phi_g.values())
    assert any(np.any(g != 0) for g in phi_g.values())  # repulsion alone still moves phi


def test_golden_one_step(tiny_config):
    cfg = tiny_config("svib_uniform")
    cfg.model.d_z = 8
    state = trainer.init_state(cfg)
    state.config.optim.rollout_length = 3
    trainer.train_step(state, trainer.rollout(state))
    assert state.param_hash() == GOLDEN_ONE_STEP


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_gradient_names_term(tiny_config):
    cfg = tiny_config("a2c_noise")
    state = trainer.init_state(cfg)
    batch = trainer.rollout(state)
    state.theta.value.weights[0].data[:] = np.inf
    with pytest.raises(TrainingError, match="gradient"):
        trainer.train_step(state, batch)


def test_variants_share_encoder_constructor(tiny_config):
    shapes = set()
    for v in ("vanilla_a2c", "a2c_noise", "svib_uniform", "svib_gaussian"):
        state = trainer.init_state(tiny_config(v))
        assert type(state.phi) is type(make_encoder(4, 2, np.random.default_rng(0)))
        shapes.add(tuple((k, p.shape) for k, p in state.phi.parameters().items()))
    assert len(shapes) == 1


def test_empty_run(tiny_config, tmp_path):
    res = trainer.train(tiny_config(total_updates=0), run_dir=tmp_path)
    assert (tmp_path / "metrics.jsonl").read_text() == ""
    assert [p.name for p in (tmp_path / "checkpoints").iterdir()] == ["update_0000000.json"]


def test_metrics_monotone_and_probes(tiny_config, tmp_path):
    res = trainer.train(tiny_config(), run_dir=tmp_path, save_pairs=True)
    lines = [json.loads(l) for l in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    train_updates = [r["update"] for r in lines if r["record_type"] == "train"]
    assert train_updates == list(range(1, 7))
    assert all(r["schema"] == 1 for r in lines)
    assert [r["update"] for r in lines if r["record_type"] == "mi_probe"] == [3, 6]
    assert len(res.checkpoints) == 3
    assert sorted(p.name for p in tmp_path.glob("pairs_*.npz")) == ["pairs_0000003.npz", "pairs_0000006.npz"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config_hash"] == res.state.config.config_hash()


def test_same_seed_identical_metrics(tiny_config, tmp_path):
    for v in ("a2c_noise", "svib_gaussian"):
        a = trainer.train(tiny_config(v, seed=3), run_dir=tmp_path / v / "a")
        b = trainer.train(tiny_config(v, seed=3), run_dir=tmp_path / v / "b")
        assert (a.run_dir / "metrics.jsonl").read_bytes() == (b.run_dir / "metrics.jsonl").read_bytes()
        c = trainer.train(tiny_config(v, seed=4))
        assert c.metrics != a.metrics


def test_probes_do_not_perturb_training(tiny_config):
    with_probes = trainer.train(tiny_config())
    cfg = tiny_config()
    cfg.probe.interval = 10**6
    without = trainer.train(cfg)
    strip = lambda ms: [m for m in ms if m["record_type"] == "train"]
    assert strip(with_probes.metrics) == strip(without.metrics)


def test_checkpoint_restore(tiny_config, tmp_path):
    res = trainer.train(tiny_config(), run_dir=tmp_path)
    fresh = trainer.init_state(tiny_config())
    trainer.restore_state(fresh, res.checkpoints[-1])
    assert fresh.update == 6
    for k, p in res.state.theta.parameters().items():
        assert np.array_equal(p.data, fresh.theta.parameters()[k].data)


def test_unwritable_run_dir(tiny_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match=str(blocker)):
        trainer.train(tiny_config(), run_dir=blocker / "run")


def test_updates_to_threshold():
    ms = [{"record_type": "train", "update": 1, "mean_return": None},
          {"record_type": "train", "update": 2, "mean_return": 0.5},
          {"record_type": "mi_probe", "update": 2},
          {"record_type": "train", "update": 3, "mean_return": 0.95}]
    assert trainer.updates_to_threshold(ms) == 3
    assert trainer.updates_to_threshold(ms[:2]) == float("inf")
