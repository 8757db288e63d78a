import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svib import autodiff as ad
from svib.errors import ContractError, DimensionError, NumericDomainError
from svib.networks import (
    MLP,
    EncoderParams,
    assign,
    encode,
    encode_batch,
    encode_particles,
    entropy,
    load_checkpoint,
    make_encoder,
    make_policy_value,
    make_statistics_net,
    policy_value,
    save_checkpoint,
    statistic,
)


def zero(params):
    for p in params.values():
        p.data = np.zeros(p.shape)


def test_zero_noise_collapses_particles():
    rng = np.random.default_rng(0)
    phi = make_encoder(10, 3, rng)
    x = rng.normal(size=10)
    ps = encode_particles(phi, x, 5, rng, stochastic=False)
    direct = encode(phi, x[None], np.zeros((1, phi.d_noise))).data[0]
    # equal up to BLAS blocking differences between rows
    np.testing.assert_allclose(ps.values, np.tile(direct, (5, 1)), rtol=1e-13, atol=1e-15)


def test_particle_matrix_shape():
    rng = np.random.default_rng(0)
    phi = make_encoder(128, 8, rng)
    ps = encode_particles(phi, rng.normal(size=128), 32, rng)
    assert ps.values.shape == (32, 8) and ps.m == 32


def test_zero_particles_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        encode_particles(make_encoder(4, 2, rng), np.zeros(4), 0, rng)


def test_encoder_invariants():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        make_encoder(4, 4, rng)
    net = MLP.init([6, 2], rng)
    with pytest.raises(ContractError):
        EncoderParams(net, 4, 2, 2, 0.0)


def test_noise_variance_monte_carlo():
    # linear encoder that copies the first noise coordinate
    rng = np.random.default_rng(1)
    phi = make_encoder(3, 1, rng, d_noise=1, noise_var=0.1, hidden=())
    w = np.zeros((4, 1))
    w[3, 0] = 1.0
    phi.net.weights[0].data = w
    z = encode_particles(phi, np.ones(3), 100_000, rng).values
    assert abs(z.var() - 0.1) / 0.1 < 0.05


def test_particles_bit_identical_for_same_seed():
    phi = make_encoder(6, 2, np.random.default_rng(3))
    x = np.arange(6.0)
    a = encode_particles(phi, x, 8, np.random.default_rng(9)).values
    b = encode_particles(phi, x, 8, np.random.default_rng(9)).values
    assert a.tobytes() == b.tobytes()


def test_pathwise_gradient_flows():
    rng = np.random.default_rng(0)
    phi = make_encoder(6, 2, rng)
    z = encode_batch(phi, rng.normal(size=(3, 6)), 4, rng)
    ad.backward(ad.sum(z))
    assert all(np.any(p.grad != 0) for p in phi.parameters().values())


def test_zero_policy_network():
    rng = np.random.default_rng(0)
    theta = make_policy_value(4, 3, rng)
    zero(theta.parameters())
    lp, v = policy_value(theta, rng.normal(size=(5, 4)))
    np.testing.assert_allclose(np.exp(lp.data), 1 / 3)
    np.testing.assert_array_equal(v.data, 0.0)


def test_value_hand_computed():
    rng = np.random.default_rng(4)
    theta = make_policy_value(3, 2, rng, hidden=(4,))
    z = rng.normal(size=(1, 3))
    tw, tb = theta.trunk.weights[0].data, theta.trunk.biases[0].data
    h = np.tanh(z @ tw + tb)
    v = h @ theta.value.weights[0].data + theta.value.biases[0].data
    logits = h @ theta.policy.weights[0].data + theta.policy.biases[0].data
    lp, val = policy_value(theta, z)
    np.testing.assert_allclose(val.data, v.ravel(), rtol=1e-12)
    np.testing.assert_allclose(np.exp(lp.data), np.exp(logits) / np.exp(logits).sum(), rtol=1e-12)


def test_nonfinite_logits_raise():
    rng = np.random.default_rng(0)
    theta = make_policy_value(2, 2, rng)
    theta.policy.weights[0].data[:] = np.nan
    with pytest.raises(NumericDomainError):
        policy_value(theta, np.ones((1, 2)))


def test_policy_dimension_check():
    theta = make_policy_value(3, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        policy_value(theta, np.ones((2, 4)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 4), elements=st.floats(-1e3, 1e3)), st.integers(0, 2**16))
def test_policy_normalised_and_entropy_bounded(z, seed):
    theta = make_policy_value(4, 5, np.random.default_rng(seed))
    lp, v = policy_value(theta, z)
    probs = np.exp(lp.data)
    assert np.all(np.abs(probs.sum(axis=1) - 1.0) < 1e-9)
    assert np.all(entropy(lp).data <= np.log(5) + 1e-12)
    assert np.all(np.isfinite(v.data))


def test_zero_statistics_net():
    rng = np.random.default_rng(0)
    eta = make_statistics_net(3, 2, rng)
    zero(eta.parameters())
    np.testing.assert_array_equal(statistic(eta, rng.normal(size=(4, 3)), rng.normal(size=(4, 2))).data, 0.0)


def test_statistic_batch_order_invariant():
    rng = np.random.default_rng(0)
    eta = make_statistics_net(3, 2, rng)
    x, z = rng.normal(size=(7, 3)), rng.normal(size=(7, 2))
    perm = rng.permutation(7)
    np.testing.assert_allclose(statistic(eta, x, z).data[perm], statistic(eta, x[perm], z[perm]).data, rtol=1e-12, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 5), elements=st.floats(-1e6, 1e6)))
def test_statistic_finite(xz):
    eta = make_statistics_net(3, 2, np.random.default_rng(0), hidden=8)
    assert np.all(np.isfinite(statistic(eta, xz[:, :3], xz[:, 3:]).data))


def test_statistic_dimension_error():
    eta = make_statistics_net(3, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        statistic(eta, np.ones((2, 3)), np.ones((3, 2)))


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    phi = make_encoder(5, 2, rng)
    params = phi.parameters()
    path = save_checkpoint(tmp_path / "c.json", {k: p.data for k, p in params.items()}, {"update": 3})
    arrays_, meta = load_checkpoint(path)
    other = make_encoder(5, 2, np.random.default_rng(1))
    assign(other.parameters(), arrays_)
    for k, p in other.parameters().items():
        assert p.data.tobytes() == params[k].data.tobytes()
    assert meta == {"update": 3}


def test_checkpoint_shape_mismatch(tmp_path):
    rng = np.random.default_rng(0)
    a = make_encoder(5, 2, rng)
    save_checkpoint(tmp_path / "c.json", {k: p.data for k, p in a.parameters().items()})
    arrays_, _ = load_checkpoint(tmp_path / "c.json")
    with pytest.raises(DimensionError):
        assign(make_encoder(6, 2, rng).parameters(), arrays_)
