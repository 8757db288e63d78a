import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svib import autodiff as ad
from svib.errors import ContractError, DimensionError
from svib.gradcheck import numeric_gradient, relative_error
from svib.networks import encode_batch, make_encoder
from svib.svgd import (
    PriorModel,
    SVGDConfig,
    fit_gaussian_prior,
    kernel_matrix,
    log_prior_grad,
    median_bandwidth,
    phi_gradient,
    rbf_kernel,
    rbf_kernel_grad,
    run_svgd,
    svgd_direction,
    svgd_direction_batched,
    zeta,
)

particle_sets = arrays(
    np.float64,
    st.tuples(st.integers(2, 8), st.integers(1, 3)),
    elements=st.floats(-5, 5, allow_nan=False),
)


def test_median_bandwidth_three_points():
    assert median_bandwidth(np.array([[0.0], [1.0], [2.0]])) == pytest.approx(1 / (2 * np.log(4)), rel=1e-12)
    assert median_bandwidth(np.array([[0.0], [1.0], [2.0]])) == pytest.approx(0.3607, abs=1e-4)


def test_median_bandwidth_equal_distances():
    # equilateral triangle with side d
    d = 1.7
    pts = np.array([[0.0, 0.0], [d, 0.0], [d / 2, d * np.sqrt(3) / 2]])
    assert median_bandwidth(pts) == pytest.approx(d**2 / (2 * np.log(4)), rel=1e-12)


def test_median_bandwidth_sort_oracle():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(100, 3))
    dists = sorted(np.linalg.norm(a - b) for a, b in itertools.combinations(z, 2))
    n = len(dists)
    med = (dists[n // 2 - 1] + dists[n // 2]) / 2 if n % 2 == 0 else dists[n // 2]
    assert median_bandwidth(z) == pytest.approx(med**2 / (2 * np.log(101)), rel=1e-12)


def test_median_bandwidth_contracts():
    with pytest.raises(ContractError):
        median_bandwidth(np.zeros((1, 2)))
    assert median_bandwidth(np.zeros((4, 2))) == 1e-6


def test_rbf_values():
    z = np.array([0.3, -1.0])
    assert rbf_kernel(z, z, 0.5) == 1.0
    assert rbf_kernel(np.array([0.0]), np.array([1.0]), 1.0) == pytest.approx(0.36788, abs=1e-5)
    np.testing.assert_array_equal(rbf_kernel_grad(z, z, 0.5), 0.0)
    with pytest.raises(ContractError):
        rbf_kernel(z, z, 0.0)


def test_rbf_grad_finite_difference():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=3), rng.normal(size=3)
    num = np.array([(rbf_kernel(a + e, b, 0.7) - rbf_kernel(a - e, b, 0.7)) / 2e-6 for e in np.eye(3) * 1e-6])
    np.testing.assert_allclose(rbf_kernel_grad(a, b, 0.7), num, rtol=1e-6)


@settings(max_examples=50, deadline=None)
@given(particle_sets)
def test_kernel_matrix_symmetric_psd(z):
    h = median_bandwidth(z)
    k = kernel_matrix(z, h)
    np.testing.assert_allclose(k, k.T, atol=0)
    np.testing.assert_array_equal(np.diag(k), 1.0)
    assert np.all((k >= 0) & (k <= 1))
    assert np.linalg.eigvalsh(k).min() > -1e-9


def test_priors():
    assert not np.any(log_prior_grad(PriorModel(), np.ones(3)))
    g = log_prior_grad(PriorModel("batch_gaussian", np.zeros(1), np.ones(1)), np.array([2.0]))
    np.testing.assert_array_equal(g, [-2.0])
    fitted = fit_gaussian_prior(np.array([[0.0], [2.0]]))
    np.testing.assert_array_equal(fitted.mu, [1.0])
    np.testing.assert_array_equal(fitted.var, [1.0])
    with pytest.raises(ContractError):
        log_prior_grad(PriorModel("batch_gaussian"), np.ones(1))
    assert fit_gaussian_prior(np.ones((3, 2))).var.min() == 1e-6


def test_zeta_rule():
    assert zeta(np.ones(3), np.zeros(3)) == 0.0
    v = np.array([3.0, 4.0])
    assert zeta(v, v[::-1]) == pytest.approx(0.005)
    assert zeta(np.array([2.0, 0.0]), np.array([0.0, 4.0])) == pytest.approx(0.0025)
    with pytest.raises(DimensionError):
        zeta(np.ones(2), np.ones(3))


def test_single_particle_is_gradient_ascent():
    g = np.array([[0.4, -1.2]])
    np.testing.assert_array_equal(svgd_direction(np.array([[1.0, 2.0]]), g, 1.0), g)


def test_identical_particles_zero_target():
    z = np.ones((2, 3))
    np.testing.assert_array_equal(svgd_direction(z, np.zeros((2, 3)), 1e-6), 0.0)


def test_two_particle_hand_computation():
    z = np.array([[0.0], [1.0]])
    phi = svgd_direction(z, lambda x: -x, 1.0)
    e = np.exp(-1.0)
    np.testing.assert_allclose(phi[:, 0], [-1.5 * e, 0.5 * (-1 + 2 * e)], rtol=0, atol=1e-12)


def test_direction_dimension_error():
    with pytest.raises(DimensionError):
        svgd_direction(np.zeros((3, 2)), np.zeros((3, 3)), 1.0)


@settings(max_examples=40, deadline=None)
@given(particle_sets, st.randoms(use_true_random=False))
def test_direction_permutation_equivariant(z, rnd):
    g = np.sin(z)
    perm = list(range(len(z)))
    rnd.shuffle(perm)
    h = median_bandwidth(z)
    np.testing.assert_allclose(svgd_direction(z[perm], g[perm], h), svgd_direction(z, g, h)[perm], rtol=1e-10, atol=1e-10)


def test_batched_matches_loop():
    rng = np.random.default_rng(0)
    z, g = rng.normal(size=(4, 5, 3)), rng.normal(size=(4, 5, 3))
    h = np.array([median_bandwidth(b) for b in z])
    expected = np.stack([svgd_direction(z[b], g[b], h[b]) for b in range(4)])
    np.testing.assert_allclose(svgd_direction_batched(z, g, h), expected, rtol=1e-12, atol=1e-14)


def test_phi_gradient_zero_direction():
    rng = np.random.default_rng(0)
    phi = make_encoder(4, 2, rng)
    z = encode_batch(phi, rng.normal(size=(3, 4)), 2, rng)
    grads = phi_gradient(z, np.zeros((6, 2)), phi.parameters())
    assert all(not np.any(g) for g in grads.values())


def test_phi_gradient_identity_offset():
    b = ad.tensor([0.5], requires_grad=True)
    z = ad.reshape(ad.add(ad.constant(np.zeros(1)), b), (1, 1))
    grads = phi_gradient(z, np.array([[2.5]]), {"b": b})
    np.testing.assert_allclose(grads["b"], [2.5])


def test_phi_gradient_detached():
    with pytest.raises(ContractError):
        phi_gradient(ad.tensor(np.ones((2, 2))), np.ones((2, 2)), {})


def test_phi_gradient_finite_difference():
    rng = np.random.default_rng(3)
    phi = make_encoder(4, 2, rng, d_noise=2, hidden=(5,))
    x = rng.normal(size=(3, 4))
    eps = np.random.default_rng(7)
    z = encode_batch(phi, x, 4, np.random.default_rng(7))
    directions = rng.normal(size=(12, 2))
    params = phi.parameters()
    grads = phi_gradient(z, directions, params)

    def surrogate():
        zz = encode_batch(phi, x, 4, np.random.default_rng(7))
        return ad.sum(ad.mul(zz, directions / 12))

    for name, p in params.items():
        assert relative_error(grads[name], numeric_gradient(surrogate, p)).max() < 1e-4


def test_single_particle_converges_to_mode():
    z = run_svgd(np.array([[5.0]]), lambda x: -(x - 1.5), steps=2000, step_size=0.1, decay=0.001)
    assert abs(z[0, 0] - 1.5) < 1e-3


def _energy_distance(z, mu, sd):
    # closed-form energy distance between the particle cloud and N(mu, sd^2)
    from scipy.stats import norm

    x = z.ravel()
    d = (x - mu) / sd
    exy = (sd * (2 * norm.pdf(d) + d * (2 * norm.cdf(d) - 1))).mean()
    exx = np.abs(x[:, None] - x[None]).mean()
    return 2 * exy - exx - 2 * sd / np.sqrt(np.pi)


def test_energy_distance_decreases():
    z0 = np.random.default_rng(0).normal(size=(200, 1))
    trace = [_energy_distance(z0, 2.0, 1.0)]
    run_svgd(z0, lambda x: -(x - 2.0), 500, 0.3,
             callback=lambda t, z: trace.append(_energy_distance(z, 2.0, 1.0)) if (t + 1) % 50 == 0 else None)
    increases = sum(b >= a for a, b in zip(trace, trace[1:]))
    assert len(trace) == 11 and increases <= 1


def test_config_validation():
    with pytest.raises(ContractError):
        SVGDConfig(beta=0.0)
    with pytest.raises(ContractError):
        SVGDConfig(num_particles=0)
    with pytest.raises(ContractError):
        SVGDConfig(step_size=-1.0)
