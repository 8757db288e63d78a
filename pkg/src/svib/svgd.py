"""Stein variational gradient machinery.

Particles for a single state are ``[M, d]`` arrays. The direction

    Phi(z_i) = 1/M sum_j [ k(z_j, z_i) grad log q(z_j) + grad_{z_j} k(z_j, z_i) ]

uses the same ``M`` particles both as the transported set and as the
samples for the expectation. The normaliser of ``q`` never appears, which
is what lets us target ``U(z) exp(J(z) / beta)`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError

BANDWIDTH_FLOOR = 1e-6
VARIANCE_FLOOR = 1e-6


@dataclass
class SVGDConfig:
    beta: float = 0.001
    zeta_scale: float = 0.005
    step_size: float = 7e-4
    num_particles: int = 32

    def __post_init__(self):
        if self.beta <= 0:
            raise ContractError("beta must be positive")
        if self.num_particles < 1:
            raise ContractError("num_particles must be at least 1")
        if self.step_size <= 0:
            raise ContractError("step_size must be positive")


def _as_particles(particles):
    z = getattr(particles, "values", particles)
    if isinstance(z, ad.Tensor):
        z = z.data
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    return z


def pairwise_sq_dists(z):
    diff = z[:, None, :] - z[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def median_bandwidth(particles):
    """``h = med^2 / (2 ln(M + 1))`` from the median pairwise distance."""
    z = _as_particles(particles)
    m = z.shape[0]
    if m < 2:
        raise ContractError("median heuristic needs at least two particles")
    iu = np.triu_indices(m, k=1)
    med = np.median(np.sqrt(pairwise_sq_dists(z)[iu]))
    h = med**2 / (2.0 * np.log(m + 1))
    return max(float(h), BANDWIDTH_FLOOR)


def rbf_kernel(z_i, z_j, h):
    """``exp(-||z_i - z_j||^2 / h)``."""
    if h <= 0:
        raise ContractError("bandwidth must be positive")
    d = np.asarray(z_i, dtype=np.float64) - np.asarray(z_j, dtype=np.float64)
    return float(np.exp(-np.dot(d.ravel(), d.ravel()) / h))


def rbf_kernel_grad(z_i, z_j, h):
    """Gradient of ``rbf_kernel(z_i, z_j, h)`` with respect to ``z_i``.

    By symmetry the gradient with respect to ``z_j`` is the negative.
    """
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    return -2.0 / h * (z_i - z_j) * rbf_kernel(z_i, z_j, h)


def kernel_matrix(particles, h):
    if h <= 0:
        raise ContractError("bandwidth must be positive")
    z = _as_particles(particles)
    return np.exp(-pairwise_sq_dists(z) / h)


# --- priors -------------------------------------------------------------------


@dataclass
class PriorModel:
    """``uniform`` (flat score) or ``batch_gaussian`` fitted per state."""

    kind: str = "uniform"
    mu: np.ndarray | None = None
    var: np.ndarray | None = None

    @property
    def fitted(self):
        return self.kind == "uniform" or (self.mu is not None and self.var is not None)


def fit_gaussian_prior(particles):
    """Per-dimension mean and (biased) variance of one state's particles."""
    z = _as_particles(particles)
    mu = z.mean(axis=0)
    var = np.maximum(((z - mu) ** 2).mean(axis=0), VARIANCE_FLOOR)
    return PriorModel("batch_gaussian", mu, var)


def log_prior_grad(prior, z):
    z = np.asarray(z, dtype=np.float64)
    if prior.kind == "uniform":
        return np.zeros_like(z)
    if prior.kind != "batch_gaussian":
        raise ContractError(f"unknown prior kind {prior.kind!r}")
    if not prior.fitted:
        raise ContractError("gaussian prior used before fitting")
    return -(z - prior.mu) / prior.var


def zeta(grad_j_over_beta, grad_log_u, zeta_scale=0.005):
    """Prior-score weight ``zeta_scale * ||grad J / beta|| / ||grad log U||``.

    Norms are taken over the whole array; a vanishing prior score gives 0.
    """
    a = np.asarray(grad_j_over_beta, dtype=np.float64)
    b = np.asarray(grad_log_u, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"gradient shapes differ: {a.shape} vs {b.shape}")
    denom = np.linalg.norm(b)
    if denom < 1e-12:
        return 0.0
    return float(zeta_scale * np.linalg.norm(a) / denom)


# --- direction ----------------------------------------------------------------


def svgd_direction(particles, grad_log_target, h):
    """Stein direction for every particle of one state.

    ``grad_log_target`` is either an ``[M, d]`` array of scores at the
    particles or a callable mapping an ``[M, d]`` array to one.
    """
    z = _as_particles(particles)
    g = grad_log_target(z) if callable(grad_log_target) else grad_log_target
    g = np.asarray(getattr(g, "data", g), dtype=np.float64).reshape(z.shape[0], -1)
    if g.shape != z.shape:
        raise DimensionError(f"scores have shape {g.shape}, particles {z.shape}")
    m = z.shape[0]
    if m == 1:
        return g.copy()
    k = kernel_matrix(z, h)
    drive = k @ g
    # sum_j grad_{z_j} k(z_j, z_i) = 2/h sum_j k_ij (z_i - z_j)
    repulse = 2.0 / h * (k.sum(axis=1)[:, None] * z - k @ z)
    return (drive + repulse) / m


def svgd_direction_batched(z, g, h):
    """:func:`svgd_direction` over ``[B, M, d]`` particles with one bandwidth per state."""
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if z.shape != g.shape or z.ndim != 3:
        raise DimensionError(f"need matching [B, M, d] arrays, got {z.shape} and {g.shape}")
    m = z.shape[1]
    if m == 1:
        return g.copy()
    h = np.asarray(h, dtype=np.float64).reshape(-1, 1, 1)
    diff = z[:, :, None, :] - z[:, None, :, :]
    k = np.exp(-np.einsum("bijk,bijk->bij", diff, diff) / h)
    drive = np.einsum("bij,bjd->bid", k, g)
    repulse = 2.0 / h * (k.sum(axis=2)[:, :, None] * z - np.einsum("bij,bjd->bid", k, z))
    return (drive + repulse) / m


def median_bandwidth_batched(z):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[1] < 2:
        return np.ones(z.shape[0])
    return np.array([median_bandwidth(zb) for zb in z])


def phi_gradient(particles, directions, params):
    """Gradient of ``mean_i <stop_grad(Phi_i), Z_i>`` with respect to ``params``.

    ``particles`` is the ``[N, d]`` tape output of the encoder for every
    particle of every state in the batch and ``directions`` the matching
    Stein directions. The mean over all ``N`` rows is the Monte Carlo
    version of the expectation over states and particles.
    """
    if isinstance(particles, (list, tuple)):
        particles = ad.concat([getattr(p, "particles", p) for p in particles], axis=0)
    particles = getattr(particles, "particles", particles)
    if not isinstance(particles, ad.Tensor) or not particles.requires_grad:
        raise ContractError("particles are detached from the encoder parameters")
    directions = np.asarray(directions, dtype=np.float64).reshape(particles.shape)
    surrogate = ad.sum(ad.mul(particles, directions / particles.shape[0]))
    for p in params.values():
        p.grad = None
    ad.backward(surrogate)
    return {name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape)) for name, p in params.items()}


# --- standalone sampler -----------------------------------------------------


def run_svgd(particles, grad_log_target, steps, step_size, decay=0.0, callback=None):
    """Transport ``particles`` toward the target for ``steps`` iterations.

    The step at iteration ``t`` is ``step_size / (1 + decay * t)``. The
    bandwidth is re-estimated every step with the median heuristic.
    """
    z = _as_particles(particles).copy()
    for t in range(steps):
        h = median_bandwidth(z) if z.shape[0] > 1 else 1.0
        z = z + step_size / (1.0 + decay * t) * svgd_direction(z, grad_log_target, h)
        if callback is not None:
            callback(t, z)
    return z
