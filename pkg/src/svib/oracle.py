"""Exact finite-alphabet information-bottleneck computations.

With finite state and representation alphabets every quantity of the
objective ``L = E[J(Z)] - beta I(X; Z)`` is a finite sum, so the
improvement property of the target encoder

    P_hat(z | x) ∝ P(z) exp(J(z) / beta)

and the KL identity for its gain can be checked to rounding error.
Normalisations are done in log space: with ``beta = 1e-3`` the factor
``exp(J / beta)`` spans hundreds of orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError


@dataclass
class DiscreteIBInstance:
    """``P(X)``, ``P(Z|X)`` (rows) and a ``J`` table over ``Z`` for fixed theta.

    ``log_p_z_given_x`` may carry the exact log table when some entries
    underflow to zero in probability space.
    """

    p_x: np.ndarray
    p_z_given_x: np.ndarray
    j: np.ndarray
    beta: float
    log_p_z_given_x: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.p_x = np.asarray(self.p_x, dtype=np.float64)
        self.p_z_given_x = np.asarray(self.p_z_given_x, dtype=np.float64)
        self.j = np.asarray(self.j, dtype=np.float64)
        validate(self)

    @property
    def kx(self):
        return self.p_x.shape[0]

    @property
    def kz(self):
        return self.j.shape[0]

    def log_table(self):
        if self.log_p_z_given_x is not None:
            return self.log_p_z_given_x
        with np.errstate(divide="ignore"):
            return np.log(self.p_z_given_x)


def validate(inst, tol=1e-12):
    if inst.p_z_given_x.shape != (inst.p_x.shape[0], inst.j.shape[0]):
        raise ContractError(
            f"P(Z|X) has shape {inst.p_z_given_x.shape}, expected {(inst.p_x.shape[0], inst.j.shape[0])}"
        )
    if np.any(inst.p_x < 0) or np.any(inst.p_z_given_x < 0):
        raise ContractError("probabilities must be non-negative")
    if abs(inst.p_x.sum() - 1.0) > tol:
        raise ContractError(f"P(X) sums to {inst.p_x.sum()!r}")
    rows = inst.p_z_given_x.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > tol):
        raise ContractError(f"rows of P(Z|X) sum to {rows}")
    if inst.beta < 0:
        raise ContractError("beta must be non-negative")


def marginal_z(inst):
    return inst.p_x @ inst.p_z_given_x


def _xlogy_ratio(p, log_p, log_q):
    # sum p (log p - log q) with 0 log 0 = 0
    mask = p > 0
    return float(np.sum(p[mask] * (log_p[mask] - log_q[mask])))


def exact_mi(inst):
    """``I(X; Z)`` in nats."""
    joint = inst.p_x[:, None] * inst.p_z_given_x
    log_cond = inst.log_table()
    with np.errstate(divide="ignore"):
        log_pz = np.log(marginal_z(inst))
    mask = joint > 0
    log_pz = np.broadcast_to(log_pz, joint.shape)
    return float(np.sum(joint[mask] * (log_cond[mask] - log_pz[mask])))


def expected_j(inst):
    return float(marginal_z(inst) @ inst.j)


def exact_objective(inst):
    """``L = E[J] - beta I(X; Z)``."""
    return expected_j(inst) - inst.beta * exact_mi(inst)


def log_target(inst):
    """``log P_hat(z)`` with ``P_hat(z) ∝ P(z) exp(J(z) / beta)``; independent of ``x``."""
    if inst.beta <= 0:
        raise ContractError("the target encoder needs beta > 0")
    with np.errstate(divide="ignore"):
        logits = np.log(marginal_z(inst)) + inst.j / inst.beta
    return logits - logsumexp(logits)


def target_distribution(inst):
    """Instance with ``P(Z|X)`` replaced by the target encoder (identical rows)."""
    lt = log_target(inst)
    table = np.tile(np.exp(lt), (inst.kx, 1))
    table /= table.sum(axis=1, keepdims=True)
    return replace(inst, p_z_given_x=table, log_p_z_given_x=np.tile(lt, (inst.kx, 1)))


def kl_divergence(p, log_p, log_q):
    return _xlogy_ratio(np.asarray(p), np.asarray(log_p), np.asarray(log_q))


@dataclass
class OracleReport:
    mi: float
    objective: float
    objective_target: float
    kl_marginal: float
    kl_conditional: float
    gap: float
    identity: float
    residual: float
    improved: bool
    identity_holds: bool

    def as_dict(self):
        return dict(self.__dict__)


def theorem2_check(inst, target=target_distribution, tol_gap=1e-12, tol_identity=1e-10):
    """Compare the gain of the target encoder with its KL decomposition.

    ``gain = L(target) - L(inst)`` should equal
    ``beta KL(P_hat(Z) || P(Z)) + beta E_X KL(P(Z|X) || P_hat(Z|X))``.
    """
    new = target(inst)
    L0, L1 = exact_objective(inst), exact_objective(new)
    p_hat_z = marginal_z(new)
    with np.errstate(divide="ignore"):
        log_pz = np.log(marginal_z(inst))
    new_log = new.log_table()
    log_p_hat_z = logsumexp(new_log + np.log(new.p_x)[:, None], axis=0)
    kl_marg = kl_divergence(p_hat_z, log_p_hat_z, log_pz)
    old_log = inst.log_table()
    kl_cond = float(
        sum(
            inst.p_x[i] * kl_divergence(inst.p_z_given_x[i], old_log[i], new_log[i])
            for i in range(inst.kx)
        )
    )
    gap = L1 - L0
    identity = inst.beta * (kl_marg + kl_cond)
    residual = abs(gap - identity)
    return OracleReport(
        mi=exact_mi(inst),
        objective=L0,
        objective_target=L1,
        kl_marginal=kl_marg,
        kl_conditional=kl_cond,
        gap=gap,
        identity=identity,
        residual=residual,
        improved=gap >= -tol_gap,
        identity_holds=residual < tol_identity,
    )


def theorem1_check(family, beta=None, tol=1e-12):
    """Brute-force the two argmins over a finite family of ``(theta, phi)`` members.

    ``r`` minimises ``I - E[J] / beta`` and ``star`` minimises ``-E[J] / beta``.
    Checks ``beta (I_star - I_r) >= J_star - J_r >= 0`` and the derived bound
    ``|J_r - J_star| <= beta |I_star - I_r|``.
    """
    if not family:
        raise ContractError("empty family")
    beta = family[0].beta if beta is None else beta
    mi = np.array([exact_mi(m) for m in family])
    ej = np.array([expected_j(m) for m in family])
    r = int(np.argmin(mi - ej / beta))
    star = int(np.argmin(-ej / beta))
    lhs = beta * (mi[star] - mi[r])
    mid = ej[star] - ej[r]
    chain = bool(lhs - mid >= -tol and mid >= -tol)
    bound = bool(abs(ej[r] - ej[star]) <= beta * abs(mi[star] - mi[r]) + tol)
    return {
        "r": r,
        "star": star,
        "mi_r": float(mi[r]),
        "mi_star": float(mi[star]),
        "j_r": float(ej[r]),
        "j_star": float(ej[star]),
        "lhs": float(lhs),
        "mid": float(mid),
        "chain_holds": chain,
        "bound_holds": bound,
        "passed": chain and bound,
    }


def stationarity_check(inst, rng, n_perturb=100, delta=1e-3, target=target_distribution):
    """Smallest normalised gain ``(L(target) - L(perturbed)) / delta``.

    Perturbations mix each row of the target with a random Dirichlet row,
    ``(1 - delta) P_hat + delta Q``, so they stay row-stochastic.
    """
    base = target(inst)
    L_base = exact_objective(base)
    worst = np.inf
    for _ in range(n_perturb):
        q = rng.dirichlet(np.ones(inst.kz), size=inst.kx)
        table = (1.0 - delta) * base.p_z_given_x + delta * q
        table /= table.sum(axis=1, keepdims=True)
        pert = replace(inst, p_z_given_x=table, log_p_z_given_x=None)
        worst = min(worst, (L_base - exact_objective(pert)) / delta)
    return float(worst)


# --- random instances --------------------------------------------------------------


def random_instance(rng, kx=4, kz=8, beta=0.001, p_x=None):
    """Dirichlet(1) rows for ``P(Z|X)`` (and ``P(X)``), ``J ~ U[-1, 1]``."""
    p_x = rng.dirichlet(np.ones(kx)) if p_x is None else p_x
    table = rng.dirichlet(np.ones(kz), size=kx)
    j = rng.uniform(-1.0, 1.0, size=kz)
    return DiscreteIBInstance(p_x, table, j, beta)


def random_family(rng, size=20, kx=4, kz=8, beta=0.001):
    p_x = rng.dirichlet(np.ones(kx))
    return [random_instance(rng, kx, kz, beta, p_x=p_x) for _ in range(size)]


DEFAULT_COUNTS = {"kl_gap": 100, "chain": 50, "stationarity": 20, "closed_form": 4}
GAP_BETAS = (0.001, 0.1, 1.0)


def _closed_form_cases():
    """Instances whose mutual information is known exactly."""
    cases = []
    for k in (2, 4):
        cases.append(("bijection", DiscreteIBInstance(np.full(k, 1.0 / k), np.eye(k), np.zeros(k), 1.0), np.log(k)))
        rows = np.tile(np.linspace(1, 2, k) / np.linspace(1, 2, k).sum(), (k, 1))
        cases.append(("independent", DiscreteIBInstance(np.full(k, 1.0 / k), rows, np.zeros(k), 1.0), 0.0))
    return cases


def run_sweeps(seed=0, counts=None, target=target_distribution):
    """Run every oracle sweep; returns a JSON-ready report."""
    counts = dict(DEFAULT_COUNTS if counts is None else counts)
    rng = np.random.default_rng(seed)
    checks, failures = [], []

    def record(kind, index, passed, **info):
        entry = {"check": kind, "index": index, "seed": seed, "passed": bool(passed), **info}
        checks.append(entry)
        if not passed:
            failures.append(entry)

    for i in range(counts.get("kl_gap", 0)):
        beta = GAP_BETAS[i % len(GAP_BETAS)]
        rep = theorem2_check(random_instance(rng, beta=beta), target=target)
        record("kl_gap", i, rep.improved and rep.identity_holds, beta=beta, gap=rep.gap, residual=rep.residual)

    for i in range(counts.get("chain", 0)):
        verdict = theorem1_check(random_family(rng))
        record("chain", i, verdict["passed"], lhs=verdict["lhs"], mid=verdict["mid"])

    for i in range(counts.get("stationarity", 0)):
        worst = stationarity_check(random_instance(rng), rng, target=target)
        record("stationarity", i, worst >= -1e-6, worst_normalised_gap=worst)

    for i, (name, inst, expected) in enumerate(_closed_form_cases()[: counts.get("closed_form", 0)]):
        got = exact_mi(inst)
        record("closed_form_mi", i, abs(got - expected) < 1e-12, case=name, mi=got, expected=float(expected))

    return {
        "seed": seed,
        "counts": counts,
        "n_checks": len(checks),
        "n_failed": len(failures),
        "passed": not failures,
        "failures": failures,
        "checks": checks,
    }
