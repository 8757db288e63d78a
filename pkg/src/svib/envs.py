"""Seedable toy MDPs and a wrapper that buries their state in noise.

Two base tasks are provided:

* :class:`GridWorld` -- 5x5 grid, start in one corner, goal in the other,
  reward 1 on reaching the goal and 0 otherwise. Episode return is in
  ``[0, 1]``.
* :class:`PoleBalance` -- a discretised inverted pendulum; reward 1 per
  step the pole stays up. Episode return is in ``[0, horizon]``.

:class:`NoisyObservation` pads the base observation with fresh Gaussian
noise every step (and optionally mixes all coordinates with a fixed random
orthogonal matrix), so an agent has to learn to discard most of its input.
Horizon truncation ends the episode with ``done=True`` and sets
``env.truncated`` so the caller can still bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


class GridWorld:
    UP, DOWN, LEFT, RIGHT = range(4)
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
    n_actions = 4

    def __init__(self, size=5, horizon=50, start=(0, 0), goal=None, walls=()):
        self.size = size
        self.horizon = horizon
        self.start = tuple(start)
        self.goal = tuple(goal) if goal is not None else (size - 1, size - 1)
        self.walls = frozenset(tuple(w) for w in walls)
        if self.start in self.walls or self.goal in self.walls:
            raise ContractError("start and goal cells cannot be walls")
        self.d_obs = size * size
        self.pos = self.start
        self.t = 0
        self.done = True
        self.truncated = False

    def _obs(self):
        obs = np.zeros(self.d_obs)
        obs[self.pos[0] * self.size + self.pos[1]] = 1.0
        return obs

    def reset(self, seed=None):
        # start is fixed, so the seed has nothing to randomise here
        self.pos = self.start
        self.t = 0
        self.done = False
        self.truncated = False
        return self._obs()

    def next_cell(self, pos, action):
        dr, dc = self.MOVES[action]
        r, c = pos[0] + dr, pos[1] + dc
        if not (0 <= r < self.size and 0 <= c < self.size) or (r, c) in self.walls:
            return pos
        return (r, c)

    def step(self, action):
        if self.done:
            raise ContractError("step() called on a finished episode; call reset()")
        if not 0 <= int(action) < self.n_actions:
            raise ContractError(f"action {action} outside [0, {self.n_actions})")
        self.pos = self.next_cell(self.pos, int(action))
        self.t += 1
        reward = 0.0
        if self.pos == self.goal:
            reward = 1.0
            self.done = True
        elif self.t >= self.horizon:
            self.done = True
            self.truncated = True
        return self._obs(), reward, self.done

    def decode(self, base_obs):
        idx = int(np.argmax(base_obs))
        return divmod(idx, self.size)

    @property
    def cells(self):
        return [(r, c) for r in range(self.size) for c in range(self.size) if (r, c) not in self.walls]


class PoleBalance:
    """Inverted pendulum with push-left / coast / push-right actions."""

    n_actions = 3
    d_obs = 2

    def __init__(self, horizon=200, dt=0.05, gravity=9.8, length=1.0, push=4.0, limit=0.4):
        self.horizon = horizon
        self.dt = dt
        self.gravity = gravity
        self.length = length
        self.push = push
        self.limit = limit
        self.rng = np.random.default_rng()
        self.state = np.zeros(2)
        self.t = 0
        self.done = True
        self.truncated = False

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = self.rng.uniform(-0.05, 0.05, size=2)
        self.t = 0
        self.done = False
        self.truncated = False
        return self.state.copy()

    def step(self, action):
        if self.done:
            raise ContractError("step() called on a finished episode; call reset()")
        if not 0 <= int(action) < self.n_actions:
            raise ContractError(f"action {action} outside [0, {self.n_actions})")
        angle, vel = self.state
        force = (int(action) - 1) * self.push
        acc = self.gravity / self.length * np.sin(angle) + force
        vel = vel + self.dt * acc
        angle = angle + self.dt * vel
        self.state = np.array([angle, vel])
        self.t += 1
        if abs(angle) > self.limit:
            self.done = True
            return self.state.copy(), 0.0, True
        if self.t >= self.horizon:
            self.done = True
            self.truncated = True
        return self.state.copy(), 1.0, self.done


@dataclass
class NoisyObsConfig:
    d_pad: int = 103
    noise_scale: float = 1.0
    mix: bool = False
    mix_seed: int = 0


class NoisyObservation:
    """Append ``d_pad`` i.i.d. ``N(0, noise_scale^2)`` features, resampled per step."""

    def __init__(self, env, config=None):
        self.env = env
        self.config = config or NoisyObsConfig()
        self.d_base = env.d_obs
        self.d_obs = self.d_base + self.config.d_pad
        self.n_actions = env.n_actions
        self.rng = np.random.default_rng()
        self.mixing = None
        if self.config.mix:
            q, r = np.linalg.qr(np.random.default_rng(self.config.mix_seed).normal(size=(self.d_obs, self.d_obs)))
            self.mixing = q * np.sign(np.diag(r))

    @property
    def done(self):
        return self.env.done

    @property
    def truncated(self):
        return self.env.truncated

    @property
    def horizon(self):
        return self.env.horizon

    def _wrap(self, base):
        noise = self.rng.normal(0.0, self.config.noise_scale, size=self.config.d_pad)
        obs = np.concatenate([base, noise])
        if self.mixing is not None:
            obs = self.mixing @ obs
        return obs

    def reset(self, seed=None):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        base = self.env.reset(None if seed is None else int(self.rng.integers(2**31)))
        return self._wrap(base)

    def step(self, action):
        base, reward, done = self.env.step(action)
        return self._wrap(base), reward, done

    def unwrap(self, obs):
        """Recover the base observation (the oracle decoder)."""
        if self.mixing is not None:
            obs = self.mixing.T @ obs
        return obs[: self.d_base]


def make_env(name="gridworld", d_pad=103, noise_scale=1.0, mix=False, mix_seed=0, **kwargs):
    if name == "gridworld":
        base = GridWorld(**kwargs)
    elif name == "pole":
        base = PoleBalance(**kwargs)
    else:
        raise ContractError(f"unknown environment {name!r}")
    if d_pad == 0 and not mix:
        return base
    return NoisyObservation(base, NoisyObsConfig(d_pad, noise_scale, mix, mix_seed))


class VectorEnv:
    """``k`` independent copies stepped in lock-step with auto-reset.

    Copy ``i`` is seeded with ``seeds[i]`` on its first reset and draws later
    reset seeds from its own generator, so stepping the vector is equivalent
    to running each copy on its own with the same seed.
    """

    def __init__(self, make, seeds):
        self.envs = [make() for _ in seeds]
        self.seed_rngs = [np.random.default_rng(s) for s in seeds]
        self.n_actions = self.envs[0].n_actions
        self.d_obs = self.envs[0].d_obs
        self.obs = None

    def __len__(self):
        return len(self.envs)

    def _reset_one(self, i):
        return self.envs[i].reset(int(self.seed_rngs[i].integers(2**31)))

    def reset(self):
        self.obs = np.stack([self._reset_one(i) for i in range(len(self.envs))])
        return self.obs.copy()

    def step(self, actions):
        """Step every copy.

        Returns ``(obs, rewards, dones, truncated, final_obs)``; ``obs`` holds
        the post-reset observation for finished copies and ``final_obs`` the
        observation the episode actually ended in.
        """
        k = len(self.envs)
        rewards = np.zeros(k)
        dones = np.zeros(k, dtype=bool)
        truncs = np.zeros(k, dtype=bool)
        final = np.empty((k, self.d_obs))
        nxt = np.empty((k, self.d_obs))
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            o, r, d = env.step(int(a))
            rewards[i], dones[i], truncs[i] = r, d, env.truncated
            final[i] = o
            nxt[i] = self._reset_one(i) if d else o
        self.obs = nxt
        return nxt.copy(), rewards, dones, truncs, final


# --- exact evaluation ---------------------------------------------------------


def gridworld_random_policy_return(env):
    """Exact expected episode return of the uniform random policy.

    Propagates the state distribution of the absorbing Markov chain for
    ``horizon`` steps; the return equals the probability of reaching the
    goal before truncation.
    """
    index = {cell: i for i, cell in enumerate(env.cells)}
    n = len(index)
    trans = np.zeros((n, n))
    for cell, i in index.items():
        if cell == env.goal:
            continue
        for a in range(env.n_actions):
            trans[i, index[env.next_cell(cell, a)]] += 1.0 / env.n_actions
    dist = np.zeros(n)
    dist[index[env.start]] = 1.0
    reached = 0.0
    g = index[env.goal]
    for _ in range(env.horizon):
        dist = dist @ trans
        reached += dist[g]
        dist[g] = 0.0
    return reached


def gridworld_optimal_return(env):
    """1.0 if the goal is reachable within the horizon (BFS), else 0.0."""
    frontier, seen, steps = [env.start], {env.start}, 0
    while frontier and steps < env.horizon:
        steps += 1
        nxt = []
        for cell in frontier:
            for a in range(env.n_actions):
                c = env.next_cell(cell, a)
                if c == env.goal:
                    return 1.0
                if c not in seen:
                    seen.add(c)
                    nxt.append(c)
        frontier = nxt
    return 0.0
