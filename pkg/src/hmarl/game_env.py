"""Ground-truth Markov game: pursuit-navigation dynamics and goal policies.

State layout for a game with ``N`` agents is ``(x_1, ..., x_N, z)``: one
position per agent followed by an uncontrolled entity ``z``.  Agents move
with known kinematics ``x_i' = x_i + dt * a_i``; the entity drifts toward the
mean agent position through ``z' = z + c * tanh(kappa * (mean(x) - z))``.
Observations are perturbed by additive Gaussian noise.

Arrays are batched on leading axes throughout: a state batch has shape
``(..., p)`` and a joint-action batch ``(..., N)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from hmarl.cce_solver import PayoffTensor
from hmarl.streams import TAG_TRUE_VALUE, derive


@dataclass(frozen=True)
class PursuitDynamics:
    dt: float = 0.1
    coupling: float = 0.2
    sharpness: float = 2.0
    # (low, high) box applied to every coordinate after the update, or None.
    clamp: tuple[float, float] | None = None


@dataclass(frozen=True)
class RewardParams:
    goals: tuple[float, ...]
    entity_penalty: float = 0.5
    agent_penalty: float = 0.5
    width: float = 0.05


@dataclass(frozen=True)
class MarkovGameSpec:
    """Closed-form game description.

    ``noise_std`` holds one standard deviation per state coordinate and
    ``action_limit`` the half-width of every agent's (scalar) action box.
    """

    n_agents: int
    horizon: int
    initial_state: np.ndarray
    noise_std: np.ndarray
    dynamics: PursuitDynamics
    rewards: RewardParams
    action_limit: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        s0 = np.array(self.initial_state, dtype=float)
        w = np.broadcast_to(np.asarray(self.noise_std, dtype=float), s0.shape).copy()
        s0.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "initial_state", s0)
        object.__setattr__(self, "noise_std", w)
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if s0.shape != (self.n_agents + 1,):
            raise ValueError(f"initial_state must have length {self.n_agents + 1}")
        if not np.all(np.isfinite(s0)):
            raise ValueError("non-finite state/action")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("noise_std must be finite and non-negative")
        if len(self.rewards.goals) != self.n_agents:
            raise ValueError("one reward goal per agent required")
        if self.action_limit <= 0:
            raise ValueError("action_limit must be positive")

    @property
    def state_dim(self) -> int:
        return self.n_agents + 1

    @property
    def action_dims(self) -> tuple[int, ...]:
        return (1,) * self.n_agents

    @property
    def joint_action_dim(self) -> int:
        return self.n_agents

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.joint_action_dim

    @property
    def position_box(self) -> np.ndarray:
        """Per-agent interval containing every reachable agent position.

        With a clamp box this is the box itself.  Otherwise goal-seeking
        policies with ``gain * dt <= 2`` never leave the hull of the start
        position and the goal, which is what is returned (shape ``(N, 2)``).
        """
        if self.dynamics.clamp is not None:
            lo, hi = self.dynamics.clamp
            return np.tile([lo, hi], (self.n_agents, 1)).astype(float)
        x0 = self.initial_state[: self.n_agents]
        g = np.asarray(self.rewards.goals, dtype=float)
        return np.stack([np.minimum(x0, g), np.maximum(x0, g)], axis=1)

    @property
    def reward_bound(self) -> tuple[float, float]:
        """Documented ``(low, high)`` bound on every per-step reward."""
        box = self.position_box
        g = np.asarray(self.rewards.goals, dtype=float)
        far = np.maximum(np.abs(box[:, 0] - g), np.abs(box[:, 1] - g))
        rp = self.rewards
        low = -(float(np.max(far**2)) + rp.entity_penalty + rp.agent_penalty * (self.n_agents - 1))
        return low, 0.0


def canonical_env(**overrides) -> MarkovGameSpec:
    """The two-agent "nonlinear-nav-2" game."""
    base = dict(
        n_agents=2,
        horizon=10,
        # agent 1 starts left of its goal, agent 2 must cross the entity's start
        initial_state=np.array([0.5, -0.11, -0.58]),
        noise_std=np.array([0.0, 0.0, 0.01]),
        dynamics=PursuitDynamics(),
        rewards=RewardParams(goals=(0.81, -0.97)),
        action_limit=1.0,
        name="nonlinear-nav-2",
    )
    base.update(overrides)
    return MarkovGameSpec(**base)


def grid_env(**overrides) -> MarkovGameSpec:
    """"grid-2": the canonical game clamped to ``[-1, 1]^3`` and noise-free."""
    base = dict(
        noise_std=np.zeros(3),
        dynamics=PursuitDynamics(clamp=(-1.0, 1.0)),
        name="grid-2",
    )
    base.update(overrides)
    return canonical_env(**base)


ENVIRONMENTS = {"nonlinear-nav-2": canonical_env, "grid-2": grid_env}


def _check_finite(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite state/action")


def transition_mean(spec: MarkovGameSpec, s: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Noise-free transition ``f(s, a)`` for batched states and actions."""
    n = spec.n_agents
    dyn = spec.dynamics
    x = s[..., :n]
    z = s[..., n]
    x_next = x + a * dyn.dt
    z_next = z + dyn.coupling * np.tanh(dyn.sharpness * (x.mean(axis=-1) - z))
    out = np.concatenate([x_next, z_next[..., None]], axis=-1)
    if dyn.clamp is not None:
        out = np.clip(out, dyn.clamp[0], dyn.clamp[1])
    return out


def rewards(spec: MarkovGameSpec, s: np.ndarray, a: np.ndarray | None = None) -> np.ndarray:
    """Per-agent rewards, shape ``(..., N)``.

    The family is action-independent; ``a`` is accepted for the ``r(s, a)``
    call signature.
    """
    n = spec.n_agents
    rp = spec.rewards
    x = s[..., :n]
    z = s[..., n:n + 1]
    g = np.asarray(rp.goals, dtype=float)
    r = -((x - g) ** 2) - rp.entity_penalty * np.exp(-((x - z) ** 2) / rp.width)
    if n > 1:
        d2 = (x[..., :, None] - x[..., None, :]) ** 2
        close = np.exp(-d2 / rp.width)
        # drop the self-pair, which contributes exp(0) = 1
        r = r - rp.agent_penalty * (close.sum(axis=-1) - 1.0)
    return r


def env_step(spec: MarkovGameSpec, s, a, w) -> tuple[np.ndarray, np.ndarray]:
    """One noisy transition; returns ``(f(s, a) + w, r(s, a))``."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    if s.shape[-1] != spec.state_dim or w.shape[-1] != spec.state_dim:
        raise ValueError(f"state and noise must have length {spec.state_dim}")
    if a.shape[-1] != spec.joint_action_dim:
        raise ValueError(f"joint action must have length {spec.joint_action_dim}")
    _check_finite(s, a, w)
    return transition_mean(spec, s, a) + w, rewards(spec, s, a)


@dataclass(frozen=True)
class PolicyDescriptor:
    """Clipped proportional controller ``clip(gain * (goal - x), +-a_max)``."""

    gain: float
    goal: float
    a_max: float

    def __post_init__(self):
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")
        if self.gain < 0:
            raise ValueError("gain must be non-negative")


@dataclass(frozen=True)
class PolicySet:
    per_agent: tuple[tuple[PolicyDescriptor, ...], ...]
    gains: np.ndarray = field(init=False, repr=False)
    goals: np.ndarray = field(init=False, repr=False)
    a_max: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        per_agent = tuple(tuple(p) for p in self.per_agent)
        if not per_agent or any(len(p) == 0 for p in per_agent):
            raise ValueError("every agent needs at least one policy")
        object.__setattr__(self, "per_agent", per_agent)
        # padded (N, K_max) lookup tables for batched evaluation
        kmax = max(len(p) for p in per_agent)
        tables = {}
        for name in ("gain", "goal", "a_max"):
            t = np.ones((len(per_agent), kmax))
            for i, pols in enumerate(per_agent):
                t[i, : len(pols)] = [getattr(pd, name) for pd in pols]
            t.setflags(write=False)
            tables[name] = t
        object.__setattr__(self, "gains", tables["gain"])
        object.__setattr__(self, "goals", tables["goal"])
        object.__setattr__(self, "a_max", tables["a_max"])

    @property
    def n_agents(self) -> int:
        return len(self.per_agent)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.per_agent)

    @property
    def n_profiles(self) -> int:
        return int(np.prod(self.shape))

    def profiles(self) -> np.ndarray:
        """All profiles in canonical (C-order) index order, shape ``(P, N)``."""
        return np.array(list(itertools.product(*(range(k) for k in self.shape))), dtype=int).reshape(-1, self.n_agents)

    def flat_index(self, profile) -> int:
        return int(np.ravel_multi_index(tuple(profile), self.shape))

    def check_profile(self, profile) -> tuple[int, ...]:
        profile = tuple(int(j) for j in profile)
        if len(profile) != self.n_agents or any(not 0 <= j < k for j, k in zip(profile, self.shape)):
            raise IndexError(f"profile {profile} out of range for shape {self.shape}")
        return profile

    def lipschitz_constants(self) -> np.ndarray:
        """Per-agent Lipschitz constant (the largest gain) of each policy class."""
        return np.array([max(pd.gain for pd in p) for p in self.per_agent])


def default_policy_set(spec: MarkovGameSpec, gains=(0.2, 0.5, 1.0, 2.0), a_max: float | None = None) -> PolicySet:
    """Identical gain ladders for every agent, aimed at the reward goals."""
    a_max = spec.action_limit if a_max is None else a_max
    per_agent = [[PolicyDescriptor(float(k), float(g), a_max) for k in gains] for g in spec.rewards.goals]
    return PolicySet(per_agent)


def policy_act(ps: PolicySet, agent: int, policy: int, s) -> np.ndarray:
    """Action of policy ``policy`` of ``agent`` at state ``s`` (length-1 vector)."""
    if not 0 <= agent < ps.n_agents or not 0 <= policy < ps.shape[agent]:
        raise IndexError(f"policy ({agent}, {policy}) out of range")
    pd = ps.per_agent[agent][policy]
    s = np.asarray(s, dtype=float)
    return np.clip(pd.gain * (pd.goal - s[..., agent:agent + 1]), -pd.a_max, pd.a_max)


def joint_action(ps: PolicySet, profiles: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Batched joint actions: ``profiles`` is ``(..., N)`` ints, ``s`` is ``(..., p)``."""
    n = ps.n_agents
    agents = np.arange(n)
    k = ps.gains[agents, profiles]
    g = ps.goals[agents, profiles]
    amax = ps.a_max[agents, profiles]
    return np.clip(k * (g - s[..., :n]), -amax, amax)


@dataclass(frozen=True)
class RolloutTrace:
    states: np.ndarray  # (H + 1, p)
    actions: np.ndarray  # (H, sum q_i)
    rewards: np.ndarray  # (H, N)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=0)

    def transitions(self) -> tuple[np.ndarray, np.ndarray]:
        """GP training rows: inputs ``s_h (+) a_h`` and targets ``s_{h+1} - s_h``."""
        x = np.concatenate([self.states[:-1], self.actions], axis=1)
        return x, self.states[1:] - self.states[:-1]


def _noise_array(spec: MarkovGameSpec, noise, batch_shape=()) -> np.ndarray:
    shape = (*batch_shape, spec.horizon, spec.state_dim)
    if noise is None:
        return np.zeros(shape)
    if isinstance(noise, np.random.Generator):
        return noise.standard_normal(shape) * spec.noise_std
    w = np.asarray(noise, dtype=float)
    if w.shape != shape:
        raise ValueError(f"noise must have shape {shape}, got {w.shape}")
    return w


def rollout_batch(spec: MarkovGameSpec, ps: PolicySet, profiles: np.ndarray, noise: np.ndarray):
    """Closed-loop rollouts for a batch of profiles ``(B, N)``; noise ``(B, H, p)``.

    Returns ``(states (B, H+1, p), actions (B, H, N), rewards (B, H, N))``.
    """
    profiles = np.asarray(profiles, dtype=int)
    b = profiles.shape[0]
    h_len, p = spec.horizon, spec.state_dim
    states = np.empty((b, h_len + 1, p))
    actions = np.empty((b, h_len, spec.joint_action_dim))
    rew = np.empty((b, h_len, spec.n_agents))
    states[:, 0] = spec.initial_state
    for h in range(h_len):
        s = states[:, h]
        a = joint_action(ps, profiles, s)
        actions[:, h] = a
        states[:, h + 1], rew[:, h] = env_step(spec, s, a, noise[:, h])
    return states, actions, rew


def rollout_true(spec: MarkovGameSpec, ps: PolicySet, profile, noise=None) -> RolloutTrace:
    """One episode in the true environment.

    ``noise`` is either a generator (drawn as ``H`` Gaussian vectors scaled by
    ``spec.noise_std``), an explicit ``(H, p)`` array, or None for noise-free.
    """
    profile = ps.check_profile(profile)
    w = _noise_array(spec, noise)
    states, actions, rew = rollout_batch(spec, ps, np.array([profile]), w[None])
    return RolloutTrace(states[0], actions[0], rew[0])


def true_payoff_tensor(
    spec: MarkovGameSpec,
    ps: PolicySet,
    episodes: int = 200,
    seed: int = 0,
    deterministic: bool = False,
) -> PayoffTensor:
    """Per-agent values of every profile.

    Monte-Carlo estimates use common random numbers: episode ``m`` of every
    profile sees the noise of stream ``(seed, TRUE_VALUE, m)``.  In
    deterministic mode the noise-free value is returned and ``episodes`` is
    ignored.
    """
    profiles = ps.profiles()
    n_prof = profiles.shape[0]
    if deterministic:
        noise = np.zeros((n_prof, 1, spec.horizon, spec.state_dim))
        episodes = 1
    else:
        if episodes < 1:
            raise ValueError("episodes must be >= 1")
        per_ep = np.stack([_noise_array(spec, derive(seed, TAG_TRUE_VALUE, m)) for m in range(episodes)])
        noise = np.broadcast_to(per_ep, (n_prof, *per_ep.shape))
    flat_prof = np.repeat(profiles, episodes, axis=0)
    _, _, rew = rollout_batch(spec, ps, flat_prof, noise.reshape(-1, spec.horizon, spec.state_dim))
    returns = rew.sum(axis=1).reshape(n_prof, episodes, spec.n_agents)
    mean = returns.mean(axis=1)
    if episodes > 1:
        se = returns.std(axis=1, ddof=1) / np.sqrt(episodes)
    else:
        se = np.zeros_like(mean)
    values = np.moveaxis(mean, -1, 0).reshape(spec.n_agents, *ps.shape)
    std_error = np.moveaxis(se, -1, 0).reshape(spec.n_agents, *ps.shape)
    return PayoffTensor(values, std_error=std_error)


def closed_loop_lipschitz(spec: MarkovGameSpec, ps: PolicySet) -> float:
    """Frobenius bound on the Jacobian of ``s -> f(s, pi(s))`` over all profiles.

    Agent rows contribute ``max(1, |1 - dt * k|)``; the entity row
    contributes ``max(1, |1 - c * kappa|)`` on ``z`` and ``c * kappa / N``
    on each agent position.  Clamping only shrinks differences.
    """
    n = spec.n_agents
    dyn = spec.dynamics
    k = ps.lipschitz_constants()
    agent_rows = np.maximum(1.0, np.abs(1.0 - dyn.dt * k)) ** 2
    ck = abs(dyn.coupling) * dyn.sharpness
    entity_row = max(1.0, abs(1.0 - ck)) ** 2 + n * (ck / n) ** 2
    return float(np.sqrt(agent_rows.sum() + entity_row))


def with_noise(spec: MarkovGameSpec, noise_std) -> MarkovGameSpec:
    return replace(spec, noise_std=np.broadcast_to(np.asarray(noise_std, dtype=float), (spec.state_dim,)))
