"""Optimistic and pessimistic value estimates through a learned model.

A hallucinated transition moves the posterior-mean prediction inside its
confidence band: ``s' = mu(s, a) + beta * sigma(s, a) * eta + w`` with
``eta`` in ``[-1, 1]^p``.  At every step a finite set of ``eta`` candidates
is expanded from the same parent state and the same noise draw, and the
candidate with the best (``max``) or worst (``min``) immediate reward for the
evaluating agent is kept.  The ``mean`` objective always uses ``eta = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hmarl import game_env as ge
from hmarl.gp_model import BetaSchedule, GPPosterior, beta_value, gp_predict
from hmarl.streams import TAG_ETA, TAG_HALLUCINATE, derive

OBJECTIVES = ("max", "min", "mean")
ETA_MODES = ("spaced", "random")
SELECTIONS = ("greedy", "trajectory_beam")


class HallucinationDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class EtaGrid:
    """Candidate perturbations.

    In ``spaced`` mode the ``Z`` vectors are ``c_j * mask`` with ``c_j``
    evenly spaced over ``[-1, 1]`` and are reused at every step.  In
    ``random`` mode fresh vectors are drawn uniformly at each step;
    ``vectors`` then holds only the shape template.  Masked-off coordinates
    are always zero.
    """

    z: int
    mask: np.ndarray
    mode: str = "spaced"
    vectors: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.z < 1:
            raise ValueError("Z must be >= 1")
        if self.mode not in ETA_MODES:
            raise ValueError(f"unknown eta mode {self.mode!r}")
        mask = np.array(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        scalars = np.linspace(-1.0, 1.0, self.z) if self.z > 1 else np.zeros(1)
        vec = scalars[:, None] * mask[None, :]
        vec.setflags(write=False)
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self) -> int:
        return self.mask.shape[0]

    def draw(self, rng: np.random.Generator | None, horizon: int) -> np.ndarray:
        """Per-step candidate sets, shape ``(H, Z, p)``."""
        if self.mode == "spaced":
            return np.broadcast_to(self.vectors, (horizon, self.z, self.dim))
        u = rng.uniform(-1.0, 1.0, size=(horizon, self.z, self.dim))
        return u * self.mask


def zero_grid(dim: int) -> EtaGrid:
    return EtaGrid(1, np.zeros(dim, dtype=bool))


@dataclass(frozen=True)
class HallucinationConfig:
    z: int = 5
    eta_mode: str = "spaced"
    # None perturbs only the last (uncontrolled-entity) coordinate.
    coordinate_mask: tuple[bool, ...] | None = None
    episodes: int = 5
    beta: BetaSchedule = BetaSchedule()
    # None reuses the environment's noise level.
    noise_std: tuple[float, ...] | None = None
    selection: str = "greedy"

    def __post_init__(self):
        if self.z < 1:
            raise ValueError("Z must be >= 1")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.eta_mode not in ETA_MODES:
            raise ValueError(f"unknown eta mode {self.eta_mode!r}")
        if self.selection not in SELECTIONS:
            raise ValueError(f"unknown selection {self.selection!r}")

    def grid(self, dim: int) -> EtaGrid:
        if self.coordinate_mask is None:
            mask = np.zeros(dim, dtype=bool)
            mask[-1] = True
        else:
            mask = np.array(self.coordinate_mask, dtype=bool)
            if mask.shape != (dim,):
                raise ValueError(f"coordinate_mask must have length {dim}")
        return EtaGrid(self.z, mask, self.eta_mode)

    def noise_for(self, spec: ge.MarkovGameSpec) -> np.ndarray:
        if self.noise_std is None:
            return spec.noise_std
        return np.broadcast_to(np.asarray(self.noise_std, dtype=float), (spec.state_dim,))


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    std_error: float
    episodes: int


@dataclass(frozen=True)
class StreamFamily:
    """Noise streams for one round; keys are ``(round, profile, agent, episode, tag)``."""

    master: int
    round: int = 0

    def noise(self, profile_flat: int, agent: int, episode: int, shape, std) -> np.ndarray:
        rng = derive(self.master, self.round, profile_flat, agent, episode, TAG_HALLUCINATE)
        return rng.standard_normal(shape) * std

    def eta_rng(self, profile_flat: int, agent: int, episode: int) -> np.random.Generator:
        return derive(self.master, self.round, profile_flat, agent, episode, TAG_ETA)


def hallucinated_step(post: GPPosterior, beta: float, s, a, eta, w) -> np.ndarray:
    """``mu(s, a) + beta * (sigma(s, a) * eta) + w``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    eta = np.asarray(eta, dtype=float)
    if np.any(np.abs(eta) > 1.0):
        raise ValueError("eta must lie in [-1, 1]^p")
    mean_next, std = gp_predict(post, s, a)
    return mean_next + beta * (std * eta) + np.asarray(w, dtype=float)


def _select(cand_r: np.ndarray, objective: str) -> np.ndarray:
    # argmax/argmin return the first extremum, i.e. the lowest index on ties
    if objective == "min":
        return np.argmin(cand_r, axis=-1)
    return np.argmax(cand_r, axis=-1)


def rollout_batch(
    post: GPPosterior,
    beta: float,
    spec: ge.MarkovGameSpec,
    ps: ge.PolicySet,
    profiles: np.ndarray,
    agents: np.ndarray,
    eta: np.ndarray,
    noise: np.ndarray,
    objective: str,
):
    """Greedy hallucinated rollouts for a batch.

    ``profiles`` is ``(B, N)``, ``agents`` ``(B,)`` (whose reward drives the
    selection), ``eta`` ``(B, H, Z, p)`` and ``noise`` ``(B, H, p)``.
    Returns states ``(B, H+1, p)``, actions ``(B, H, N)``, rewards
    ``(B, H, N)`` and the candidate rewards ``(B, H, Z)`` seen at each step.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if np.any(np.abs(eta) > 1.0):
        raise ValueError("eta must lie in [-1, 1]^p")
    profiles = np.asarray(profiles, dtype=int)
    agents = np.asarray(agents, dtype=int)
    b = profiles.shape[0]
    h_len, p = spec.horizon, spec.state_dim
    if objective == "mean":
        eta = np.zeros((b, h_len, 1, p))
    z_count = eta.shape[2]
    rows = np.arange(b)
    states = np.empty((b, h_len + 1, p))
    actions = np.empty((b, h_len, spec.joint_action_dim))
    rew = np.empty((b, h_len, spec.n_agents))
    cand_rewards = np.empty((b, h_len, z_count))
    states[:, 0] = spec.initial_state
    for h in range(h_len):
        s = states[:, h]
        a = ge.joint_action(ps, profiles, s)
        actions[:, h] = a
        rew[:, h] = ge.rewards(spec, s, a)
        mean_next, std = gp_predict(post, s, a)
        with np.errstate(invalid="ignore", over="ignore"):
            cand = mean_next[:, None, :] + beta * (std[:, None, :] * eta[:, h]) + noise[:, h][:, None, :]
        if not np.all(np.isfinite(cand)):
            raise HallucinationDiverged("hallucination diverged")
        cand_a = ge.joint_action(ps, np.broadcast_to(profiles[:, None, :], (b, z_count, ps.n_agents)), cand)
        cr = ge.rewards(spec, cand, cand_a)[rows, :, agents]
        cand_rewards[:, h] = cr
        states[:, h + 1] = cand[rows, _select(cr, objective)]
    return states, actions, rew, cand_rewards


def _beam(post, beta, spec, ps, profiles, agents, eta, noise, objective):
    """Track ``Z`` parallel trajectories and keep the best by cumulative reward."""
    b, h_len, z_count, p = eta.shape
    rep_prof = np.repeat(profiles, z_count, axis=0)
    rep_agents = np.repeat(agents, z_count)
    per_traj = np.moveaxis(eta, 2, 1).reshape(b * z_count, h_len, 1, p)
    rep_noise = np.repeat(noise, z_count, axis=0)
    states, actions, rew, _ = rollout_batch(post, beta, spec, ps, rep_prof, rep_agents, per_traj, rep_noise, "max")
    totals = rew.sum(axis=1)[np.arange(b * z_count), rep_agents].reshape(b, z_count)
    pick = _select(totals, objective) + np.arange(b) * z_count
    return states[pick], actions[pick], rew[pick]


def greedy_rollout(
    post: GPPosterior,
    beta: float,
    spec: ge.MarkovGameSpec,
    ps: ge.PolicySet,
    profile,
    agent: int,
    grid: EtaGrid,
    noise,
    objective: str = "max",
    eta_rng: np.random.Generator | None = None,
) -> ge.RolloutTrace:
    """One hallucinated episode evaluated for ``agent``.

    ``noise`` is an ``(H, p)`` array (or None for noise-free).  Trace rewards
    are the true reward functions evaluated on the hallucinated states.
    """
    profile = ps.check_profile(profile)
    if not 0 <= agent < ps.n_agents:
        raise IndexError(f"agent {agent} out of range")
    w = ge._noise_array(spec, noise)
    eta = grid.draw(eta_rng, spec.horizon)[None]
    states, actions, rew, _ = rollout_batch(
        post, beta, spec, ps, np.array([profile]), np.array([agent]), eta, w[None], objective
    )
    return ge.RolloutTrace(states[0], actions[0], rew[0])


def _episode_inputs(spec, ps, cfg: HallucinationConfig, streams: StreamFamily, profiles, agents, grid):
    """Noise ``(B*M, H, p)`` and eta ``(B*M, H, Z, p)`` for every (profile, agent, episode)."""
    m_count = cfg.episodes
    std = cfg.noise_for(spec)
    shape = (spec.horizon, spec.state_dim)
    noise, eta = [], []
    for prof, agent in zip(profiles, agents):
        flat = ps.flat_index(prof)
        for m in range(m_count):
            noise.append(streams.noise(flat, int(agent), m, shape, std))
            rng = streams.eta_rng(flat, int(agent), m) if grid.mode == "random" else None
            eta.append(grid.draw(rng, spec.horizon))
    return np.stack(noise), np.stack(eta)


def episode_returns(
    post: GPPosterior,
    spec: ge.MarkovGameSpec,
    ps: ge.PolicySet,
    profiles: np.ndarray,
    agents: np.ndarray,
    cfg: HallucinationConfig,
    streams: StreamFamily,
    objective: str,
    beta: float | None = None,
) -> np.ndarray:
    """Hallucinated returns for each (profile, agent) pair, shape ``(B, M)``."""
    profiles = np.asarray(profiles, dtype=int).reshape(-1, ps.n_agents)
    agents = np.asarray(agents, dtype=int).reshape(-1)
    if beta is None:
        beta = beta_value(cfg.beta, post.n_points)
    grid = cfg.grid(spec.state_dim)
    noise, eta = _episode_inputs(spec, ps, cfg, streams, profiles, agents, grid)
    m_count = cfg.episodes
    rep_prof = np.repeat(profiles, m_count, axis=0)
    rep_agents = np.repeat(agents, m_count)
    if cfg.selection == "trajectory_beam" and objective != "mean":
        _, _, rew = _beam(post, beta, spec, ps, rep_prof, rep_agents, eta, noise, objective)
    else:
        _, _, rew, _ = rollout_batch(post, beta, spec, ps, rep_prof, rep_agents, eta, noise, objective)
    ret = rew.sum(axis=1)[np.arange(rep_agents.size), rep_agents]
    return ret.reshape(-1, m_count)


def _summarize(returns: np.ndarray) -> ValueEstimate:
    m = returns.size
    se = float(returns.std(ddof=1) / np.sqrt(m)) if m > 1 else 0.0
    return ValueEstimate(float(returns.mean()), se, m)


def _estimate(post, spec, ps, profile, agent, cfg, streams, objective, beta):
    profile = ps.check_profile(profile)
    ret = episode_returns(post, spec, ps, np.array([profile]), np.array([agent]), cfg, streams, objective, beta)
    return _summarize(ret[0])


def ucb_estimate(post, spec, ps, profile, agent, cfg: HallucinationConfig, streams: StreamFamily, beta=None) -> ValueEstimate:
    """Optimistic value: mean return of ``M`` max-selection rollouts."""
    return _estimate(post, spec, ps, profile, agent, cfg, streams, "max", beta)


def lcb_estimate(post, spec, ps, profile, agent, cfg: HallucinationConfig, streams: StreamFamily, beta=None) -> ValueEstimate:
    """Pessimistic value: mean return of ``M`` min-selection rollouts."""
    return _estimate(post, spec, ps, profile, agent, cfg, streams, "min", beta)


def mean_estimate(post, spec, ps, profile, agent, cfg: HallucinationConfig, streams: StreamFamily, beta=None) -> ValueEstimate:
    """Posterior-mean value (``eta = 0``); ``beta`` has no effect."""
    return _estimate(post, spec, ps, profile, agent, cfg, streams, "mean", 0.0 if beta is None else beta)


def value_tensor(
    post: GPPosterior,
    spec: ge.MarkovGameSpec,
    ps: ge.PolicySet,
    cfg: HallucinationConfig,
    streams: StreamFamily,
    objective: str,
    beta: float | None = None,
):
    """Estimates for every profile and agent: ``(values, std_errors)``, each ``(N, K_1..K_N)``."""
    profiles = ps.profiles()
    n = ps.n_agents
    pairs_prof = np.repeat(profiles, n, axis=0)
    pairs_agent = np.tile(np.arange(n), profiles.shape[0])
    ret = episode_returns(post, spec, ps, pairs_prof, pairs_agent, cfg, streams, objective, beta)
    m = ret.shape[1]
    mean = ret.mean(axis=1).reshape(-1, n)
    se = (ret.std(axis=1, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(ret.shape[0])).reshape(-1, n)
    shape = (n, *ps.shape)
    return np.moveaxis(mean, -1, 0).reshape(shape), np.moveaxis(se, -1, 0).reshape(shape)
