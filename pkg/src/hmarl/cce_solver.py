"""Coarse correlated equilibria of finite normal-form games.

Payoffs are stored as one array of shape ``(N, K_1, ..., K_N)``; a
distribution over joint profiles is an array of shape ``(K_1, ..., K_N)``.
Equilibria are computed by Hedge self-play: every agent runs
multiplicative weights against the product of the others' current mixtures
and the time-average of the joint play is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PayoffTensor:
    values: np.ndarray
    std_error: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim < 2 or v.shape[0] != v.ndim - 1:
            raise ValueError("values must have shape (N, K_1, ..., K_N)")
        if not np.all(np.isfinite(v)):
            raise ValueError("payoff tensor must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.std_error is not None:
            se = np.array(self.std_error, dtype=float)
            if se.shape != v.shape:
                raise ValueError("std_error shape must match values")
            se.setflags(write=False)
            object.__setattr__(self, "std_error", se)

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def expected(self, mixed: "MixedProfile") -> np.ndarray:
        """``E_{pi ~ P}[U^i(pi)]`` for every agent."""
        _check_shapes(self, mixed)
        return np.tensordot(self.values, mixed.probs, axes=self.n_agents)


@dataclass(frozen=True)
class MixedProfile:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        total = p.sum()
        if total <= 0:
            raise ValueError("probabilities must not all be zero")
        p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, shape, profile) -> "MixedProfile":
        p = np.zeros(shape)
        p[tuple(profile)] = 1.0
        return cls(p)

    @classmethod
    def product(cls, marginals) -> "MixedProfile":
        return cls(_outer(marginals))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.probs.shape

    def marginal(self, agent: int) -> np.ndarray:
        axes = tuple(a for a in range(self.probs.ndim) if a != agent)
        return self.probs.sum(axis=axes)

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        flat = rng.choice(self.probs.size, p=self.probs.ravel())
        return tuple(int(j) for j in np.unravel_index(flat, self.probs.shape))


@dataclass(frozen=True)
class HedgeConfig:
    iterations: int = 2000
    # None selects the horizon-tuned rate sqrt(8 ln K_i / T) per agent.
    learning_rate: float | None = None
    target_eps: float = 0.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.target_eps < 0:
            raise ValueError("target_eps must be non-negative")


def _outer(vectors) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=float)
    for v in vectors[1:]:
        out = np.multiply.outer(out, v)
    return out


def _check_shapes(tensor: PayoffTensor, mixed: MixedProfile):
    if tensor.shape != mixed.shape:
        raise ValueError(f"shape mismatch: tensor {tensor.shape} vs distribution {mixed.shape}")


def _against_others(u: np.ndarray, agent: int, others) -> np.ndarray:
    """Contract ``u`` (shape ``(K_1..K_N)``) with every mixture except ``agent``'s."""
    out = np.moveaxis(u, agent, 0)
    for x in (x for j, x in enumerate(others) if j != agent):
        # after moving ``agent`` to the front the remaining axes keep their
        # order, so the next opponent is always axis 1
        out = np.tensordot(out, x, axes=([1], [0]))
    return out


def deviation_values(tensor: PayoffTensor, mixed: MixedProfile, agent: int) -> np.ndarray:
    """Value of every fixed policy of ``agent`` against ``P``'s opponent marginal."""
    _check_shapes(tensor, mixed)
    u = np.moveaxis(tensor.values[agent], agent, 0).reshape(tensor.shape[agent], -1)
    others = np.moveaxis(mixed.probs, agent, 0).sum(axis=0).ravel()
    return u @ others


def best_response_value(tensor: PayoffTensor, mixed: MixedProfile, agent: int) -> tuple[float, int]:
    """Best deviation value for ``agent`` and its (lowest) maximizing index."""
    dev = deviation_values(tensor, mixed, agent)
    j = int(np.argmax(dev))
    return float(dev[j]), j


def exploitability(tensor: PayoffTensor, mixed: MixedProfile) -> tuple[np.ndarray, float]:
    """Per-agent gain from the best unilateral fixed deviation, and its maximum.

    No clamping is applied.  For product distributions the gain is never
    negative; a correlated ``P`` can beat every fixed deviation, in which
    case the entry is negative.
    """
    base = tensor.expected(mixed)
    eps = np.array([best_response_value(tensor, mixed, i)[0] - base[i] for i in range(tensor.n_agents)])
    return eps, float(eps.max())


def is_eps_cce(tensor: PayoffTensor, mixed: MixedProfile, eps: float) -> bool:
    return exploitability(tensor, mixed)[1] <= eps


def hedge_selfplay(tensor: PayoffTensor, cfg: HedgeConfig = HedgeConfig(), rng=None) -> MixedProfile:
    """Time-averaged joint play of independent Hedge learners.

    Each agent's payoffs are rescaled to ``[0, 1]`` before the update, so the
    output is invariant to positive affine payoff transformations.  The run
    is deterministic; ``rng`` is accepted for interface compatibility and
    unused.
    """
    n, shape = tensor.n_agents, tensor.shape
    t_total = cfg.iterations
    scaled = []
    for i in range(n):
        u = tensor.values[i]
        lo, hi = u.min(), u.max()
        scaled.append((u - lo) / (hi - lo) if hi > lo else np.zeros_like(u))
    rates = [
        cfg.learning_rate if cfg.learning_rate is not None else math.sqrt(8.0 * math.log(k) / t_total) if k > 1 else 0.0
        for k in shape
    ]
    log_w = [np.zeros(k) for k in shape]
    avg = np.zeros(shape)
    done = 0
    for tau in range(1, t_total + 1):
        mix = []
        for lw in log_w:
            e = np.exp(lw - lw.max())
            mix.append(e / e.sum())
        avg += _outer(mix)
        done = tau
        if cfg.target_eps > 0 and tau % 100 == 0:
            if exploitability(tensor, MixedProfile(avg / tau))[1] <= cfg.target_eps:
                break
        for i in range(n):
            log_w[i] = log_w[i] + rates[i] * _against_others(scaled[i], i, mix)
    return MixedProfile(avg / done)
