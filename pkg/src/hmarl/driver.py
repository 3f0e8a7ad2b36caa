"""Round loop and metrics.

Each round builds optimistic and pessimistic payoff tensors from the current
model, solves the optimistic game with Hedge, samples and plays one joint
profile in the true environment, and refits the model on the observed
transitions.  Regret is measured exactly from the stored distributions and
a true payoff tensor computed once per run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from hmarl import game_env as ge
from hmarl.cce_solver import (
    HedgeConfig,
    MixedProfile,
    PayoffTensor,
    best_response_value,
    exploitability,
    hedge_selfplay,
)
from hmarl.gp_model import GPPosterior, KernelSpec, TransitionDataset, beta_value, gp_fit, gp_update
from hmarl.hallucination import HallucinationConfig, StreamFamily, value_tensor
from hmarl.streams import TAG_ENV, TAG_SAMPLE, derive

PLANNERS = ("hmarl", "predmean", "oracle")


@dataclass(frozen=True)
class GPSettings:
    kernels: tuple[KernelSpec, ...]
    noise_var: float = 1e-4

    @classmethod
    def default(cls, spec: ge.MarkovGameSpec, kind="se", lengthscale=0.5, signal_variance=0.05, noise_var=1e-4):
        k = KernelSpec.isotropic(kind, spec.input_dim, lengthscale, signal_variance)
        return cls((k,) * spec.state_dim, noise_var)


@dataclass(frozen=True)
class ExperimentConfig:
    env: ge.MarkovGameSpec
    policy_set: ge.PolicySet
    planners: tuple[str, ...] = ("hmarl",)
    rounds: int = 50
    hallucination: HallucinationConfig = HallucinationConfig()
    gp: GPSettings | None = None
    cce: HedgeConfig = HedgeConfig()
    seeds: tuple[int, ...] = (0,)
    true_value_episodes: int = 200
    output_dir: str = "results"
    record_timing: bool = False

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        for p in self.planners:
            if p not in PLANNERS:
                raise ValueError(f"unknown planner {p!r}")
        if self.gp is None:
            object.__setattr__(self, "gp", GPSettings.default(self.env))

    @property
    def planner(self) -> str:
        return self.planners[0]


@dataclass(frozen=True)
class RoundLog:
    t: int
    mixed: MixedProfile
    sampled: tuple[int, ...]
    trace: ge.RolloutTrace
    ucb_tensor: PayoffTensor
    lcb_tensor: PayoffTensor
    eps_per_agent: np.ndarray
    eps_t: float
    gap_t: float
    sigma_sq_increment: float
    true_value_under_P: np.ndarray
    beta: float
    seconds: float = 0.0


@dataclass
class ExperimentResult:
    planner: str
    seed: int
    logs: list[RoundLog]
    true_tensor: PayoffTensor
    regret_terms: np.ndarray = field(init=False)  # (T, N)
    regret_curves: np.ndarray = field(init=False)  # (T, N) cumulative
    information_curve: np.ndarray = field(init=False)
    t_star: int = field(init=False)
    eps_sum: float = field(init=False)

    def __post_init__(self):
        self.regret_terms = regret_terms(self.logs, self.true_tensor)
        self.regret_curves = np.cumsum(self.regret_terms, axis=0)
        self.information_curve = information_curve(self.logs)
        self.t_star = select_tstar(self.logs)
        self.eps_sum = epsilon_sum(self.logs)

    @property
    def avg_true_value(self) -> np.ndarray:
        """Per-round mean over agents of ``E_{P_t}[V^i]``."""
        return np.array([log.true_value_under_P.mean() for log in self.logs])

    @property
    def rounds(self) -> int:
        return len(self.logs)


def initial_model(spec: ge.MarkovGameSpec, gp: GPSettings) -> GPPosterior:
    return gp_fit(TransitionDataset.empty(spec.input_dim, spec.state_dim), gp.kernels, gp.noise_var)


def true_tensor_for(cfg: ExperimentConfig, seed: int) -> PayoffTensor:
    deterministic = not np.any(cfg.env.noise_std > 0)
    return ge.true_payoff_tensor(
        cfg.env, cfg.policy_set, episodes=cfg.true_value_episodes, seed=seed, deterministic=deterministic
    )


def sigma_sq_increment(model: GPPosterior, trace: ge.RolloutTrace) -> float:
    """``sum_h ||sigma(s_h, a_h)||^2`` over an episode's observed inputs."""
    x, _ = trace.transitions()
    _, std = model.predict_delta(x)
    return float(np.sum(std**2))


def run_round(
    model: GPPosterior,
    cfg: ExperimentConfig,
    t: int,
    seed: int,
    planner: str,
    true_tensor: PayoffTensor,
) -> tuple[RoundLog, GPPosterior]:
    start = time.perf_counter()
    spec, ps = cfg.env, cfg.policy_set
    streams = StreamFamily(seed, t)
    if planner == "oracle":
        beta = 0.0
        ucb = lcb = PayoffTensor(true_tensor.values)
    elif planner == "predmean":
        beta = 0.0
        vals, se = value_tensor(model, spec, ps, cfg.hallucination, streams, "mean", beta=0.0)
        ucb = lcb = PayoffTensor(vals, std_error=se)
    elif planner == "hmarl":
        beta = beta_value(cfg.hallucination.beta, model.n_points)
        up, up_se = value_tensor(model, spec, ps, cfg.hallucination, streams, "max", beta=beta)
        lo, lo_se = value_tensor(model, spec, ps, cfg.hallucination, streams, "min", beta=beta)
        ucb, lcb = PayoffTensor(up, std_error=up_se), PayoffTensor(lo, std_error=lo_se)
    else:
        raise ValueError(f"unknown planner {planner!r}")

    mixed = hedge_selfplay(ucb, cfg.cce)
    eps_agents, eps_t = exploitability(ucb, mixed)
    gap_t = float(np.max(np.tensordot(ucb.values - lcb.values, mixed.probs, axes=ps.n_agents)))
    sampled = mixed.sample(derive(seed, t, TAG_SAMPLE))
    trace = ge.rollout_true(spec, ps, sampled, derive(seed, t, TAG_ENV))
    increment = sigma_sq_increment(model, trace)
    x, y = trace.transitions()
    new_model = gp_update(model, x, y)
    log = RoundLog(
        t=t,
        mixed=mixed,
        sampled=sampled,
        trace=trace,
        ucb_tensor=ucb,
        lcb_tensor=lcb,
        eps_per_agent=eps_agents,
        eps_t=eps_t,
        gap_t=gap_t,
        sigma_sq_increment=increment,
        true_value_under_P=true_tensor.expected(mixed),
        beta=beta,
        seconds=time.perf_counter() - start,
    )
    return log, new_model


def run_experiment(cfg: ExperimentConfig, seed: int | None = None, planner: str | None = None) -> ExperimentResult:
    """``cfg.rounds`` sequential rounds of one planner; pure in ``(cfg, seed)``."""
    seed = cfg.seeds[0] if seed is None else seed
    planner = cfg.planner if planner is None else planner
    true_tensor = true_tensor_for(cfg, seed)
    model = initial_model(cfg.env, cfg.gp)
    logs = []
    for t in range(1, cfg.rounds + 1):
        log, model = run_round(model, cfg, t, seed, planner, true_tensor)
        logs.append(log)
    return ExperimentResult(planner, seed, logs, true_tensor)


def regret_terms(logs, true_tensor: PayoffTensor) -> np.ndarray:
    """Per-round, per-agent ``max_j E_{P^-i}[V^i(j, .)] - E_P[V^i]``, shape ``(T, N)``."""
    terms = np.empty((len(logs), true_tensor.n_agents))
    for r, log in enumerate(logs):
        base = true_tensor.expected(log.mixed)
        for i in range(true_tensor.n_agents):
            terms[r, i] = best_response_value(true_tensor, log.mixed, i)[0] - base[i]
    return terms


def dynamic_regret(logs, true_tensor: PayoffTensor) -> np.ndarray:
    """Cumulative dynamic regret curves ``R^i(t)``, shape ``(T, N)``."""
    return np.cumsum(regret_terms(logs, true_tensor), axis=0)


def information_curve(logs) -> np.ndarray:
    if isinstance(logs, np.ndarray) or (len(logs) and not isinstance(logs[0], RoundLog)):
        return np.cumsum(np.asarray(logs, dtype=float))
    return np.cumsum([log.sigma_sq_increment for log in logs])


def select_tstar(logs) -> int:
    """Round (1-indexed) with the smallest worst-agent UCB-LCB gap; ties go to the earliest."""
    if len(logs) == 0:
        raise ValueError("select_tstar needs at least one round")
    gaps = [log.gap_t if isinstance(log, RoundLog) else float(log) for log in logs]
    return int(np.argmin(gaps)) + 1


def epsilon_sum(logs) -> float:
    return float(sum(log.eps_t if isinstance(log, RoundLog) else float(log) for log in logs))
