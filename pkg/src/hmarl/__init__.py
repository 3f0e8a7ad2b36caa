"""Hallucinated optimistic model-based multi-agent RL on desk-scale Markov games."""

from hmarl.cce_solver import (
    HedgeConfig,
    MixedProfile,
    PayoffTensor,
    best_response_value,
    exploitability,
    hedge_selfplay,
    is_eps_cce,
)
from hmarl.driver import (
    ExperimentConfig,
    ExperimentResult,
    GPSettings,
    RoundLog,
    dynamic_regret,
    epsilon_sum,
    information_curve,
    run_experiment,
    run_round,
    select_tstar,
)
from hmarl.game_env import (
    MarkovGameSpec,
    PolicyDescriptor,
    PolicySet,
    RolloutTrace,
    canonical_env,
    default_policy_set,
    env_step,
    grid_env,
    policy_act,
    rollout_true,
    true_payoff_tensor,
)
from hmarl.gp_model import (
    BetaSchedule,
    GPPosterior,
    KernelSpec,
    TransitionDataset,
    beta_value,
    gp_fit,
    gp_predict,
    gp_update,
)
from hmarl.hallucination import (
    EtaGrid,
    HallucinationConfig,
    StreamFamily,
    ValueEstimate,
    greedy_rollout,
    hallucinated_step,
    lcb_estimate,
    mean_estimate,
    ucb_estimate,
)

__version__ = "0.1.0"
