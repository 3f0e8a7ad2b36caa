"""YAML experiment configuration.

Only ``env``, ``planner``, ``rounds`` and ``seed`` (or ``seeds``) are
required; every other key has a documented default (see README).  Unknown
keys are rejected with their full dotted path.
"""

from __future__ import annotations

from typing import Any

import numpy as np
import yaml

from hmarl import game_env as ge
from hmarl.cce_solver import HedgeConfig
from hmarl.driver import PLANNERS, ExperimentConfig, GPSettings
from hmarl.gp_model import KERNEL_KINDS, BetaSchedule, KernelSpec
from hmarl.hallucination import ETA_MODES, SELECTIONS, HallucinationConfig


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


_SCHEMA: dict[str, Any] = {
    "env": {
        "name": None,
        "horizon": None,
        "initial_state": None,
        "noise_std": None,
        "goals": None,
        "action_limit": None,
        "dt": None,
        "coupling": None,
        "sharpness": None,
        "clamp": None,
        "entity_penalty": None,
        "agent_penalty": None,
        "width": None,
    },
    "policy_set": {"gains": None, "a_max": None},
    "planner": None,
    "rounds": None,
    "seed": None,
    "seeds": None,
    "hallucination": {
        "z": None,
        "eta_mode": None,
        "coordinate_mask": None,
        "episodes": None,
        "beta": {"kind": None, "value": None, "delta": None},
        "noise_std": None,
        "selection": None,
    },
    "gp": {"kernels": None, "lengthscales": None, "signal_variance": None, "noise_var": None},
    "cce": {"iterations": None, "learning_rate": None, "target_eps": None},
    "true_value": {"episodes": None},
    "output": {"directory": None, "record_timing": None},
}


def _check_keys(node, schema, path=""):
    if not isinstance(node, dict):
        raise ConfigError(path, "expected a mapping")
    for key, value in node.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in schema:
            raise ConfigError(sub, f"unknown key {key!r}")
        if isinstance(schema[key], dict) and value is not None:
            _check_keys(value, schema[key], sub)


def _num(node, key, path, default, kind=float, low=None, high=None, strict_low=False):
    if key not in node or node[key] is None:
        return default
    value = node[key]
    where = f"{path}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(where, "expected an integer")
        value = int(value)
    else:
        value = float(value)
    if low is not None and (value <= low if strict_low else value < low):
        raise ConfigError(where, f"must be {'>' if strict_low else '>='} {low}")
    if high is not None and value > high:
        raise ConfigError(where, f"must be <= {high}")
    return value


def _vector(node, key, path, length, default=None):
    if key not in node or node[key] is None:
        return default
    value = node[key]
    where = f"{path}.{key}"
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(length, float(value))
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, "expected a list of numbers") from None
    if arr.shape != (length,):
        raise ConfigError(where, f"expected {length} values")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(where, "values must be finite")
    return arr


def _choice(node, key, path, options, default):
    if key not in node or node[key] is None:
        return default
    value = node[key]
    if value not in options:
        raise ConfigError(f"{path}.{key}", f"expected one of {list(options)}, got {value!r}")
    return value


def _build_env(node) -> ge.MarkovGameSpec:
    if node is None or "name" not in node:
        raise ConfigError("env.name", "missing required key")
    name = node["name"]
    if name not in ge.ENVIRONMENTS:
        raise ConfigError("env.name", f"unknown environment {name!r}; expected one of {list(ge.ENVIRONMENTS)}")
    base = ge.ENVIRONMENTS[name]()
    n, p = base.n_agents, base.state_dim
    dyn = base.dynamics
    clamp = dyn.clamp
    if node.get("clamp") is not None:
        c = _vector(node, "clamp", "env", 2)
        if not c[0] < c[1]:
            raise ConfigError("env.clamp", "low must be below high")
        clamp = (float(c[0]), float(c[1]))
    dynamics = ge.PursuitDynamics(
        dt=_num(node, "dt", "env", dyn.dt, low=0, strict_low=True),
        coupling=_num(node, "coupling", "env", dyn.coupling),
        sharpness=_num(node, "sharpness", "env", dyn.sharpness, low=0),
        clamp=clamp,
    )
    rp = base.rewards
    goals = _vector(node, "goals", "env", n, np.asarray(rp.goals))
    rewards = ge.RewardParams(
        goals=tuple(float(g) for g in goals),
        entity_penalty=_num(node, "entity_penalty", "env", rp.entity_penalty, low=0),
        agent_penalty=_num(node, "agent_penalty", "env", rp.agent_penalty, low=0),
        width=_num(node, "width", "env", rp.width, low=0, strict_low=True),
    )
    noise = _vector(node, "noise_std", "env", p, base.noise_std)
    if np.any(noise < 0):
        raise ConfigError("env.noise_std", "must be non-negative")
    return ge.MarkovGameSpec(
        n_agents=n,
        horizon=_num(node, "horizon", "env", base.horizon, kind=int, low=1),
        initial_state=_vector(node, "initial_state", "env", p, base.initial_state),
        noise_std=noise,
        dynamics=dynamics,
        rewards=rewards,
        action_limit=_num(node, "action_limit", "env", base.action_limit, low=0, strict_low=True),
        name=name,
    )


def _build_policies(node, spec) -> ge.PolicySet:
    node = node or {}
    a_max = _num(node, "a_max", "policy_set", spec.action_limit, low=0, strict_low=True)
    gains = node.get("gains", [0.2, 0.5, 1.0, 2.0])
    if not isinstance(gains, list) or not gains:
        raise ConfigError("policy_set.gains", "expected a non-empty list")
    per_agent = gains if isinstance(gains[0], list) else [gains] * spec.n_agents
    if len(per_agent) != spec.n_agents:
        raise ConfigError("policy_set.gains", f"expected {spec.n_agents} per-agent lists")
    out = []
    for i, (row, goal) in enumerate(zip(per_agent, spec.rewards.goals)):
        if not isinstance(row, list) or not row:
            raise ConfigError(f"policy_set.gains[{i}]", "expected a non-empty list")
        for k in row:
            if isinstance(k, bool) or not isinstance(k, (int, float)) or k < 0:
                raise ConfigError(f"policy_set.gains[{i}]", f"gains must be non-negative numbers, got {k!r}")
            if k * spec.dynamics.dt > 2:
                raise ConfigError(f"policy_set.gains[{i}]", "gain * dt must not exceed 2")
        out.append([ge.PolicyDescriptor(float(k), float(goal), a_max) for k in row])
    return ge.PolicySet(out)


def _build_hallucination(node, spec) -> HallucinationConfig:
    node = node or {}
    path = "hallucination"
    beta_node = node.get("beta") or {}
    beta = BetaSchedule(
        kind=_choice(beta_node, "kind", f"{path}.beta", ("constant", "log"), "constant"),
        value=_num(beta_node, "value", f"{path}.beta", 1.0, low=0),
        delta=_num(beta_node, "delta", f"{path}.beta", 0.05, low=0, high=1, strict_low=True),
    )
    mask = None
    if node.get("coordinate_mask") is not None:
        m = node["coordinate_mask"]
        if not isinstance(m, list) or len(m) != spec.state_dim or not all(isinstance(v, bool) for v in m):
            raise ConfigError(f"{path}.coordinate_mask", f"expected {spec.state_dim} booleans")
        mask = tuple(m)
    noise = _vector(node, "noise_std", path, spec.state_dim)
    if noise is not None and np.any(noise < 0):
        raise ConfigError(f"{path}.noise_std", "must be non-negative")
    return HallucinationConfig(
        z=_num(node, "z", path, 5, kind=int, low=1),
        eta_mode=_choice(node, "eta_mode", path, ETA_MODES, "spaced"),
        coordinate_mask=mask,
        episodes=_num(node, "episodes", path, 5, kind=int, low=1),
        beta=beta,
        noise_std=None if noise is None else tuple(noise),
        selection=_choice(node, "selection", path, SELECTIONS, "greedy"),
    )


def _build_gp(node, spec) -> GPSettings:
    node = node or {}
    p, d = spec.state_dim, spec.input_dim
    kinds = node.get("kernels", "se")
    kinds = [kinds] * p if isinstance(kinds, str) else kinds
    if not isinstance(kinds, list) or len(kinds) != p:
        raise ConfigError("gp.kernels", f"expected a kernel name or {p} names")
    for k in kinds:
        if k not in KERNEL_KINDS:
            raise ConfigError("gp.kernels", f"unknown kernel {k!r}; expected one of {list(KERNEL_KINDS)}")
    ls = _vector(node, "lengthscales", "gp", d, np.full(d, 0.5))
    if np.any(ls <= 0):
        raise ConfigError("gp.lengthscales", "must be positive")
    sv = _num(node, "signal_variance", "gp", 0.05, low=0, strict_low=True)
    noise_var = _num(node, "noise_var", "gp", 1e-4, low=0, strict_low=True)
    kernels = tuple(KernelSpec(k, tuple(ls), sv) for k in kinds)
    return GPSettings(kernels, noise_var)


def _build_cce(node) -> HedgeConfig:
    node = node or {}
    lr = node.get("learning_rate", "auto")
    if lr in (None, "auto"):
        lr = None
    else:
        lr = _num(node, "learning_rate", "cce", None, low=0, strict_low=True)
    return HedgeConfig(
        iterations=_num(node, "iterations", "cce", 2000, kind=int, low=1),
        learning_rate=lr,
        target_eps=_num(node, "target_eps", "cce", 0.0, low=0),
    )


def config_from_dict(raw: dict) -> ExperimentConfig:
    _check_keys(raw, _SCHEMA)
    for key in ("env", "planner", "rounds"):
        if key not in raw:
            raise ConfigError(key, "missing required key")
    if "seed" not in raw and "seeds" not in raw:
        raise ConfigError("seed", "missing required key")
    if "seed" in raw and "seeds" in raw:
        raise ConfigError("seeds", "give either seed or seeds, not both")

    planners = raw["planner"]
    planners = [planners] if isinstance(planners, str) else planners
    if not isinstance(planners, list) or not planners:
        raise ConfigError("planner", "expected a planner name or a list of names")
    for p in planners:
        if p not in PLANNERS:
            raise ConfigError("planner", f"unknown planner {p!r}; expected one of {list(PLANNERS)}")

    rounds = raw["rounds"]
    if isinstance(rounds, bool) or not isinstance(rounds, int):
        raise ConfigError("rounds", "expected an integer")
    if rounds < 1:
        raise ConfigError("rounds", "rounds must be ≥ 1")

    seeds = raw["seeds"] if "seeds" in raw else [raw["seed"]]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a non-empty list")
    for s in seeds:
        if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
            raise ConfigError("seeds", f"seeds must be unsigned 64-bit integers, got {s!r}")

    spec = _build_env(raw["env"])
    output = raw.get("output") or {}
    record_timing = output.get("record_timing", False)
    if not isinstance(record_timing, bool):
        raise ConfigError("output.record_timing", "expected true or false")
    directory = output.get("directory", "results")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory", "expected a path string")
    return ExperimentConfig(
        env=spec,
        policy_set=_build_policies(raw.get("policy_set"), spec),
        planners=tuple(planners),
        rounds=rounds,
        hallucination=_build_hallucination(raw.get("hallucination"), spec),
        gp=_build_gp(raw.get("gp"), spec),
        cce=_build_cce(raw.get("cce")),
        seeds=tuple(seeds),
        true_value_episodes=_num(raw.get("true_value") or {}, "episodes", "true_value", 200, kind=int, low=1),
        output_dir=directory,
        record_timing=record_timing,
    )


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed config: {exc}") from None
    if raw is None:
        raw = {}
    return config_from_dict(raw)
