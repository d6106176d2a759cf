"""Experiment configuration: one JSON file drives every pipeline stage.

Precedence is command-line override > file > built-in default. Overrides use
dotted paths (``--override scenario.dynamics.dt=0.05``); values parse as JSON
with a plain-string fallback. Unknown fields fail with a field-level message.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .agent import AgentConfig
from .errors import ConfigurationError
from .mdrnn import PredictorConfig
from .safety import SafetyConfig
from .sim import DynamicsConfig, RewardConfig, ScenarioConfig, action_table
from .sim.types import Lateral, Longitudinal


@dataclass(frozen=True)
class ExperimentConfig:
    """Scenario, agent, and predictor settings plus the experiment protocol."""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    episodes: int = 3000
    eval_interval: int = 100
    eval_episodes: int = 5
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if self.eval_interval < 0 or self.eval_episodes < 0:
            raise ConfigurationError("eval_interval and eval_episodes must be >= 0")
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")


def _build(cls, data: dict, where: str):
    """Construct a config dataclass, reporting unknown fields and bad values."""
    allowed = {f.name for f in fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigurationError(f"{where}.{key}: unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise ConfigurationError(f"{where}: {exc}") from exc
        raise ConfigurationError(f"{where}: {exc}") from exc


def _scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    dyn = _build(DynamicsConfig, data.pop("dynamics", {}), "scenario.dynamics")
    rew = _build(RewardConfig, data.pop("reward", {}), "scenario.reward")
    saf = _build(SafetyConfig, data.pop("safety", {}), "scenario.safety")
    actions_spec = data.pop("actions", None)
    if actions_spec is not None:
        try:
            layout = tuple((Longitudinal(lo), Lateral(la)) for lo, la in actions_spec)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"scenario.actions: {exc}") from exc
        data["actions"] = action_table(layout)
    return _build(
        ScenarioConfig, {"dynamics": dyn, "reward": rew, "safety": saf, **data}, "scenario"
    )


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    scenario = _scenario_from_dict(data.pop("scenario", {}))
    agent_data = dict(data.pop("agent", {}))
    if "hidden_sizes" in agent_data:
        agent_data["hidden_sizes"] = tuple(int(h) for h in agent_data["hidden_sizes"])
    agent = _build(AgentConfig, agent_data, "agent")
    predictor = _build(PredictorConfig, data.pop("predictor", {}), "predictor")
    if "seeds" in data:
        data["seeds"] = tuple(int(s) for s in data["seeds"])
    return _build(
        ExperimentConfig,
        {"scenario": scenario, "agent": agent, "predictor": predictor, **data},
        "experiment",
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    scn = cfg.scenario
    return {
        "scenario": {
            "dynamics": {f.name: getattr(scn.dynamics, f.name) for f in fields(DynamicsConfig)},
            "reward": {f.name: getattr(scn.reward, f.name) for f in fields(RewardConfig)},
            "safety": {f.name: getattr(scn.safety, f.name) for f in fields(SafetyConfig)},
            "d_sense": scn.d_sense,
            "road_length": scn.road_length,
            "episode_budget": scn.episode_budget,
            "ego_length": scn.ego_length,
            "ego_width": scn.ego_width,
            "traffic_length": scn.traffic_length,
            "traffic_width": scn.traffic_width,
            "traffic_speed_min": scn.traffic_speed_min,
            "traffic_speed_max": scn.traffic_speed_max,
            "traffic_lane_change_prob": scn.traffic_lane_change_prob,
            "n_vehicles_min": scn.n_vehicles_min,
            "n_vehicles_max": scn.n_vehicles_max,
            "actions": [[a.longitudinal.value, a.lateral.value] for a in scn.actions],
        },
        "agent": {
            **{f.name: getattr(cfg.agent, f.name) for f in fields(AgentConfig)},
            "hidden_sizes": list(cfg.agent.hidden_sizes),
        },
        "predictor": {f.name: getattr(cfg.predictor, f.name) for f in fields(PredictorConfig)},
        "episodes": cfg.episodes,
        "eval_interval": cfg.eval_interval,
        "eval_episodes": cfg.eval_episodes,
        "seeds": list(cfg.seeds),
        "out_dir": cfg.out_dir,
    }


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    out = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = out
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override path {path!r} crosses a scalar field")
        node[keys[-1]] = _parse_override_value(raw)
    return out


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Build the experiment config from defaults, an optional file, and overrides."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigurationError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{p}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{p}: top level must be a JSON object")
    if overrides:
        data = apply_overrides(data, overrides)
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=1, sort_keys=True))
