"""Double deep Q-learning with dual safe/collision replay buffers.

The training loop stores ordinary transitions in the safe buffer and penalized
ones (actual collisions, and steps whose predicted futures violate the safety
rule) in the collision buffer. Batches draw half from each buffer; collision
samples regress straight onto their reward with no bootstrapping, safe samples
onto r + gamma * Q_target(s', argmax_a Q_online(s', a)). A predicted-collision
penalty never terminates the episode; only an actual collision or the step
budget does.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numkit as nk
from .errors import ConfigurationError, ContractViolation, TrainingError
from .mdrnn import MDRNN
from .safety import predictive_check, state_safety
from .sim.env import HighwayEnv


@dataclass(frozen=True)
class AgentConfig:
    """Discount, exploration schedule, replay, and Q-network hyperparameters."""

    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int | None = None  # None: 60% of episodes * budget
    batch_size: int = 32
    learning_rate: float = 1e-3
    target_sync_interval: int = 500
    hidden_sizes: tuple[int, ...] = (128, 128)
    safe_capacity: int = 50_000
    collision_capacity: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ConfigurationError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.epsilon_decay_steps is not None and self.epsilon_decay_steps < 1:
            raise ConfigurationError("epsilon_decay_steps must be >= 1")
        if self.batch_size < 1 or self.target_sync_interval < 1:
            raise ConfigurationError("batch_size and target_sync_interval must be >= 1")
        if self.learning_rate <= 0.0:
            raise ConfigurationError("learning_rate must be positive")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError("hidden_sizes must be a non-empty tuple of positives")
        if self.safe_capacity < 1 or self.collision_capacity < 1:
            raise ConfigurationError("buffer capacities must be >= 1")


@dataclass(frozen=True)
class Transition:
    """One stored step; next_state is absent for actual-collision terminals."""

    state: np.ndarray
    action: int
    next_state: np.ndarray | None
    reward: float
    source: str = "actual"  # "actual" or "predicted"


class DualReplayBuffer:
    """Bounded FIFO pair: shaped transitions vs collision-penalized ones."""

    def __init__(self, safe_capacity: int, collision_capacity: int, r_collision: float):
        self.safe: deque[Transition] = deque(maxlen=safe_capacity)
        self.collision: deque[Transition] = deque(maxlen=collision_capacity)
        self.r_collision = float(r_collision)

    def route(self, t: Transition) -> None:
        """Collision-penalty reward goes to the collision buffer, rest to safe."""
        if t.next_state is None and t.reward != self.r_collision:
            raise ContractViolation("a terminal transition must carry the collision penalty")
        if t.reward == self.r_collision:
            self.collision.append(t)
        else:
            self.safe.append(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> tuple[list[Transition], np.ndarray]:
        """Half-and-half sample with replacement; all-safe when no collisions yet.

        Returns the transitions and a boolean mask marking collision-buffer rows.
        """
        if not self.safe:
            raise ContractViolation("cannot sample: safe buffer is empty")
        if self.collision:
            n_safe = (batch_size + 1) // 2
            n_coll = batch_size // 2
        else:
            n_safe, n_coll = batch_size, 0
        picks = [self.safe[i] for i in rng.integers(0, len(self.safe), size=n_safe)]
        flags = [False] * n_safe
        if n_coll:
            picks += [self.collision[i] for i in rng.integers(0, len(self.collision), size=n_coll)]
            flags += [True] * n_coll
        return picks, np.asarray(flags)


class QNetwork:
    """ReLU multilayer perceptron from the normalized state to action values."""

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        hidden_sizes: Sequence[int],
        rng: np.random.Generator | None = None,
    ):
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.hidden_sizes = tuple(hidden_sizes)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, nk.Param] = {}
        dims = [state_dim, *self.hidden_sizes, n_actions]
        for i in range(len(dims) - 1):
            self.params[f"l{i}.w"] = nk.Param(nk.uniform_init(rng, dims[i + 1], dims[i]))
            self.params[f"l{i}.b"] = nk.Param(np.zeros(dims[i + 1]))
        self._n_layers = len(dims) - 1

    def qvalues_var(self, tape: nk.Tape | None, states: np.ndarray) -> nk.Var:
        out: nk.Var | np.ndarray = np.asarray(states, dtype=np.float64)
        for i in range(self._n_layers):
            out = nk.affine(tape, out, self.params[f"l{i}.w"], self.params[f"l{i}.b"])
            if i < self._n_layers - 1:
                out = nk.relu(tape, out)
        return out

    def qvalues(self, states: np.ndarray) -> np.ndarray:
        return self.qvalues_var(None, states).value

    def clone(self) -> "QNetwork":
        twin = QNetwork(self.state_dim, self.n_actions, self.hidden_sizes)
        for name, p in self.params.items():
            twin.params[name].value[...] = p.value
        return twin

    def save(self, path: str | Path) -> None:
        nk.save_params(self.params, path)

    def load(self, path: str | Path) -> None:
        nk.adopt_params(self.params, nk.load_params(path))


def select_action(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over action ids; greedy ties break to the lowest id."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, len(q_values)))
    return int(np.argmax(q_values))


def epsilon_at(step: int, cfg: AgentConfig, decay_steps: int) -> float:
    remaining = max(0.0, 1.0 - step / decay_steps)
    value = cfg.epsilon_end + (cfg.epsilon_start - cfg.epsilon_end) * remaining
    return min(cfg.epsilon_start, max(cfg.epsilon_end, value))


def sync_target(q_net: QNetwork, target_net: QNetwork) -> None:
    """Hard copy of online parameters into the target network."""
    if set(q_net.params) != set(target_net.params):
        raise ConfigurationError("online and target networks are not congruent")
    for name, p in q_net.params.items():
        if target_net.params[name].value.shape != p.value.shape:
            raise ConfigurationError(f"target tensor {name!r} has a different shape")
        target_net.params[name].value[...] = p.value


def td_target(
    t: Transition, q_net: QNetwork, target_net: QNetwork, gamma: float, r_collision: float
) -> float:
    """Regression target: the bare reward for collision-buffer samples, else
    the double-Q bootstrap (online argmax, target evaluation)."""
    if t.reward == r_collision:
        return t.reward
    a_star = int(np.argmax(q_net.qvalues(t.next_state)))
    return t.reward + gamma * float(target_net.qvalues(t.next_state)[a_star])


def td_targets(
    transitions: list[Transition],
    from_collision: np.ndarray,
    q_net: QNetwork,
    target_net: QNetwork,
    gamma: float,
) -> np.ndarray:
    """Vectorized targets for one batch; collision rows never bootstrap."""
    rewards = np.asarray([t.reward for t in transitions])
    y = rewards.copy()
    boot = ~from_collision
    if np.any(boot):
        next_states = np.stack([t.next_state for t, b in zip(transitions, boot) if b])
        a_star = np.argmax(q_net.qvalues(next_states), axis=1)
        rows = np.arange(len(a_star))
        y[boot] = rewards[boot] + gamma * target_net.qvalues(next_states)[rows, a_star]
    return y


def train_step(
    transitions: list[Transition],
    from_collision: np.ndarray,
    q_net: QNetwork,
    target_net: QNetwork,
    optimizer: nk.Adam | nk.SGD,
    gamma: float,
) -> float:
    """One gradient step on the mean squared TD error of the taken actions."""
    if not transitions:
        raise ContractViolation("train_step needs a non-empty batch")
    y = td_targets(transitions, from_collision, q_net, target_net, gamma)
    states = np.stack([t.state for t in transitions])
    actions = np.asarray([t.action for t in transitions])
    tape = nk.Tape()
    q = q_net.qvalues_var(tape, states)
    picked = nk.gather(tape, q, actions)
    loss = nk.mean(tape, nk.square(tape, nk.sub(tape, picked, y)))
    value = float(loss.value)
    if not np.isfinite(value):
        raise TrainingError(
            f"non-finite TD loss on a batch of {len(transitions)} "
            f"(reward range [{y.min():.3g}, {y.max():.3g}])"
        )
    tape.backward(loss)
    optimizer.step()
    return value


def safe_action_ids(env: HighwayEnv, ep, scn) -> np.ndarray:
    """One-step lookahead mask: actions whose immediate outcome passes the
    gap rule and avoids collision. Used only when mask_unsafe_actions is on."""
    ok = np.zeros(len(env.actions), dtype=bool)
    for a in env.actions:
        res = env.step(ep, a)
        ok[a.id] = (not res.collided) and state_safety(res.affordances, scn.safety).safe
    return ok


@dataclass
class TrainResult:
    """Trained network plus per-episode metrics and periodic greedy evals."""

    q_net: QNetwork
    episode_rows: list[tuple] = field(default_factory=list)
    eval_rows: list[tuple] = field(default_factory=list)

    METRICS_HEADER = (
        "episode",
        "return",
        "steps",
        "collided",
        "predicted_penalties",
        "epsilon",
        "mean_loss",
    )
    EVAL_HEADER = ("episode", "mean_return", "collisions")

    def save_metrics_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.METRICS_HEADER)
            writer.writerows(self.episode_rows)

    def save_eval_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.EVAL_HEADER)
            writer.writerows(self.eval_rows)


def greedy_episode(env: HighwayEnv, q_net: QNetwork, n_vehicles: int, seed: int) -> tuple[float, bool, int]:
    """Run one greedy episode; returns (return, collided, steps)."""
    scn = env.scenario
    scale = env.scale
    ep = env.reset(n_vehicles, seed)
    s_norm = scale.normalize(env.affordances(ep))
    total = 0.0
    for step in range(1, scn.episode_budget + 1):
        a_id = int(np.argmax(q_net.qvalues(s_norm)))
        res = env.step(ep, env.actions[a_id])
        total += res.reward
        ep = res.state
        s_norm = scale.normalize(res.affordances)
        if res.collided:
            return total, True, step
    return total, False, scn.episode_budget


def run_training(
    env: HighwayEnv,
    predictor: MDRNN | None,
    cfg: AgentConfig,
    episodes: int,
    seed: int,
    eval_interval: int = 100,
    eval_episodes: int = 5,
) -> TrainResult:
    """Full training loop: epsilon-greedy rollouts, dual-buffer storage with
    predictive lookahead penalties, 50/50 batches, and periodic greedy evals.

    Deterministic for a fixed (config, seed): all randomness flows from
    dedicated child streams of the master seed.
    """
    scn = env.scenario
    scale = env.scale
    r_coll = scn.reward.r_collision
    seq = np.random.SeedSequence(seed)
    s_init, s_act, s_env, s_eval = seq.spawn(4)
    rng_init = np.random.default_rng(s_init)
    rng_act = np.random.default_rng(s_act)
    rng_env = np.random.default_rng(s_env)
    rng_eval = np.random.default_rng(s_eval)

    q_net = QNetwork(20, len(env.actions), cfg.hidden_sizes, rng_init)
    target_net = q_net.clone()
    optimizer = nk.Adam(q_net.params, cfg.learning_rate)
    buffers = DualReplayBuffer(cfg.safe_capacity, cfg.collision_capacity, r_coll)
    decay_steps = cfg.epsilon_decay_steps or max(1, int(0.6 * episodes * scn.episode_budget))
    result = TrainResult(q_net=q_net)
    gstep = 0

    for ep_i in range(episodes):
        n_vehicles = int(rng_env.integers(scn.n_vehicles_min, scn.n_vehicles_max + 1))
        ep = env.reset(n_vehicles, int(rng_env.integers(1 << 31)))
        aff_raw = env.affordances(ep)
        s_norm = scale.normalize(aff_raw)
        ep_return = 0.0
        predicted_hits = 0
        losses = []
        collided = False
        steps = 0
        epsilon = epsilon_at(gstep, cfg, decay_steps)
        for _ in range(scn.episode_budget):
            epsilon = epsilon_at(gstep, cfg, decay_steps)
            q = q_net.qvalues(s_norm)
            allowed = None
            if scn.safety.mask_unsafe_actions:
                mask = safe_action_ids(env, ep, scn)
                if mask.any():
                    allowed = np.flatnonzero(mask)
            if allowed is None:
                a_id = select_action(q, epsilon, rng_act)
            elif epsilon > 0.0 and rng_act.random() < epsilon:
                a_id = int(allowed[rng_act.integers(0, len(allowed))])
            else:
                a_id = int(allowed[np.argmax(q[allowed])])
            res = env.step(ep, env.actions[a_id])
            s2_norm = scale.normalize(res.affordances)
            if res.collided:
                reward = r_coll
                buffers.route(Transition(s_norm, a_id, None, r_coll, "actual"))
            else:
                reward = res.reward
                buffers.route(Transition(s_norm, a_id, s2_norm, reward, "actual"))
            if predictor is not None:
                trajectories = predictor.predict_trajectories(aff_raw, a_id, qvalues=q_net.qvalues)
                verdict = predictive_check(trajectories, scn.safety)
                if not verdict.safe:
                    predicted_hits += 1
                    s_hat = scale.normalize(trajectories.modes[verdict.violating_mode, 0])
                    buffers.route(Transition(s_norm, a_id, s_hat, r_coll, "predicted"))
            if buffers.safe:
                batch, flags = buffers.sample(cfg.batch_size, rng_act)
                losses.append(train_step(batch, flags, q_net, target_net, optimizer, cfg.gamma))
            gstep += 1
            if gstep % cfg.target_sync_interval == 0:
                sync_target(q_net, target_net)
            ep_return += reward
            steps += 1
            ep = res.state
            aff_raw = res.affordances
            s_norm = s2_norm
            if res.collided:
                collided = True
                break
        result.episode_rows.append(
            (
                ep_i,
                ep_return,
                steps,
                int(collided),
                predicted_hits,
                epsilon,
                float(np.mean(losses)) if losses else float("nan"),
            )
        )
        if eval_interval and (ep_i + 1) % eval_interval == 0:
            returns = []
            crashes = 0
            for _ in range(eval_episodes):
                n = int(rng_eval.integers(scn.n_vehicles_min, scn.n_vehicles_max + 1))
                ret, crashed, _ = greedy_episode(env, q_net, n, int(rng_eval.integers(1 << 31)))
                returns.append(ret)
                crashes += int(crashed)
            result.eval_rows.append(
                (ep_i + 1, float(np.mean(returns)) if returns else float("nan"), crashes)
            )
    return result
