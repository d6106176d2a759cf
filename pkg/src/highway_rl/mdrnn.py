"""Mixture-density recurrent network for multimodal next-state prediction.

A vanilla tanh recurrent cell consumes the normalized 20-dim state
concatenated with a one-hot action; three affine heads turn the hidden state
into mixture weights (softmax of logits), component means, and component
standard deviations (exp of the raw output plus a floor). Training minimizes
the mixture negative log-likelihood of the observed next state over logged
driving data. At decision time the model is rolled out k steps per component,
feeding each component's mean back as the next input, which yields m
deterministic candidate futures.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import numkit as nk
from .errors import ConfigurationError, ContractViolation, FormatError, TrainingError
from .sim.affordances import AffordanceScale
from .sim.env import HighwayEnv

LOG_2PI = math.log(2.0 * math.pi)
_RAW_STD_CLIP = 20.0  # keeps exp() finite; gradients vanish past the clip


@dataclass(frozen=True)
class PredictorConfig:
    """Mixture size, rollout horizon, and offline-training hyperparameters."""

    m: int = 3
    k: int = 5
    hidden_size: int = 64
    learning_rate: float = 1e-3
    epochs: int = 10
    sigma_floor: float = 1e-3
    bptt_len: int = 8
    batch_size: int = 64
    collect_epsilon: float = 0.1
    rollout_policy: str = "repeat"

    def __post_init__(self):
        if self.m < 1 or self.k < 1:
            raise ConfigurationError("need m >= 1 mixture components and k >= 1 horizon steps")
        if self.hidden_size < 1 or self.bptt_len < 1 or self.batch_size < 1:
            raise ConfigurationError("hidden_size, bptt_len, and batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.sigma_floor <= 0.0:
            raise ConfigurationError("sigma_floor must be positive")
        if not 0.0 <= self.collect_epsilon <= 1.0:
            raise ConfigurationError("collect_epsilon must be in [0, 1]")
        if self.rollout_policy not in ("repeat", "greedy"):
            raise ConfigurationError("rollout_policy must be 'repeat' or 'greedy'")


@dataclass(frozen=True)
class GmmParams:
    """Diagonal Gaussian mixture over the next state: weights, means, stds."""

    weights: np.ndarray  # (m,)
    means: np.ndarray  # (m, D)
    stds: np.ndarray  # (m, D)

    def __post_init__(self):
        w, mu, sd = self.weights, self.means, self.stds
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(sd))):
            raise TrainingError("GMM parameters contain non-finite values")
        if abs(float(w.sum()) - 1.0) > 1e-9 or np.any(w < 0.0):
            raise TrainingError(f"mixture weights off the simplex (sum {w.sum()!r})")
        if np.any(sd <= 0.0):
            raise TrainingError("mixture stds must be positive")


@dataclass(frozen=True)
class PredictedTrajectories:
    """m candidate futures of k states each, in raw affordance units."""

    modes: np.ndarray  # (m, k, D)

    def __post_init__(self):
        if not np.all(np.isfinite(self.modes)):
            raise TrainingError("predicted trajectories contain non-finite values")


@dataclass
class DrivingLog:
    """Logged (normalized state, action) pairs grouped by episode."""

    episodes: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def n_pairs(self) -> int:
        return sum(len(a) for _, a in self.episodes)

    @property
    def n_transitions(self) -> int:
        return sum(max(0, len(a) - 1) for _, a in self.episodes)

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "step"] + [f"s{i:02d}" for i in range(20)] + ["action_id"])
            for ep_id, (states, actions) in enumerate(self.episodes):
                for t in range(len(actions)):
                    writer.writerow([ep_id, t] + [float(v) for v in states[t]] + [int(actions[t])])

    @classmethod
    def load_csv(cls, path: str | Path) -> "DrivingLog":
        episodes: dict[int, list[tuple[list[float], int]]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) != 23:
                raise FormatError(f"{path}: expected 23 driving-log columns")
            for row in reader:
                ep_id = int(row[0])
                episodes.setdefault(ep_id, []).append(([float(v) for v in row[2:22]], int(row[22])))
        out = cls()
        for ep_id in sorted(episodes):
            rows = episodes[ep_id]
            states = np.asarray([r[0] for r in rows], dtype=np.float64)
            actions = np.asarray([r[1] for r in rows], dtype=np.int64)
            out.episodes.append((states, actions))
        return out


def gmm_nll(params: GmmParams, target: np.ndarray) -> float:
    """Mixture negative log-likelihood of a target under diagonal Gaussians.

    Computed as -logsumexp over log w_i + sum_j log N(target_j; mu_ij, sd_ij).
    """
    t = np.asarray(target, dtype=np.float64)
    d = t.shape[-1]
    z = (t - params.means) / params.stds
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    log_comp = log_w - 0.5 * d * LOG_2PI - np.log(params.stds).sum(axis=-1) - 0.5 * (z * z).sum(axis=-1)
    return -float(nk.log_sum_exp(None, log_comp).value)


def _mixture_nll_values(
    logits: np.ndarray,
    means_flat: np.ndarray,
    raw_stds_flat: np.ndarray,
    targets: np.ndarray,
    sigma_floor: float,
):
    """Shared forward math on raw head outputs; all arrays batched (B, ...)."""
    b, m = logits.shape
    d = targets.shape[-1]
    mu = means_flat.reshape(b, m, d)
    sig = np.exp(np.minimum(raw_stds_flat, _RAW_STD_CLIP)).reshape(b, m, d) + sigma_floor
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_w = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    z = (targets[:, None, :] - mu) / sig
    log_comp = log_w - 0.5 * d * LOG_2PI - np.log(sig).sum(axis=-1) - 0.5 * (z * z).sum(axis=-1)
    cmax = log_comp.max(axis=-1, keepdims=True)
    lse = cmax + np.log(np.exp(log_comp - cmax).sum(axis=-1, keepdims=True))
    nll = -lse[:, 0]
    return nll, log_comp - lse, z, sig, log_w


def mixture_nll_op(
    tape: nk.Tape | None,
    logits: nk.Var,
    means_flat: nk.Var,
    raw_stds_flat: nk.Var,
    targets: np.ndarray,
    sigma_floor: float,
) -> nk.Var:
    """Per-sample mixture NLL as one tape op with an analytic backward pass.

    Fusing the softmax-weighted Gaussian likelihood keeps the batched (B, m, D)
    arithmetic in numpy; the gradient is the standard responsibility-weighted
    form, checked against finite differences in the test suite.
    """
    nll, log_resp, z, sig, _ = _mixture_nll_values(
        logits.value, means_flat.value, raw_stds_flat.value, targets, sigma_floor
    )
    out = nk.Var(nll)
    if tape is not None:
        b, m = logits.value.shape
        d = targets.shape[-1]

        def backward():
            g = out.grad  # (B,)
            resp = np.exp(log_resp)
            d_comp = -resp * g[:, None]  # d(nll)/d(log_comp)
            logits.grad += d_comp - _softmax_values(logits.value) * d_comp.sum(axis=-1, keepdims=True)
            d_mu = d_comp[:, :, None] * (z / sig)
            means_flat.grad += d_mu.reshape(b, m * d)
            d_sig = d_comp[:, :, None] * ((z * z - 1.0) / sig)
            d_raw = (d_sig * (sig - sigma_floor)).reshape(b, m * d)
            d_raw[raw_stds_flat.value >= _RAW_STD_CLIP] = 0.0  # sigma saturates past the clip
            raw_stds_flat.grad += d_raw

        tape.record(out, backward)
    return out


def _softmax_values(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class MDRNN:
    """Recurrent mixture-density model over normalized affordance states."""

    def __init__(
        self,
        cfg: PredictorConfig,
        scale: AffordanceScale,
        state_dim: int = 20,
        n_actions: int = 8,
        rng: np.random.Generator | None = None,
    ):
        self.cfg = cfg
        self.scale = scale
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.trained = False
        rng = rng if rng is not None else np.random.default_rng(0)
        h, m, d = cfg.hidden_size, cfg.m, state_dim
        in_dim = d + n_actions
        self.params: dict[str, nk.Param] = {
            "rnn.w_ih": nk.Param(nk.uniform_init(rng, h, in_dim)),
            "rnn.w_hh": nk.Param(nk.uniform_init(rng, h, h)),
            "rnn.b": nk.Param(np.zeros(h)),
            "pi.w": nk.Param(nk.uniform_init(rng, m, h)),
            "pi.b": nk.Param(np.zeros(m)),
            "mu.w": nk.Param(nk.uniform_init(rng, m * d, h)),
            "mu.b": nk.Param(np.zeros(m * d)),
            "sigma.w": nk.Param(nk.uniform_init(rng, m * d, h)),
            "sigma.b": nk.Param(np.zeros(m * d)),
        }

    def init_hidden(self, batch: int | None = None) -> np.ndarray:
        h = self.cfg.hidden_size
        return np.zeros(h) if batch is None else np.zeros((batch, h))

    def encode_input(self, states: np.ndarray, action_ids: np.ndarray) -> np.ndarray:
        """Concatenate normalized state(s) with one-hot action(s)."""
        states = np.asarray(states, dtype=np.float64)
        single = states.ndim == 1
        if single:
            states = states[None, :]
            action_ids = np.asarray([action_ids])
        onehot = np.zeros((states.shape[0], self.n_actions))
        onehot[np.arange(states.shape[0]), np.asarray(action_ids, dtype=int)] = 1.0
        x = np.concatenate([states, onehot], axis=1)
        return x[0] if single else x

    def _heads(self, tape: nk.Tape | None, x: np.ndarray, hidden) -> tuple[nk.Var, nk.Var, nk.Var, nk.Var]:
        p = self.params
        h2 = nk.recurrent_step(tape, x, hidden, p["rnn.w_ih"], p["rnn.w_hh"], p["rnn.b"])
        logits = nk.affine(tape, h2, p["pi.w"], p["pi.b"])
        mu = nk.affine(tape, h2, p["mu.w"], p["mu.b"])
        raw = nk.affine(tape, h2, p["sigma.w"], p["sigma.b"])
        return logits, mu, raw, h2

    def gmm_from_raw(self, logits: np.ndarray, mu_flat: np.ndarray, raw_flat: np.ndarray) -> GmmParams:
        m, d = self.cfg.m, self.state_dim
        weights = _softmax_values(logits)
        stds = np.exp(np.minimum(raw_flat, _RAW_STD_CLIP)).reshape(m, d) + self.cfg.sigma_floor
        return GmmParams(weights=weights, means=mu_flat.reshape(m, d), stds=stds)

    def forward(
        self, state_norm: np.ndarray, action_id: int, hidden: np.ndarray
    ) -> tuple[GmmParams, np.ndarray]:
        """One step: GMM over the next normalized state, plus the new hidden."""
        x = self.encode_input(state_norm, action_id)
        logits, mu, raw, h2 = self._heads(None, x, hidden)
        if not np.all(np.isfinite(h2.value)):
            raise TrainingError("non-finite recurrent activation")
        return self.gmm_from_raw(logits.value, mu.value, raw.value), h2.value

    def predict_trajectories(
        self,
        start_aff_raw: np.ndarray,
        action_id: int,
        qvalues: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> PredictedTrajectories:
        """Roll each mixture component k steps forward from a raw-unit state.

        Mode i feeds its own mean back as the next input state. Actions repeat
        the planned action, or re-pick greedily per predicted state when a
        Q-value function is supplied and rollout_policy is "greedy".
        """
        if not self.trained:
            raise ContractViolation("predict_trajectories requires trained parameters")
        m, k, d = self.cfg.m, self.cfg.k, self.state_dim
        states = np.tile(self.scale.normalize(np.asarray(start_aff_raw, dtype=np.float64)), (m, 1))
        actions = np.full(m, int(action_id), dtype=int)
        hidden = self.init_hidden(batch=m)
        mode_idx = np.arange(m)
        out = np.empty((m, k, d))
        use_greedy = self.cfg.rollout_policy == "greedy" and qvalues is not None
        for j in range(k):
            x = self.encode_input(states, actions)
            logits, mu, raw, h2 = self._heads(None, x, hidden)
            hidden = h2.value
            means = mu.value.reshape(m, self.cfg.m, d)
            states = means[mode_idx, mode_idx]  # mode i commits to component i
            out[:, j] = states
            if use_greedy:
                actions = np.argmax(qvalues(states), axis=-1).astype(int)
        return PredictedTrajectories(modes=self.scale.denormalize(out))

    def save(self, path: str | Path) -> None:
        payload = {
            "meta": {
                "m": self.cfg.m,
                "k": self.cfg.k,
                "hidden_size": self.cfg.hidden_size,
                "sigma_floor": self.cfg.sigma_floor,
                "rollout_policy": self.cfg.rollout_policy,
                "state_dim": self.state_dim,
                "n_actions": self.n_actions,
                "scale": self.scale.to_dict(),
            },
            "params": nk.params_payload(self.params),
        }
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path, cfg: PredictorConfig | None = None) -> "MDRNN":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(payload, dict) or "meta" not in payload or "params" not in payload:
            raise FormatError(f"{path}: expected a predictor file with meta and params blocks")
        meta = payload["meta"]
        base = cfg if cfg is not None else PredictorConfig()
        try:
            loaded_cfg = PredictorConfig(
                m=int(meta["m"]),
                k=int(meta["k"]),
                hidden_size=int(meta["hidden_size"]),
                learning_rate=base.learning_rate,
                epochs=base.epochs,
                sigma_floor=float(meta["sigma_floor"]),
                bptt_len=base.bptt_len,
                batch_size=base.batch_size,
                collect_epsilon=base.collect_epsilon,
                rollout_policy=str(meta["rollout_policy"]),
            )
            scale = AffordanceScale.from_dict(meta["scale"])
            model = cls(
                loaded_cfg,
                scale,
                state_dim=int(meta["state_dim"]),
                n_actions=int(meta["n_actions"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed predictor metadata ({exc})") from exc
        nk.adopt_params(model.params, nk.params_from_payload(payload["params"]))
        model.trained = True
        return model


@dataclass
class TrainReport:
    """Per-epoch NLL rows; epoch 0 is the initial (untrained) evaluation."""

    rows: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def final_heldout_nll(self) -> float:
        return self.rows[-1][2]

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_nll", "heldout_nll"])
            writer.writerows(self.rows)


def _windows_from_episodes(
    episodes: list[tuple[np.ndarray, np.ndarray]], bptt_len: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Chop episodes into (inputs, targets) windows of at most bptt_len steps."""
    windows = []
    for states, actions in episodes:
        n = len(actions) - 1  # transitions never span an episode boundary
        for start in range(0, n, bptt_len):
            stop = min(start + bptt_len, n)
            windows.append(((states[start:stop], actions[start:stop]), states[start + 1 : stop + 1]))
    return windows


def _eval_nll(model: MDRNN, batches) -> float:
    """Mean per-transition NLL over pre-built equal-length batches."""
    total = 0.0
    count = 0
    for x, targets in batches:
        b, length, _ = x.shape
        hidden = model.init_hidden(batch=b)
        for t in range(length):
            logits, mu, raw, h2 = model._heads(None, x[:, t], hidden)
            hidden = h2.value
            nll, _, _, _, _ = _mixture_nll_values(
                logits.value, mu.value, raw.value, targets[:, t], model.cfg.sigma_floor
            )
            total += float(nll.sum())
            count += b
    return total / count if count else float("nan")


def _batch_windows(model: MDRNN, windows, batch_size: int, order: np.ndarray | None = None):
    """Group same-length windows into (x, targets) batches, preserving order."""
    by_len: dict[int, list[int]] = {}
    indices = order if order is not None else np.arange(len(windows))
    for idx in indices:
        length = len(windows[idx][1])
        by_len.setdefault(length, []).append(int(idx))
    batches = []
    for length in sorted(by_len):
        idxs = by_len[length]
        for start in range(0, len(idxs), batch_size):
            chunk = idxs[start : start + batch_size]
            x = np.stack(
                [model.encode_input(windows[i][0][0], windows[i][0][1]) for i in chunk]
            )
            targets = np.stack([windows[i][1] for i in chunk])
            batches.append((x, targets))
    return batches


def train_offline(
    log: DrivingLog,
    cfg: PredictorConfig,
    scale: AffordanceScale,
    seed: int,
    state_dim: int = 20,
    n_actions: int = 8,
) -> tuple[MDRNN, TrainReport]:
    """Fit the MD-RNN on logged driving data by truncated BPTT.

    Episodes split 90/10 into train/held-out sets (by episode); the report
    carries mean train and held-out NLL per epoch, starting with the untrained
    baseline at epoch 0. Deterministic for a fixed seed.
    """
    usable = [(s, a) for s, a in log.episodes if len(a) >= 2]
    if not usable:
        raise ConfigurationError("driving log holds no usable transitions")
    rng = np.random.default_rng(seed)
    model = MDRNN(cfg, scale, state_dim=state_dim, n_actions=n_actions, rng=rng)
    perm = rng.permutation(len(usable))
    n_held = max(1, round(0.1 * len(usable))) if len(usable) >= 2 else 0
    held_idx = set(perm[:n_held].tolist())
    train_eps = [usable[i] for i in range(len(usable)) if i not in held_idx]
    held_eps = [usable[i] for i in range(len(usable)) if i in held_idx]
    train_windows = _windows_from_episodes(train_eps, cfg.bptt_len)
    held_windows = _windows_from_episodes(held_eps, cfg.bptt_len)
    train_eval_batches = _batch_windows(model, train_windows, cfg.batch_size)
    held_eval_batches = _batch_windows(model, held_windows, cfg.batch_size)

    report = TrainReport()
    report.rows.append((0, _eval_nll(model, train_eval_batches), _eval_nll(model, held_eval_batches)))
    optimizer = nk.Adam(model.params, lr=cfg.learning_rate)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_windows))
        for x, targets in _batch_windows(model, train_windows, cfg.batch_size, order):
            b, length, _ = x.shape
            tape = nk.Tape()
            hidden = model.init_hidden(batch=b)
            step_losses = []
            for t in range(length):
                logits, mu, raw, h2 = model._heads(tape, x[:, t], hidden)
                hidden = h2
                step_losses.append(
                    nk.total(tape, mixture_nll_op(tape, logits, mu, raw, targets[:, t], cfg.sigma_floor))
                )
            loss = step_losses[0]
            for extra in step_losses[1:]:
                loss = nk.add(tape, loss, extra)
            loss = nk.scale(tape, loss, 1.0 / (b * length))
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite predictor loss at epoch {epoch}")
            tape.backward(loss)
            optimizer.step()
        report.rows.append(
            (epoch, _eval_nll(model, train_eval_batches), _eval_nll(model, held_eval_batches))
        )
    model.trained = True
    return model, report


def collect_driving_data(
    env: HighwayEnv,
    policy: Callable[[np.ndarray, np.random.Generator], int],
    n_episodes: int,
    seed: int,
) -> DrivingLog:
    """Run the simulator under a policy, logging every (state, action) pair.

    The policy sees the normalized affordance state and a dedicated rng
    stream; episodes end on collision or budget, and boundaries are kept.
    """
    scn = env.scenario
    scale = env.scale
    seq = np.random.SeedSequence(seed)
    policy_rng = np.random.default_rng(seq.spawn(1)[0])
    count_rng = np.random.default_rng(seq.spawn(1)[0])
    log = DrivingLog()
    for ep_i in range(n_episodes):
        n_vehicles = int(count_rng.integers(scn.n_vehicles_min, scn.n_vehicles_max + 1))
        ep = env.reset(n_vehicles, int(count_rng.integers(1 << 31)))
        state_norm = scale.normalize(env.affordances(ep))
        states = []
        actions = []
        for _ in range(scn.episode_budget):
            a_id = policy(state_norm, policy_rng)
            states.append(state_norm)
            actions.append(a_id)
            res = env.step(ep, env.actions[a_id])
            ep = res.state
            state_norm = scale.normalize(res.affordances)
            if res.collided:
                break
        log.episodes.append(
            (np.asarray(states, dtype=np.float64), np.asarray(actions, dtype=np.int64))
        )
    return log
