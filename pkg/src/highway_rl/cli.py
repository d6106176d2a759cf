"""Command-line pipeline orchestration.

Subcommands: train-baseline, collect, train-mdrnn, train-safe, evaluate,
compare. One JSON config drives every stage; flags override file values which
override defaults. Exit codes: 0 ok, 2 configuration/usage error, 3
artifact/compatibility error, 4 runtime training error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .agent import QNetwork, TrainResult, greedy_episode, run_training, select_action
from .config import ExperimentConfig, config_to_dict, load_config, save_config
from .errors import ConfigurationError, ContractViolation, FormatError, TrainingError
from .manifest import verify_artifact, write_manifest
from .mdrnn import MDRNN, DrivingLog, collect_driving_data, train_offline
from .sim import HighwayEnv, TraceRecorder


def _make_qnet(cfg: ExperimentConfig, rng=None) -> QNetwork:
    return QNetwork(20, len(cfg.scenario.actions), cfg.agent.hidden_sizes, rng)


def _load_qnet(cfg: ExperimentConfig, path: str | Path) -> QNetwork:
    verify_artifact(path)
    net = _make_qnet(cfg)
    net.load(path)
    return net


def _write_training_outputs(
    cfg: ExperimentConfig, result: TrainResult, out_dir: Path, command: str, seed: int
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    qnet_path = out_dir / "qnet.json"
    metrics_path = out_dir / "metrics.csv"
    eval_path = out_dir / "eval.csv"
    config_path = out_dir / "config.json"
    result.q_net.save(qnet_path)
    result.save_metrics_csv(metrics_path)
    result.save_eval_csv(eval_path)
    save_config(cfg, config_path)
    write_manifest(
        out_dir, command, seed, config_to_dict(cfg), [qnet_path, metrics_path, eval_path, config_path]
    )


def cmd_train_baseline(cfg: ExperimentConfig, seed: int, out_dir: Path, episodes: int | None = None) -> None:
    """Train the plain DDQN agent (heuristic-era data-collection baseline)."""
    env = HighwayEnv(cfg.scenario)
    n_episodes = episodes if episodes is not None else cfg.episodes
    result = run_training(
        env, None, cfg.agent, n_episodes, seed, cfg.eval_interval, cfg.eval_episodes
    )
    _write_training_outputs(cfg, result, out_dir, "train-baseline", seed)
    print(f"train-baseline: {n_episodes} episodes, seed {seed} -> {out_dir}")


def cmd_train_safe(
    cfg: ExperimentConfig,
    seed: int,
    out_dir: Path,
    predictor_path: str | Path,
    episodes: int | None = None,
) -> None:
    """Train the DDQN agent with predictive lookahead penalties."""
    verify_artifact(predictor_path)
    predictor = MDRNN.load(predictor_path, cfg.predictor)
    scale = cfg.scenario.scale
    if predictor.scale != scale:
        raise FormatError(
            f"predictor normalization {predictor.scale.to_dict()} does not match the "
            f"scenario's {scale.to_dict()}"
        )
    if predictor.n_actions != len(cfg.scenario.actions):
        raise FormatError(
            f"predictor expects {predictor.n_actions} actions, scenario has "
            f"{len(cfg.scenario.actions)}"
        )
    env = HighwayEnv(cfg.scenario)
    n_episodes = episodes if episodes is not None else cfg.episodes
    result = run_training(
        env, predictor, cfg.agent, n_episodes, seed, cfg.eval_interval, cfg.eval_episodes
    )
    _write_training_outputs(cfg, result, out_dir, "train-safe", seed)
    print(f"train-safe: m={predictor.cfg.m}, {n_episodes} episodes, seed {seed} -> {out_dir}")


def cmd_collect(
    cfg: ExperimentConfig, seed: int, out_dir: Path, checkpoint: str | Path, episodes: int
) -> None:
    """Roll the baseline policy and log (state, action) pairs for the predictor."""
    net = _load_qnet(cfg, checkpoint)
    env = HighwayEnv(cfg.scenario)
    epsilon = cfg.predictor.collect_epsilon

    def policy(state_norm: np.ndarray, rng: np.random.Generator) -> int:
        return select_action(net.qvalues(state_norm), epsilon, rng)

    log = collect_driving_data(env, policy, episodes, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "driving_log.csv"
    log.save_csv(log_path)
    write_manifest(out_dir, "collect", seed, config_to_dict(cfg), [log_path])
    if log.n_pairs == 0:
        print("collect: warning: empty driving log (0 episodes requested?)")
    print(f"collect: {len(log.episodes)} episodes, {log.n_pairs} pairs -> {log_path}")


def cmd_train_mdrnn(cfg: ExperimentConfig, seed: int, out_dir: Path, log_path: str | Path) -> None:
    """Fit the mixture-density RNN offline on a driving log."""
    verify_artifact(log_path)
    log = DrivingLog.load_csv(log_path)
    model, report = train_offline(log, cfg.predictor, cfg.scenario.scale, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "mdrnn.json"
    nll_path = out_dir / "nll.csv"
    model.save(model_path)
    report.save_csv(nll_path)
    write_manifest(out_dir, "train-mdrnn", seed, config_to_dict(cfg), [model_path, nll_path])
    print(
        f"train-mdrnn: m={cfg.predictor.m}, {cfg.predictor.epochs} epochs, "
        f"held-out NLL {report.final_heldout_nll:.4f} -> {model_path}"
    )


def cmd_evaluate(
    cfg: ExperimentConfig,
    seed: int,
    out_dir: Path,
    checkpoint: str | Path,
    counts: list[int],
    trials: int,
    trace: bool = False,
) -> None:
    """Greedy collision sweep over traffic densities."""
    net = _load_qnet(cfg, checkpoint)
    env = HighwayEnv(cfg.scenario)
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = out_dir / "sweep.csv"
    outputs = [sweep_path]
    rows = []
    if trials == 0:
        print("evaluate: warning: 0 trials requested, writing an empty sweep")
    for count in counts:
        rng = np.random.default_rng([seed, count])
        returns = []
        steps_list = []
        collisions = 0
        for _ in range(trials):
            ret, collided, steps = greedy_episode(env, net, count, int(rng.integers(1 << 31)))
            returns.append(ret)
            steps_list.append(steps)
            collisions += int(collided)
        rows.append(
            (
                count,
                trials,
                collisions,
                float(np.mean(returns)) if returns else float("nan"),
                float(np.mean(steps_list)) if steps_list else float("nan"),
            )
        )
        if trace and trials > 0:
            recorder = TraceRecorder()
            scale = env.scale
            ep = env.reset(count, int(np.random.default_rng([seed, count, 0]).integers(1 << 31)))
            s_norm = scale.normalize(env.affordances(ep))
            for _ in range(cfg.scenario.episode_budget):
                a_id = int(np.argmax(net.qvalues(s_norm)))
                res = env.step(ep, env.actions[a_id])
                recorder.record(res.state, a_id, res.reward, res.collided, res.affordances)
                ep = res.state
                s_norm = scale.normalize(res.affordances)
                if res.collided:
                    break
            trace_path = out_dir / f"trace_{count}.csv"
            recorder.write(trace_path)
            outputs.append(trace_path)
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vehicle_count", "trials", "collisions", "mean_return", "mean_steps"])
        writer.writerows(rows)
    write_manifest(out_dir, "evaluate", seed, config_to_dict(cfg), outputs)
    for count, _, collisions, mean_ret, _ in rows:
        print(f"evaluate: {count} vehicles: {collisions}/{trials} collisions, mean return {mean_ret:.3f}")
    print(f"evaluate: sweep -> {sweep_path}")


def _read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: empty CSV")
        return header, list(reader)


def _run_names(run_dirs: list[Path]) -> list[str]:
    names = [d.name or str(d) for d in run_dirs]
    seen: dict[str, int] = {}
    out = []
    for name in names:
        seen[name] = seen.get(name, 0) + 1
        out.append(name if seen[name] == 1 else f"{name}_{seen[name]}")
    return out


def _print_table(header: list[str], rows: list[list]) -> None:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    print("  ".join(str(h).rjust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))


def cmd_compare(run_dirs: list[Path], out_dir: Path) -> None:
    """Align learning curves (and sweeps, when present) across run directories."""
    if len(run_dirs) < 2:
        raise ConfigurationError("compare needs at least two run directories")
    names = _run_names(run_dirs)
    curves = []
    for d in run_dirs:
        path = d / "eval.csv"
        if not path.exists():
            raise ConfigurationError(f"{d}: no eval.csv (not a training run directory?)")
        _, rows = _read_csv_rows(path)
        curves.append([(int(r[0]), float(r[1])) for r in rows])
    grid = [e for e, _ in curves[0]]
    for name, curve in zip(names, curves):
        if [e for e, _ in curve] != grid:
            raise ConfigurationError(
                f"evaluation grids differ: {name} has episodes {[e for e, _ in curve]}, "
                f"{names[0]} has {grid}"
            )
    out_dir.mkdir(parents=True, exist_ok=True)
    learn_path = out_dir / "compare_learning.csv"
    header = ["episode"] + [f"{n}_return" for n in names]
    table_rows = [
        [grid[i]] + [round(curves[j][i][1], 6) for j in range(len(curves))]
        for i in range(len(grid))
    ]
    with open(learn_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(table_rows)
    print("learning curves (mean greedy return):")
    _print_table(header, table_rows)
    outputs = [learn_path]

    sweep_paths = [d / "sweep.csv" for d in run_dirs]
    if all(p.exists() for p in sweep_paths):
        sweeps = []
        for p in sweep_paths:
            _, rows = _read_csv_rows(p)
            sweeps.append([(int(r[0]), int(r[2]), float(r[3])) for r in rows])
        sweep_grid = [c for c, _, _ in sweeps[0]]
        for name, sweep in zip(names, sweeps):
            if [c for c, _, _ in sweep] != sweep_grid:
                raise ConfigurationError(f"sweep vehicle counts differ for {name}")
        sweep_path = out_dir / "compare_sweep.csv"
        sweep_header = ["vehicle_count"] + [f"{n}_collisions" for n in names]
        sweep_rows = [
            [sweep_grid[i]] + [sweeps[j][i][1] for j in range(len(sweeps))]
            for i in range(len(sweep_grid))
        ]
        with open(sweep_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(sweep_header)
            writer.writerows(sweep_rows)
        print("collision sweep:")
        _print_table(sweep_header, sweep_rows)
        outputs.append(sweep_path)
    write_manifest(out_dir, "compare", None, {"runs": [str(d) for d in run_dirs]}, outputs)


def _add_common(parser: argparse.ArgumentParser, episodes: bool = False) -> None:
    parser.add_argument("--config", help="JSON config path (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, help="run seed (default: first of config seeds)")
    parser.add_argument("--seeds", help="comma-separated seed list; fans out to seed_<n>/ subdirs")
    parser.add_argument("--out", help="output directory (default: config out_dir)")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. scenario.dynamics.dt=0.05",
    )
    if episodes:
        parser.add_argument("--episodes", type=int, help="override the config episode count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="highway-rl",
        description="Safe highway-driving RL pipeline: baseline, collect, predictor, safe training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-baseline", help="train the plain DDQN agent")
    _add_common(p, episodes=True)

    p = sub.add_parser("collect", help="log driving data under a trained baseline")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="baseline qnet.json")
    p.add_argument("--episodes", type=int, required=True, help="number of episodes to log")

    p = sub.add_parser("train-mdrnn", help="train the mixture-density RNN offline")
    _add_common(p)
    p.add_argument("--log", required=True, help="driving_log.csv from collect")

    p = sub.add_parser("train-safe", help="train DDQN with predictive lookahead")
    _add_common(p, episodes=True)
    p.add_argument("--predictor", required=True, help="mdrnn.json checkpoint")

    p = sub.add_parser("evaluate", help="greedy collision sweep over traffic densities")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="qnet.json to evaluate")
    p.add_argument("--counts", default="6,12,18,24", help="comma-separated vehicle counts")
    p.add_argument("--trials", type=int, default=300, help="episodes per vehicle count")
    p.add_argument("--trace", action="store_true", help="write one episode trace per count")

    p = sub.add_parser("compare", help="align learning curves and sweeps across runs")
    p.add_argument("runs", nargs="+", help="two or more run directories")
    p.add_argument("--out", required=True, help="output directory for comparison CSVs")
    return parser


def _seed_list(args, cfg: ExperimentConfig) -> list[int]:
    if getattr(args, "seeds", None):
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigurationError(f"--seeds: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    return list(cfg.seeds)


def _dispatch_single(args, cfg: ExperimentConfig, seed: int, out_dir: Path) -> None:
    if args.command == "train-baseline":
        cmd_train_baseline(cfg, seed, out_dir, args.episodes)
    elif args.command == "train-safe":
        cmd_train_safe(cfg, seed, out_dir, args.predictor, args.episodes)
    elif args.command == "collect":
        cmd_collect(cfg, seed, out_dir, args.checkpoint, args.episodes)
    elif args.command == "train-mdrnn":
        cmd_train_mdrnn(cfg, seed, out_dir, args.log)
    elif args.command == "evaluate":
        counts = [int(c) for c in args.counts.split(",") if c.strip()]
        cmd_evaluate(cfg, seed, out_dir, args.checkpoint, counts, args.trials, args.trace)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigurationError(f"unknown command {args.command!r}")


def _fan_out(args, cfg: ExperimentConfig, seeds: list[int], out_root: Path) -> None:
    workers = int(os.environ.get("HIGHWAY_RL_THREADS", "1"))
    jobs = [(seed, out_root / f"seed_{seed}") for seed in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [
                pool.submit(_dispatch_single, args, cfg, seed, out_dir) for seed, out_dir in jobs
            ]
            for future in futures:
                future.result()
    else:
        for seed, out_dir in jobs:
            _dispatch_single(args, cfg, seed, out_dir)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "compare":
            cmd_compare([Path(d) for d in args.runs], Path(args.out))
            return 0
        cfg = load_config(args.config, args.override)
        out_root = Path(args.out) if args.out else Path(cfg.out_dir)
        seeds = _seed_list(args, cfg)
        if len(seeds) == 1:
            _dispatch_single(args, cfg, seeds[0], out_root)
        else:
            _fan_out(args, cfg, seeds, out_root)
        return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, FileNotFoundError) as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return 3
    except (TrainingError, ContractViolation) as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:  # console-script shim
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
