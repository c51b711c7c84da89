"""Command-line surface: train, eval, bench-latency, oracle-check, plots.

Exit codes: 0 success, 1 validation error (bad arguments or config), 2
runtime failure. Diagnostics go to stderr; machine-readable outputs go to
files only.
"""

from __future__ import annotations

import os

# Latency benchmarking wants stable single-threaded math; set before numpy
# loads (the package __init__ imports nothing heavy).
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import argparse
import sys

import numpy as np

from . import checks, env as env_mod, plots, search, trainer
from .buffer import ReplayBuffer
from .configio import (
    ExperimentConfig,
    config_from_flat,
    config_to_flat,
    load_config,
    parse_config_text,
    resolve_method,
)
from .errors import ParseError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="waypointrl")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training experiment")
    p_train.add_argument("--config", help="config file (key = value lines)")
    p_train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config key (repeatable)")
    p_train.add_argument("--out", required=True, help="run directory")

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p_eval.add_argument("--run", required=True, help="run directory from train")
    p_eval.add_argument("--checkpoint", default="final.npz")
    p_eval.add_argument("--episodes", type=int, default=20)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", help="output directory (default: <run>/eval_cli)")

    p_bench = sub.add_parser("bench-latency", help="per-decision latency benchmark")
    p_bench.add_argument("--run", required=True, help="run directory from train")
    p_bench.add_argument("--checkpoint", default="final.npz")
    p_bench.add_argument("--sizes", default="0,10,100,1000",
                         help="comma-separated graph sizes")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--episodes", type=int, default=2, help="episodes per rep")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out", help="output directory (default: <run>/bench)")

    p_oracle = sub.add_parser("oracle-check", help="verify the tabular ground truth")
    p_oracle.add_argument("--out", required=True, help="output directory")
    p_oracle.add_argument("--seed", type=int, default=0)

    p_heat = sub.add_parser("plot-heatmap", help="waypoint score heatmap (SVG)")
    p_heat.add_argument("--out", required=True, help="output SVG path")
    p_heat.add_argument("--run", help="run directory (learned classifier mode)")
    p_heat.add_argument("--checkpoint", default="final.npz")
    p_heat.add_argument("--oracle", action="store_true",
                        help="use exact optimal-policy scores instead of a checkpoint")
    p_heat.add_argument("--env", default="four_rooms")
    p_heat.add_argument("--gamma", type=float, default=0.8,
                        help="horizon sharpness for oracle mode")
    p_heat.add_argument("--start", help="x,y start position (default: first free cell)")
    p_heat.add_argument("--goal", help="x,y goal position (default: last free cell)")

    p_curves = sub.add_parser("plot-curves", help="evaluation distance curves (SVG)")
    p_curves.add_argument("--runs", required=True,
                          help="comma-separated run directories")
    p_curves.add_argument("--out", required=True, help="output SVG path")
    return parser


def _parse_overrides(pairs):
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _load_run_config(run_dir) -> ExperimentConfig:
    path = os.path.join(run_dir, "config.txt")
    if not os.path.exists(path):
        raise UsageError(f"no config.txt in {run_dir}")
    return load_config(path)


def _cmd_train(args) -> int:
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        config = load_config(args.config, _parse_overrides(args.set))
    else:
        flat = config_to_flat(ExperimentConfig())
        flat.update(_parse_overrides(args.set))
        config = config_from_flat(flat)
    result = trainer.train(config, args.out)
    print(f"run complete: {result.env_steps} env steps, "
          f"{result.wall_seconds:.1f}s -> {args.out}", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    config = _load_run_config(args.run)
    ckpt = os.path.join(args.run, "checkpoints", args.checkpoint)
    policy, _, state_classifier, _ = trainer.load_policy_from_checkpoint(ckpt, config)
    maze = env_mod.make_maze(config.env_name)
    resolved = resolve_method(config)
    rng = np.random.default_rng(args.seed)
    actor = search.DirectPolicy(policy)
    nodes = 0
    if resolved.eval_with_search:
        buffer_path = os.path.join(args.run, "buffer.npz")
        if os.path.exists(buffer_path):
            buffer = ReplayBuffer.load(buffer_path)
            if len(buffer) >= 2:
                n = min(config.search_nodes, len(buffer))
                graph = search.build_graph(buffer.sample_states(n, rng),
                                           state_classifier,
                                           config.search_cost_cutoff)
                actor = search.SearchPolicy(policy, graph,
                                            eps_d=config.planner.eps_d)
                nodes = n
    out_dir = args.out or os.path.join(args.run, "eval_cli")
    os.makedirs(out_dir, exist_ok=True)
    records = trainer.evaluate(actor, maze, args.episodes,
                               config.resolved_episode_steps,
                               config.success_threshold, rng, step=0,
                               seed=args.seed)
    writer = trainer.CsvWriter(os.path.join(out_dir, "eval.csv"),
                               trainer.EVAL_COLUMNS)
    for rec in records:
        writer.write({"step": rec.step, "seed": rec.seed, "episode": rec.episode,
                      "min_distance": rec.min_distance,
                      "success": int(rec.success)})
    writer.close()
    mean_dist = float(np.mean([r.min_distance for r in records]))
    print(f"eval: {args.episodes} episodes, nodes={nodes}, "
          f"mean min distance {mean_dist:.3f}", file=sys.stderr)
    return 0


def bench_latency(policy, state_classifier, buffer, maze, sizes, reps, episodes,
                  episode_steps, eps_d, cost_cutoff, seed=0):
    """Per-decision latency rows for the direct policy and graph-search act.

    Reported mean/p95 are medians across repetitions of within-repetition
    statistics. Returns a list of latency.csv row dicts.
    """
    rows = []
    configs = [("direct", 0)] + [("search", int(s)) for s in sizes]
    for method, size in configs:
        rep_means, rep_p95s, rep_plans = [], [], []
        for rep in range(reps):
            rng = np.random.default_rng(np.random.SeedSequence([seed, size, rep]))
            if method == "direct" or size == 0:
                actor = (search.DirectPolicy(policy) if method == "direct"
                         else search.SearchPolicy(policy, None, eps_d=eps_d))
            else:
                n = min(size, len(buffer))
                graph = search.build_graph(buffer.sample_states(n, rng),
                                           state_classifier, cost_cutoff)
                actor = search.SearchPolicy(policy, graph, eps_d=eps_d)
            for ep in range(episodes):
                actor.new_episode()
                state, goal = env_mod.reset(maze, rng)
                for _ in range(episode_steps):
                    action = actor.act(state.position, goal.position, rng)
                    state = env_mod.step(maze, state, action).next_state
            lat = np.array(actor.latencies_us)
            rep_means.append(float(lat.mean()))
            rep_p95s.append(float(np.percentile(lat, 95)))
            plans = getattr(actor, "plan_lengths", None)
            rep_plans.append(int(np.median(plans)) if plans else 0)
        rows.append({
            "method": method,
            "num_waypoints": int(np.median(rep_plans)),
            "nodes": size,
            "mean_decision_latency_us": float(np.median(rep_means)),
            "p95_latency_us": float(np.median(rep_p95s)),
        })
    return rows


def _cmd_bench(args) -> int:
    config = _load_run_config(args.run)
    ckpt = os.path.join(args.run, "checkpoints", args.checkpoint)
    policy, _, state_classifier, _ = trainer.load_policy_from_checkpoint(ckpt, config)
    buffer_path = os.path.join(args.run, "buffer.npz")
    if not os.path.exists(buffer_path):
        raise UsageError(f"no buffer.npz in {args.run}")
    buffer = ReplayBuffer.load(buffer_path)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --sizes {args.sizes!r}") from exc
    maze = env_mod.make_maze(config.env_name)
    rows = bench_latency(policy, state_classifier, buffer, maze, sizes,
                         args.reps, args.episodes,
                         config.resolved_episode_steps,
                         config.planner.eps_d, config.search_cost_cutoff,
                         seed=args.seed)
    out_dir = args.out or os.path.join(args.run, "bench")
    os.makedirs(out_dir, exist_ok=True)
    writer = trainer.CsvWriter(os.path.join(out_dir, "latency.csv"),
                               trainer.LATENCY_COLUMNS)
    for row in rows:
        writer.write(row)
    writer.close()
    for row in rows:
        print(f"{row['method']}@{row['nodes']}: "
              f"{row['mean_decision_latency_us']:.1f}us mean", file=sys.stderr)
    return 0


def _cmd_oracle_check(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    results = checks.run_suite(seed=args.seed)
    report_lines = []
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        line = (f"{status} {res.name}: residual {res.residual:.3e} "
                f"(tolerance {res.tolerance:.0e})"
                + (f" - {res.detail}" if res.detail else ""))
        report_lines.append(line)
        print(line, file=sys.stderr)
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(report_lines) + "\n")
    with open(os.path.join(args.out, "residuals.csv"), "w", encoding="utf-8") as handle:
        handle.write("check,passed,residual,tolerance\n")
        for res in results:
            handle.write(f"{res.name},{int(res.passed)},{res.residual:.12g},"
                         f"{res.tolerance:.12g}\n")
    return 0 if all(r.passed for r in results) else 2


def _parse_point(text, default):
    if text is None:
        return np.asarray(default, dtype=np.float64)
    try:
        x, y = (float(p) for p in text.split(","))
    except ValueError as exc:
        raise UsageError(f"expected x,y coordinates, got {text!r}") from exc
    return np.array([x, y])


def _cmd_plot_heatmap(args) -> int:
    if not args.oracle and not args.run:
        raise UsageError("plot-heatmap needs --run (learned) or --oracle")
    if args.oracle:
        maze = env_mod.make_maze(args.env)
        classifier = trainer.OracleStateClassifier(maze, args.gamma)
    else:
        config = _load_run_config(args.run)
        maze = env_mod.make_maze(config.env_name)
        ckpt = os.path.join(args.run, "checkpoints", args.checkpoint)
        _, _, classifier, _ = trainer.load_policy_from_checkpoint(ckpt, config)
    free = sorted(maze.free_cells)
    s0 = _parse_point(args.start, (np.array(free[0]) + 0.5) * maze.cell_size)
    sg = _parse_point(args.goal, (np.array(free[-1]) + 0.5) * maze.cell_size)
    cells, _, probs = plots.waypoint_heatmap_values(maze, s0, sg, classifier)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    plots.write_heatmap_svg(args.out, maze, cells, probs, s0=s0, sg=sg)
    plots.write_heatmap_csv(os.path.splitext(args.out)[0] + ".csv", cells, probs)
    print(f"heatmap written to {args.out}", file=sys.stderr)
    return 0


def _cmd_plot_curves(args) -> int:
    curves = []
    for run_dir in args.runs.split(","):
        run_dir = run_dir.strip()
        path = os.path.join(run_dir, "eval.csv")
        if not os.path.exists(path):
            raise UsageError(f"no eval.csv in {run_dir}")
        by_step = {}
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().strip().split(",")
            idx_step = header.index("step")
            idx_dist = header.index("min_distance")
            for line in handle:
                fields = line.strip().split(",")
                if not fields or fields == [""]:
                    continue
                by_step.setdefault(int(fields[idx_step]), []).append(float(fields[idx_dist]))
        steps = sorted(by_step)
        medians = [float(np.median(by_step[s])) for s in steps]
        curves.append((os.path.basename(os.path.normpath(run_dir)), steps, medians))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    plots.write_curves_svg(args.out, curves)
    print(f"curves written to {args.out}", file=sys.stderr)
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench-latency": _cmd_bench,
    "oracle-check": _cmd_oracle_check,
    "plot-heatmap": _cmd_plot_heatmap,
    "plot-curves": _cmd_plot_curves,
}


def run(argv) -> int:
    """Dispatch a CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except (UsageError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
