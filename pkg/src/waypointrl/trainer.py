"""Training orchestration: alternating waypoint-driven collection and
classifier/actor updates, with periodic evaluation.

Method tags only change how experience is collected and how evaluation
conditions the policy (see configio.resolve_method); every method runs the
same update functions on the same schedule (one update of each network per
environment step after warmup), so baselines differ from the full method by
collection alone.
"""

from __future__ import annotations

import copy
import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import approx, clearning, env as env_mod, oracle, planner, search
from .buffer import ReplayBuffer
from .configio import ExperimentConfig, config_to_flat, format_config_text, resolve_method
from .errors import UsageError

METRICS_COLUMNS = (
    "step",
    "episode",
    "classifier_loss",
    "state_classifier_loss",
    "actor_loss",
    "critic_grad_norm_mean",
    "critic_grad_norm_std",
    "actor_grad_norm_mean",
    "actor_grad_norm_std",
    "min_goal_distance",
    "success",
    "n_waypoints_used",
)

EVAL_COLUMNS = ("step", "seed", "episode", "min_distance", "success")

LATENCY_COLUMNS = (
    "method",
    "num_waypoints",
    "nodes",
    "mean_decision_latency_us",
    "p95_latency_us",
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


class CsvWriter:
    def __init__(self, path, columns):
        self.path = path
        self.columns = columns
        self._handle = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._handle)
        self._writer.writerow(columns)

    def write(self, row: dict):
        self._writer.writerow([_fmt(row.get(c, "nan")) for c in self.columns])

    def close(self):
        self._handle.flush()
        self._handle.close()


class OracleStateClassifier:
    """Exact log-odds tables from per-goal optimal policies on the discretized
    maze; the stand-in classifier for the oracle-curriculum experiment."""

    def __init__(self, maze, gamma: float, clamp: float = 30.0):
        self.maze = maze
        self.clamp = clamp
        mdp, cells = oracle.from_maze(maze)
        self.cells = cells
        self.centers = oracle.cell_centers(maze, cells)
        self._index = {c: i for i, c in enumerate(cells)}
        n = mdp.n_states
        log_marginal = -np.log(n)  # uniform goal marginal over free cells
        table = np.zeros((n, n))
        for g in range(n):
            pi = oracle.optimal_policy(mdp, g, gamma)
            d = oracle.geom_occupancy(mdp, pi, gamma)
            with np.errstate(divide="ignore"):
                table[:, g] = np.log(d[:, g]) - log_marginal
        self.table = np.clip(table, -clamp, clamp)

    def _snap(self, positions) -> np.ndarray:
        positions = np.atleast_2d(positions)
        cols = (positions[:, 0] // self.maze.cell_size).astype(int)
        rows = (positions[:, 1] // self.maze.cell_size).astype(int)
        return np.array([
            self._index.get((int(x), int(y)), self._nearest(px))
            for x, y, px in zip(cols, rows, positions)
        ])

    def _nearest(self, position) -> int:
        return int(np.linalg.norm(self.centers - position, axis=1).argmin())

    def log_odds(self, s, g) -> np.ndarray:
        return self.table[self._snap(s), self._snap(g)]


@dataclass
class EvalRecord:
    step: int
    seed: int
    episode: int
    min_distance: float
    success: bool


def evaluate(actor, maze, episodes: int, episode_steps: int,
             success_threshold: float, rng: np.random.Generator,
             step: int = 0, seed: int = 0):
    """Roll evaluation episodes conditioning directly on the sampled goal.

    actor needs .act(s, g, rng) and .new_episode(); actions are sampled
    stochastically. Returns a list of EvalRecord.
    """
    records = []
    for ep in range(episodes):
        actor.new_episode()
        state, goal = env_mod.reset(maze, rng)
        sg = goal.position
        min_dist = env_mod.goal_distance(state.position, sg)
        for _ in range(episode_steps):
            action = actor.act(state.position, sg, rng)
            state = env_mod.step(maze, state, action).next_state
            min_dist = min(min_dist, env_mod.goal_distance(state.position, sg))
        records.append(EvalRecord(step, seed, ep, min_dist, min_dist <= success_threshold))
    return records


def random_action_baseline(maze, episodes, episode_steps, success_threshold, rng):
    """Mean min-distance of uniform-random-action rollouts (reference point)."""

    class _RandomActor:
        def new_episode(self):
            pass

        def act(self, s, g, inner_rng):
            return inner_rng.uniform(-env_mod.ACTION_MAX, env_mod.ACTION_MAX, size=2)

    records = evaluate(_RandomActor(), maze, episodes, episode_steps,
                       success_threshold, rng)
    return float(np.mean([r.min_distance for r in records]))


@dataclass
class RunResult:
    run_dir: str
    config: ExperimentConfig
    eval_records: list
    update_counts: dict
    env_steps: int
    wall_seconds: float

    def eval_curve(self):
        """(steps, median min_distance per eval point), sorted by step."""
        by_step: dict = {}
        for rec in self.eval_records:
            by_step.setdefault(rec.step, []).append(rec.min_distance)
        steps = sorted(by_step)
        return np.array(steps), np.array([np.median(by_step[s]) for s in steps])


def _latency_row(method, actor, nodes):
    lat = np.array(actor.latencies_us, dtype=np.float64)
    if len(lat) == 0:
        return None
    plans = getattr(actor, "plan_lengths", None)
    return {
        "method": method,
        "num_waypoints": int(np.median(plans)) if plans else 0,
        "nodes": nodes,
        "mean_decision_latency_us": float(lat.mean()),
        "p95_latency_us": float(np.percentile(lat, 95)),
    }


def _build_eval_actor(policy, resolved, config, buffer, state_classifier, rng):
    if not resolved.eval_with_search or len(buffer) < 2:
        return search.DirectPolicy(policy), 0
    n = min(config.search_nodes, len(buffer))
    if n < 2:
        return search.DirectPolicy(policy), 0
    states = buffer.sample_states(n, rng)
    graph = search.build_graph(states, state_classifier, config.search_cost_cutoff)
    return search.SearchPolicy(policy, graph, eps_d=config.planner.eps_d), n


def train(config: ExperimentConfig, run_dir: str) -> RunResult:
    """Run one experiment; writes config snapshot, metrics.csv, eval.csv,
    latency.csv, checkpoints/, report.txt under run_dir."""
    t_start = time.perf_counter()
    os.makedirs(run_dir, exist_ok=True)
    os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)
    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as handle:
        handle.write(format_config_text(config_to_flat(config)))

    resolved = resolve_method(config)
    maze = env_mod.make_maze(config.env_name)
    episode_steps = config.resolved_episode_steps
    scale = max(maze.width, maze.height) * maze.cell_size
    cfg = config.train

    seq = np.random.SeedSequence(config.seed)
    init_seq, collect_seq, batch_seq, update_seq = seq.spawn(4)
    init_rng = np.random.default_rng(init_seq)
    collect_rng = np.random.default_rng(collect_seq)
    batch_rng = np.random.default_rng(batch_seq)
    update_rng = np.random.default_rng(update_seq)

    policy = clearning.Policy(config.hidden, init_rng, scale=scale,
                              a_max=env_mod.ACTION_MAX)
    classifier = clearning.Classifier(config.hidden, init_rng, scale=scale)
    state_classifier = clearning.StateClassifier(config.hidden, init_rng, scale=scale)
    classifier_target = copy.deepcopy(classifier)
    state_classifier_target = copy.deepcopy(state_classifier)
    opt_actor = clearning.Optimizer.for_net(policy.net, cfg.actor_lr)
    opt_critic = clearning.Optimizer.for_net(classifier.net, cfg.critic_lr)
    opt_state = clearning.Optimizer.for_net(state_classifier.net, cfg.state_critic_lr)

    buffer = ReplayBuffer(config.buffer_capacity)
    planner_cfg = planner.PlannerConfig(
        n_g_max=resolved.collection_n_g,
        eps_d=config.planner.eps_d,
        m_candidates=config.planner.m_candidates,
        temperature=config.planner.temperature,
        max_steps_per_waypoint=config.planner.max_steps_per_waypoint,
    )
    if resolved.use_oracle_classifier:
        planning_classifier = OracleStateClassifier(maze, cfg.gamma)
    else:
        planning_classifier = state_classifier

    metrics = CsvWriter(os.path.join(run_dir, "metrics.csv"), METRICS_COLUMNS)
    eval_csv = CsvWriter(os.path.join(run_dir, "eval.csv"), EVAL_COLUMNS)
    latency_csv = CsvWriter(os.path.join(run_dir, "latency.csv"), LATENCY_COLUMNS)

    controller = planner.WaypointController()
    update_counts = {"critic": 0, "state_critic": 0, "actor": 0}
    eval_records: list = []
    env_steps = 0
    episode_id = 0
    next_eval = 0

    def run_eval(at_step: int):
        eval_rng = np.random.default_rng(np.random.SeedSequence([config.seed, at_step, 7]))
        actor, nodes = _build_eval_actor(policy, resolved, config, buffer,
                                         state_classifier, eval_rng)
        records = evaluate(actor, maze, config.eval_episodes, episode_steps,
                           config.success_threshold, eval_rng,
                           step=at_step, seed=config.seed)
        eval_records.extend(records)
        for rec in records:
            eval_csv.write({
                "step": rec.step, "seed": rec.seed, "episode": rec.episode,
                "min_distance": rec.min_distance, "success": int(rec.success),
            })
        row = _latency_row("search" if nodes else "direct", actor, nodes)
        if row is not None:
            latency_csv.write(row)
        approx.save_checkpoint(
            os.path.join(run_dir, "checkpoints", f"step_{at_step:08d}.npz"),
            {"policy": policy.net, "classifier": classifier.net,
             "state_classifier": state_classifier.net},
            extra={"step": at_step, "seed": config.seed},
        )

    while env_steps < config.total_steps:
        while env_steps >= next_eval:
            run_eval(next_eval)
            next_eval += config.eval_interval
        warm = env_steps < config.warmup_steps
        _, stats = planner.collect_episode(
            maze, policy, controller, buffer, planning_classifier, planner_cfg,
            collect_rng, episode_steps=episode_steps, episode_id=episode_id,
            success_threshold=config.success_threshold, random_actions=warm,
        )
        env_steps += stats.steps
        episode_id += 1

        window = {"closs": [], "sloss": [], "aloss": [], "cn": [], "an": []}
        if not warm and len(buffer) > 0:
            for _ in range(stats.steps):
                batch = buffer.sample_batch(cfg.batch_size, config.relabel,
                                            cfg.gamma, batch_rng)
                neg_goals = buffer.sample_states(cfg.batch_size, batch_rng)
                closs, cnorm = clearning.classifier_update(
                    classifier, classifier_target, opt_critic, batch, neg_goals,
                    cfg, update_rng, policy=policy)
                sloss, _ = clearning.classifier_update(
                    state_classifier, state_classifier_target, opt_state, batch,
                    neg_goals, cfg, update_rng)
                aloss, anorm = clearning.actor_update(
                    policy, classifier, opt_actor, batch, cfg, update_rng)
                update_counts["critic"] += 1
                update_counts["state_critic"] += 1
                update_counts["actor"] += 1
                if update_counts["critic"] % cfg.target_update_period == 0:
                    clearning.soft_update(classifier_target.net, classifier.net, cfg.tau)
                    clearning.soft_update(state_classifier_target.net,
                                          state_classifier.net, cfg.tau)
                window["closs"].append(closs)
                window["sloss"].append(sloss)
                window["aloss"].append(aloss)
                window["cn"].append(cnorm)
                window["an"].append(anorm)

        def _mean(xs):
            return float(np.mean(xs)) if xs else float("nan")

        def _std(xs):
            return float(np.std(xs)) if xs else float("nan")

        metrics.write({
            "step": env_steps,
            "episode": episode_id - 1,
            "classifier_loss": _mean(window["closs"]),
            "state_classifier_loss": _mean(window["sloss"]),
            "actor_loss": _mean(window["aloss"]),
            "critic_grad_norm_mean": _mean(window["cn"]),
            "critic_grad_norm_std": _std(window["cn"]),
            "actor_grad_norm_mean": _mean(window["an"]),
            "actor_grad_norm_std": _std(window["an"]),
            "min_goal_distance": stats.min_goal_distance,
            "success": int(stats.success),
            "n_waypoints_used": stats.n_g_used,
        })

    run_eval(config.total_steps)
    approx.save_checkpoint(
        os.path.join(run_dir, "checkpoints", "final.npz"),
        {"policy": policy.net, "classifier": classifier.net,
         "state_classifier": state_classifier.net},
        extra={"step": env_steps, "seed": config.seed},
    )
    buffer.save(os.path.join(run_dir, "buffer.npz"))
    metrics.close()
    eval_csv.close()
    latency_csv.close()

    wall = time.perf_counter() - t_start
    result = RunResult(run_dir, config, eval_records, update_counts, env_steps, wall)
    _write_report(result)
    return result


def _write_report(result: RunResult):
    steps, medians = result.eval_curve()
    lines = [
        f"method: {result.config.method}",
        f"seed: {result.config.seed}",
        f"env: {result.config.env_name}",
        f"env_steps: {result.env_steps}",
        f"updates: {result.update_counts}",
        f"wall_seconds: {result.wall_seconds:.1f}",
    ]
    if len(steps):
        lines.append(f"final_median_min_distance: {medians[-1]:.4f}")
        lines.append(f"best_median_min_distance: {medians.min():.4f}")
    with open(os.path.join(result.run_dir, "report.txt"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_policy_from_checkpoint(path, config: ExperimentConfig):
    """Rebuild policy and classifiers from a checkpoint file."""
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    nets, extra = approx.load_checkpoint(path)
    maze = env_mod.make_maze(config.env_name)
    scale = max(maze.width, maze.height) * maze.cell_size
    rng = np.random.default_rng(0)
    policy = clearning.Policy(config.hidden, rng, scale=scale, a_max=env_mod.ACTION_MAX)
    classifier = clearning.Classifier(config.hidden, rng, scale=scale)
    state_classifier = clearning.StateClassifier(config.hidden, rng, scale=scale)
    policy.net = nets["policy"]
    classifier.net = nets["classifier"]
    state_classifier.net = nets["state_classifier"]
    return policy, classifier, state_classifier, extra
