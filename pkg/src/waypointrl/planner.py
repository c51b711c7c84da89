"""Waypoint curriculum controller for data collection.

Candidate waypoints are drawn from the replay buffer, scored by summed
classifier log-odds (reach the waypoint from the start, reach the goal from
the waypoint), and resampled through a softmax. The commanded goal switches
to the final goal once the per-episode resample budget is spent, and is never
replaced afterwards. Gradient updates are untouched by any of this: the
curriculum only changes which goals are commanded while collecting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import env as env_mod
from .buffer import Transition
from .env import EnvState, Goal, goal_distance


@dataclass
class PlannerConfig:
    n_g_max: int = 8  # waypoint resamples per episode before committing to the goal
    eps_d: float = 1.0  # reach threshold triggering a resample
    m_candidates: int = 256
    temperature: float = 1.0
    max_steps_per_waypoint: int = 20  # stuck-waypoint timeout, forces a resample

    def __post_init__(self):
        if self.n_g_max < 0:
            raise ValueError("n_g_max must be >= 0")
        if self.eps_d <= 0:
            raise ValueError("eps_d must be positive")
        if self.m_candidates < 1:
            raise ValueError("m_candidates must be >= 1")


@dataclass
class WaypointController:
    """Per-episode waypoint state machine."""

    waypoint: np.ndarray | None = None
    n_g: int = 0
    steps_on_waypoint: int = 0
    final_committed: bool = False
    goals_commanded: list = field(default_factory=list)

    def reset(self):
        self.waypoint = None
        self.n_g = 0
        self.steps_on_waypoint = 0
        self.final_committed = False
        self.goals_commanded = []


def score_candidates(s0, sg, candidates, state_classifier) -> np.ndarray:
    """Summed log-odds score per candidate waypoint.

    score(w) = log-odds(w reaches sg) + log-odds(s0 reaches w).
    """
    candidates = np.atleast_2d(candidates)
    m = len(candidates)
    if m == 0:
        raise ValueError("candidates must be nonempty")
    s0 = np.asarray(s0, dtype=np.float64)
    sg = np.asarray(sg, dtype=np.float64)
    to_goal = state_classifier.log_odds(candidates, np.tile(sg, (m, 1)))
    from_start = state_classifier.log_odds(np.tile(s0, (m, 1)), candidates)
    return to_goal + from_start


def softmax(scores: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64) / temperature
    finite = np.isfinite(scores)
    if not finite.any():
        return np.full(len(scores), 1.0 / len(scores))
    shifted = scores - scores[finite].max()
    weights = np.where(finite, np.exp(shifted), 0.0)
    return weights / weights.sum()


def sample_waypoint(scores, rng: np.random.Generator, temperature: float = 1.0) -> int:
    """Draw a candidate index from softmax(scores / temperature)."""
    probs = softmax(scores, temperature)
    return int(rng.choice(len(probs), p=probs))


def commanded_goal(controller: WaypointController, t: int, s_t, s0, sg, buffer,
                   state_classifier, config: PlannerConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """The goal to condition on at step t, resampling waypoints as triggered.

    A resample fires at t=0, when the current waypoint is within eps_d, or
    when it has been held for more than max_steps_per_waypoint steps; once the
    resample budget is spent, the final goal is committed for the rest of the
    episode. An empty buffer at episode start falls back to the final goal.
    """
    s_t = np.asarray(s_t, dtype=np.float64)
    sg = np.asarray(sg, dtype=np.float64)
    if controller.final_committed:
        return sg

    if t == 0 and len(buffer) == 0:
        controller.final_committed = True
        _record(controller, sg)
        return sg

    triggered = (
        t == 0
        or (controller.waypoint is not None
            and goal_distance(s_t, controller.waypoint) <= config.eps_d)
        or controller.steps_on_waypoint >= config.max_steps_per_waypoint
    )
    if triggered:
        if controller.n_g <= config.n_g_max:
            controller.n_g += 1
            candidates = buffer.sample_states(config.m_candidates, rng)
            scores = score_candidates(s0, sg, candidates, state_classifier)
            pick = sample_waypoint(scores, rng, config.temperature)
            controller.waypoint = candidates[pick].copy()
            controller.steps_on_waypoint = 0
            _record(controller, controller.waypoint)
            return controller.waypoint
        controller.final_committed = True
        controller.waypoint = None
        _record(controller, sg)
        return sg

    controller.steps_on_waypoint += 1
    return controller.waypoint


def _record(controller, goal):
    if not controller.goals_commanded or not np.array_equal(
        controller.goals_commanded[-1], goal
    ):
        controller.goals_commanded.append(np.asarray(goal, dtype=np.float64).copy())


@dataclass
class EpisodeStats:
    episode_id: int
    steps: int
    n_g_used: int
    min_goal_distance: float
    success: bool
    n_distinct_goals: int


def collect_episode(maze, policy, controller: WaypointController, buffer,
                    state_classifier, config: PlannerConfig,
                    rng: np.random.Generator, episode_steps: int = 50,
                    episode_id: int = 0, success_threshold: float = 1.0,
                    random_actions: bool = False):
    """Roll one episode, commanding waypoints, and store it in the buffer.

    Returns (trajectory, EpisodeStats). With random_actions=True, actions are
    uniform in the action box and the final goal is commanded directly
    (warmup collection).
    """
    controller.reset()
    state, goal = env_mod.reset(maze, rng)
    s0 = state.position.copy()
    sg = goal.position
    trajectory = []
    min_dist = goal_distance(state.position, sg)
    for t in range(episode_steps):
        if random_actions:
            g_cmd = sg
            action = rng.uniform(-env_mod.ACTION_MAX, env_mod.ACTION_MAX, size=2)
        else:
            g_cmd = commanded_goal(controller, t, state.position, s0, sg, buffer,
                                   state_classifier, config, rng)
            action = policy.act(state.position, g_cmd, rng)
        result = env_mod.step(maze, state, action)
        trajectory.append(
            Transition(
                state=EnvState(state.position.copy()),
                action=np.asarray(action, dtype=np.float64).copy(),
                next_state=EnvState(result.next_state.position.copy()),
                commanded_goal=Goal(np.asarray(g_cmd, dtype=np.float64).copy()),
                episode_id=episode_id,
                step_index=t,
            )
        )
        state = result.next_state
        min_dist = min(min_dist, goal_distance(state.position, sg))
    buffer.insert_trajectory(trajectory)
    stats = EpisodeStats(
        episode_id=episode_id,
        steps=len(trajectory),
        n_g_used=controller.n_g,
        min_goal_distance=min_dist,
        success=min_dist <= success_threshold,
        n_distinct_goals=max(len(controller.goals_commanded), 1),
    )
    return trajectory, stats
