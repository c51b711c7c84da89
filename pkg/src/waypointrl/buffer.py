"""Trajectory replay buffer with goal relabeling.

The buffer doubles as the background distribution over states from which
waypoint candidates are proposed. Storage is a ring of flat arrays; episodes
are written contiguously (modulo wraparound), so a live transition's
same-episode successors are always live too and future-relabeling never
crosses an eviction boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import EnvState, Goal
from .errors import UsageError

LABEL_NEXT = 0
LABEL_FUTURE = 1
LABEL_COMMANDED = 2
LABEL_RANDOM = 3
LABEL_NAMES = ("next", "future", "commanded", "random")


@dataclass
class Transition:
    state: EnvState
    action: np.ndarray
    next_state: EnvState
    commanded_goal: Goal
    episode_id: int
    step_index: int


@dataclass
class RelabelConfig:
    """Goal-relabeling mix: next-state, in-episode future, and an equal split
    of the remainder between the originally commanded goal and a random
    buffer state."""

    p_next: float = 0.5
    p_future: float = 0.0

    def __post_init__(self):
        if self.p_next < 0 or self.p_future < 0:
            raise UsageError("relabel probabilities must be nonnegative")
        if self.p_next + self.p_future > 1.0 + 1e-12:
            raise UsageError("p_next + p_future must not exceed 1")

    @property
    def p_commanded(self) -> float:
        return 0.5 * (1.0 - self.p_next - self.p_future)

    @property
    def p_random(self) -> float:
        return self.p_commanded


@dataclass
class Batch:
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    goal: np.ndarray
    label_source: np.ndarray  # int codes, see LABEL_NAMES


class ReplayBuffer:
    def __init__(self, capacity: int = 1_000_000, state_dim: int = 2, action_dim: int = 2):
        if capacity < 1:
            raise UsageError("capacity must be positive")
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.goals = np.zeros((capacity, state_dim))
        self.episode_ids = np.zeros(capacity, dtype=np.int64)
        self.step_indices = np.zeros(capacity, dtype=np.int64)
        self.steps_remaining = np.zeros(capacity, dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    def insert_trajectory(self, trajectory):
        """Store one episode's transitions in order, evicting oldest first."""
        if not trajectory:
            raise UsageError("cannot insert an empty trajectory")
        ep = trajectory[0].episode_id
        for k, tr in enumerate(trajectory):
            if tr.episode_id != ep:
                raise UsageError("trajectory mixes episode ids")
            if tr.step_index != trajectory[0].step_index + k:
                raise UsageError("trajectory step indices must be consecutive")
        n = len(trajectory)
        for k, tr in enumerate(trajectory):
            i = (self.cursor + k) % self.capacity
            self.states[i] = tr.state.position
            self.actions[i] = tr.action
            self.next_states[i] = tr.next_state.position
            self.goals[i] = tr.commanded_goal.position
            self.episode_ids[i] = tr.episode_id
            self.step_indices[i] = tr.step_index
            self.steps_remaining[i] = n - 1 - k
        self.cursor = (self.cursor + n) % self.capacity
        self.size = min(self.size + n, self.capacity)

    def _sample_future_offsets(self, remaining, gamma, rng):
        # Truncated geometric over offsets 1..L with P(d) proportional to
        # gamma^(d-1), L = remaining + 1 (offset L lands on the episode's
        # final next_state).
        horizon = remaining + 1
        u = rng.random(len(horizon))
        if gamma <= 0.0:
            return np.ones_like(horizon)
        total = 1.0 - gamma**horizon
        d = np.ceil(np.log1p(-u * total) / np.log(gamma)).astype(np.int64)
        return np.clip(d, 1, horizon)

    def sample_batch(
        self,
        n: int,
        relabel: RelabelConfig,
        gamma: float,
        rng: np.random.Generator,
    ) -> Batch:
        """Sample transitions with relabeled goals.

        Per transition the goal is its next state (p_next), a geometrically
        distributed later state of its own episode (p_future), or, splitting
        the remainder equally, the originally commanded goal or a uniformly
        random buffer state.
        """
        if self.size == 0:
            raise UsageError("cannot sample from an empty buffer")
        idx = rng.integers(self.size, size=n)
        u = rng.random(n)
        offsets = self._sample_future_offsets(self.steps_remaining[idx], gamma, rng)
        rand_idx = rng.integers(self.size, size=n)

        labels = np.full(n, LABEL_RANDOM, dtype=np.int64)
        labels[u < relabel.p_next + relabel.p_future + relabel.p_commanded] = LABEL_COMMANDED
        labels[u < relabel.p_next + relabel.p_future] = LABEL_FUTURE
        labels[u < relabel.p_next] = LABEL_NEXT

        goals = self.goals[idx].copy()
        mask = labels == LABEL_NEXT
        goals[mask] = self.next_states[idx[mask]]
        mask = labels == LABEL_FUTURE
        future_slots = (idx[mask] + offsets[mask] - 1) % self.capacity
        goals[mask] = self.next_states[future_slots]
        mask = labels == LABEL_RANDOM
        goals[mask] = self.states[rand_idx[mask]]

        return Batch(
            state=self.states[idx].copy(),
            action=self.actions[idx].copy(),
            next_state=self.next_states[idx].copy(),
            goal=goals,
            label_source=labels,
        )

    def sample_states(self, m: int, rng: np.random.Generator) -> np.ndarray:
        """m states drawn uniformly with replacement from stored transitions."""
        if self.size == 0:
            raise UsageError("cannot sample states from an empty buffer")
        idx = rng.integers(self.size, size=m)
        return self.states[idx].copy()

    def save(self, path):
        np.savez(
            path,
            capacity=np.array(self.capacity),
            size=np.array(self.size),
            cursor=np.array(self.cursor),
            states=self.states[: self.size],
            actions=self.actions[: self.size],
            next_states=self.next_states[: self.size],
            goals=self.goals[: self.size],
            episode_ids=self.episode_ids[: self.size],
            step_indices=self.step_indices[: self.size],
            steps_remaining=self.steps_remaining[: self.size],
        )

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        data = np.load(path)
        size = int(data["size"])
        buf = cls(
            capacity=int(data["capacity"]),
            state_dim=data["states"].shape[1] if size else 2,
            action_dim=data["actions"].shape[1] if size else 2,
        )
        buf.size = size
        buf.cursor = int(data["cursor"])
        for name in (
            "states",
            "actions",
            "next_states",
            "goals",
            "episode_ids",
            "step_indices",
            "steps_remaining",
        ):
            getattr(buf, name)[:size] = data[name]
        return buf
