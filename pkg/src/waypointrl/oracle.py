"""Exact finite-state ground truth for occupancies, waypoint posteriors, and
the variational bound.

Conventions. The future-state table under a policy is the geometric-horizon
occupancy with support starting at 0 steps:

    D = (1 - gamma) * sum_{t>=0} gamma^t * P_pi^t = (1 - gamma) * (I - gamma * P_pi)^(-1)

so D[s, s+] includes the (1 - gamma) chance of "arriving" immediately. The
two-stage future table is its convolution with itself, D_nb = D @ D. The
action-conditioned future density starts at the next state instead,

    D_a[s, a, s+] = (P_a @ D)[s, s+],

which is the fixed point that temporal-difference classifier training targets
(the first step is forced through action a, so a zero-step arrival never
conditions on a).

Policies are arrays: shape (n, A) for a single policy, or (n, n, A) for a
goal-conditioned family indexed [goal][state][action].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import MazeSpec
from .errors import DegenerateMarginalError, UnreachableGoalError, UsageError

STOCHASTIC_TOL = 1e-12


@dataclass
class TabularMDP:
    transitions: np.ndarray  # (A, n, n), each row a distribution over next states

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        if self.transitions.ndim != 3 or self.transitions.shape[1] != self.transitions.shape[2]:
            raise UsageError("transition tensor must have shape (A, n, n)")
        if (self.transitions < 0).any():
            raise UsageError("transition probabilities must be nonnegative")
        sums = self.transitions.sum(axis=2)
        if not np.allclose(sums, 1.0, atol=STOCHASTIC_TOL, rtol=0.0):
            raise UsageError("transition rows must sum to 1 within 1e-12")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]


# Maze discretization: cell-center states with deterministic stay/N/S/E/W moves.
MAZE_MOVES = ((0, 0), (0, -1), (0, 1), (1, 0), (-1, 0))


def from_maze(spec: MazeSpec):
    """Discretize a maze into a TabularMDP; returns (mdp, cells).

    cells[i] is the (ix, iy) grid cell of state i; blocked moves stay in place.
    """
    cells = sorted(spec.free_cells)
    index = {c: i for i, c in enumerate(cells)}
    n = len(cells)
    trans = np.zeros((len(MAZE_MOVES), n, n))
    for i, (ix, iy) in enumerate(cells):
        for a, (dx, dy) in enumerate(MAZE_MOVES):
            target = (ix + dx, iy + dy)
            j = index.get(target, i) if spec.is_free(*target) else i
            trans[a, i, j] = 1.0
    return TabularMDP(trans), cells


def cell_centers(spec: MazeSpec, cells) -> np.ndarray:
    return (np.array(cells, dtype=np.float64) + 0.5) * spec.cell_size


def random_mdp(n_states: int, n_actions: int, rng: np.random.Generator) -> TabularMDP:
    rows = rng.gamma(1.0, size=(n_actions, n_states, n_states))
    rows /= rows.sum(axis=2, keepdims=True)
    return TabularMDP(rows)


def uniform_policy(mdp: TabularMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)


def policy_for_goal(policy: np.ndarray, goal: int) -> np.ndarray:
    """Select the per-goal slice of a policy array (pass-through if flat)."""
    policy = np.asarray(policy, dtype=np.float64)
    if policy.ndim == 2:
        return policy
    if policy.ndim == 3:
        return policy[goal]
    raise UsageError("policy must have shape (n, A) or (n_goals, n, A)")


def _policy_transition(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    # P_pi[s, s'] = sum_a pi(a|s) P[a, s, s']
    return np.einsum("sa,asj->sj", policy, mdp.transitions)


def geom_occupancy(mdp: TabularMDP, policy: np.ndarray, gamma: float) -> np.ndarray:
    """Geometric-horizon occupancy D = (1 - gamma)(I - gamma P_pi)^(-1)."""
    if not 0.0 < gamma < 1.0:
        raise UsageError("gamma must be in (0, 1)")
    if np.asarray(policy).ndim != 2:
        raise UsageError("geom_occupancy expects a single (n, A) policy")
    p_pi = _policy_transition(mdp, policy)
    n = mdp.n_states
    return (1.0 - gamma) * np.linalg.solve(np.eye(n) - gamma * p_pi, np.eye(n))


def truncated_geom_occupancy(mdp: TabularMDP, policy: np.ndarray, gamma: float,
                             tail: float = 1e-12) -> np.ndarray:
    """Direct truncated-sum evaluation of the occupancy, for cross-checks."""
    p_pi = _policy_transition(mdp, policy)
    n = mdp.n_states
    horizon = int(np.ceil(np.log(tail) / np.log(gamma)))
    total = np.zeros((n, n))
    power = np.eye(n)
    for t in range(horizon + 1):
        total += (gamma**t) * power
        power = power @ p_pi
    return (1.0 - gamma) * total


def negbinom_density(mdp: TabularMDP, policy: np.ndarray, gamma: float) -> np.ndarray:
    """Two-stage future density: the geometric table convolved with itself."""
    d = geom_occupancy(mdp, policy, gamma)
    return d @ d


def action_occupancy(mdp: TabularMDP, policy: np.ndarray, gamma: float) -> np.ndarray:
    """Action-conditioned future density D_a[s, a, s+] = (P_a D)[s, s+]."""
    d = geom_occupancy(mdp, policy, gamma)
    return np.einsum("asj,jk->sak", mdp.transitions, d)


def bayes_classifier(mdp: TabularMDP, policy: np.ndarray, gamma: float,
                     goal_marginal: np.ndarray):
    """Bayes-optimal classifier tables C[s, g] and C[s, a, g].

    C = D / (D + p(g)) with p the caller-supplied goal marginal (typically the
    buffer surrogate). Supports goal-conditioned policy families; the column
    for goal g is then computed under the policy conditioned on g.
    """
    p = np.asarray(goal_marginal, dtype=np.float64)
    n = mdp.n_states
    if p.shape != (n,):
        raise UsageError("goal marginal must have one entry per state")
    policy = np.asarray(policy, dtype=np.float64)
    d_state = np.zeros((n, n))
    d_action = np.zeros((n, mdp.n_actions, n))
    if policy.ndim == 2:
        d_state = geom_occupancy(mdp, policy, gamma)
        d_action = action_occupancy(mdp, policy, gamma)
    else:
        for g in range(n):
            pi_g = policy_for_goal(policy, g)
            d_state[:, g] = geom_occupancy(mdp, pi_g, gamma)[:, g]
            d_action[:, :, g] = action_occupancy(mdp, pi_g, gamma)[:, :, g]
    if ((p == 0) & (d_state > 0)).any():
        raise DegenerateMarginalError("goal with zero marginal but nonzero density")
    c_state = d_state / (d_state + p[None, :])
    c_action = d_action / (d_action + p[None, None, :])
    return c_state, c_action


def waypoint_log_legs(mdp: TabularMDP, policy: np.ndarray, s0: int, sg: int,
                      gamma: float) -> np.ndarray:
    """log of the unnormalized waypoint posterior over all states.

    Entry w is log D_goal[w, sg] + log D_way[s0, w], where the goal leg uses
    the policy conditioned on sg and the waypoint leg the policy conditioned
    on w (legs coincide for a flat policy). Zero-density legs give -inf.
    """
    policy = np.asarray(policy, dtype=np.float64)
    n = mdp.n_states
    d_goal = geom_occupancy(mdp, policy_for_goal(policy, sg), gamma)
    leg_goal = d_goal[:, sg]
    if policy.ndim == 2:
        leg_way = d_goal[s0, :]
    else:
        leg_way = np.array([
            geom_occupancy(mdp, policy_for_goal(policy, w), gamma)[s0, w]
            for w in range(n)
        ])
    with np.errstate(divide="ignore"):
        return np.log(leg_goal) + np.log(leg_way)


def optimal_waypoint_dist(mdp: TabularMDP, policy: np.ndarray, s0: int, sg: int,
                          gamma: float) -> np.ndarray:
    """Normalized waypoint posterior q*(w) over states."""
    log_legs = waypoint_log_legs(mdp, policy, s0, sg, gamma)
    finite = np.isfinite(log_legs)
    if not finite.any():
        raise UnreachableGoalError(f"goal {sg} has no waypoint with positive density")
    q = np.zeros(mdp.n_states)
    shifted = log_legs[finite] - log_legs[finite].max()
    q[finite] = np.exp(shifted)
    return q / q.sum()


def elbo(mdp: TabularMDP, policy: np.ndarray, q: np.ndarray, s0: int, sg: int,
         gamma: float) -> float:
    """Variational lower bound on log negbinom_density[s0, sg] under waypoint
    distribution q; -inf if q puts mass on a zero-density waypoint."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (mdp.n_states,) or (q < 0).any() or abs(q.sum() - 1.0) > 1e-9:
        raise UsageError("q must be a distribution over states")
    log_legs = waypoint_log_legs(mdp, policy, s0, sg, gamma)
    support = q > 0
    if not support.any():
        raise UsageError("q must have nonempty support")
    if (~np.isfinite(log_legs[support])).any():
        return -np.inf
    qs = q[support]
    return float((qs * (log_legs[support] - np.log(qs))).sum())


def optimal_policy(mdp: TabularMDP, goal: int, gamma: float,
                   tol: float = 1e-10) -> np.ndarray:
    """Deterministic policy maximizing the geometric-horizon occupancy of the
    goal, by value iteration to sup-norm tolerance."""
    n = mdp.n_states
    if not 0 <= goal < n:
        raise UsageError(f"goal index {goal} out of range")
    reward = (1.0 - gamma) * (np.arange(n) == goal)
    v = np.zeros(n)
    while True:
        q_sa = np.einsum("asj,j->sa", mdp.transitions, v)
        v_new = reward + gamma * q_sa.max(axis=1)
        if np.abs(v_new - v).max() < tol:
            v = v_new
            break
        v = v_new
    if n > 1:
        others = np.delete(v, goal)
        if others.max() <= 0.0:
            raise UnreachableGoalError(f"goal {goal} unreachable from every other state")
    q_sa = np.einsum("asj,j->sa", mdp.transitions, v)
    greedy = q_sa.argmax(axis=1)
    policy = np.zeros((n, mdp.n_actions))
    policy[np.arange(n), greedy] = 1.0
    return policy


def optimal_goal_conditioned_policy(mdp: TabularMDP, gamma: float) -> np.ndarray:
    """Stack of optimal policies, one per goal state: shape (n, n, A)."""
    return np.stack([optimal_policy(mdp, g, gamma) for g in range(mdp.n_states)])


def validate_density_table(d: np.ndarray, tol: float = 1e-9):
    """Assert rows of a density table are probability vectors."""
    d = np.asarray(d)
    if (d < -tol).any():
        raise UsageError("density table has negative entries")
    err = np.abs(d.sum(axis=-1) - 1.0).max()
    if err > tol:
        raise UsageError(f"density rows sum to 1 +/- {err:.2e}, beyond {tol:.0e}")
