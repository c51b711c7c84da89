"""Exact verification suite for the tabular ground-truth machinery.

Each check returns a CheckResult with its worst residual; the CLI's
oracle-check subcommand runs the whole suite against bundled instances and
reports one PASS/FAIL line per check. Tolerances are fixed here, not
calibrated at runtime.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import oracle, planner
from .env import MazeSpec, make_maze, parse_maze
from .trainer import OracleStateClassifier
from .plots import waypoint_heatmap_values


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""


class TabularOracleClassifier:
    """Exact log-odds over state indices, from a density table and marginal.

    States are encoded as 1-column index vectors so the planner's scoring
    operation can run unchanged on abstract tabular instances.
    """

    def __init__(self, density: np.ndarray, marginal: np.ndarray):
        self.density = np.asarray(density, dtype=np.float64)
        self.marginal = np.asarray(marginal, dtype=np.float64)

    def log_odds(self, s, g) -> np.ndarray:
        si = np.atleast_2d(s)[:, 0].astype(int)
        gi = np.atleast_2d(g)[:, 0].astype(int)
        with np.errstate(divide="ignore"):
            return np.log(self.density[si, gi]) - np.log(self.marginal[gi])


def as_index_states(indices) -> np.ndarray:
    return np.asarray(indices, dtype=np.float64)[:, None]


def check_swap_chain() -> CheckResult:
    # Two states deterministically swapping each step; gamma = 0.5 gives
    # occupancy row (2/3, 1/3) by summing the alternating geometric series.
    swap = oracle.TabularMDP(np.array([[[0.0, 1.0], [1.0, 0.0]]]))
    policy = oracle.uniform_policy(swap)
    d = oracle.geom_occupancy(swap, policy, 0.5)
    expected = np.array([[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]])
    residual = float(np.abs(d - expected).max())
    return CheckResult("swap_chain_occupancy", residual < 1e-12, residual, 1e-12)


def _advancing_chain(n: int) -> oracle.TabularMDP:
    # State i moves to i+1 deterministically; the last state absorbs.
    p = np.zeros((1, n, n))
    for i in range(n - 1):
        p[0, i, i + 1] = 1.0
    p[0, n - 1, n - 1] = 1.0
    return oracle.TabularMDP(p)


def check_negbinom_closed_form(gamma: float = 0.9, n: int = 80) -> CheckResult:
    mdp = _advancing_chain(n)
    policy = oracle.uniform_policy(mdp)
    d_nb = oracle.negbinom_density(mdp, policy, gamma)
    ks = np.arange(n - 2)
    expected = (ks + 1) * (1.0 - gamma) ** 2 * gamma**ks
    residual = float(np.abs(d_nb[0, : n - 2] - expected).max())
    return CheckResult("negbinom_closed_form", residual < 1e-12, residual, 1e-12)


def check_truncated_sum_agreement(rng: np.random.Generator, instances: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        mdp = oracle.random_mdp(int(rng.integers(3, 8)), int(rng.integers(2, 4)), rng)
        policy = _random_policy(mdp, rng)
        gamma = float(rng.choice([0.5, 0.9]))
        d = oracle.geom_occupancy(mdp, policy, gamma)
        d_trunc = oracle.truncated_geom_occupancy(mdp, policy, gamma)
        worst = max(worst, float(np.abs(d - d_trunc).max()))
    return CheckResult("geom_truncated_sum_agreement", worst < 1e-9, worst, 1e-9)


def check_density_rows(rng: np.random.Generator, instances: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        mdp = oracle.random_mdp(int(rng.integers(2, 9)), int(rng.integers(2, 4)), rng)
        policy = _random_policy(mdp, rng)
        for gamma in (0.5, 0.9):
            d = oracle.geom_occupancy(mdp, policy, gamma)
            d_nb = oracle.negbinom_density(mdp, policy, gamma)
            worst = max(worst, float(np.abs(d.sum(axis=1) - 1).max()))
            worst = max(worst, float(np.abs(d_nb.sum(axis=1) - 1).max()))
    return CheckResult("density_rows_stochastic", worst < 1e-9, worst, 1e-9)


def check_bayes_odds_identity(rng: np.random.Generator, instances: int = 20) -> CheckResult:
    worst = 0.0
    for _ in range(instances):
        mdp = oracle.random_mdp(int(rng.integers(2, 8)), 2, rng)
        policy = _random_policy(mdp, rng)
        marginal = rng.dirichlet(np.ones(mdp.n_states))
        marginal = np.maximum(marginal, 1e-6)
        marginal /= marginal.sum()
        c_state, c_action = oracle.bayes_classifier(mdp, policy, 0.9, marginal)
        d = oracle.geom_occupancy(mdp, policy, 0.9)
        d_a = oracle.action_occupancy(mdp, policy, 0.9)
        odds = c_state / (1.0 - c_state)
        worst = max(worst, float(np.abs(odds - d / marginal[None, :]).max()))
        odds_a = c_action / (1.0 - c_action)
        worst = max(worst, float(np.abs(odds_a - d_a / marginal[None, None, :]).max()))
    return CheckResult("bayes_odds_identity", worst < 1e-9, worst, 1e-9)


def _random_policy(mdp, rng) -> np.ndarray:
    p = rng.gamma(1.0, size=(mdp.n_states, mdp.n_actions))
    return p / p.sum(axis=1, keepdims=True)


def lemma_instances(rng: np.random.Generator, count: int = 50):
    """Random tabular instances used by the bound and optimality checks."""
    out = []
    for _ in range(count):
        n = int(rng.integers(4, 9))
        a = int(rng.integers(2, 4))
        mdp = oracle.random_mdp(n, a, rng)
        policy = _random_policy(mdp, rng)
        gamma = float(rng.choice([0.5, 0.9]))
        out.append((mdp, policy, gamma))
    return out


def check_lower_bound(instances) -> CheckResult:
    """ELBO at the optimal waypoint distribution never exceeds the log
    two-stage density, over all pairs with reachable goals."""
    worst = -np.inf
    for mdp, policy, gamma in instances:
        d_nb = oracle.negbinom_density(mdp, policy, gamma)
        for s0 in range(mdp.n_states):
            for sg in range(mdp.n_states):
                if d_nb[s0, sg] <= 0:
                    continue
                q_star = oracle.optimal_waypoint_dist(mdp, policy, s0, sg, gamma)
                gap = oracle.elbo(mdp, policy, q_star, s0, sg, gamma) - np.log(d_nb[s0, sg])
                worst = max(worst, float(gap))
    return CheckResult("lemma_lower_bound", worst <= 1e-9, worst, 1e-9,
                       "max ELBO(q*) - log p over instances")


def check_optimality(instances, rng: np.random.Generator,
                     n_random_q: int = 1000) -> CheckResult:
    """q* beats random waypoint distributions and satisfies a constant
    first-order residual on its support."""
    worst_gap = -np.inf
    worst_res = 0.0
    for mdp, policy, gamma in instances:
        n = mdp.n_states
        d_nb = oracle.negbinom_density(mdp, policy, gamma)
        for s0 in range(n):
            for sg in range(n):
                if d_nb[s0, sg] <= 0:
                    continue
                log_legs = oracle.waypoint_log_legs(mdp, policy, s0, sg, gamma)
                q_star = oracle.optimal_waypoint_dist(mdp, policy, s0, sg, gamma)
                best = oracle.elbo(mdp, policy, q_star, s0, sg, gamma)
                qs = rng.dirichlet(np.ones(n), size=n_random_q)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ent = -np.where(qs > 0, qs * np.log(qs), 0.0).sum(axis=1)
                    vals = qs @ np.where(np.isfinite(log_legs), log_legs, -np.inf) + ent
                vals = np.where(np.isnan(vals), -np.inf, vals)
                worst_gap = max(worst_gap, float(vals.max() - best))
                support = q_star > 0
                residual = log_legs[support] - np.log(q_star[support])
                worst_res = max(worst_res, float(residual.max() - residual.min()))
    passed = worst_gap <= 1e-9 and worst_res <= 1e-8
    return CheckResult("lemma_optimal_waypoints", passed,
                       max(worst_gap, worst_res), 1e-8,
                       f"max gap {worst_gap:.2e}, residual spread {worst_res:.2e}")


def check_importance_weights(rng: np.random.Generator, instances: int = 10,
                             m_candidates: int = 64) -> CheckResult:
    """Softmax of summed oracle log-odds equals the waypoint posterior
    reweighted by a known background distribution, after normalization."""
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(5, 9))
        mdp = oracle.random_mdp(n, 2, rng)
        policy = _random_policy(mdp, rng)
        gamma = 0.9
        background = rng.dirichlet(np.full(n, 2.0))
        background = np.maximum(background, 1e-3)
        background /= background.sum()
        d = oracle.geom_occupancy(mdp, policy, gamma)
        classifier = TabularOracleClassifier(d, background)
        s0, sg = rng.choice(n, size=2, replace=False)
        q_star = oracle.optimal_waypoint_dist(mdp, policy, int(s0), int(sg), gamma)
        candidates = rng.choice(n, size=m_candidates, p=background)
        scores = planner.score_candidates(
            as_index_states([s0])[0], as_index_states([sg])[0],
            as_index_states(candidates), classifier)
        probs = planner.softmax(scores)
        weights = q_star[candidates] / background[candidates]
        expected = weights / weights.sum()
        worst = max(worst, float(np.abs(probs - expected).max()))
    return CheckResult("lemma_importance_weights", worst < 1e-6, worst, 1e-6)


def check_negbinom_monte_carlo(rng: np.random.Generator, n_samples: int = 100_000,
                               gamma: float = 0.8) -> CheckResult:
    """Two-stage geometric rollouts against the exact two-stage table."""
    mdp = oracle.random_mdp(5, 2, rng)
    policy = _random_policy(mdp, rng)
    d_nb = oracle.negbinom_density(mdp, policy, gamma)
    p_pi = np.einsum("sa,asj->sj", policy, mdp.transitions)
    cum = np.cumsum(p_pi, axis=1)
    s0 = 0
    # geometric with support {0, 1, ...}: numpy's is {1, 2, ...}
    totals = (rng.geometric(1.0 - gamma, size=n_samples) - 1) + (
        rng.geometric(1.0 - gamma, size=n_samples) - 1
    )
    states = np.zeros(n_samples, dtype=np.int64)
    remaining = totals.copy()
    while (remaining > 0).any():
        alive = remaining > 0
        u = rng.random(int(alive.sum()))
        rows = cum[states[alive]]
        states[alive] = (u[:, None] > rows).sum(axis=1)
        remaining[alive] -= 1
    counts = np.bincount(states, minlength=mdp.n_states)
    tv = 0.5 * float(np.abs(counts / n_samples - d_nb[s0]).sum())
    return CheckResult("negbinom_monte_carlo", tv < 1e-2, tv, 1e-2)


def random_connected_maze(rng: np.random.Generator, size: int = 6) -> MazeSpec:
    """Rejection-sample a small maze whose free cells are all connected."""
    while True:
        walls = rng.random((size, size)) < 0.25
        walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
        free = [(x, y) for y in range(size) for x in range(size) if not walls[y, x]]
        if len(free) < 3:
            continue
        seen = {free[0]}
        queue = deque([free[0]])
        free_set = set(free)
        while queue:
            x, y = queue.popleft()
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nxt = (x + dx, y + dy)
                if nxt in free_set and nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        if len(seen) == len(free):
            rows = [
                "".join("#" if walls[y, x] else "." for x in range(size))
                for y in range(size)
            ]
            return parse_maze("\n".join(rows))


def check_optimal_policy_dominance(rng: np.random.Generator, mazes: int = 10,
                                   rivals: int = 100) -> CheckResult:
    """The value-iteration policy's goal occupancy beats random policies."""
    worst = 0.0
    for _ in range(mazes):
        maze = random_connected_maze(rng)
        mdp, _ = oracle.from_maze(maze)
        gamma = 0.9
        goal = int(rng.integers(mdp.n_states))
        s0 = int(rng.integers(mdp.n_states))
        pi_star = oracle.optimal_policy(mdp, goal, gamma)
        best = oracle.geom_occupancy(mdp, pi_star, gamma)[s0, goal]
        for _ in range(rivals):
            pi = _random_policy(mdp, rng)
            rival = oracle.geom_occupancy(mdp, pi, gamma)[s0, goal]
            worst = max(worst, float(rival - best))
    return CheckResult("optimal_policy_dominance", worst <= 1e-12, worst, 1e-12)


def grid_distances(maze: MazeSpec, source) -> dict:
    """BFS 4-neighbor distances over free cells from a source cell."""
    dist = {tuple(source): 0}
    queue = deque([tuple(source)])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (x + dx, y + dy)
            if maze.is_free(*nxt) and nxt not in dist:
                dist[nxt] = dist[(x, y)] + 1
                queue.append(nxt)
    return dist


def shortest_path_mass(maze: MazeSpec, s0_cell, sg_cell, cells, probs) -> float:
    """Probability mass within one cell (Chebyshev) of some shortest path."""
    d_from = grid_distances(maze, s0_cell)
    d_to = grid_distances(maze, sg_cell)
    total = d_from[tuple(sg_cell)]
    on_path = {
        c for c in d_from
        if c in d_to and d_from[c] + d_to[c] == total
    }
    mass = 0.0
    for cell, p in zip(cells, probs):
        x, y = cell
        near = any(max(abs(x - ox), abs(y - oy)) <= 1 for ox, oy in on_path)
        if near:
            mass += p
    return mass


def check_heatmap_concentration(gamma: float = 0.8) -> CheckResult:
    """Oracle waypoint mass concentrates along shortest corridor routes."""
    maze = make_maze("four_rooms")
    clf = OracleStateClassifier(maze, gamma)
    s0_cell, sg_cell = (1, 1), (9, 9)
    s0 = (np.array(s0_cell) + 0.5) * maze.cell_size
    sg = (np.array(sg_cell) + 0.5) * maze.cell_size
    cells, _, probs = waypoint_heatmap_values(maze, s0, sg, clf)
    mass = shortest_path_mass(maze, s0_cell, sg_cell, cells, probs)
    return CheckResult("heatmap_concentration", mass >= 0.70, mass, 0.70,
                       "mass within 1 cell of a shortest path (higher is better)")


def run_suite(seed: int = 0):
    """Run every check; returns a list of CheckResult."""
    rng = np.random.default_rng(seed)
    instances = lemma_instances(rng)
    return [
        check_swap_chain(),
        check_negbinom_closed_form(),
        check_truncated_sum_agreement(rng),
        check_density_rows(rng),
        check_bayes_odds_identity(rng),
        check_lower_bound(instances),
        check_optimality(instances, rng),
        check_importance_weights(rng),
        check_negbinom_monte_carlo(rng),
        check_optimal_policy_dominance(rng),
        check_heatmap_concentration(),
    ]
