"""Test-time graph search over buffer states (the deployment-cost baseline).

Edges between sampled buffer states cost the negative classifier log-odds of
reaching one from the other, clamped at zero (odds above 1 count as free) and
dropped above a cutoff. At decision time the agent's entry edges are
recomputed every step - those are the only edges that change - while
node-to-goal distances are cached per goal, and the policy is conditioned on
the first waypoint of the cheapest route (or the goal itself if the direct
route wins or no route survives the cutoff).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .env import goal_distance
from .errors import NoPathError, UsageError

DEFAULT_COST_CUTOFF = 3.0  # drop edges with odds below exp(-3)


@dataclass
class WaypointGraph:
    nodes: np.ndarray  # (m, 2) states sampled from the buffer
    costs: np.ndarray  # (m, m) directed edge costs, inf where dropped
    state_classifier: object
    cost_cutoff: float
    n_cost_evals: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


_PAIR_CHUNK = 65536


def _pair_costs(state_classifier, sources, targets, cutoff) -> np.ndarray:
    n = len(sources)
    cost = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _PAIR_CHUNK):
        hi = min(lo + _PAIR_CHUNK, n)
        log_odds = state_classifier.log_odds(sources[lo:hi], targets[lo:hi])
        cost[lo:hi] = np.asarray(log_odds, dtype=np.float64)
    cost = np.maximum(-cost, 0.0)
    return np.where(cost <= cutoff, cost, np.inf)


def build_graph(states, state_classifier, cost_cutoff: float = DEFAULT_COST_CUTOFF) -> WaypointGraph:
    """Evaluate all ordered pairwise edge costs and drop those above the cutoff."""
    nodes = np.atleast_2d(np.asarray(states, dtype=np.float64))
    m = len(nodes)
    if m < 2:
        raise UsageError("graph needs at least 2 states")
    ii, jj = np.nonzero(~np.eye(m, dtype=bool))
    costs = np.full((m, m), np.inf)
    costs[ii, jj] = _pair_costs(state_classifier, nodes[ii], nodes[jj], cost_cutoff)
    graph = WaypointGraph(nodes, costs, state_classifier, cost_cutoff)
    graph.n_cost_evals = len(ii)
    return graph


def dijkstra_dense(costs: np.ndarray, source: int):
    """Single-source shortest paths on a dense cost matrix.

    Returns (dist, prev, hops); prev[i] = -1 where unreached or source.
    """
    n = len(costs)
    dist = np.full(n, np.inf)
    hops = np.zeros(n, dtype=np.int64)
    prev = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    scan = dist.copy()
    for _ in range(n):
        i = int(scan.argmin())
        if not np.isfinite(scan[i]):
            break
        done[i] = True
        scan[i] = np.inf
        relax = dist[i] + costs[i]
        better = relax < dist
        better &= ~done
        dist[better] = relax[better]
        scan[better] = relax[better]
        prev[better] = i
        hops[better] = hops[i] + 1
    return dist, prev, hops


def bellman_ford_dense(costs: np.ndarray, source: int):
    """Bellman-Ford distances on the same dense matrix, for cross-checking."""
    n = len(costs)
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    for _ in range(n - 1):
        with np.errstate(invalid="ignore"):
            relax = (dist[:, None] + costs).min(axis=0)
        new = np.minimum(dist, relax)
        if np.array_equal(new, dist, equal_nan=True):
            break
        dist = new
    return dist


def _extended_costs(graph: WaypointGraph, s, g):
    """Cost matrix over [nodes..., s, g] with virtual entry/exit/direct edges."""
    m = graph.n_nodes
    nodes = graph.nodes
    s = np.asarray(s, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    ext = np.full((m + 2, m + 2), np.inf)
    ext[:m, :m] = graph.costs
    ext[m, :m] = _pair_costs(graph.state_classifier, np.tile(s, (m, 1)), nodes,
                             graph.cost_cutoff)
    ext[:m, m + 1] = _pair_costs(graph.state_classifier, nodes, np.tile(g, (m, 1)),
                                 graph.cost_cutoff)
    ext[m, m + 1] = _pair_costs(graph.state_classifier, s[None, :], g[None, :],
                                graph.cost_cutoff)[0]
    graph.n_cost_evals += 2 * m + 1
    return ext


def shortest_path(graph: WaypointGraph, s, g):
    """Cheapest node sequence from s to g through the graph (s, g excluded).

    An empty list means the direct virtual edge wins. Raises NoPathError when
    no route survives the cutoff.
    """
    ext = _extended_costs(graph, s, g)
    m = graph.n_nodes
    dist, prev, _ = dijkstra_dense(ext, m)
    if not np.isfinite(dist[m + 1]):
        raise NoPathError("goal unreachable through the waypoint graph")
    path = []
    node = m + 1
    while prev[node] != -1:
        node = prev[node]
        if node != m:
            path.append(node)
    path.reverse()
    return [graph.nodes[i].copy() for i in path]


def path_cost(graph: WaypointGraph, s, g, node_path) -> float:
    """Total cost of a specific node-index route, using fresh virtual edges."""
    ext = _extended_costs(graph, s, g)
    m = graph.n_nodes
    seq = [m, *node_path, m + 1]
    return float(sum(ext[a, b] for a, b in zip(seq[:-1], seq[1:])))


@dataclass
class SearchPolicy:
    """Goal-conditioned policy wrapped with graph-search waypoint following."""

    policy: object
    graph: WaypointGraph | None
    eps_d: float = 1.0
    replan_on_reach: bool = True
    latencies_us: list = field(default_factory=list)
    plan_lengths: list = field(default_factory=list)
    _goal_key: bytes | None = None
    _dist_to_goal: np.ndarray | None = None
    _hops_to_goal: np.ndarray | None = None
    _plan: list | None = None

    def new_episode(self):
        self._goal_key = None
        self._dist_to_goal = None
        self._hops_to_goal = None
        self._plan = None

    def _ensure_goal_cache(self, g):
        key = np.asarray(g, dtype=np.float64).tobytes()
        if key == self._goal_key:
            return
        self._goal_key = key
        m = self.graph.n_nodes
        nodes = self.graph.nodes
        exit_costs = _pair_costs(self.graph.state_classifier, nodes,
                                 np.tile(np.asarray(g, dtype=np.float64), (m, 1)),
                                 self.graph.cost_cutoff)
        self.graph.n_cost_evals += m
        # Reverse Dijkstra from the goal: distance from every node to g.
        rev = np.full((m + 1, m + 1), np.inf)
        rev[:m, :m] = self.graph.costs.T
        rev[m, :m] = exit_costs
        dist, _, hops = dijkstra_dense(rev, m)
        self._dist_to_goal = dist[:m]
        self._hops_to_goal = hops[:m]
        self._plan = None

    def _select_waypoint(self, s, g):
        graph = self.graph
        m = graph.n_nodes
        s = np.asarray(s, dtype=np.float64)
        entry = _pair_costs(graph.state_classifier, np.tile(s, (m, 1)), graph.nodes,
                            graph.cost_cutoff)
        graph.n_cost_evals += m
        direct = _pair_costs(graph.state_classifier, s[None, :],
                             np.asarray(g, dtype=np.float64)[None, :],
                             graph.cost_cutoff)[0]
        graph.n_cost_evals += 1
        reached = np.linalg.norm(graph.nodes - s, axis=1) <= self.eps_d
        total = entry + self._dist_to_goal
        total[reached] = np.inf
        best = int(total.argmin())
        if not np.isfinite(total[best]) or direct <= total[best]:
            return None, 0
        return graph.nodes[best], 1 + int(self._hops_to_goal[best])

    def act(self, s, g, rng) -> np.ndarray:
        """Action for state s pursuing goal g, with per-decision latency logged."""
        t0 = time.perf_counter_ns()
        target = np.asarray(g, dtype=np.float64)
        n_waypoints = 0
        if self.graph is not None and self.graph.n_nodes > 0:
            if self.replan_on_reach:
                self._ensure_goal_cache(g)
                waypoint, n_waypoints = self._select_waypoint(s, g)
                if waypoint is not None:
                    target = waypoint
            else:
                if self._plan is None or self._goal_key != target.tobytes():
                    self._goal_key = target.tobytes()
                    try:
                        self._plan = shortest_path(self.graph, s, g)
                    except NoPathError:
                        self._plan = []
                while self._plan and goal_distance(s, self._plan[0]) <= self.eps_d:
                    self._plan.pop(0)
                if self._plan:
                    target = self._plan[0]
                n_waypoints = len(self._plan)
        action = self.policy.act(np.asarray(s, dtype=np.float64), target, rng)
        self.latencies_us.append((time.perf_counter_ns() - t0) / 1000.0)
        self.plan_lengths.append(n_waypoints)
        return action


@dataclass
class DirectPolicy:
    """Same act interface without search, for latency comparisons."""

    policy: object
    latencies_us: list = field(default_factory=list)

    def new_episode(self):
        pass

    def act(self, s, g, rng) -> np.ndarray:
        t0 = time.perf_counter_ns()
        action = self.policy.act(np.asarray(s, dtype=np.float64),
                                 np.asarray(g, dtype=np.float64), rng)
        self.latencies_us.append((time.perf_counter_ns() - t0) / 1000.0)
        return action
