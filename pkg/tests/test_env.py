import collections

import numpy as np
import pytest
from scipy import stats

from waypointrl import env
from waypointrl.errors import ParseError


def test_parse_single_cell_maze():
    maze = env.parse_maze("###\n#S#\n###")
    assert (maze.width, maze.height) == (3, 3)
    assert maze.free_cells == [(1, 1)]
    assert maze.start_region == frozenset({(1, 1)})


def test_parse_unknown_character():
    with pytest.raises(ParseError, match="unknown character"):
        env.parse_maze("##\n#?")


def test_parse_default_regions():
    maze = env.parse_maze("####\n#..#\n####")
    free = frozenset({(1, 1), (2, 1)})
    assert maze.start_region == free
    assert maze.goal_region == free


def test_parse_ragged_rows():
    with pytest.raises(ParseError, match="ragged"):
        env.parse_maze("###\n##\n###")


def test_parse_no_free_cell():
    with pytest.raises(ParseError):
        env.parse_maze("##\n##")


def test_parse_border_must_be_walls():
    with pytest.raises(ParseError, match="border"):
        env.parse_maze("..#\n#.#\n###")


def test_reset_single_cell(rng):
    maze = env.parse_maze("###\n#S#\n###")
    state, goal = env.reset(maze, rng)
    assert maze.cell_of(state.position) == (1, 1)
    assert maze.cell_of(goal.position) == (1, 1)


def test_reset_deterministic():
    maze = env.make_maze("four_rooms")
    s1, g1 = env.reset(maze, np.random.default_rng(7))
    s2, g2 = env.reset(maze, np.random.default_rng(7))
    assert np.array_equal(s1.position, s2.position)
    assert np.array_equal(g1.position, g2.position)


def test_reset_uniform_over_start_cells():
    maze = env.make_maze("four_rooms")
    rng = np.random.default_rng(0)
    counts = collections.Counter()
    n = 10_000
    for _ in range(n):
        state, _ = env.reset(maze, rng)
        counts[maze.cell_of(state.position)] += 1
    cells = sorted(maze.start_region)
    observed = np.array([counts[c] for c in cells])
    assert observed.sum() == n
    result = stats.chisquare(observed)
    assert result.pvalue > 0.01


def test_step_zero_action():
    maze = env.make_maze("four_rooms")
    state = env.EnvState(np.array([1.5, 1.5]))
    result = env.step(maze, state, np.zeros(2))
    assert np.array_equal(result.next_state.position, state.position)
    assert not result.collided


def test_step_into_wall_clips_displacement():
    maze = env.make_maze("four_rooms")
    # 0.3 units left of the border wall at x = 1.0, pushing left.
    state = env.EnvState(np.array([1.3, 1.5]))
    result = env.step(maze, state, np.array([-0.9, 0.0]))
    moved = np.linalg.norm(result.next_state.position - state.position)
    assert result.collided
    assert moved <= 0.3
    assert result.next_state.position[0] >= 1.0
    assert maze.contains(result.next_state.position)


def test_step_free_space_exact():
    maze = env.make_maze("four_rooms")
    state = env.EnvState(np.array([1.2, 1.5]))
    result = env.step(maze, state, np.array([0.5, 0.0]))
    assert not result.collided
    assert np.allclose(result.next_state.position, [1.7, 1.5])


def test_step_action_clipped_to_box():
    maze = env.make_maze("four_rooms")
    state = env.EnvState(np.array([2.5, 1.5]))
    result = env.step(maze, state, np.array([5.0, 0.0]))
    moved = result.next_state.position - state.position
    assert moved[0] <= env.ACTION_MAX + 1e-12


def test_step_deterministic():
    maze = env.make_maze("maze_5x5")
    state = env.EnvState(np.array([1.25, 1.25]))
    action = np.array([0.7, 0.6])
    r1 = env.step(maze, state, action)
    r2 = env.step(maze, state, action)
    assert np.array_equal(r1.next_state.position, r2.next_state.position)
    assert r1.collided == r2.collided


def test_no_corner_cutting():
    # Two walls touching diagonally; a diagonal move through the shared
    # corner must not slip between them.
    maze = env.parse_maze("####\n#.##\n##.#\n####")
    state = env.EnvState(np.array([1.5, 1.5]))
    result = env.step(maze, state, np.array([1.0, 1.0]))
    assert result.collided
    assert maze.cell_of(result.next_state.position) == (1, 1)


def test_goal_distance():
    assert env.goal_distance(np.zeros(2), np.zeros(2)) == 0.0
    assert env.goal_distance(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 5.0
    rng = np.random.default_rng(1)
    for _ in range(100):
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert env.goal_distance(a, b) == pytest.approx(env.goal_distance(b, a))


def test_random_walk_containment():
    maze = env.make_maze("four_rooms")
    rng = np.random.default_rng(5)
    state, _ = env.reset(maze, rng)
    for _ in range(100_000):
        action = rng.uniform(-1.0, 1.0, size=2)
        result = env.step(maze, state, action)
        state = result.next_state
        assert maze.contains(state.position)


def _connected(maze):
    free = set(maze.free_cells)
    start = next(iter(free))
    seen = {start}
    frontier = [start]
    while frontier:
        x, y = frontier.pop()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (x + dx, y + dy)
            if nxt in free and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return len(seen) == len(free)


@pytest.mark.parametrize("name", sorted(env.LAYOUTS))
def test_builtin_layouts_valid(name):
    maze = env.make_maze(name)
    assert _connected(maze)
    assert name in env.DEFAULT_EPISODE_STEPS


def test_four_rooms_shape():
    maze = env.make_maze("four_rooms")
    assert (maze.width, maze.height) == (11, 11)
    assert len(maze.free_cells) == 68  # 4 rooms of 16 plus 4 doorways
