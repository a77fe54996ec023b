import numpy as np
import pytest

from coopnav.errors import InvalidPoseError
from coopnav.grid import (
    FREE,
    UNKNOWN,
    WALL,
    Action,
    GridMaze,
    KnowledgeGrid,
    RobotPose,
    generate_maze,
    maze_from_text,
    maze_to_text,
    reveal,
    shortest_path,
    transition,
    visible_cells,
)

from oracles import flood_fill, visible_set_oracle


def open_maze(size: int, start=(1, 1), goals=()) -> GridMaze:
    walls = np.zeros((size, size), dtype=bool)
    walls[0, :] = walls[-1, :] = walls[:, 0] = walls[:, -1] = True
    return GridMaze(walls=walls, start=start, goals=tuple(goals))


class TestGenerateMaze:
    def test_deterministic_in_seed(self):
        a = generate_maze(1, 13)
        b = generate_maze(1, 13)
        assert np.array_equal(a.walls, b.walls)
        assert a.start == b.start and a.goals == b.goals

    def test_different_seeds_differ(self):
        a = generate_maze(1, 13)
        b = generate_maze(2, 13)
        assert not np.array_equal(a.walls, b.walls)

    @pytest.mark.parametrize("seed", range(8))
    def test_all_goals_reachable(self, seed):
        maze = generate_maze(seed, 13)
        reachable = flood_fill(maze.walls, maze.start)
        for goal in maze.goals:
            assert goal in reachable

    @pytest.mark.parametrize("seed", range(8))
    def test_free_region_connected(self, seed):
        maze = generate_maze(seed, 13)
        reachable = flood_fill(maze.walls, maze.start)
        assert len(reachable) == np.count_nonzero(~maze.walls)

    def test_border_is_wall(self):
        maze = generate_maze(3, 13)
        assert maze.walls[0, :].all() and maze.walls[-1, :].all()
        assert maze.walls[:, 0].all() and maze.walls[:, -1].all()

    def test_four_goals_distinct_quadrants(self):
        maze = generate_maze(5, 13)
        mid = 6
        signs = {(g[0] < mid, g[1] < mid) for g in maze.goals}
        assert len(maze.goals) == 4
        assert len(signs) == 4

    @pytest.mark.parametrize("size", [4, 3, 12, 0])
    def test_bad_size_rejected(self, size):
        with pytest.raises(ValueError):
            generate_maze(1, size)


class TestTransition:
    def test_move_east_into_free(self):
        maze = open_maze(7)
        pose = transition(maze, RobotPose((3, 3), "N"), Action.move("E"))
        assert pose.cell == (3, 4)
        assert pose.heading == "E"

    def test_move_into_wall_is_noop_with_heading_update(self):
        maze = open_maze(7)
        pose = transition(maze, RobotPose((1, 3), "E"), Action.move("N"))
        assert pose.cell == (1, 3)
        assert pose.heading == "N"

    def test_square_loop_returns_to_start(self):
        maze = open_maze(7)
        pose = RobotPose((2, 2), "N")
        for d in ("E", "S", "W", "N"):
            pose = transition(maze, pose, Action.move(d))
        assert pose.cell == (2, 2)

    def test_deterministic(self):
        maze = generate_maze(0, 13)
        pose = RobotPose(maze.start, "E")
        a = transition(maze, pose, Action.move("S"))
        b = transition(maze, pose, Action.move("S"))
        assert a == b


class TestVisibleCells:
    def test_wall_directly_ahead_is_the_whole_view(self):
        # Facing a wall one cell away down the heading ray: the wall itself is
        # visible and nothing beyond it is.
        walls = np.ones((5, 5), dtype=bool)
        walls[1:4, 2] = False
        walls[1, 2] = True
        maze = GridMaze(walls=walls, start=(2, 2), goals=())
        obs = visible_cells(maze, RobotPose((2, 2), "N"), fov_deg=0.0, max_range=6)
        assert set(obs.visible) == {(1, 2)}
        assert obs.walls == (True,)

    def test_diagonal_gap_between_walls_blocks_beyond(self):
        # Two walls meeting corner to corner: the diagonal neighbor at the
        # shared corner is still visible (nothing sits strictly before it),
        # but cells strictly beyond the zero-width gap are occluded.
        maze = open_maze(7)
        walls = np.array(maze.walls)
        walls[2, 3] = True
        walls[3, 2] = True
        maze = GridMaze(walls=walls, start=(3, 3), goals=())
        obs = visible_cells(maze, RobotPose((3, 3), "N"), fov_deg=180.0, max_range=6)
        assert (2, 2) in obs.visible
        assert (2, 3) in obs.visible and (3, 2) in obs.visible
        assert (1, 1) not in obs.visible  # strictly beyond the gap

    def test_open_corridor_range_five(self):
        # Corridor heading east: 5 free corridor cells then the terminating wall.
        walls = np.ones((3, 9), dtype=bool)
        walls[1, 1:7] = False
        maze = GridMaze(walls=walls, start=(1, 1), goals=())
        obs = visible_cells(maze, RobotPose((1, 1), "E"), fov_deg=0.0, max_range=6)
        assert set(obs.visible) == {(1, c) for c in range(2, 8)}
        assert obs.wall_cells() == {(1, 7)}

    def test_zero_fov_sees_only_heading_ray(self):
        maze = open_maze(9)
        obs = visible_cells(maze, RobotPose((4, 4), "W"), fov_deg=0.0, max_range=6)
        assert set(obs.visible) == {(4, 3), (4, 2), (4, 1), (4, 0)}

    def test_camera_on_wall_rejected(self):
        maze = open_maze(7)
        with pytest.raises(InvalidPoseError):
            visible_cells(maze, RobotPose((0, 0), "N"))

    @pytest.mark.parametrize("seed,size", [(1, 5), (2, 7), (3, 9), (4, 13)])
    def test_matches_exact_oracle_all_poses(self, seed, size):
        maze = generate_maze(seed, size)
        headings = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}
        for cell in maze.free_cells():
            for name, vec in headings.items():
                obs = visible_cells(maze, RobotPose(cell, name), fov_deg=90.0, max_range=6)
                expected = visible_set_oracle(maze.walls, cell, vec, 90.0, 6)
                assert set(obs.visible) == expected, (cell, name)


class TestReveal:
    def test_radius_zero_reveals_only_pose(self):
        maze = open_maze(7)
        know = KnowledgeGrid.unknown(7, reveal_radius=0)
        know = reveal(know, RobotPose((3, 3)), maze)
        assert know.label((3, 3)) == FREE
        assert know.unknown_count() == 7 * 7 - 1
        assert know.visited == {(3, 3)}

    def test_full_visit_leaves_no_unknown(self):
        maze = generate_maze(7, 9)
        know = KnowledgeGrid.unknown(9, reveal_radius=2)
        for cell in maze.free_cells():
            know = reveal(know, RobotPose(cell), maze)
        assert know.unknown_count() == 0

    def test_idempotent(self):
        maze = generate_maze(2, 9)
        know = KnowledgeGrid.unknown(9)
        once = reveal(know, RobotPose(maze.start), maze)
        twice = reveal(once, RobotPose(maze.start), maze)
        assert np.array_equal(once.labels, twice.labels)
        assert once.visited == twice.visited

    def test_monotone_and_sound(self):
        maze = generate_maze(11, 13)
        know = KnowledgeGrid.unknown(13)
        cells = maze.free_cells()
        for cell in cells[::3]:
            before = know.unknown_count()
            know = reveal(know, RobotPose(cell), maze)
            assert know.unknown_count() <= before
        known = know.labels != UNKNOWN
        truth = np.where(maze.walls, WALL, FREE)
        assert np.array_equal(know.labels[known], truth[known])

    def test_occlusion_respected(self):
        # Wall cell just north of the pose hides the cell behind it.
        walls = np.ones((7, 7), dtype=bool)
        walls[1:6, 3] = False
        walls[2, 3] = True
        maze = GridMaze(walls=walls, start=(4, 3), goals=())
        know = reveal(KnowledgeGrid.unknown(7, reveal_radius=2), RobotPose((4, 3)), maze)
        assert know.label((3, 3)) == FREE
        assert know.label((2, 3)) == WALL  # first wall on the ray is revealed
        assert know.label((5, 3)) == FREE


class TestMazeText:
    def test_round_trip_bit_exact(self):
        maze = generate_maze(9, 13)
        text = maze_to_text(maze)
        back = maze_from_text(text)
        assert np.array_equal(maze.walls, back.walls)
        assert maze.start == back.start
        assert set(maze.goals) == set(back.goals)
        assert maze_to_text(back) == text


class TestShortestPath:
    def test_bfs_matches_networkx(self):
        nx = pytest.importorskip("networkx")
        for seed in range(5):
            maze = generate_maze(seed, 13)
            graph = nx.Graph()
            free = maze.free_cells()
            for r, c in free:
                for dr, dc in ((0, 1), (1, 0)):
                    nb = (r + dr, c + dc)
                    if maze.in_bounds(nb) and not maze.is_wall(nb):
                        graph.add_edge((r, c), nb)
            for goal in maze.goals:
                path = shortest_path(~maze.walls, maze.start, {goal})
                expected = nx.shortest_path_length(graph, maze.start, goal)
                assert path is not None
                assert len(path) - 1 == expected

    def test_unreachable_returns_none(self):
        walls = np.ones((5, 5), dtype=bool)
        walls[1, 1] = False
        walls[3, 3] = False
        assert shortest_path(~walls, (1, 1), {(3, 3)}) is None
