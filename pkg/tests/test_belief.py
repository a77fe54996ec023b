import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopnav.belief import (
    BeliefMap,
    EditMask,
    EditProbabilities,
    apply_edit,
    check_mask_rule,
    corrupt_belief,
    expected_info_gain,
    mapping_accuracy,
    sample_edit,
)
from coopnav.errors import InvalidEditError
from coopnav.grid import generate_maze


def masked_probs(belief: BeliefMap, rng: np.random.Generator) -> EditProbabilities:
    p_add = rng.random(belief.shape) * ~belief.walls
    p_remove = rng.random(belief.shape) * belief.walls
    return EditProbabilities(p_add=p_add, p_remove=p_remove)


@pytest.fixture
def belief():
    maze = generate_maze(3, 13)
    return BeliefMap(maze.walls)


class TestExpectedInfoGain:
    def test_zero_masks(self, belief):
        probs = EditProbabilities(np.zeros(belief.shape), np.zeros(belief.shape))
        assert expected_info_gain(probs) == 0.0

    def test_two_cell_sum(self, belief):
        p_add = np.zeros(belief.shape)
        free = tuple(zip(*np.nonzero(~belief.walls)))
        p_add[free[0]] = 0.5
        p_add[free[1]] = 0.25
        probs = EditProbabilities(p_add, np.zeros(belief.shape))
        assert expected_info_gain(probs) == pytest.approx(0.75)

    def test_linear_on_disjoint_supports(self, belief):
        rng = np.random.default_rng(0)
        probs = masked_probs(belief, rng)
        adds_only = EditProbabilities(probs.p_add, np.zeros(belief.shape))
        removes_only = EditProbabilities(np.zeros(belief.shape), probs.p_remove)
        assert expected_info_gain(probs) == pytest.approx(
            expected_info_gain(adds_only) + expected_info_gain(removes_only)
        )

    def test_matches_monte_carlo(self, belief):
        # Frozen from a 1e5-draw Monte-Carlo estimate of E||x' - x||_1; the
        # analytic value must fall within 3 sigma of the sampled mean.
        rng = np.random.default_rng(42)
        probs = masked_probs(belief, rng)
        analytic = expected_info_gain(probs)
        draws = 100_000
        sizes = np.fromiter(
            (
                sample_edit(probs, rng).size
                for _ in range(draws)
            ),
            dtype=np.int64,
            count=draws,
        )
        sigma = sizes.std(ddof=1) / np.sqrt(draws)
        assert abs(analytic - sizes.mean()) < 3 * sigma


class TestSampleEdit:
    def test_probability_one_edits_every_eligible_cell(self, belief):
        probs = EditProbabilities(
            np.where(~belief.walls, 1.0, 0.0), np.where(belief.walls, 1.0, 0.0)
        )
        edit = sample_edit(probs, np.random.default_rng(0))
        assert np.array_equal(edit.add, ~belief.walls)
        assert np.array_equal(edit.remove, belief.walls)

    def test_probability_zero_is_empty(self, belief):
        probs = EditProbabilities(np.zeros(belief.shape), np.zeros(belief.shape))
        edit = sample_edit(probs, np.random.default_rng(0))
        assert edit.size == 0

    def test_uniform_rate_chi_square(self, belief):
        # Edit counts over eligible add-cells should be Binomial(n, 0.3): a
        # chi-square test on the per-cell frequencies over 1e4 draws.
        from scipy import stats

        p = 0.3
        p_add = np.where(~belief.walls, p, 0.0)
        probs = EditProbabilities(p_add, np.zeros(belief.shape))
        rng = np.random.default_rng(7)
        draws = 10_000
        hits = np.zeros(belief.shape)
        for _ in range(draws):
            hits += sample_edit(probs, rng).add
        counts = hits[~belief.walls]
        expected = draws * p
        chi2 = float((((counts - expected) ** 2) / (expected * (1 - p))).sum())
        dof = counts.size
        # Wide two-sided acceptance band for a seeded draw.
        assert stats.chi2.ppf(0.0005, dof) < chi2 < stats.chi2.ppf(0.9995, dof)


class TestApplyEdit:
    def test_empty_edit_is_identity(self, belief):
        out = apply_edit(belief, EditMask.empty(belief.shape))
        assert np.array_equal(out.walls, belief.walls)

    def test_add_then_remove_round_trips(self, belief):
        free = tuple(zip(*np.nonzero(~belief.walls)))[0]
        add = np.zeros(belief.shape, dtype=bool)
        add[free] = True
        added = apply_edit(belief, EditMask(add, np.zeros(belief.shape, dtype=bool)))
        removed = apply_edit(added, EditMask(np.zeros(belief.shape, dtype=bool), add))
        assert np.array_equal(removed.walls, belief.walls)

    def test_l1_distance_counts_edits(self, belief):
        rng = np.random.default_rng(5)
        free = [c for c in zip(*np.nonzero(~belief.walls))]
        wall = [c for c in zip(*np.nonzero(belief.walls))]
        add = np.zeros(belief.shape, dtype=bool)
        remove = np.zeros(belief.shape, dtype=bool)
        for cell in rng.choice(len(free), 3, replace=False):
            add[free[int(cell)]] = True
        for cell in rng.choice(len(wall), 2, replace=False):
            remove[wall[int(cell)]] = True
        out = apply_edit(belief, EditMask(add, remove))
        assert int(np.count_nonzero(out.walls != belief.walls)) == 5

    def test_invalid_edit_rejected(self, belief):
        add = np.zeros(belief.shape, dtype=bool)
        add[0, 0] = True  # border is a believed wall
        with pytest.raises(InvalidEditError):
            apply_edit(belief, EditMask(add, np.zeros(belief.shape, dtype=bool)))

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_sampled_edits_always_apply(self, seed):
        rng = np.random.default_rng(seed)
        maze = generate_maze(seed % 7, 9)
        belief = corrupt_belief(maze, 0.15, rng)
        probs = masked_probs(belief, rng)
        check_mask_rule(belief, probs)
        edit = sample_edit(probs, rng)
        out = apply_edit(belief, edit)
        assert int(np.count_nonzero(out.walls != belief.walls)) == edit.size


class TestMaskRule:
    def test_add_on_wall_rejected(self, belief):
        p_add = np.zeros(belief.shape)
        p_add[0, 0] = 0.2
        with pytest.raises(InvalidEditError):
            check_mask_rule(belief, EditProbabilities(p_add, np.zeros(belief.shape)))

    def test_remove_on_free_rejected(self, belief):
        free = tuple(zip(*np.nonzero(~belief.walls)))[0]
        p_remove = np.zeros(belief.shape)
        p_remove[free] = 0.2
        with pytest.raises(InvalidEditError):
            check_mask_rule(belief, EditProbabilities(np.zeros(belief.shape), p_remove))


class TestMappingAccuracy:
    def test_perfect(self):
        maze = generate_maze(1, 13)
        assert mapping_accuracy(BeliefMap(maze.walls), maze) == 1.0

    def test_interior_complement_is_zero(self):
        maze = generate_maze(1, 13)
        walls = np.array(maze.walls)
        walls[1:-1, 1:-1] = ~walls[1:-1, 1:-1]
        assert mapping_accuracy(BeliefMap(walls), maze) == 0.0

    def test_single_wrong_cell(self):
        maze = generate_maze(1, 13)
        walls = np.array(maze.walls)
        walls[5, 5] = not walls[5, 5]
        assert mapping_accuracy(BeliefMap(walls), maze) == pytest.approx(120 / 121)

    def test_dimension_mismatch_rejected(self):
        maze = generate_maze(1, 13)
        with pytest.raises(ValueError):
            mapping_accuracy(BeliefMap(np.zeros((9, 9), dtype=bool)), maze)


class TestBeliefText:
    def test_round_trip(self):
        maze = generate_maze(4, 13)
        belief = BeliefMap(maze.walls)
        assert np.array_equal(BeliefMap.from_text(belief.to_text()).walls, belief.walls)


class TestCorruptBelief:
    def test_flip_fraction(self):
        maze = generate_maze(2, 13)
        belief = corrupt_belief(maze, 0.15, np.random.default_rng(0))
        flipped = int(np.count_nonzero(belief.walls != maze.walls))
        assert flipped == round(0.15 * 11 * 11)
        assert np.array_equal(belief.walls[0, :], maze.walls[0, :])
