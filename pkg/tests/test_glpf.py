import math

import numpy as np
import pytest

from coopnav.belief import BeliefMap, check_mask_rule
from coopnav.grid import GridMaze, RobotPose, generate_maze, visible_cells
from coopnav.models.encoding import Segment
from coopnav.models.glpf import (
    GlpfModel,
    GlpfParams,
    glpf_fit,
    glpf_predict,
    logistic_response,
    stimulus,
)


class TestStimulus:
    def test_zero_distance_is_one(self):
        assert stimulus(0.0, 0.7) == 1.0

    def test_monotone_decreasing(self):
        for d in range(6):
            assert stimulus(d + 1, 0.4) < stimulus(d, 0.4)

    def test_reference_value(self):
        # exp(-0.5 * 2) = exp(-1), evaluated independently at high precision
        assert stimulus(2.0, 0.5) == pytest.approx(0.36787944117144233, abs=1e-15)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            stimulus(-1.0, 0.5)


class TestLogisticResponse:
    def test_midpoint_without_floors_is_half(self):
        params = GlpfParams(0.0, 0.0, beta=3.0, alpha_mid=0.4, kappa=1.0)
        assert logistic_response(0.4, params) == pytest.approx(0.5)

    def test_saturation_toward_one_minus_lapse(self):
        params = GlpfParams(0.1, 0.05, beta=60.0, alpha_mid=0.2, kappa=1.0)
        assert logistic_response(1.0, params) == pytest.approx(0.95, abs=1e-6)

    def test_reference_value(self):
        # 0.1 + 0.85 * sigmoid(4 * (0.5 - 0.3)) = 0.1 + 0.85 * sigmoid(0.8),
        # evaluated independently at high precision.
        params = GlpfParams(0.1, 0.05, beta=4.0, alpha_mid=0.3, kappa=1.0)
        expected = 0.1 + 0.85 / (1.0 + math.exp(-0.8))
        assert logistic_response(0.5, params) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.6864783089584705, abs=1e-12)

    def test_monotone_in_stimulus(self):
        params = GlpfParams(0.05, 0.1, beta=6.0, alpha_mid=0.5, kappa=1.0)
        xs = np.linspace(0, 1, 50)
        ys = [logistic_response(float(x), params) for x in xs]
        assert all(b >= a for a, b in zip(ys, ys[1:]))
        assert all(params.rho <= y <= 1 - params.lam for y in ys)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            GlpfParams(0.6, 0.0, 1.0, 0.3, 1.0)
        with pytest.raises(ValueError):
            GlpfParams(0.5, 0.5, 1.0, 0.3, 1.0)
        with pytest.raises(ValueError):
            GlpfParams(0.1, 0.1, -1.0, 0.3, 1.0)
        with pytest.raises(ValueError):
            GlpfParams(0.1, 0.1, 1.0, 0.3, 0.0)


def corridor_scene():
    """East-facing corridor with a mismatch: the operator map lacks the far wall.

    Truth: free run (2,1)..(2,6) ending at wall (2,7). The operator believes
    (2,7) is free, so the transmission shows a mismatched wall 6 cells out.
    """
    walls = np.ones((5, 9), dtype=bool)
    walls[2, 1:7] = False
    maze = GridMaze(walls=walls, start=(2, 1), goals=())
    belief_walls = np.array(walls)
    belief_walls[2, 7] = False  # operator thinks the corridor continues
    belief = BeliefMap(belief_walls)
    obs = visible_cells(maze, RobotPose((2, 1), "E"), fov_deg=0.0, max_range=7)
    return maze, belief, obs


class TestGlpfPredict:
    def test_true_belief_no_guessing_is_all_zero(self):
        maze = generate_maze(1, 13)
        belief = BeliefMap(maze.walls)
        obs = visible_cells(maze, RobotPose(maze.start, "N"))
        params = GlpfParams(0.0, 0.0, beta=4.0, alpha_mid=0.3, kappa=0.35)
        probs = glpf_predict(belief, obs, params)
        assert probs.p_add.sum() == 0 and probs.p_remove.sum() == 0

    def test_mismatch_at_distance_zero_saturates(self):
        # Mismatched cell adjacent to the camera with a steep slope: the
        # response approaches the x=1 ceiling.
        maze, belief, obs = corridor_scene()
        params = GlpfParams(0.0, 0.0, beta=200.0, alpha_mid=0.5, kappa=1e-3)
        probs = glpf_predict(belief, obs, params)
        # the far wall (2,7) is believed free and truly wall -> add channel
        assert probs.p_add[2, 7] == pytest.approx(1.0, abs=1e-3)

    def test_agreeing_visible_cells_get_guess_floor(self):
        maze, belief, obs = corridor_scene()
        params = GlpfParams(0.07, 0.0, beta=4.0, alpha_mid=0.3, kappa=0.35)
        probs = glpf_predict(belief, obs, params)
        assert probs.p_add[2, 5] == pytest.approx(0.07)  # agreeing free cell

    def test_invisible_cells_zero(self):
        maze, belief, obs = corridor_scene()
        params = GlpfParams(0.1, 0.05, beta=4.0, alpha_mid=0.3, kappa=0.35)
        probs = glpf_predict(belief, obs, params)
        visible = set(obs.visible)
        for r in range(5):
            for c in range(9):
                if (r, c) not in visible:
                    assert probs.p_add[r, c] == 0 and probs.p_remove[r, c] == 0

    def test_mask_rule_enforced(self):
        maze, belief, obs = corridor_scene()
        params = GlpfParams(0.1, 0.05, beta=4.0, alpha_mid=0.3, kappa=0.35)
        check_mask_rule(belief, glpf_predict(belief, obs, params))

    def test_distance_uses_euclidean_to_camera(self):
        maze, belief, obs = corridor_scene()
        params = GlpfParams(0.0, 0.0, beta=4.0, alpha_mid=0.3, kappa=0.5)
        probs = glpf_predict(belief, obs, params)
        expected = logistic_response(stimulus(6.0, 0.5), params)
        assert probs.p_add[2, 7] == pytest.approx(expected, abs=1e-12)


def glpf_synthetic_segments(params: GlpfParams, n: int, seed: int) -> list[Segment]:
    """Segments whose edits are drawn exactly from the psychometric model."""
    from coopnav.belief import apply_edit, corrupt_belief, sample_edit

    rng = np.random.default_rng(seed)
    segments = []
    for i in range(n):
        maze = generate_maze(seed * 1000 + i, 13)
        belief = corrupt_belief(maze, 0.2, rng)
        free = sorted(maze.free_cells())
        cam_cell = free[int(rng.integers(len(free)))]
        camera = RobotPose(cam_cell, "NESW"[int(rng.integers(4))])
        obs = visible_cells(maze, camera)
        probs = glpf_predict(belief, obs, params)
        after = apply_edit(belief, sample_edit(probs, rng))
        segments.append(Segment(belief, (cam_cell,), obs, after))
    return segments


class TestGlpfFit:
    def test_self_recovery(self):
        truth = GlpfParams(0.08, 0.04, beta=5.0, alpha_mid=0.35, kappa=0.45)
        segments = glpf_synthetic_segments(truth, 120, seed=4)
        fitted, loss = glpf_fit(segments)
        from coopnav.models.glpf import _objective, _segment_features, astuple

        feats = _segment_features(segments)
        generator_loss = _objective(np.asarray(astuple(truth)), feats)
        assert loss <= generator_loss * 1.02
        assert abs(fitted.rho - truth.rho) < 0.05
        assert abs(fitted.lam - truth.lam) < 0.05

    def test_zero_edit_dataset_drives_guess_rate_down(self):
        truth = GlpfParams(0.0, 0.0, beta=5.0, alpha_mid=0.35, kappa=0.45)
        segments = []
        for seg in glpf_synthetic_segments(truth, 40, seed=9):
            segments.append(
                Segment(seg.belief_before, seg.tau, seg.observation, seg.belief_before)
            )
        fitted, _ = glpf_fit(segments)
        assert fitted.rho < 0.01

    def test_estimator_interface(self):
        truth = GlpfParams(0.05, 0.02, beta=5.0, alpha_mid=0.3, kappa=0.4)
        segments = glpf_synthetic_segments(truth, 30, seed=2)
        model = GlpfModel().fit(segments)
        assert model.get_params()["kappa"] == 0.35  # init params untouched
        probs = model.predict(segments[:3])
        for seg, p in zip(segments, probs):
            check_mask_rule(seg.belief_before, p)
