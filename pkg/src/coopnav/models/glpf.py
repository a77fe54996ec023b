"""Per-cell logistic psychometric model of operator map edits.

Each visible cell is treated independently. A cell whose transmitted label
disagrees with the operator's map provides a stimulus that decays
exponentially with camera distance; agreeing visible cells can still be
edited at the guess-rate floor, and cells outside the transmission are never
edited by this model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, astuple

import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..belief import BeliefMap, EditProbabilities
from ..grid import Observation
from .encoding import Segment

CLIP_EPS = 1e-7


@dataclass(frozen=True)
class GlpfParams:
    """Guess rate, lapse rate, slope, logistic midpoint, stimulus decay."""

    rho: float
    lam: float
    beta: float
    alpha_mid: float
    kappa: float

    def __post_init__(self):
        if not (0.0 <= self.rho <= 0.5 and 0.0 <= self.lam <= 0.5):
            raise ValueError("guess and lapse rates must lie in [0, 0.5]")
        if self.rho + self.lam >= 1.0:
            raise ValueError("guess + lapse must stay below 1")
        if self.beta <= 0:
            raise ValueError("slope must be positive")
        if self.kappa <= 0:
            raise ValueError("stimulus decay must be positive")


def stimulus(distance: float, kappa: float) -> float:
    """Stimulus intensity exp(-kappa * distance) for a cell at camera distance."""
    if distance < 0:
        raise ValueError("distance must be non-negative")
    if kappa <= 0:
        raise ValueError("stimulus decay must be positive")
    return math.exp(-kappa * distance)


def logistic_response(x: float, params: GlpfParams) -> float:
    """Edit probability at stimulus intensity x: rho + (1-rho-lam) * sigmoid(beta (x - alpha))."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("stimulus intensity must lie in [0, 1]")
    z = params.beta * (x - params.alpha_mid)
    if z >= 0:
        sig = 1.0 / (1.0 + math.exp(-z))
    else:
        e = math.exp(z)
        sig = e / (1.0 + e)
    return params.rho + (1.0 - params.rho - params.lam) * sig


def _camera_distances(obs: Observation) -> np.ndarray:
    cam = obs.camera.cell
    return np.array(
        [math.hypot(r - cam[0], c - cam[1]) for r, c in obs.visible], dtype=np.float64
    )


def glpf_predict(
    belief: BeliefMap, obs: Observation, params: GlpfParams
) -> EditProbabilities:
    """Edit probabilities over the whole map for a single transmission."""
    p_add = np.zeros(belief.shape, dtype=np.float64)
    p_remove = np.zeros(belief.shape, dtype=np.float64)
    dists = _camera_distances(obs)
    for (cell, is_wall), dist in zip(zip(obs.visible, obs.walls), dists):
        believed_wall = belief.is_wall(cell)
        if is_wall != believed_wall:
            p = logistic_response(stimulus(float(dist), params.kappa), params)
        else:
            p = params.rho  # false-alarm floor on agreeing visible cells
        if believed_wall:
            p_remove[cell] = p
        else:
            p_add[cell] = p
    return EditProbabilities(p_add=p_add, p_remove=p_remove)


def _segment_features(segments) -> dict:
    """Flatten a dataset once so the fit objective is pure array math.

    Per visible cell: camera distance, mismatch flag, edit label. Cells
    outside transmissions predict 0, so only their label counts matter.
    """
    mis_d: list[float] = []
    mis_y: list[float] = []
    agree_y: list[float] = []
    invisible_pos = 0
    total = 0
    for seg in segments:
        label = seg.label
        edited = label.add | label.remove
        height, width = seg.belief_before.shape
        total += height * width
        dists = _camera_distances(seg.observation)
        visible = set()
        for (cell, is_wall), dist in zip(
            zip(seg.observation.visible, seg.observation.walls), dists
        ):
            visible.add(cell)
            y = float(edited[cell])
            if is_wall != seg.belief_before.is_wall(cell):
                mis_d.append(float(dist))
                mis_y.append(y)
            else:
                agree_y.append(y)
        invisible_pos += int(edited.sum()) - int(
            sum(edited[c] for c in visible)
        )
    return {
        "mis_d": np.asarray(mis_d),
        "mis_y": np.asarray(mis_y),
        "agree_y": np.asarray(agree_y),
        "invisible_pos": invisible_pos,
        "total": total,
    }


def _bce(p: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(p, CLIP_EPS, 1.0 - CLIP_EPS)
    return float(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum())


def _objective(theta: np.ndarray, feats: dict) -> float:
    rho, lam, beta, alpha_mid, kappa = theta
    x = np.exp(-kappa * feats["mis_d"])
    sig = 1.0 / (1.0 + np.exp(-beta * (x - alpha_mid)))
    p_mis = rho + (1.0 - rho - lam) * sig
    loss = _bce(p_mis, feats["mis_y"])
    loss += _bce(np.full_like(feats["agree_y"], rho), feats["agree_y"])
    # Invisible cells predict exactly 0; only positive labels cost anything.
    loss += feats["invisible_pos"] * -math.log(CLIP_EPS)
    return loss / feats["total"]


_FIT_BOUNDS = [(0.0, 0.499), (0.0, 0.499), (1e-3, 100.0), (0.0, 1.0), (1e-3, 10.0)]

_FIT_STARTS = [
    (rho, 0.01, beta, alpha, kappa)
    for rho in (0.01, 0.1)
    for beta in (2.0, 8.0)
    for alpha in (0.2, 0.5)
    for kappa in (0.35, 1.0)
]


def glpf_fit(segments, init: GlpfParams | None = None) -> tuple[GlpfParams, float]:
    """Fit by mean BCE with Nelder-Mead restarts under box constraints.

    Returns the best parameters and their mean BCE on the fitting set; the
    returned loss never exceeds the loss at any start point.
    """
    segments = list(segments)
    if not segments:
        raise ValueError("cannot fit on an empty dataset")
    feats = _segment_features(segments)
    starts = list(_FIT_STARTS)
    if init is not None:
        starts.insert(0, astuple(init))
    best_theta = None
    best_loss = math.inf
    for start in starts:
        start_loss = _objective(np.asarray(start), feats)
        if start_loss < best_loss:
            best_theta, best_loss = np.asarray(start), start_loss
        res = minimize(
            _objective,
            x0=np.asarray(start),
            args=(feats,),
            method="Nelder-Mead",
            bounds=_FIT_BOUNDS,
            options={"maxiter": 2000, "xatol": 1e-6, "fatol": 1e-10},
        )
        if res.fun < best_loss:
            best_theta, best_loss = res.x, float(res.fun)
    rho, lam, beta, alpha_mid, kappa = (float(v) for v in best_theta)
    return GlpfParams(rho, lam, beta, alpha_mid, kappa), best_loss


class GlpfModel(BaseEstimator):
    """Estimator wrapper: fit psychometric parameters, predict edit masks."""

    def __init__(self, rho=0.05, lam=0.05, beta=4.0, alpha_mid=0.3, kappa=0.35):
        self.rho = rho
        self.lam = lam
        self.beta = beta
        self.alpha_mid = alpha_mid
        self.kappa = kappa

    def fit(self, X, y=None):
        init = GlpfParams(self.rho, self.lam, self.beta, self.alpha_mid, self.kappa)
        self.params_, self.loss_ = glpf_fit(X, init)
        return self

    def _check_fitted(self) -> GlpfParams:
        params = getattr(self, "params_", None)
        if params is None:
            raise NotFittedError("GlpfModel is not fitted; call fit first")
        return params

    def predict_probs(self, belief: BeliefMap, tau, obs: Observation) -> EditProbabilities:
        return glpf_predict(belief, obs, self._check_fitted())

    def predict(self, X) -> list[EditProbabilities]:
        return [
            self.predict_probs(seg.belief_before, seg.tau, seg.observation) for seg in X
        ]
