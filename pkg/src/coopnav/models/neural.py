"""The learned perception model: training loop, prediction, evaluation.

Training is plain mini-batch SGD with gradient-norm clipping and
early stopping on validation BCE; everything is seeded and the whole loop is
deterministic, so repeated runs produce byte-identical checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..belief import BeliefMap, EditProbabilities
from ..errors import TrainingDivergedError
from ..grid import Observation
from .encoding import CHANNEL_BELIEF, Segment, augment_discrete, encode
from .metrics import CLIP_EPS, masked_bce, split_valid
from .network import (
    ARCH_CONTINUOUS,
    ARCH_DISCRETE,
    ConvNet,
    build_continuous_encdec,
    build_discrete_fcn,
    load_checkpoint,
    save_checkpoint,
)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 200
    pos_weight: float = 1.0
    clip_norm: float = 5.0
    val_fraction: float = 0.1
    augment: str = "dihedral"  # "dihedral" | "none"
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.pos_weight < 1:
            raise ValueError("positive class weight must be at least 1")


CONTINUOUS_POS_WEIGHT = 13 * 13 * 2  # emphasizes the sparse positive labels


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")


def fused_loss_and_grad(
    logits: np.ndarray,
    labels: np.ndarray,
    valid: np.ndarray,
    pos_weight: float,
) -> tuple[float, np.ndarray]:
    """Weighted masked BCE straight from logits, with its exact gradient.

    The loss value matches masked_bce(sigmoid(logits), ...) up to clipping;
    the gradient is the analytically fused sigmoid+BCE form, which stays
    finite at saturation.
    """
    p = np.empty_like(logits)
    pos = logits >= 0
    p[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    p[~pos] = e / (1.0 + e)

    loss = masked_bce(p, labels, valid, pos_weight)
    count = int(np.count_nonzero(valid))
    y = labels.astype(np.float64)
    grad = (p * (1.0 - y + pos_weight * y) - pos_weight * y) * valid / count
    return loss, grad


def clip_gradients(net: ConvNet, max_norm: float) -> float:
    total = 0.0
    for _, _, grad in net.parameters():
        total += float((grad * grad).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, _, grad in net.parameters():
            grad *= scale
    return norm


def sgd_step(net: ConvNet, lr: float) -> None:
    for _, value, grad in net.parameters():
        value -= lr * grad


def _stack_labels(labels) -> np.ndarray:
    return np.stack(
        [np.stack([lab.add, lab.remove]).astype(np.float64) for lab in labels]
    )


def _valid_stack(inputs: np.ndarray) -> np.ndarray:
    valid_add, valid_remove = split_valid(inputs[:, CHANNEL_BELIEF])
    return np.stack([valid_add, valid_remove], axis=1)


def train_network(
    net: ConvNet,
    inputs: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    val_inputs: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> TrainHistory:
    """Mini-batch SGD with early stopping; the network ends up holding the
    parameters of the epoch with minimal validation BCE."""
    rng = np.random.default_rng(config.seed)
    n = inputs.shape[0]
    history = TrainHistory()
    best_params = net.copy_params()
    has_val = val_inputs is not None and val_inputs.shape[0] > 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            picks = order[start : start + config.batch_size]
            batch_x = inputs[picks]
            batch_y = labels[picks]
            if config.augment == "dihedral":
                ops = rng.integers(0, 8, size=len(picks))
                batch_x = np.stack(
                    [_dihedral(batch_x[i], int(op)) for i, op in enumerate(ops)]
                )
                batch_y = np.stack(
                    [_dihedral(batch_y[i], int(op)) for i, op in enumerate(ops)]
                )
            valid = _valid_stack(batch_x)
            net.zero_grad()
            logits = net.forward_logits(batch_x)
            loss, grad = fused_loss_and_grad(
                logits, batch_y, valid, config.pos_weight
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_idx, loss)
            net.backward(grad)
            clip_gradients(net, config.clip_norm)
            sgd_step(net, config.learning_rate)
            epoch_loss += loss * len(picks)
        history.train_loss.append(epoch_loss / n)

        if has_val:
            val = evaluate_bce(net, val_inputs, val_labels)
        else:
            val = history.train_loss[-1]
        history.val_loss.append(val)
        if val < history.best_val_loss:
            history.best_val_loss = val
            history.best_epoch = epoch
            best_params = net.copy_params()

    net.load_params(best_params)
    return history


def _dihedral(arr: np.ndarray, op: int) -> np.ndarray:
    out = np.rot90(arr, k=op % 4, axes=(-2, -1))
    if op >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(out)


def evaluate_bce(net: ConvNet, inputs: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted masked mean BCE of the raw (unmasked-output) predictions."""
    total = 0.0
    count = 0
    for start in range(0, inputs.shape[0], 64):
        batch_x = inputs[start : start + 64]
        batch_y = labels[start : start + 64]
        probs = net.predict_raw(batch_x)
        valid = _valid_stack(batch_x)
        p = np.clip(probs, CLIP_EPS, 1.0 - CLIP_EPS)
        terms = -(batch_y * np.log(p) + (1.0 - batch_y) * np.log1p(-p))
        total += float((terms * valid).sum())
        count += int(np.count_nonzero(valid))
    return total / count


class NeuralPerceptionModel(BaseEstimator):
    """Convolutional edit-probability predictor with the estimator interface.

    `architecture` selects the 13x13 fully convolutional variant or the
    150x150 encoder-decoder; `fit` takes a list of interaction segments for
    the discrete variant, or pre-encoded tensors via fit_tensors.
    """

    def __init__(
        self,
        architecture: str = ARCH_DISCRETE,
        learning_rate: float = 1e-3,
        batch_size: int = 128,
        max_epochs: int = 200,
        pos_weight: float = 1.0,
        clip_norm: float = 5.0,
        val_fraction: float = 0.1,
        augment: str = "dihedral",
        seed: int = 0,
        base_width: int = 16,
        dtype: str = "float64",
    ):
        self.architecture = architecture
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.pos_weight = pos_weight
        self.clip_norm = clip_norm
        self.val_fraction = val_fraction
        self.augment = augment
        self.seed = seed
        self.base_width = base_width
        self.dtype = dtype

    # -- fitting ----------------------------------------------------------
    def _build(self) -> ConvNet:
        dtype = np.dtype(self.dtype).type
        if self.architecture == ARCH_DISCRETE:
            return build_discrete_fcn(seed=self.seed, dtype=dtype)
        if self.architecture == ARCH_CONTINUOUS:
            return build_continuous_encdec(
                seed=self.seed, base=self.base_width, dtype=dtype
            )
        raise ValueError(f"unknown architecture {self.architecture!r}")

    def _config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            pos_weight=self.pos_weight,
            clip_norm=self.clip_norm,
            val_fraction=self.val_fraction,
            augment=self.augment,
            seed=self.seed,
        )

    def fit(self, X, y=None):
        segments = list(X)
        if not segments:
            raise ValueError("cannot fit on an empty dataset")
        inputs = np.stack([encode(seg) for seg in segments])
        labels = _stack_labels([seg.label for seg in segments])
        return self.fit_tensors(inputs, labels)

    def fit_tensors(self, inputs: np.ndarray, labels: np.ndarray):
        dtype = np.dtype(self.dtype).type
        inputs = inputs.astype(dtype)
        labels = labels.astype(dtype)
        config = self._config()
        rng = np.random.default_rng(config.seed)
        n = inputs.shape[0]
        n_val = int(round(config.val_fraction * n)) if n > 1 else 0
        order = rng.permutation(n)
        val_idx = order[:n_val]
        train_idx = order[n_val:]
        self.net_ = self._build()
        self.history_ = train_network(
            self.net_,
            inputs[train_idx],
            labels[train_idx],
            config,
            inputs[val_idx] if n_val else None,
            labels[val_idx] if n_val else None,
        )
        return self

    # -- inference ----------------------------------------------------------
    def _net(self) -> ConvNet:
        net = getattr(self, "net_", None)
        if net is None:
            raise NotFittedError("NeuralPerceptionModel is not fitted")
        return net

    def predict_encoded(self, inputs: np.ndarray) -> np.ndarray:
        """Masked probabilities (B, 2, H, W) for encoded input stacks."""
        net = self._net()
        probs = net.predict_raw(inputs.astype(np.dtype(self.dtype).type))
        valid = _valid_stack(inputs)
        return probs * valid

    def predict_probs(
        self, belief: BeliefMap, tau, obs: Observation
    ) -> EditProbabilities:
        seg = Segment(belief, tuple(tau), obs, belief)
        probs = self.predict_encoded(encode(seg)[None])[0]
        return EditProbabilities(p_add=probs[0], p_remove=probs[1])

    def predict(self, X) -> list[EditProbabilities]:
        return [
            self.predict_probs(seg.belief_before, seg.tau, seg.observation)
            for seg in X
        ]

    # -- persistence --------------------------------------------------------
    def save_bytes(self) -> bytes:
        return save_checkpoint(self._net())

    def load_bytes(self, data: bytes):
        self.net_ = load_checkpoint(data, dtype=np.dtype(self.dtype).type)
        self.architecture = self.net_.arch
        return self
