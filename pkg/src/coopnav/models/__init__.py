from .encoding import Segment, augment_continuous, augment_discrete, encode
from .glpf import GlpfModel, GlpfParams, glpf_predict, logistic_response, stimulus
from .metrics import iou_at, masked_bce, mbce
from .neural import NeuralPerceptionModel, TrainConfig

__all__ = [
    "Segment",
    "encode",
    "augment_discrete",
    "augment_continuous",
    "GlpfParams",
    "GlpfModel",
    "glpf_predict",
    "stimulus",
    "logistic_response",
    "NeuralPerceptionModel",
    "TrainConfig",
    "masked_bce",
    "mbce",
    "iou_at",
]
