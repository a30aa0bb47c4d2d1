"""Per-segment event probabilities: the CNN tagger and the SEGP file format."""

from .cnn import (
    CnnConfig,
    WeightStore,
    backward,
    check_weights,
    forward,
    forward_logits,
    init_weights,
    shape_trace,
    trainable,
)
from .store import load_weights, save_weights
from .probfile import (
    SegmentProbabilities,
    load_probabilities,
    save_probabilities,
    validate_probabilities,
)
from .train import TrainResult, tag_accuracy, train_events

__all__ = [
    "CnnConfig", "WeightStore", "backward", "check_weights", "forward", "forward_logits",
    "init_weights", "shape_trace", "trainable", "load_weights", "save_weights", "SegmentProbabilities",
    "load_probabilities", "save_probabilities", "validate_probabilities", "TrainResult",
    "tag_accuracy", "train_events",
]
