"""Python access to the mnn core: losses, support set, dataset and training."""

import json

from ._mnn import (
    MnnError,
    SupportSet,
    cosine,
    knn_accuracy,
    l2_normalize,
    mnn_loss,
    simplified_loss,
    weight_entropy,
    weights_mse,
    weights_wse,
)
from . import _mnn

__all__ = [
    "MnnError",
    "SupportSet",
    "cosine",
    "generate_dataset",
    "knn_accuracy",
    "l2_normalize",
    "mnn_loss",
    "reference_config",
    "simplified_loss",
    "train",
    "weight_entropy",
    "weights_mse",
    "weights_wse",
]


def reference_config():
    """The desk-scale reference run configuration as a dict."""
    return json.loads(_mnn.reference_config_json())


def generate_dataset(**overrides):
    """(train_x, train_y, test_x, test_y); keyword arguments override dataset fields."""
    return _mnn.generate_dataset_json(json.dumps(overrides))


def train(config=None, on_epoch=None):
    """Train one run. `config` holds overrides of the reference config; returns the manifest dict."""
    return json.loads(_mnn.train_json(json.dumps(config or {}), on_epoch))
