"""Shared builders and fixtures."""
import json
from pathlib import Path

import numpy as np
import pytest

from hybridnn import formats, rng
from hybridnn.model import HyperParams, ModelGraph, OpNode, TrainingJob
from hybridnn.store import decode


EXPECTED = json.loads((Path(__file__).parent / "expected_values.json").read_text())


def mlp_graph(name="mlp-2", features=8, hidden=16, classes=2):
    return ModelGraph(
        name=name,
        input_shape=(features,),
        nodes=[
            OpNode("fc1", "dense", ["input"], {"units": hidden}),
            OpNode("act1", "relu", ["fc1"]),
            OpNode("fc2", "dense", ["act1"], {"units": classes}),
        ],
        output="fc2",
    )


def deep_mlp_graph(name="mlp-3", features=12, classes=4):
    return ModelGraph(
        name=name,
        input_shape=(features,),
        nodes=[
            OpNode("fc1", "dense", ["input"], {"units": 24}),
            OpNode("act1", "relu", ["fc1"]),
            OpNode("fc2", "dense", ["act1"], {"units": 16}),
            OpNode("act2", "relu", ["fc2"]),
            OpNode("fc3", "dense", ["act2"], {"units": classes}),
        ],
        output="fc3",
    )


def cnn_graph(name="tiny-cnn", side=8, classes=2):
    return ModelGraph(
        name=name,
        input_shape=(1, side, side),
        nodes=[
            OpNode("conv1", "conv2d", ["input"], {"filters": 4, "kernel": 3}),
            OpNode("act1", "relu", ["conv1"]),
            OpNode("pool1", "maxpool2d", ["act1"], {"kernel": 2}),
            OpNode("flat", "flatten", ["pool1"]),
            OpNode("fc1", "dense", ["flat"], {"units": classes}),
        ],
        output="fc1",
    )


def blob_splits(stream_name, classes, features, train_n, test_n):
    centers = rng.stream("test-data", stream_name, "centers").uniform(
        -2.0, 2.0, size=(classes, features)
    )
    out = {}
    for split, n in (("train", train_n), ("test", test_n)):
        gen = rng.stream("test-data", stream_name, split)
        y = gen.integers(0, classes, size=n)
        x = centers[y] + gen.normal(0.0, 0.5, size=(n, features))
        out[f"{split}_x"] = x.astype(np.float32)
        out[f"{split}_y"] = y.astype(np.float32)
    return out


def image_splits(stream_name, classes, side, train_n, test_n):
    patterns = rng.stream("test-data", stream_name, "patterns").uniform(
        0.0, 1.0, size=(classes, 1, side, side)
    )
    out = {}
    for split, n in (("train", train_n), ("test", test_n)):
        gen = rng.stream("test-data", stream_name, split)
        y = gen.integers(0, classes, size=n)
        x = patterns[y] + gen.normal(0.0, 0.3, size=(n, 1, side, side))
        out[f"{split}_x"] = x.astype(np.float32)
        out[f"{split}_y"] = y.astype(np.float32)
    return out


def dataset_of(splits):
    return decode(formats.encode_dataset(splits))


def job_of(graph, dataset, seq, epochs=2, batch_size=16, lr=0.05, optimizer="sgd",
           seed=0, priority=None, job_id=None):
    return TrainingJob(
        job_id=job_id or f"job-{seq:03d}",
        graph=graph,
        dataset_hash=dataset.content_hash,
        hypers=HyperParams(
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=lr,
            optimizer=optimizer,
            seed=seed,
        ),
        arrival_seq=seq,
        priority=seq if priority is None else priority,
    )


@pytest.fixture
def two_class_data():
    return dataset_of(blob_splits("two-class", 2, 8, 64, 32))


@pytest.fixture
def four_class_data():
    return dataset_of(blob_splits("four-class", 4, 12, 96, 32))


@pytest.fixture
def image_data():
    return dataset_of(image_splits("patches", 2, 8, 48, 16))
