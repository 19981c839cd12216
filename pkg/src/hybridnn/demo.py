"""Ready-made models, synthetic datasets, and a runnable three-job demo.

Everything here is deterministic: datasets come from named generator
streams and model definitions are fixed, so a demo run produces the same
bytes every time.

Run end to end with:

    python -m hybridnn.demo /tmp/demo-workspace priority
"""
from __future__ import annotations

import json
import sys

import numpy as np

from . import formats, rng
from .memory import MB, CostModelConfig, estimate_from_counts
from .model import ModelGraph, OpNode


# ---------------------------------------------------------------------------
# model zoo


def mlp_two_layer() -> ModelGraph:
    return ModelGraph(
        name="mlp-2",
        input_shape=(8,),
        nodes=[
            OpNode("fc1", "dense", ["input"], {"units": 16}),
            OpNode("act1", "relu", ["fc1"]),
            OpNode("fc2", "dense", ["act1"], {"units": 2}),
        ],
        output="fc2",
    )


def mlp_three_layer() -> ModelGraph:
    return ModelGraph(
        name="mlp-3",
        input_shape=(12,),
        nodes=[
            OpNode("fc1", "dense", ["input"], {"units": 24}),
            OpNode("act1", "relu", ["fc1"]),
            OpNode("fc2", "dense", ["act1"], {"units": 16}),
            OpNode("act2", "relu", ["fc2"]),
            OpNode("fc3", "dense", ["act2"], {"units": 4}),
        ],
        output="fc3",
    )


def tiny_cnn() -> ModelGraph:
    return ModelGraph(
        name="tiny-cnn",
        input_shape=(1, 8, 8),
        nodes=[
            OpNode("conv1", "conv2d", ["input"], {"filters": 4, "kernel": 3}),
            OpNode("act1", "relu", ["conv1"]),
            OpNode("pool1", "maxpool2d", ["act1"], {"kernel": 2}),
            OpNode("flat", "flatten", ["pool1"]),
            OpNode("fc1", "dense", ["flat"], {"units": 8}),
            OpNode("act2", "relu", ["fc1"]),
            OpNode("fc2", "dense", ["act2"], {"units": 2}),
        ],
        output="fc2",
    )


def lenet_class() -> ModelGraph:
    """Five-layer convolutional classifier, 44470 trainable parameters."""
    return ModelGraph(
        name="lenet-class",
        input_shape=(1, 28, 28),
        nodes=[
            OpNode("conv1", "conv2d", ["input"], {"filters": 6, "kernel": 5}),
            OpNode("act1", "relu", ["conv1"]),
            OpNode("pool1", "maxpool2d", ["act1"], {"kernel": 2}),
            OpNode("conv2", "conv2d", ["pool1"], {"filters": 16, "kernel": 5}),
            OpNode("act2", "relu", ["conv2"]),
            OpNode("pool2", "maxpool2d", ["act2"], {"kernel": 2}),
            OpNode("flat", "flatten", ["pool2"]),
            OpNode("fc1", "dense", ["flat"], {"units": 154}),
            OpNode("act3", "relu", ["fc1"]),
            OpNode("fc2", "dense", ["act3"], {"units": 14}),
            OpNode("act4", "relu", ["fc2"]),
            OpNode("fc3", "dense", ["act4"], {"units": 10}),
        ],
        output="fc3",
    )


# ---------------------------------------------------------------------------
# synthetic datasets


def _blob_splits(name: str, classes: int, features: int, train_n: int, test_n: int):
    centers = rng.stream("demo-data", name, "centers").uniform(
        -2.0, 2.0, size=(classes, features)
    )
    out = {}
    for split, n in (("train", train_n), ("test", test_n)):
        gen = rng.stream("demo-data", name, split)
        y = gen.integers(0, classes, size=n)
        x = centers[y] + gen.normal(0.0, 0.6, size=(n, features))
        out[f"{split}_x"] = x.astype(np.float32)
        out[f"{split}_y"] = y.astype(np.float32)
    return out


def _image_splits(name: str, classes: int, side: int, train_n: int, test_n: int):
    patterns = rng.stream("demo-data", name, "patterns").uniform(
        0.0, 1.0, size=(classes, 1, side, side)
    )
    out = {}
    for split, n in (("train", train_n), ("test", test_n)):
        gen = rng.stream("demo-data", name, split)
        y = gen.integers(0, classes, size=n)
        x = patterns[y] + gen.normal(0.0, 0.35, size=(n, 1, side, side))
        out[f"{split}_x"] = x.astype(np.float32)
        out[f"{split}_y"] = y.astype(np.float32)
    return out


def two_class_blobs() -> bytes:
    return formats.encode_dataset(_blob_splits("two-class", 2, 8, 128, 48))


def four_class_blobs() -> bytes:
    return formats.encode_dataset(_blob_splits("four-class", 4, 12, 192, 48))


def image_patches() -> bytes:
    return formats.encode_dataset(_image_splits("patches", 2, 8, 96, 32))


# ---------------------------------------------------------------------------
# the three-job demo


DEMO_JOBS = [
    # (model, dataset blob builder, hypers, priority)
    (
        mlp_two_layer,
        two_class_blobs,
        {"epochs": 3, "batch_size": 32, "learning_rate": 0.05, "optimizer": "sgd", "seed": 11},
        2,
    ),
    (
        mlp_three_layer,
        four_class_blobs,
        {"epochs": 4, "batch_size": 32, "learning_rate": 0.05, "optimizer": "sgd", "seed": 12},
        1,
    ),
    (
        tiny_cnn,
        image_patches,
        {"epochs": 5, "batch_size": 16, "learning_rate": 0.03, "optimizer": "adam", "seed": 13},
        3,
    ),
]


def submit_demo_jobs(workspace) -> list[str]:
    """Queue the three demo jobs into a workspace; returns their ids."""
    from .workspace import architecture_blob

    ids = []
    for build_model, build_data, hypers, priority in DEMO_JOBS:
        ids.append(
            workspace.submit(
                architecture_blob(build_model()),
                build_data(),
                json.dumps(hypers),
                priority=priority,
            )
        )
    return ids


# ---------------------------------------------------------------------------
# estimate-only workload shaped like a mixed production queue


LARGE_WORKLOAD = [
    # (label, parameter count, per-sample activation bytes, batch, dataset MB)
    ("small-cnn", 44_470, 48_000, 256, 47),
    ("mid-resnet", 11_170_000, 9_800_000, 128, 150),
    ("large-resnet", 21_320_000, 18_500_000, 128, 150),
]


def large_workload_estimates(config: CostModelConfig | None = None):
    """Estimates for a queue of one small and two large vision models."""
    config = config or CostModelConfig()
    return {
        label: estimate_from_counts(params, act, batch, ds_mb * MB, config)
        for label, params, act, batch, ds_mb in LARGE_WORKLOAD
    }


def main(argv: list[str]) -> int:
    from .memory import baseline_concurrent, estimate_hybrid, reduction_percent
    from .workspace import Workspace

    if not argv or len(argv) > 2:
        print("usage: python -m hybridnn.demo <workspace-dir> [policy]", file=sys.stderr)
        return 2
    root = argv[0]
    policy = argv[1] if len(argv) > 1 else "priority"
    ws = Workspace(root)
    ids = submit_demo_jobs(ws)
    print(f"submitted {', '.join(ids)}")
    report = ws.run(policy)
    for job_id in ids:
        r = report.jobs[job_id]
        print(
            f"{job_id}: {r.status}, test accuracy "
            f"{r.final_test_accuracy:.3f}, completed at slice {r.completion_index}"
        )
    mem = ws.read_memory_report()
    print(
        f"memory: unified {mem['unified']['total'] / MB:.0f} MB vs baseline "
        f"{mem['baseline']['total'] / MB:.0f} MB "
        f"({mem['reduction_percent']:.1f}% reduction)"
    )
    ests = list(large_workload_estimates().values())
    big = reduction_percent(estimate_hybrid(ests), baseline_concurrent(ests))
    print(f"three-model production-shaped workload reduction: {big:.1f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
