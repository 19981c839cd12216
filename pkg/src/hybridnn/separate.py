"""Extract one trained sub-model from a hybrid snapshot.

The inverse of the merge: strip the job's namespace prefix, hand back
the originally submitted graph with the trained values, and never touch
any other sub-model's parameters.
"""
from __future__ import annotations

import numpy as np

from . import engine, formats
from .errors import HybridnnError
from .model import ModelGraph
from .unify import HybridModel, unqualify


def separate(snapshot: HybridModel, job_id: str) -> tuple[ModelGraph, dict[str, np.ndarray]]:
    """The job's original graph plus its trained parameter values.

    Reads only this sub-model's entries of the snapshot's store; values
    are copied out so the caller owns them.
    """
    sub = snapshot.sub(job_id)
    params: dict[str, np.ndarray] = {}
    for pid in sub.param_ids():
        if pid not in snapshot.params:
            raise HybridnnError(
                f"hybrid store is missing parameter {pid!r}: namespace mapping corrupted"
            )
        params[unqualify(job_id, pid)] = snapshot.params[pid].copy()
    expected = engine.param_specs(sub.original)
    if sorted(params) != sorted(expected):
        raise HybridnnError(
            f"separated parameter set for {job_id!r} does not match its graph"
        )
    return sub.original, params


def package(graph: ModelGraph, params: dict[str, np.ndarray]) -> bytes:
    """Serialize a model deterministically: graph header, then parameters
    in graph declaration order."""
    specs = engine.param_specs(graph)
    for pid, shape in specs.items():
        if pid not in params:
            raise HybridnnError(f"missing parameter {pid!r}")
        if tuple(params[pid].shape) != shape:
            raise HybridnnError(
                f"parameter {pid!r} has shape {params[pid].shape}, expected {shape}"
            )
    extra = set(params) - set(specs)
    if extra:
        raise HybridnnError(f"unexpected parameters {sorted(extra)}")
    header = {
        "graph": graph.to_dict(),
        "param_count": engine.param_count(graph),
    }
    return formats.encode_model(header, params, list(specs))


def load_package(blob: bytes) -> tuple[ModelGraph, dict[str, np.ndarray]]:
    """Decode a packaged model and check parameters against its graph."""
    header, params = formats.decode_model(blob)
    graph = ModelGraph.from_dict(header["graph"])
    specs = engine.param_specs(graph)
    if sorted(specs) != sorted(params):
        raise HybridnnError("packaged parameters do not match the graph")
    for pid, shape in specs.items():
        if tuple(params[pid].shape) != shape:
            raise HybridnnError(
                f"parameter {pid!r} has shape {params[pid].shape}, expected {shape}"
            )
    return graph, params
