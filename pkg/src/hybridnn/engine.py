"""Forward and reverse passes over a validated model graph.

The engine is deliberately small: float32 arrays, one kernel per op
kind, and a tape recorded during forward so backward replays nodes in
exact reverse order. All reductions are sequential numpy ops, which
keeps whole trajectories reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ShapeMismatchError
from .model import INPUT_ID, ModelGraph, validate_graph
from .ops import OP_KINDS, init_node_params

F32 = np.float32


def infer_shapes(graph: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Per-sample output shape of every node, keyed by node id.

    The reserved input id maps to the declared input shape. Raises
    ShapeMismatchError on the first node whose kernel rejects its input.
    """
    order = validate_graph(graph)
    shapes: dict[str, tuple[int, ...]] = {INPUT_ID: tuple(graph.input_shape)}
    by_id = {n.node_id: n for n in graph.nodes}
    for nid in order:
        node = by_id[nid]
        src = shapes[node.inputs[0]]
        kind = OP_KINDS[node.op]
        try:
            shapes[nid] = tuple(kind.infer_shape(src, node.attrs))
        except ValueError as exc:
            raise ShapeMismatchError(nid, str(exc)) from exc
    return shapes


def param_specs(graph: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Parameter ids and shapes in graph declaration order."""
    shapes = infer_shapes(graph)
    by_id = {n.node_id: n for n in graph.nodes}
    specs: dict[str, tuple[int, ...]] = {}
    for n in graph.nodes:
        kind = OP_KINDS[n.op]
        src = shapes[n.inputs[0]]
        for name, shape in kind.param_shapes(src, n.attrs).items():
            specs[f"{n.node_id}.{name}"] = tuple(shape)
    return specs


def param_count(graph: ModelGraph) -> int:
    return sum(int(np.prod(s)) for s in param_specs(graph).values())


def init_params(graph: ModelGraph, seed: int) -> dict[str, np.ndarray]:
    """Fresh parameter values for a graph, keyed only by (seed, param id)."""
    shapes = infer_shapes(graph)
    by_id = {n.node_id: n for n in graph.nodes}
    params: dict[str, np.ndarray] = {}
    for n in graph.nodes:
        kind = OP_KINDS[n.op]
        src = shapes[n.inputs[0]]
        node_shapes = kind.param_shapes(src, n.attrs)
        params.update(init_node_params(n.node_id, n.op, node_shapes, seed, rng.stream))
    return params


@dataclass
class Tape:
    """Saved forward-pass state for one graph evaluation."""

    order: list[str]
    outputs: dict[str, np.ndarray]
    aux: dict[str, dict]
    batch: int


def forward(
    graph: ModelGraph,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    targets: np.ndarray | None = None,
    order: list[str] | None = None,
) -> tuple[np.ndarray, Tape]:
    """Evaluate the graph on a batch; returns the output and a tape.

    ``targets`` is only consumed by a loss-head output node.
    """
    if order is None:
        order = validate_graph(graph)
    x = np.ascontiguousarray(np.asarray(x, dtype=F32))
    by_id = {n.node_id: n for n in graph.nodes}
    outputs: dict[str, np.ndarray] = {INPUT_ID: x}
    aux: dict[str, dict] = {}
    for nid in order:
        node = by_id[nid]
        kind = OP_KINDS[node.op]
        src = outputs[node.inputs[0]]
        node_params = {
            name: params[f"{nid}.{name}"]
            for name in _param_names(kind, node, src)
        }
        if kind.takes_targets:
            y, saved = kind.forward(src, node_params, node.attrs, targets=targets)
        else:
            y, saved = kind.forward(src, node_params, node.attrs)
        outputs[nid] = y
        aux[nid] = saved
    return outputs[graph.output], Tape(order, outputs, aux, x.shape[0])


def _param_names(kind, node, src) -> list[str]:
    return list(kind.param_shapes(src.shape[1:], node.attrs))


def backward(
    graph: ModelGraph,
    params: dict[str, np.ndarray],
    tape: Tape,
    upstream: np.ndarray,
) -> dict[str, np.ndarray]:
    """Accumulate gradients wrt every parameter, replaying the tape in reverse.

    ``upstream`` seeds the output node; shape must match its output (a
    scalar for a loss head). Returns float32 grads keyed by param id.
    """
    by_id = {n.node_id: n for n in graph.nodes}
    grads: dict[str, np.ndarray] = {}
    # downstream[id] collects gradient flowing into node id's output
    downstream: dict[str, np.ndarray] = {graph.output: np.asarray(upstream, dtype=F32)}
    for nid in reversed(tape.order):
        if nid not in downstream:
            continue  # branch with no gradient path
        node = by_id[nid]
        kind = OP_KINDS[node.op]
        src = tape.outputs[node.inputs[0]]
        node_params = {
            name: params[f"{nid}.{name}"] for name in _param_names(kind, node, src)
        }
        dx, dparams = kind.backward(downstream[nid], tape.aux[nid], node_params, node.attrs)
        for name, g in dparams.items():
            pid = f"{nid}.{name}"
            grads[pid] = grads[pid] + g if pid in grads else g
        ref = node.inputs[0]
        if dx is not None and ref != INPUT_ID:
            downstream[ref] = downstream[ref] + dx if ref in downstream else dx
    return grads
