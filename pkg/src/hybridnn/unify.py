"""Merge submitted models into one hybrid with disjoint sub-graphs.

Each sub-model keeps its own parameters, optimizer state, and loss
criterion; node ids are namespaced by job id so nothing collides and the
separator can invert the mapping. A tagged-batch routing node stands in
for the global input (sub-models accept differently shaped batches), and
the global output is a cosmetic collection point: per-sub-model criteria
mean no computation flows through it.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import (
    GraphValidationError,
    HybridnnError,
    MergeError,
    StateError,
    UnknownJobError,
)
from .model import INPUT_ID, ModelGraph, OpNode, TrainingJob, validate_graph
from .optim import OptimizerState

GLOBAL_INPUT = "hybrid/input"
GLOBAL_OUTPUT = "hybrid/output"

CRITERION = "softmax-cross-entropy"


def qualify(job_id: str, node_id: str) -> str:
    return f"{job_id}/{node_id}"


def unqualify(job_id: str, qualified: str) -> str:
    prefix = f"{job_id}/"
    if not qualified.startswith(prefix):
        raise HybridnnError(
            f"node {qualified!r} is not namespaced under job {job_id!r}"
        )
    return qualified[len(prefix):]


def namespace_graph(job_id: str, graph: ModelGraph) -> ModelGraph:
    """Copy of the graph with every node id prefixed by the job id.

    The reserved input reference is left as-is: it names whatever batch
    the router feeds this sub-model.
    """
    nodes = [
        OpNode(
            node_id=qualify(job_id, n.node_id),
            op=n.op,
            inputs=[
                ref if ref == INPUT_ID else qualify(job_id, ref) for ref in n.inputs
            ],
            attrs=dict(n.attrs),
        )
        for n in graph.nodes
    ]
    return ModelGraph(
        name=graph.name,
        input_shape=tuple(graph.input_shape),
        nodes=nodes,
        output=qualify(job_id, graph.output),
    )


@dataclass(frozen=True)
class RoutingNode:
    """Dispatch table tying the hybrid boundary to per-job entry/exit nodes."""

    node_id: str
    routes: dict[str, str]  # job id -> namespaced node id


@dataclass
class SubModel:
    """One job's model embedded in the hybrid."""

    job_id: str
    graph: ModelGraph  # namespaced ids
    original: ModelGraph  # as submitted
    optimizer: OptimizerState
    criterion: str = CRITERION
    completed_epochs: int = 0
    # topological order cached at merge time; forward reuses it every batch
    order: list[str] = field(default_factory=list)

    def param_ids(self) -> list[str]:
        """Namespaced parameter ids in graph declaration order."""
        return [
            qualify(self.job_id, pid) for pid in engine.param_specs(self.original)
        ]


@dataclass
class HybridModel:
    """All sub-models plus the shared parameter store."""

    sub_models: dict[str, SubModel]
    params: dict[str, np.ndarray]
    global_input: RoutingNode
    global_output: RoutingNode

    def sub(self, job_id: str) -> SubModel:
        try:
            return self.sub_models[job_id]
        except KeyError:
            raise UnknownJobError(job_id) from None

    def job_ids(self) -> list[str]:
        return list(self.sub_models)

    def node_count(self) -> int:
        return sum(len(s.graph.nodes) for s in self.sub_models.values()) + 2

    def sub_params(self, job_id: str) -> dict[str, np.ndarray]:
        """This sub-model's slice of the store, by reference."""
        return {pid: self.params[pid] for pid in self.sub(job_id).param_ids()}

    def snapshot(self) -> "HybridModel":
        """Deep copy safe to hand to a concurrent consumer."""
        return HybridModel(
            sub_models=copy.deepcopy(self.sub_models),
            params={pid: arr.copy() for pid, arr in self.params.items()},
            global_input=self.global_input,
            global_output=self.global_output,
        )


def merge(jobs: list[TrainingJob]) -> HybridModel:
    """Build the hybrid: validate every job, then embed each sub-graph.

    Initialization is keyed by (seed, original parameter id), so a job's
    starting values never depend on merge order or on its neighbors.
    Validation failures are collected across all jobs and raised together.
    """
    if not jobs:
        raise StateError("cannot merge an empty job list")
    failures: dict[str, list[str]] = {}
    ids: set[str] = set()
    for job in jobs:
        problems: list[str] = []
        if job.job_id in ids:
            problems.append("duplicate job id")
        ids.add(job.job_id)
        try:
            validate_graph(job.graph)
        except GraphValidationError as exc:
            problems.extend(exc.diagnostics)
        if problems:
            failures[job.job_id] = problems
    if failures:
        raise MergeError(failures)

    sub_models: dict[str, SubModel] = {}
    params: dict[str, np.ndarray] = {}
    for job in jobs:
        seeded = engine.init_params(job.graph, job.hypers.seed)
        for pid, arr in seeded.items():
            params[qualify(job.job_id, pid)] = arr
        # renaming preserves structure, so the original's topo order carries over
        order = [qualify(job.job_id, nid) for nid in validate_graph(job.graph)]
        sub_models[job.job_id] = SubModel(
            job_id=job.job_id,
            graph=namespace_graph(job.job_id, job.graph),
            original=job.graph,
            optimizer=OptimizerState.fresh(job.hypers.optimizer),
            completed_epochs=job.completed_epochs,
            order=order,
        )
    entry = RoutingNode(
        GLOBAL_INPUT,
        {j.job_id: qualify(j.job_id, INPUT_ID) for j in jobs},
    )
    exit_ = RoutingNode(
        GLOBAL_OUTPUT,
        {j.job_id: sub_models[j.job_id].graph.output for j in jobs},
    )
    return HybridModel(sub_models, params, entry, exit_)


def route(
    hybrid: HybridModel,
    job_id: str,
    batch: np.ndarray,
    targets: np.ndarray | None = None,
) -> np.ndarray:
    """Forward a tagged batch through exactly one sub-model."""
    sub = hybrid.sub(job_id)
    out, _ = engine.forward(
        sub.graph, hybrid.params, batch, targets=targets, order=sub.order
    )
    return out
