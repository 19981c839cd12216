"""Model graphs, hyper-parameter rows, and training job records.

A graph is a DAG of named op nodes fed by the reserved ``input`` node.
Validation walks the whole graph and gathers every diagnostic before
failing, so a bad submission reports all of its problems at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GraphValidationError, HyperParamError
from .ops import OP_KINDS

INPUT_ID = "input"

OPTIMIZERS = ("sgd", "adam")


@dataclass
class OpNode:
    """One operation in a model graph."""

    node_id: str
    op: str
    inputs: list[str]
    attrs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.node_id,
            "op": self.op,
            "inputs": list(self.inputs),
            "attrs": dict(self.attrs),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "OpNode":
        return cls(
            node_id=raw["id"],
            op=raw["op"],
            inputs=list(raw["inputs"]),
            attrs=dict(raw.get("attrs", {})),
        )


@dataclass
class ModelGraph:
    """A named DAG of op nodes with a declared input shape and output."""

    name: str
    input_shape: tuple[int, ...]
    nodes: list[OpNode]
    output: str

    def node(self, node_id: str) -> OpNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def node_ids(self) -> list[str]:
        return [n.node_id for n in self.nodes]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "nodes": [n.to_dict() for n in self.nodes],
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelGraph":
        return cls(
            name=raw.get("name", ""),
            input_shape=tuple(int(d) for d in raw["input_shape"]),
            nodes=[OpNode.from_dict(n) for n in raw["nodes"]],
            output=raw["output"],
        )


def validate_graph(graph: ModelGraph) -> list[str]:
    """Check a graph end to end, returning topological order of node ids.

    Raises GraphValidationError carrying every diagnostic found. Cycles,
    unknown ops, bad attrs, dangling references, unreachable nodes, and
    shape breaks are all reported in one pass.
    """
    problems: list[str] = []
    seen: set[str] = set()
    for n in graph.nodes:
        if n.node_id == INPUT_ID:
            problems.append(f"node id {INPUT_ID!r} is reserved for the graph input")
        if "/" in n.node_id:
            problems.append(f"node id {n.node_id!r} must not contain '/'")
        if n.node_id in seen:
            problems.append(f"duplicate node id {n.node_id!r}")
        seen.add(n.node_id)

    if not graph.input_shape or any(d < 1 for d in graph.input_shape):
        problems.append(f"input shape {graph.input_shape} must be positive dims")

    by_id = {n.node_id: n for n in graph.nodes}
    if graph.output not in by_id:
        problems.append(f"output node {graph.output!r} is not in the graph")

    for n in graph.nodes:
        kind = OP_KINDS.get(n.op)
        if kind is None:
            problems.append(f"node {n.node_id!r}: unknown op {n.op!r}")
            continue
        if len(n.inputs) != 1:
            problems.append(
                f"node {n.node_id!r}: expected exactly one input, got {len(n.inputs)}"
            )
        for ref in n.inputs:
            if ref != INPUT_ID and ref not in by_id:
                problems.append(f"node {n.node_id!r}: unknown input {ref!r}")
            elif ref == n.node_id:
                problems.append(f"node {n.node_id!r}: feeds itself")
        for name, (required, check) in kind.attr_spec.items():
            if name not in n.attrs:
                if required:
                    problems.append(f"node {n.node_id!r}: missing attr {name!r}")
                continue
            if not check(n.attrs[name]):
                problems.append(
                    f"node {n.node_id!r}: bad value {n.attrs[name]!r} for {name!r}"
                )
        for name in n.attrs:
            if name not in kind.attr_spec:
                problems.append(f"node {n.node_id!r}: unexpected attr {name!r}")
        if kind.loss_head and n.node_id != graph.output:
            problems.append(
                f"node {n.node_id!r}: {n.op} is only valid as the output node"
            )

    if problems:
        raise GraphValidationError(problems)

    # Kahn topological sort; anything left over sits on a cycle.
    consumers: dict[str, list[str]] = {n.node_id: [] for n in graph.nodes}
    pending = {n.node_id: 0 for n in graph.nodes}
    for n in graph.nodes:
        for ref in n.inputs:
            if ref == INPUT_ID:
                continue
            consumers[ref].append(n.node_id)
            pending[n.node_id] += 1
    ready = [nid for nid in graph.node_ids() if pending[nid] == 0]
    order: list[str] = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for succ in consumers[nid]:
            pending[succ] -= 1
            if pending[succ] == 0:
                ready.append(succ)
    if len(order) < len(graph.nodes):
        stuck = sorted(set(graph.node_ids()) - set(order))
        problems.append(f"cycle through nodes {stuck}")

    if not problems:
        reachable = {graph.output}
        frontier = [graph.output]
        while frontier:
            nid = frontier.pop()
            for ref in by_id[nid].inputs:
                if ref != INPUT_ID and ref not in reachable:
                    reachable.add(ref)
                    frontier.append(ref)
        for nid in graph.node_ids():
            if nid not in reachable:
                problems.append(f"node {nid!r} does not feed the output")

    if problems:
        raise GraphValidationError(problems)
    return order


@dataclass(frozen=True)
class HyperParams:
    """One job's training configuration."""

    epochs: int
    batch_size: int
    learning_rate: float
    optimizer: str = "sgd"
    lr_milestones: tuple[int, ...] = ()
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not isinstance(self.epochs, int) or self.epochs < 1:
            problems.append(f"epochs must be a positive int, got {self.epochs!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            problems.append(f"batch_size must be a positive int, got {self.batch_size!r}")
        lr = self.learning_rate
        if not isinstance(lr, (int, float)) or not np.isfinite(lr) or lr <= 0:
            problems.append(f"learning_rate must be finite and positive, got {lr!r}")
        if self.optimizer not in OPTIMIZERS:
            problems.append(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        ms = self.lr_milestones
        if any(not isinstance(m, int) or m < 1 for m in ms):
            problems.append(f"lr_milestones must be positive epoch numbers, got {ms!r}")
        elif list(ms) != sorted(set(ms)):
            problems.append(f"lr_milestones must be strictly increasing, got {ms!r}")
        elif ms and isinstance(self.epochs, int) and ms[-1] >= self.epochs:
            problems.append(
                f"lr_milestones must fall before the final epoch {self.epochs}, got {ms!r}"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            problems.append(f"seed must be a non-negative int, got {self.seed!r}")
        if problems:
            raise HyperParamError("; ".join(problems))

    def to_dict(self) -> dict:
        out = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "seed": self.seed,
        }
        if self.lr_milestones:
            out["lr_milestones"] = list(self.lr_milestones)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "HyperParams":
        known = {"epochs", "batch_size", "learning_rate", "optimizer", "lr_milestones", "seed"}
        extra = set(raw) - known
        if extra:
            raise HyperParamError(f"unknown keys {sorted(extra)}")
        missing = {"epochs", "batch_size", "learning_rate"} - set(raw)
        if missing:
            raise HyperParamError(f"missing keys {sorted(missing)}")
        lr = raw["learning_rate"]
        return cls(
            epochs=raw["epochs"],
            batch_size=raw["batch_size"],
            learning_rate=float(lr) if isinstance(lr, (int, float)) else lr,
            optimizer=raw.get("optimizer", "sgd"),
            lr_milestones=tuple(raw.get("lr_milestones", ())),
            seed=raw.get("seed", 0),
        )


@dataclass
class TrainingJob:
    """An admitted job: model, data reference, hypers, queue position."""

    job_id: str
    graph: ModelGraph
    dataset_hash: str
    hypers: HyperParams
    arrival_seq: int
    priority: int
    completed_epochs: int = 0

    def __post_init__(self):
        if "/" in self.job_id:
            raise HyperParamError(f"job id {self.job_id!r} must not contain '/'")

    @property
    def remaining_epochs(self) -> int:
        return self.hypers.epochs - self.completed_epochs

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "graph": self.graph.to_dict(),
            "dataset_hash": self.dataset_hash,
            "hypers": self.hypers.to_dict(),
            "arrival_seq": self.arrival_seq,
            "priority": self.priority,
            "completed_epochs": self.completed_epochs,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainingJob":
        return cls(
            job_id=raw["job_id"],
            graph=ModelGraph.from_dict(raw["graph"]),
            dataset_hash=raw["dataset_hash"],
            hypers=HyperParams.from_dict(raw["hypers"]),
            arrival_seq=raw["arrival_seq"],
            priority=raw["priority"],
            completed_epochs=raw.get("completed_epochs", 0),
        )
