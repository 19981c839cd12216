"""Slice-by-slice training of a hybrid model over a schedule plan.

One slice = one epoch of one sub-model. The loop is a single logical
thread: at every slice boundary it applies pending pause requests, then
runs the designated sub-model's epoch batch by batch. Finished sub-models
are snapshotted and handed to a completion sink immediately, while the
remaining slices keep training. A non-finite loss aborts only the
offending job; everything else proceeds as if that job were never
submitted.

Checkpoints capture parameters, optimizer state, and the data-order
cursor under the job's own node ids, so a checkpoint taken in one hybrid
restores cleanly into the next.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import engine, formats, store
from .errors import (
    MissingGradientError,
    StateError,
    UnknownJobError,
)
from .model import TrainingJob, validate_graph
from .ops import OP_KINDS, softmax_cross_entropy, check_class_indices
from .optim import OptimizerState, apply_update, lr_at_epoch
from .schedule import SchedulePlan
from .store import Dataset
from .unify import HybridModel, qualify, unqualify

F32 = np.float32


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    """Everything needed to continue one job from an epoch boundary."""

    job_id: str
    completed_epochs: int
    data_cursor: int  # epoch index the data-order stream continues from
    optimizer_kind: str
    optimizer_step: int
    momentum: float
    params: dict[str, np.ndarray]  # original (un-namespaced) param ids
    slot_m: dict[str, np.ndarray] = field(default_factory=dict)
    slot_v: dict[str, np.ndarray] = field(default_factory=dict)
    slot_momentum: dict[str, np.ndarray] = field(default_factory=dict)

    def encode(self) -> bytes:
        header = {
            "job_id": self.job_id,
            "completed_epochs": self.completed_epochs,
            "data_cursor": self.data_cursor,
            "optimizer": {
                "kind": self.optimizer_kind,
                "step": self.optimizer_step,
                "momentum": self.momentum,
            },
        }
        sections: dict[str, np.ndarray] = {}
        for pid, arr in self.params.items():
            sections[f"p/{pid}"] = arr
        for pid, arr in self.slot_m.items():
            sections[f"m/{pid}"] = arr
        for pid, arr in self.slot_v.items():
            sections[f"v/{pid}"] = arr
        for pid, arr in self.slot_momentum.items():
            sections[f"mom/{pid}"] = arr
        order = sorted(sections)
        return formats.encode_checkpoint(header, sections, order)

    @classmethod
    def decode(cls, blob: bytes) -> "Checkpoint":
        header, sections = formats.decode_checkpoint(blob)
        opt = header["optimizer"]
        out = cls(
            job_id=header["job_id"],
            completed_epochs=int(header["completed_epochs"]),
            data_cursor=int(header["data_cursor"]),
            optimizer_kind=opt["kind"],
            optimizer_step=int(opt["step"]),
            momentum=float(opt.get("momentum", 0.0)),
            params={},
        )
        slots = {"p": out.params, "m": out.slot_m, "v": out.slot_v, "mom": out.slot_momentum}
        for name, arr in sections.items():
            tag, _, pid = name.partition("/")
            if tag not in slots or not pid:
                raise StateError(f"unrecognized checkpoint section {name!r}")
            slots[tag][pid] = arr
        return out


def make_checkpoint(hybrid: HybridModel, job_id: str) -> Checkpoint:
    """Snapshot one sub-model's training state at an epoch boundary."""
    sub = hybrid.sub(job_id)
    strip = lambda pid: unqualify(job_id, pid)
    params = {strip(pid): hybrid.params[pid].copy() for pid in sub.param_ids()}
    opt = sub.optimizer
    return Checkpoint(
        job_id=job_id,
        completed_epochs=sub.completed_epochs,
        data_cursor=sub.completed_epochs,
        optimizer_kind=opt.kind,
        optimizer_step=opt.step,
        momentum=opt.momentum,
        params=params,
        slot_m={strip(p): a.copy() for p, a in opt.m1.items()},
        slot_v={strip(p): a.copy() for p, a in opt.m2.items()},
        slot_momentum={strip(p): a.copy() for p, a in opt.velocity.items()},
    )


def restore_checkpoint(hybrid: HybridModel, ckpt: Checkpoint) -> None:
    """Load a checkpoint into the matching sub-model of a fresh hybrid."""
    sub = hybrid.sub(ckpt.job_id)
    expect = {unqualify(ckpt.job_id, pid): pid for pid in sub.param_ids()}
    if sorted(expect) != sorted(ckpt.params):
        raise StateError(
            f"checkpoint for {ckpt.job_id!r} does not match the submitted model: "
            f"parameter sets differ"
        )
    for orig, arr in ckpt.params.items():
        target = hybrid.params[expect[orig]]
        if target.shape != arr.shape:
            raise StateError(
                f"checkpoint shape {arr.shape} != model shape {target.shape} "
                f"for parameter {orig!r}"
            )
        target[...] = arr
    opt = sub.optimizer
    if opt.kind != ckpt.optimizer_kind:
        raise StateError(
            f"checkpoint optimizer {ckpt.optimizer_kind!r} != job optimizer {opt.kind!r}"
        )
    opt.step = ckpt.optimizer_step
    opt.momentum = ckpt.momentum
    opt.m1 = {expect[p]: a.copy() for p, a in ckpt.slot_m.items()}
    opt.m2 = {expect[p]: a.copy() for p, a in ckpt.slot_v.items()}
    opt.velocity = {expect[p]: a.copy() for p, a in ckpt.slot_momentum.items()}
    sub.completed_epochs = ckpt.completed_epochs


# ---------------------------------------------------------------------------
# reports


@dataclass
class JobResult:
    """Outcome of one job within a run."""

    job_id: str
    status: str = "training"  # training | complete | paused | aborted
    slices_executed: int = 0
    completion_index: int | None = None  # 1-based position in executed order
    epochs_completed: int = 0
    # rows of (epoch, train loss, train accuracy)
    curve: list[tuple[int, float, float]] = field(default_factory=list)
    final_train_loss: float | None = None
    final_train_accuracy: float | None = None
    final_test_loss: float | None = None
    final_test_accuracy: float | None = None
    abort_reason: str | None = None
    wall_time: float = 0.0

    def to_dict(self, with_wall: bool = False) -> dict:
        out = {
            "job_id": self.job_id,
            "status": self.status,
            "slices_executed": self.slices_executed,
            "completion_index": self.completion_index,
            "epochs_completed": self.epochs_completed,
            "curve": [[e, l, a] for e, l, a in self.curve],
            "final_train_loss": self.final_train_loss,
            "final_train_accuracy": self.final_train_accuracy,
            "final_test_loss": self.final_test_loss,
            "final_test_accuracy": self.final_test_accuracy,
            "abort_reason": self.abort_reason,
        }
        if with_wall:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class TrainReport:
    """Whole-run summary; wall time is reported but never persisted."""

    policy: str
    jobs: dict[str, JobResult]
    executed: list[tuple[str, int]] = field(default_factory=list)
    simulated_unified_time: float = 0.0
    simulated_baseline_time: float = 0.0
    memory_trace_ref: str | None = None
    wall_time: float = 0.0

    def to_dict(self, with_wall: bool = False) -> dict:
        out = {
            "policy": self.policy,
            "jobs": {j: r.to_dict(with_wall) for j, r in sorted(self.jobs.items())},
            "executed": [[j, e] for j, e in self.executed],
            "simulated_unified_time": self.simulated_unified_time,
            "simulated_baseline_time": self.simulated_baseline_time,
            "memory_trace_ref": self.memory_trace_ref,
        }
        if with_wall:
            out["wall_time"] = self.wall_time
        return out


# ---------------------------------------------------------------------------
# shared batch arithmetic


def run_batch(graph, params, order, batch: store.Batch, optimizer, lr, observer=None):
    """Forward, loss, backward, update for one batch. Returns (loss, correct).

    Returns correct prediction count so callers can build sample-weighted
    accuracy. Raises FloatingPointError-free: a non-finite loss is the
    caller's signal to abort, delivered via the return value.
    """
    output_node = graph.node(graph.output)
    # divergence surfaces as an inf/nan loss and aborts the job below;
    # keep numpy quiet about the arithmetic that produces it
    with np.errstate(over="ignore", invalid="ignore"):
        if OP_KINDS[output_node.op].loss_head:
            loss, tape = engine.forward(graph, params, batch.x, targets=batch.y, order=order)
            logits = tape.outputs[output_node.inputs[0]]
            upstream = F32(1.0)
        else:
            logits, tape = engine.forward(graph, params, batch.x, order=order)
            loss, upstream = softmax_cross_entropy(logits, batch.y)
    loss_value = float(loss)
    if not np.isfinite(loss_value):
        return loss_value, 0
    grads = engine.backward(graph, params, tape, upstream)
    missing = [pid for pid in params if pid not in grads]
    if missing:
        raise MissingGradientError(missing[0])
    extra = [pid for pid in grads if pid not in params]
    if extra:
        raise MissingGradientError(extra[0], extra=True)
    apply_update(optimizer, params, grads, lr)
    if observer is not None:
        observer(params)
    targets = check_class_indices(batch.y, logits.shape[1])
    correct = int((logits.argmax(axis=1) == targets).sum())
    return loss_value, correct


def evaluate(graph, params, order, x, y, batch_size: int) -> tuple[float, float]:
    """Sample-weighted loss and accuracy over a fixed split, no updates."""
    output_node = graph.node(graph.output)
    loss_head = OP_KINDS[output_node.op].loss_head
    total = x.shape[0]
    if total == 0:
        return 0.0, 0.0
    loss_sum = 0.0
    correct = 0
    for start in range(0, total, batch_size):
        bx, by = x[start : start + batch_size], y[start : start + batch_size]
        if loss_head:
            loss, tape = engine.forward(graph, params, bx, targets=by, order=order)
            logits = tape.outputs[output_node.inputs[0]]
        else:
            logits, tape = engine.forward(graph, params, bx, order=order)
            loss, _ = softmax_cross_entropy(logits, by)
        loss_sum += float(loss) * bx.shape[0]
        targets = check_class_indices(by, logits.shape[1])
        correct += int((logits.argmax(axis=1) == targets).sum())
    return loss_sum / total, correct / total


# ---------------------------------------------------------------------------
# the trainer


class Trainer:
    """Executes a plan over a hybrid, one epoch slice at a time.

    pause_poll, step_observer, and completion_sink are the only hooks;
    all of them may be None. completion_sink receives (job_id, snapshot,
    result) with a deep copy of the hybrid, safe to consume concurrently.
    """

    def __init__(
        self,
        hybrid: HybridModel,
        plan: SchedulePlan,
        jobs: list[TrainingJob],
        datasets: dict[str, Dataset],
        completion_sink=None,
        pause_sink=None,
        pause_poll=None,
        step_observer=None,
        slice_observer=None,
    ):
        self.hybrid = hybrid
        self.plan = plan
        self.jobs = {j.job_id: j for j in jobs}
        self.datasets = datasets
        self.completion_sink = completion_sink
        self.pause_sink = pause_sink
        self.pause_poll = pause_poll
        self.step_observer = step_observer
        self.slice_observer = slice_observer
        self._pause_requests: set[str] = set()
        self.results: dict[str, JobResult] = {
            j.job_id: JobResult(job_id=j.job_id, epochs_completed=j.completed_epochs)
            for j in jobs
        }
        self.checkpoints: dict[str, Checkpoint] = {}
        for job_id in self.jobs:
            if job_id not in hybrid.sub_models:
                raise UnknownJobError(job_id)
            if job_id not in datasets:
                raise StateError(f"job {job_id!r}: dataset not resolved")

    def request_pause(self, job_id: str) -> None:
        """Ask for a checkpoint at the next slice boundary."""
        if job_id not in self.jobs:
            raise UnknownJobError(job_id)
        status = self.results[job_id].status
        if status in ("complete", "aborted"):
            raise StateError(f"job {job_id!r} is already {status}")
        self._pause_requests.add(job_id)

    def run(self) -> TrainReport:
        started = time.perf_counter()
        # a resumed job may arrive with nothing left to do
        for job in self.jobs.values():
            if job.completed_epochs >= job.hypers.epochs:
                self._complete(job.job_id, 0)
        i = 0
        while i < len(self.plan.slices):
            self._apply_pauses(i)
            if i >= len(self.plan.slices):
                break
            s = self.plan.slices[i]
            slice_started = time.perf_counter()
            aborted = self._run_slice(s)
            result = self.results[s.job_id]
            result.wall_time += time.perf_counter() - slice_started
            if aborted:
                self.plan = self.plan.without(s.job_id, executed=i)
                continue
            result.slices_executed += 1
            result.epochs_completed = s.epoch + 1
            self.hybrid.sub(s.job_id).completed_epochs = s.epoch + 1
            i += 1
            if self.slice_observer is not None:
                self.slice_observer(s.job_id, s.epoch)
            if s.epoch == self.jobs[s.job_id].hypers.epochs - 1:
                self._complete(s.job_id, i)
        self._apply_pauses(len(self.plan.slices))
        report = TrainReport(
            policy=self.plan.policy,
            jobs=self.results,
            executed=[(s.job_id, s.epoch) for s in self.plan.slices],
            wall_time=time.perf_counter() - started,
        )
        return report

    # -- internals

    def _apply_pauses(self, executed: int) -> None:
        wanted = set(self._pause_requests)
        if self.pause_poll is not None:
            for job_id in self.pause_poll():
                if (
                    job_id in self.jobs
                    and self.results[job_id].status == "training"
                ):
                    wanted.add(job_id)
        self._pause_requests.clear()
        for job_id in sorted(wanted):
            if self.results[job_id].status != "training":
                continue
            ckpt = make_checkpoint(self.hybrid, job_id)
            self.checkpoints[job_id] = ckpt
            self.plan = self.plan.without(job_id, executed)
            self.results[job_id].status = "paused"
            if self.pause_sink is not None:
                self.pause_sink(job_id, ckpt)

    def _run_slice(self, s) -> bool:
        """One epoch of one sub-model. Returns True if the job aborted."""
        sub = self.hybrid.sub(s.job_id)
        job = self.jobs[s.job_id]
        dataset = self.datasets[s.job_id]
        hp = job.hypers
        lr = lr_at_epoch(hp.learning_rate, hp.lr_milestones, s.epoch)
        params = self.hybrid.sub_params(s.job_id)
        observer = None
        if self.step_observer is not None:
            observer = lambda p: self.step_observer(s.job_id, p)
        loss_sum = 0.0
        correct = 0
        seen = 0
        for b, batch in enumerate(store.batches(dataset, hp.batch_size, hp.seed, s.epoch)):
            loss, batch_correct = run_batch(
                sub.graph, params, sub.order, batch, sub.optimizer, lr, observer
            )
            if not np.isfinite(loss):
                result = self.results[s.job_id]
                result.status = "aborted"
                result.abort_reason = (
                    f"non-finite loss in job {s.job_id} at epoch {s.epoch}, batch {b}"
                )
                return True
            n = batch.x.shape[0]
            loss_sum += loss * n
            correct += batch_correct
            seen += n
        result = self.results[s.job_id]
        result.curve.append((s.epoch, loss_sum / seen, correct / seen))
        result.final_train_loss = loss_sum / seen
        result.final_train_accuracy = correct / seen
        return False

    def _complete(self, job_id: str, completion_index: int) -> None:
        sub = self.hybrid.sub(job_id)
        dataset = self.datasets[job_id]
        test_loss, test_acc = evaluate(
            sub.graph,
            self.hybrid.sub_params(job_id),
            sub.order,
            dataset.test_x,
            dataset.test_y,
            self.jobs[job_id].hypers.batch_size,
        )
        result = self.results[job_id]
        result.status = "complete"
        result.completion_index = completion_index
        result.final_test_loss = test_loss
        result.final_test_accuracy = test_acc
        if self.completion_sink is not None:
            self.completion_sink(job_id, self.hybrid.snapshot(), result)


# ---------------------------------------------------------------------------
# standalone reference loop


def train_standalone(
    job: TrainingJob, dataset: Dataset, step_observer=None
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Train one model alone, outside any hybrid.

    Uses the same seeded init, batch schedule, and update arithmetic as
    merged training, so the two produce identical parameter trajectories.
    """
    order = validate_graph(job.graph)
    params = engine.init_params(job.graph, job.hypers.seed)
    opt = OptimizerState.fresh(job.hypers.optimizer)
    hp = job.hypers
    for epoch in range(hp.epochs):
        lr = lr_at_epoch(hp.learning_rate, hp.lr_milestones, epoch)
        observer = None
        if step_observer is not None:
            observer = lambda p: step_observer(job.job_id, p)
        for batch in store.batches(dataset, hp.batch_size, hp.seed, epoch):
            loss, _ = run_batch(job.graph, params, order, batch, opt, lr, observer)
            if not np.isfinite(loss):
                raise StateError(
                    f"non-finite loss in standalone run of {job.job_id} at epoch {epoch}"
                )
    return params, opt
