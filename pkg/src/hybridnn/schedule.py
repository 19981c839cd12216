"""Training-order policies: fcfs, priority, sjf, and rr.

A plan is a flat list of (job, epoch) slices; the trainer executes it
left to right, one epoch per slice. All four planners are pure functions
of the job list, so a plan can be recomputed and checked anywhere.

Jobs resumed from a checkpoint enter with a nonzero completed-epoch
count; planners schedule only the remaining epochs.
"""
from __future__ import annotations

from dataclasses import dataclass

from . import engine
from .model import TrainingJob

POLICIES = ("fcfs", "priority", "sjf", "rr")
SJF_METRICS = ("size", "epochs")
RR_QUANTUM_EPOCHS = 1


@dataclass(frozen=True)
class Slice:
    job_id: str
    epoch: int


@dataclass(frozen=True)
class SchedulePlan:
    policy: str
    slices: tuple[Slice, ...]

    def __len__(self) -> int:
        return len(self.slices)

    def job_ids(self) -> list[str]:
        seen: list[str] = []
        for s in self.slices:
            if s.job_id not in seen:
                seen.append(s.job_id)
        return seen

    def completion_index(self, job_id: str) -> int:
        """One-based index of the slice that finishes the job."""
        for i in range(len(self.slices) - 1, -1, -1):
            if self.slices[i].job_id == job_id:
                return i + 1
        raise KeyError(job_id)

    def without(self, job_id: str, executed: int) -> "SchedulePlan":
        """Drop a job's not-yet-executed slices, keeping everything else."""
        kept = tuple(
            s for s in self.slices[executed:] if s.job_id != job_id
        )
        return SchedulePlan(self.policy, self.slices[:executed] + kept)


def _sequential(jobs: list[TrainingJob], policy: str) -> SchedulePlan:
    slices = [
        Slice(j.job_id, e)
        for j in jobs
        for e in range(j.completed_epochs, j.hypers.epochs)
    ]
    return SchedulePlan(policy, tuple(slices))


def _interleave(jobs: list[TrainingJob]) -> list[Slice]:
    """One epoch per job per round, dropping jobs as they finish."""
    cursor = {j.job_id: j.completed_epochs for j in jobs}
    live = [j for j in jobs if cursor[j.job_id] < j.hypers.epochs]
    out: list[Slice] = []
    while live:
        nxt: list[TrainingJob] = []
        for j in live:
            out.append(Slice(j.job_id, cursor[j.job_id]))
            cursor[j.job_id] += 1
            if cursor[j.job_id] < j.hypers.epochs:
                nxt.append(j)
        live = nxt
    return out


def plan_fcfs(jobs: list[TrainingJob]) -> SchedulePlan:
    """Arrival order, each job runs to completion before the next starts."""
    _require(jobs)
    ordered = sorted(jobs, key=lambda j: j.arrival_seq)
    return _sequential(ordered, "fcfs")


def plan_priority(jobs: list[TrainingJob]) -> SchedulePlan:
    """Ascending priority value; equal-priority jobs interleave epoch-wise."""
    _require(jobs)
    groups: dict[int, list[TrainingJob]] = {}
    for j in sorted(jobs, key=lambda j: (j.priority, j.arrival_seq)):
        groups.setdefault(j.priority, []).append(j)
    slices: list[Slice] = []
    for prio in sorted(groups):
        slices.extend(_interleave(groups[prio]))
    return SchedulePlan("priority", tuple(slices))


def plan_sjf(jobs: list[TrainingJob], metric: str = "epochs") -> SchedulePlan:
    """Shortest job first by epoch count or by trainable-parameter count."""
    _require(jobs)
    if metric not in SJF_METRICS:
        raise ValueError(f"sjf metric must be one of {SJF_METRICS}, got {metric!r}")
    if metric == "size":
        length = {j.job_id: engine.param_count(j.graph) for j in jobs}
    else:
        length = {j.job_id: j.hypers.epochs for j in jobs}
    ordered = sorted(jobs, key=lambda j: (length[j.job_id], j.arrival_seq))
    return _sequential(ordered, "sjf")


def plan_rr(jobs: list[TrainingJob]) -> SchedulePlan:
    """Epoch-quantum round robin in arrival order; never preempts mid-epoch."""
    _require(jobs)
    ordered = sorted(jobs, key=lambda j: j.arrival_seq)
    return SchedulePlan("rr", tuple(_interleave(ordered)))


def make_plan(policy: str, jobs: list[TrainingJob], sjf_metric: str = "epochs") -> SchedulePlan:
    if policy == "fcfs":
        return plan_fcfs(jobs)
    if policy == "priority":
        return plan_priority(jobs)
    if policy == "sjf":
        return plan_sjf(jobs, metric=sjf_metric)
    if policy == "rr":
        return plan_rr(jobs)
    raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")


def check_plan(plan: SchedulePlan, jobs: list[TrainingJob]) -> None:
    """Assert the plan covers each job's remaining epochs exactly once, in order."""
    seen: dict[str, list[int]] = {j.job_id: [] for j in jobs}
    for s in plan.slices:
        if s.job_id not in seen:
            raise AssertionError(f"plan names unknown job {s.job_id!r}")
        seen[s.job_id].append(s.epoch)
    for j in jobs:
        expect = list(range(j.completed_epochs, j.hypers.epochs))
        if seen[j.job_id] != expect:
            raise AssertionError(
                f"job {j.job_id!r}: plan epochs {seen[j.job_id]} != {expect}"
            )


def _require(jobs: list[TrainingJob]) -> None:
    if not jobs:
        raise ValueError("cannot plan an empty job list")
    ids = [j.job_id for j in jobs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate job ids in plan input")
    seqs = [j.arrival_seq for j in jobs]
    if len(set(seqs)) != len(seqs):
        raise ValueError("duplicate arrival sequence numbers")
