"""Device-memory estimates, occupancy traces, and simulated run time.

A per-model estimate is built from four dimensions: weight tensors with
their gradients, batch-scaled activation tensors, library/workspace
allocations made per model load, and the fixed device management buffer.
These fold into the unreleased / reserved / device-context triple whose
sum is the model's footprint.

A hybrid running one sub-model at a time peaks at the per-term maximum
over its sub-models; the concurrent baseline pays the sum, including one
library load and one device context per model. Costs here are modeled
units, not measured wall clock.
"""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from . import engine
from .model import HyperParams, ModelGraph, TrainingJob
from .schedule import SchedulePlan

BYTES_PER_VALUE = 4  # float32 everywhere

MB = 1024 * 1024


def default_epoch_time(param_count: int, sample_count: int, batch_size: int) -> float:
    """Simulated cost of one epoch: batches swept, scaled by model size."""
    steps = -(-sample_count // batch_size)
    return steps * (1.0 + param_count * 1e-6)


@dataclass(frozen=True)
class CostModelConfig:
    """Calibration constants for estimates and simulated time."""

    ephemeral_per_load: int = 900 * MB
    device_context: int = 300 * MB
    fragmentation: float = 1.1
    setup_time: float = 30.0
    epoch_time: Callable[[int, int, int], float] = default_epoch_time

    def __post_init__(self):
        if self.ephemeral_per_load <= 0 or self.device_context <= 0:
            raise ValueError("cost constants must be positive")
        if self.fragmentation < 1.0:
            raise ValueError(f"fragmentation {self.fragmentation} must be >= 1")
        if self.setup_time < 0:
            raise ValueError("setup time must be non-negative")


@dataclass(frozen=True)
class MemoryEstimate:
    """Byte footprint split by dimension and by release class.

    unreleased + reserved + device_context == total always holds. For a
    single model, unreleased = weights_grads + io_tensors + dataset_bytes;
    combined estimates keep per-term aggregates instead.
    """

    weights_grads: int
    io_tensors: int
    ephemeral: int
    resident_context: int
    dataset_bytes: int
    unreleased: int
    reserved: int
    device_context: int
    total: int

    def __post_init__(self):
        if self.total != self.unreleased + self.reserved + self.device_context:
            raise ValueError("total must equal unreleased + reserved + device context")

    def to_dict(self) -> dict:
        return {
            "weights_grads": self.weights_grads,
            "io_tensors": self.io_tensors,
            "ephemeral": self.ephemeral,
            "resident_context": self.resident_context,
            "dataset_bytes": self.dataset_bytes,
            "unreleased": self.unreleased,
            "reserved": self.reserved,
            "device_context": self.device_context,
            "total": self.total,
        }


def activation_bytes(graph: ModelGraph) -> int:
    """Per-sample bytes across every node output, by shape propagation."""
    shapes = engine.infer_shapes(graph)
    total = 0
    for node_id, shape in shapes.items():
        if node_id == "input":
            continue
        total += int(math.prod(shape)) * BYTES_PER_VALUE if shape else BYTES_PER_VALUE
    return total


def estimate_from_counts(
    param_count: int,
    act_bytes_per_sample: int,
    batch_size: int,
    dataset_bytes: int,
    config: CostModelConfig,
) -> MemoryEstimate:
    """Footprint from raw counts; estimate_model derives these from a graph."""
    weights_grads = 2 * param_count * BYTES_PER_VALUE
    io_tensors = batch_size * act_bytes_per_sample
    ephemeral = config.ephemeral_per_load
    resident = config.device_context
    unreleased = weights_grads + io_tensors + dataset_bytes
    reserved = int(ephemeral * config.fragmentation)
    return MemoryEstimate(
        weights_grads=weights_grads,
        io_tensors=io_tensors,
        ephemeral=ephemeral,
        resident_context=resident,
        dataset_bytes=dataset_bytes,
        unreleased=unreleased,
        reserved=reserved,
        device_context=resident,
        total=unreleased + reserved + resident,
    )


def estimate_model(
    graph: ModelGraph,
    hypers: HyperParams,
    dataset_bytes: int,
    config: CostModelConfig,
) -> MemoryEstimate:
    """Footprint of one model trained alone on the device."""
    return estimate_from_counts(
        engine.param_count(graph),
        activation_bytes(graph),
        hypers.batch_size,
        dataset_bytes,
        config,
    )


def estimate_hybrid(sub_estimates: list[MemoryEstimate]) -> MemoryEstimate:
    """Peak footprint of the merged model: per-term maximum.

    One sub-model occupies the device at a time, and the library load and
    device context are paid once for the whole hybrid.
    """
    if not sub_estimates:
        raise ValueError("no sub-model estimates")
    unreleased = max(e.unreleased for e in sub_estimates)
    reserved = max(e.reserved for e in sub_estimates)
    device = max(e.device_context for e in sub_estimates)
    return MemoryEstimate(
        weights_grads=max(e.weights_grads for e in sub_estimates),
        io_tensors=max(e.io_tensors for e in sub_estimates),
        ephemeral=max(e.ephemeral for e in sub_estimates),
        resident_context=max(e.resident_context for e in sub_estimates),
        dataset_bytes=max(e.dataset_bytes for e in sub_estimates),
        unreleased=unreleased,
        reserved=reserved,
        device_context=device,
        total=unreleased + reserved + device,
    )


def baseline_concurrent(sub_estimates: list[MemoryEstimate]) -> MemoryEstimate:
    """Footprint of training all models side by side, everything summed.

    Every model pays its own library load and device context, and shared
    datasets are counted once per referencing job.
    """
    if not sub_estimates:
        raise ValueError("no sub-model estimates")
    unreleased = sum(e.unreleased for e in sub_estimates)
    reserved = sum(e.reserved for e in sub_estimates)
    device = sum(e.device_context for e in sub_estimates)
    return MemoryEstimate(
        weights_grads=sum(e.weights_grads for e in sub_estimates),
        io_tensors=sum(e.io_tensors for e in sub_estimates),
        ephemeral=sum(e.ephemeral for e in sub_estimates),
        resident_context=sum(e.resident_context for e in sub_estimates),
        dataset_bytes=sum(e.dataset_bytes for e in sub_estimates),
        unreleased=unreleased,
        reserved=reserved,
        device_context=device,
        total=unreleased + reserved + device,
    )


def reduction_percent(unified: MemoryEstimate, baseline: MemoryEstimate) -> float:
    return 100.0 * (baseline.total - unified.total) / baseline.total


# ---------------------------------------------------------------------------
# occupancy trace


@dataclass(frozen=True)
class TracePoint:
    index: int  # zero-based slice index
    job_id: str
    epoch: int
    occupied: int


def trace_memory(
    plan: SchedulePlan,
    estimates: dict[str, MemoryEstimate],
    release_lag: int = 0,
) -> list[TracePoint]:
    """Occupied bytes during each slice of a plan.

    The library load and device context stay resident for the whole run;
    the active sub-model adds its unreleased bytes. A finished sub-model's
    bytes linger for release_lag further slices before freeing, modeling
    deferred release. With zero lag the series peaks exactly at the
    hybrid estimate's total.
    """
    if release_lag < 0:
        raise ValueError("release lag must be non-negative")
    if not plan.slices:  # every job paused or aborted before its first slice
        return []
    used = [estimates[j] for j in plan.job_ids()]
    floor = max(e.reserved for e in used) + max(e.device_context for e in used)
    last = {j: plan.completion_index(j) - 1 for j in plan.job_ids()}
    points = []
    for t, s in enumerate(plan.slices):
        residue = sum(
            estimates[j].unreleased
            for j, end in last.items()
            if end < t <= end + release_lag
        )
        occupied = floor + estimates[s.job_id].unreleased + residue
        points.append(TracePoint(t, s.job_id, s.epoch, occupied))
    return points


def peak_occupancy(trace: list[TracePoint]) -> int:
    return max(p.occupied for p in trace)


def write_trace(trace: list[TracePoint]) -> str:
    """The trace as delimiter-separated text, one row per slice."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["slice", "job_id", "epoch", "occupied_bytes"])
    for p in trace:
        w.writerow([p.index, p.job_id, p.epoch, p.occupied])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# simulated time


def epoch_costs(
    jobs: list[TrainingJob],
    sample_counts: dict[str, int],
    config: CostModelConfig,
) -> dict[str, float]:
    return {
        j.job_id: config.epoch_time(
            engine.param_count(j.graph), sample_counts[j.job_id], j.hypers.batch_size
        )
        for j in jobs
    }


def simulated_unified_time(
    plan: SchedulePlan,
    jobs: list[TrainingJob],
    sample_counts: dict[str, int],
    config: CostModelConfig,
) -> float:
    """One setup for the whole hybrid, then every slice in the plan."""
    costs = epoch_costs(jobs, sample_counts, config)
    sliced = Counter(s.job_id for s in plan.slices)
    # multiply per job like the baseline does, so the two figures differ
    # only in setup charges and never by float summation order
    return config.setup_time + sum(
        sliced[j.job_id] * costs[j.job_id] for j in jobs
    )


def simulated_baseline_time(
    jobs: list[TrainingJob],
    sample_counts: dict[str, int],
    config: CostModelConfig,
) -> float:
    """Each model pays its own setup plus all of its epochs."""
    costs = epoch_costs(jobs, sample_counts, config)
    return sum(
        config.setup_time + j.hypers.epochs * costs[j.job_id] for j in jobs
    )
