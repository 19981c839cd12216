"""Request and response bodies for the HTTP service."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SubmitResponse(BaseModel):
    job_id: str
    queue_length: int


class JobStatus(BaseModel):
    job_id: str
    status: str
    epochs_completed: int
    epochs_total: int
    priority: int
    model: str
    dataset: str


class RunRequest(BaseModel):
    policy: Literal["fcfs", "priority", "sjf", "rr"]
    sjf_metric: Literal["size", "epochs"] = "epochs"
    capacity: Optional[int] = Field(default=None, ge=1)
    release_lag: int = Field(default=0, ge=0)


class CurvePoint(BaseModel):
    epoch: int
    train_loss: float
    train_accuracy: float


class JobReport(BaseModel):
    job_id: str
    status: str
    slices_executed: int
    completion_index: Optional[int]
    epochs_completed: int
    curve: list[CurvePoint]
    final_train_loss: Optional[float]
    final_train_accuracy: Optional[float]
    final_test_loss: Optional[float]
    final_test_accuracy: Optional[float]
    abort_reason: Optional[str]
    wall_time: float


class RunResponse(BaseModel):
    policy: str
    jobs: dict[str, JobReport]
    executed: list[tuple[str, int]]
    outputs: dict[str, str]
    simulated_unified_time: float
    simulated_baseline_time: float
    memory_trace_ref: Optional[str]
    wall_time: float


class MemoryReport(BaseModel):
    unified: dict[str, int]
    baseline: dict[str, int]
    reduction_percent: float
    simulated_unified_time: float
    simulated_baseline_time: float
    trace_file: str


class PauseResponse(BaseModel):
    job_id: str
    requested: bool


class ResumeResponse(BaseModel):
    job_id: str
    status: str


class ErrorBody(BaseModel):
    category: str
    message: str
