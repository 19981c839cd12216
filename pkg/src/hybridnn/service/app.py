"""HTTP front end over a workspace.

Thin by design: every endpoint parses the request, calls the workspace,
and shapes the result. Domain errors map to one JSON error body whose
category tells clients which exit code to use.
"""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse, Response

from ..errors import HybridnnError, StateError, UnknownJobError
from ..train import JobResult, TrainReport
from ..workspace import Workspace
from .schemas import (
    CurvePoint,
    ErrorBody,
    JobReport,
    JobStatus,
    MemoryReport,
    PauseResponse,
    ResumeResponse,
    RunRequest,
    RunResponse,
    SubmitResponse,
)

STATUS_BY_CATEGORY = {"validation": 422, "state": 409, "admission": 409}


def job_report(result: JobResult) -> JobReport:
    return JobReport(
        job_id=result.job_id,
        status=result.status,
        slices_executed=result.slices_executed,
        completion_index=result.completion_index,
        epochs_completed=result.epochs_completed,
        curve=[
            CurvePoint(epoch=e, train_loss=l, train_accuracy=a)
            for e, l, a in result.curve
        ],
        final_train_loss=result.final_train_loss,
        final_train_accuracy=result.final_train_accuracy,
        final_test_loss=result.final_test_loss,
        final_test_accuracy=result.final_test_accuracy,
        abort_reason=result.abort_reason,
        wall_time=result.wall_time,
    )


def run_response(report: TrainReport, outputs: dict[str, str]) -> RunResponse:
    return RunResponse(
        policy=report.policy,
        jobs={j: job_report(r) for j, r in sorted(report.jobs.items())},
        executed=list(report.executed),
        outputs=outputs,
        simulated_unified_time=report.simulated_unified_time,
        simulated_baseline_time=report.simulated_baseline_time,
        memory_trace_ref=report.memory_trace_ref,
        wall_time=report.wall_time,
    )


def create_app(workspace_path: str | Path) -> FastAPI:
    app = FastAPI(title="hybridnn", version="0.1.0")
    ws = Workspace(workspace_path)
    app.state.workspace = ws

    @app.exception_handler(HybridnnError)
    async def domain_error(request: Request, exc: HybridnnError):
        body = ErrorBody(category=exc.category, message=str(exc))
        return JSONResponse(
            status_code=STATUS_BY_CATEGORY.get(exc.category, 422),
            content={"detail": body.model_dump()},
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/jobs", response_model=SubmitResponse)
    async def submit(
        model: UploadFile = File(...),
        dataset: UploadFile = File(...),
        hypers: UploadFile = File(...),
        priority: int | None = Form(default=None),
    ) -> SubmitResponse:
        job_id = ws.submit(
            await model.read(),
            await dataset.read(),
            await hypers.read(),
            priority=priority,
        )
        return SubmitResponse(job_id=job_id, queue_length=len(ws.status()))

    @app.get("/jobs", response_model=list[JobStatus])
    def jobs() -> list[JobStatus]:
        return [JobStatus(**row) for row in ws.status()]

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def job(job_id: str) -> JobStatus:
        for row in ws.status():
            if row["job_id"] == job_id:
                return JobStatus(**row)
        raise UnknownJobError(job_id)

    @app.post("/runs", response_model=RunResponse)
    def run(request: RunRequest) -> RunResponse:
        report = ws.run(
            request.policy,
            sjf_metric=request.sjf_metric,
            capacity=request.capacity,
            release_lag=request.release_lag,
        )
        outputs = ws.read_report().get("outputs", {})
        return run_response(report, outputs)

    @app.post("/jobs/{job_id}/pause", response_model=PauseResponse)
    def pause(job_id: str) -> PauseResponse:
        ws.request_pause(job_id)
        return PauseResponse(job_id=job_id, requested=True)

    @app.post("/jobs/{job_id}/resume", response_model=ResumeResponse)
    async def resume(job_id: str, checkpoint: UploadFile = File(...)) -> ResumeResponse:
        ws.resume(job_id, await checkpoint.read())
        return ResumeResponse(job_id=job_id, status="queued")

    @app.get("/reports/training")
    def training_report() -> dict:
        return ws.read_report()

    @app.get("/reports/training/curves", response_class=PlainTextResponse)
    def training_curves() -> str:
        return ws.read_curves()

    @app.get("/reports/memory", response_model=MemoryReport)
    def memory_report() -> MemoryReport:
        return MemoryReport(**ws.read_memory_report())

    @app.get("/reports/memory/trace", response_class=PlainTextResponse)
    def memory_trace() -> str:
        return ws.read_trace()

    @app.get("/outputs/{job_id}")
    def output(job_id: str) -> Response:
        path = ws.root / "outputs" / f"{job_id}.unnd"
        if not path.exists():
            raise StateError(f"no output for job {job_id!r}")
        return Response(
            content=path.read_bytes(), media_type="application/octet-stream"
        )

    @app.get("/checkpoints/{job_id}")
    def checkpoint(job_id: str) -> Response:
        path = ws.root / "checkpoints" / f"{job_id}.unnd"
        if not path.exists():
            raise StateError(f"no checkpoint for job {job_id!r}")
        return Response(
            content=path.read_bytes(), media_type="application/octet-stream"
        )

    return app
