"""On-disk job queue and end-to-end run orchestration.

A workspace directory owns everything durable: the queue, ingested
datasets, checkpoints, per-job output models, and run reports.

  queue.json             intake state, one record per job
  datasets/<hash>.unnd   content-addressed dataset pool
  outputs/<job>.unnd     trained models, written on completion
  checkpoints/<job>.unnd pause snapshots
  reports/               report.json, memory.json, trace + curve series
  control/               run flag and pause request markers

`run` is synchronous and owns the training loop; separation runs on a
consumer thread fed completion snapshots, so a finished model is being
packaged while the next sub-model trains. Pause requests arrive as
marker files, polled at slice boundaries, which lets a second process
pause a run it does not own.
"""
from __future__ import annotations

import json
import queue as queue_mod
import threading
from pathlib import Path

from . import memory, schedule, store, train
from .errors import (
    AdmissionError,
    FormatError,
    GraphValidationError,
    HybridnnError,
    StateError,
    UnknownJobError,
)
from .formats import decode_model
from .model import HyperParams, ModelGraph, TrainingJob, validate_graph
from .schedule import SchedulePlan, Slice
from .separate import package, separate
from .train import Checkpoint, TrainReport, Trainer, restore_checkpoint

RUN_FLAG = "running"


def parse_model_file(blob: bytes) -> ModelGraph:
    """Read a submitted architecture: container or plain JSON graph.

    Containers must carry no parameter sections; initial values are
    always derived from the job seed server-side.
    """
    if blob[:4] == b"UNND":
        header, params = decode_model(blob)
        if params:
            raise FormatError(
                "submitted models carry architecture only; parameters are seeded"
            )
        if "graph" not in header:
            raise FormatError("model header lacks a graph")
        return ModelGraph.from_dict(header["graph"])
    try:
        raw = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model file is neither a container nor JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError("model JSON must be an object")
    try:
        return ModelGraph.from_dict(raw)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"model JSON is missing {exc}") from exc


def architecture_blob(graph: ModelGraph) -> bytes:
    """Container bytes for submitting an untrained architecture."""
    from .formats import encode_model

    return encode_model({"graph": graph.to_dict()}, {}, [])


def parse_hyper_file(text: str | bytes) -> HyperParams:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"hyper file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError("hyper file must hold a JSON object")
    return HyperParams.from_dict(raw)


class Workspace:
    """All operations over one workspace directory."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        for sub in ("datasets", "outputs", "checkpoints", "reports", "control"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.store = store.DatasetStore(self.root / "datasets")
        self.queue_path = self.root / "queue.json"

    # -- queue persistence

    def _load(self) -> dict:
        if not self.queue_path.exists():
            return {"next_seq": 0, "jobs": []}
        return json.loads(self.queue_path.read_text())

    def _save(self, state: dict) -> None:
        tmp = self.queue_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state, indent=2, sort_keys=True))
        tmp.replace(self.queue_path)

    def _find(self, state: dict, job_id: str) -> dict:
        for rec in state["jobs"]:
            if rec["record"]["job_id"] == job_id:
                return rec
        raise UnknownJobError(job_id)

    # -- intake

    def submit(
        self,
        model_blob: bytes,
        dataset_blob: bytes,
        hyper_blob: bytes | str,
        priority: int | None = None,
    ) -> str:
        """Validate all three documents, then queue the job.

        Nothing is persisted unless every document is good, so a failed
        submission leaves the queue untouched.
        """
        try:
            graph = parse_model_file(model_blob)
            validate_graph(graph)
        except GraphValidationError as exc:
            raise GraphValidationError(
                [f"model file: {d}" for d in exc.diagnostics]
            ) from exc
        except HybridnnError as exc:
            raise FormatError(f"model file: {exc}") from exc
        hypers = parse_hyper_file(hyper_blob)
        try:
            digest = self.store.put(dataset_blob)
        except HybridnnError as exc:
            raise FormatError(f"dataset file: {exc}") from exc

        state = self._load()
        seq = state["next_seq"]
        job = TrainingJob(
            job_id=f"job-{seq:03d}",
            graph=graph,
            dataset_hash=digest,
            hypers=hypers,
            arrival_seq=seq,
            priority=seq if priority is None else priority,
        )
        state["next_seq"] = seq + 1
        state["jobs"].append(
            {"record": job.to_dict(), "status": "queued", "checkpoint": None}
        )
        self._save(state)
        return job.job_id

    # -- queue views

    def status(self) -> list[dict]:
        out = []
        for rec in self._load()["jobs"]:
            job = rec["record"]
            out.append(
                {
                    "job_id": job["job_id"],
                    "status": rec["status"],
                    "epochs_completed": job.get("completed_epochs", 0),
                    "epochs_total": job["hypers"]["epochs"],
                    "priority": job["priority"],
                    "model": job["graph"].get("name", ""),
                    "dataset": job["dataset_hash"][:12],
                }
            )
        return out

    # -- pause / resume

    def _marker(self, job_id: str) -> Path:
        return self.root / "control" / f"pause-{job_id}"

    def run_active(self) -> bool:
        return (self.root / "control" / RUN_FLAG).exists()

    def request_pause(self, job_id: str) -> None:
        state = self._load()
        rec = self._find(state, job_id)
        if not self.run_active():
            raise StateError("no run is active; only a training job can pause")
        if rec["status"] not in ("queued", "training"):
            raise StateError(f"job {job_id!r} is {rec['status']}, not training")
        self._marker(job_id).touch()

    def resume(self, job_id: str, checkpoint_blob: bytes) -> None:
        """Re-queue a paused job to continue from its checkpoint."""
        ckpt = Checkpoint.decode(checkpoint_blob)
        if ckpt.job_id != job_id:
            raise StateError(
                f"checkpoint belongs to {ckpt.job_id!r}, not {job_id!r}"
            )
        state = self._load()
        rec = self._find(state, job_id)
        if rec["status"] != "paused":
            raise StateError(f"job {job_id!r} is {rec['status']}, not paused")
        path = self.root / "checkpoints" / f"{job_id}.unnd"
        path.write_bytes(checkpoint_blob)
        rec["record"]["completed_epochs"] = ckpt.completed_epochs
        rec["status"] = "queued"
        rec["checkpoint"] = str(path.relative_to(self.root))
        self._save(state)

    # -- the run itself

    def run(
        self,
        policy: str,
        sjf_metric: str = "epochs",
        capacity: int | None = None,
        release_lag: int = 0,
        config: memory.CostModelConfig | None = None,
    ) -> TrainReport:
        config = config or memory.CostModelConfig()
        state = self._load()
        ready = [r for r in state["jobs"] if r["status"] == "queued"]
        if not ready:
            raise StateError("queue holds no runnable jobs")
        jobs = [TrainingJob.from_dict(r["record"]) for r in ready]
        datasets = {j.job_id: self.store.get(j.dataset_hash) for j in jobs}

        estimates = {
            j.job_id: memory.estimate_model(
                j.graph, j.hypers, datasets[j.job_id].nbytes, config
            )
            for j in jobs
        }
        unified = memory.estimate_hybrid(list(estimates.values()))
        baseline = memory.baseline_concurrent(list(estimates.values()))
        if capacity is not None and unified.total > capacity:
            raise AdmissionError(unified.total, capacity)

        hybrid = unify_jobs(jobs, {r["record"]["job_id"]: r for r in ready}, self.root)
        plan = schedule.make_plan(policy, jobs, sjf_metric=sjf_metric)
        schedule.check_plan(plan, jobs)

        flag = self.root / "control" / RUN_FLAG
        flag.touch()
        outputs: dict[str, str] = {}
        worker_error: list[BaseException] = []
        snapshots: queue_mod.Queue = queue_mod.Queue()

        def separator_worker():
            while True:
                item = snapshots.get()
                try:
                    if item is None:
                        return
                    job_id, snapshot = item
                    graph, params = separate(snapshot, job_id)
                    target = self.root / "outputs" / f"{job_id}.unnd"
                    tmp = target.with_suffix(".tmp")
                    tmp.write_bytes(package(graph, params))
                    tmp.replace(target)
                    outputs[job_id] = str(target.relative_to(self.root))
                except BaseException as exc:  # surfaced after the run
                    worker_error.append(exc)
                finally:
                    snapshots.task_done()

        worker = threading.Thread(target=separator_worker, daemon=True)
        worker.start()

        def completion_sink(job_id, snapshot, result):
            # finished outputs must hit disk before a later completion lands
            snapshots.join()
            snapshots.put((job_id, snapshot))
            self._flush_progress(state, ready, job_id, "complete", result.epochs_completed)

        def pause_sink(job_id, ckpt):
            path = self.root / "checkpoints" / f"{job_id}.unnd"
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(ckpt.encode())
            tmp.replace(path)
            rec = self._find(state, job_id)
            rec["checkpoint"] = str(path.relative_to(self.root))
            self._flush_progress(state, ready, job_id, "paused", ckpt.completed_epochs)

        def pause_poll():
            hits = []
            for rec in ready:
                job_id = rec["record"]["job_id"]
                marker = self._marker(job_id)
                if marker.exists():
                    marker.unlink()
                    hits.append(job_id)
            return hits

        trainer = Trainer(
            hybrid,
            plan,
            jobs,
            datasets,
            completion_sink=completion_sink,
            pause_sink=pause_sink,
            pause_poll=pause_poll,
            slice_observer=lambda job_id, epoch: self._flush_progress(
                state, ready, job_id, "training", epoch + 1
            ),
        )
        try:
            report = trainer.run()
            snapshots.join()
        finally:
            snapshots.put(None)
            worker.join()
            flag.unlink(missing_ok=True)
        if worker_error:
            raise worker_error[0]

        executed_plan = SchedulePlan(
            plan.policy, tuple(Slice(j, e) for j, e in report.executed)
        )
        trace = memory.trace_memory(executed_plan, estimates, release_lag)
        sample_counts = {j.job_id: datasets[j.job_id].sample_count for j in jobs}
        report.simulated_unified_time = memory.simulated_unified_time(
            executed_plan, jobs, sample_counts, config
        )
        report.simulated_baseline_time = memory.simulated_baseline_time(
            jobs, sample_counts, config
        )
        report.memory_trace_ref = "reports/memory_trace.csv"

        self._write_reports(report, unified, baseline, trace, outputs)
        self._finalize_queue(state, ready, report)
        return report

    # -- report files

    def _write_reports(self, report, unified, baseline, trace, outputs) -> None:
        reports = self.root / "reports"
        (reports / "memory_trace.csv").write_text(memory.write_trace(trace))
        doc = report.to_dict(with_wall=False)
        doc["outputs"] = dict(sorted(outputs.items()))
        (reports / "report.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True)
        )
        mem_doc = {
            "unified": unified.to_dict(),
            "baseline": baseline.to_dict(),
            "reduction_percent": memory.reduction_percent(unified, baseline),
            "simulated_unified_time": report.simulated_unified_time,
            "simulated_baseline_time": report.simulated_baseline_time,
            "trace_file": report.memory_trace_ref,
        }
        (reports / "memory.json").write_text(
            json.dumps(mem_doc, indent=2, sort_keys=True)
        )
        lines = ["job_id,epoch,train_loss,train_accuracy"]
        for job_id in sorted(report.jobs):
            for epoch, loss, acc in report.jobs[job_id].curve:
                lines.append(f"{job_id},{epoch},{loss!r},{acc!r}")
        (reports / "training_curves.csv").write_text("\n".join(lines) + "\n")

    def _flush_progress(self, state, ready, job_id, status, epochs_done) -> None:
        rec = self._find(state, job_id)
        rec["status"] = status
        rec["record"]["completed_epochs"] = epochs_done
        self._save(state)

    def _finalize_queue(self, state, ready, report: TrainReport) -> None:
        for rec in ready:
            job_id = rec["record"]["job_id"]
            result = report.jobs[job_id]
            rec["status"] = result.status
            rec["record"]["completed_epochs"] = result.epochs_completed
            if result.status == "aborted":
                rec["abort_reason"] = result.abort_reason
        self._save(state)

    # -- saved reports

    def read_report(self) -> dict:
        path = self.root / "reports" / "report.json"
        if not path.exists():
            raise StateError("no completed run in this workspace")
        return json.loads(path.read_text())

    def read_memory_report(self) -> dict:
        path = self.root / "reports" / "memory.json"
        if not path.exists():
            raise StateError("no completed run in this workspace")
        return json.loads(path.read_text())

    def read_curves(self) -> str:
        path = self.root / "reports" / "training_curves.csv"
        if not path.exists():
            raise StateError("no completed run in this workspace")
        return path.read_text()

    def read_trace(self) -> str:
        path = self.root / "reports" / "memory_trace.csv"
        if not path.exists():
            raise StateError("no completed run in this workspace")
        return path.read_text()


def unify_jobs(jobs, records, root: Path):
    """Merge, then restore any checkpointed job into the fresh hybrid."""
    from .unify import merge

    hybrid = merge(jobs)
    for job in jobs:
        rec = records[job.job_id]
        if rec.get("checkpoint") and job.completed_epochs > 0:
            blob = (root / rec["checkpoint"]).read_bytes()
            restore_checkpoint(hybrid, Checkpoint.decode(blob))
    return hybrid
