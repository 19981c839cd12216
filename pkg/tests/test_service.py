"""The HTTP surface and the command-line client over real workspaces."""
import json
import warnings

import numpy as np
import pytest
from click.testing import CliRunner

from hybridnn import cli, formats
from hybridnn.service import create_app
from hybridnn.workspace import Workspace, architecture_blob, parse_model_file

from conftest import blob_splits, mlp_graph

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient


def dataset_bytes(name="svc", classes=2, features=8, train=32, test=8):
    return formats.encode_dataset(blob_splits(name, classes, features, train, test))


def hyper_bytes(epochs=2, batch_size=16, lr=0.05, **extra):
    doc = {"epochs": epochs, "batch_size": batch_size, "learning_rate": lr}
    doc.update(extra)
    return json.dumps(doc).encode()


def model_bytes():
    return architecture_blob(mlp_graph())


def submit(client, model=None, dataset=None, hypers=None, priority=None):
    data = {} if priority is None else {"priority": str(priority)}
    return client.post(
        "/jobs",
        files={
            "model": ("model.unnd", model if model is not None else model_bytes()),
            "dataset": ("data.unnd", dataset if dataset is not None else dataset_bytes()),
            "hypers": ("hypers.json", hypers if hypers is not None else hyper_bytes()),
        },
        data=data,
    )


@pytest.fixture
def client(tmp_path):
    with TestClient(create_app(tmp_path / "ws")) as c:
        yield c


class TestSubmission:
    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}

    def test_submit_assigns_sequential_ids(self, client):
        r1 = submit(client)
        assert r1.status_code == 200
        assert r1.json() == {"job_id": "job-000", "queue_length": 1}
        r2 = submit(client, dataset=dataset_bytes("other"))
        assert r2.json() == {"job_id": "job-001", "queue_length": 2}

    def test_json_graph_is_accepted_as_a_model_file(self, client):
        blob = json.dumps(mlp_graph().to_dict()).encode()
        assert submit(client, model=blob).status_code == 200

    def test_model_with_baked_parameters_is_refused(self, client):
        blob = formats.encode_model(
            {"graph": mlp_graph().to_dict()},
            {"w": np.zeros(3, dtype=np.float32)},
            ["w"],
        )
        r = submit(client, model=blob)
        assert r.status_code == 422
        detail = r.json()["detail"]
        assert detail["category"] == "validation"
        assert "architecture only" in detail["message"]

    def test_invalid_graph_reports_diagnostics_with_context(self, client):
        bad = dict(mlp_graph().to_dict())
        bad["output"] = "ghost"
        r = submit(client, model=json.dumps(bad).encode())
        assert r.status_code == 422
        assert "model file:" in r.json()["detail"]["message"]

    def test_bad_hypers_rejected(self, client):
        r = submit(client, hypers=hyper_bytes(epochs=0))
        assert r.status_code == 422
        assert r.json()["detail"]["category"] == "validation"

    def test_bad_dataset_rejected(self, client):
        r = submit(client, dataset=b"not a container")
        assert r.status_code == 422
        assert "dataset file:" in r.json()["detail"]["message"]

    def test_failed_submission_leaves_the_queue_untouched(self, client):
        submit(client)
        submit(client, hypers=b"{bad json")
        rows = client.get("/jobs").json()
        assert [r["job_id"] for r in rows] == ["job-000"]

    def test_status_row_shape(self, client):
        submit(client, priority=7)
        row = client.get("/jobs/job-000").json()
        assert row["status"] == "queued"
        assert row["epochs_total"] == 2
        assert row["priority"] == 7
        assert row["model"] == mlp_graph().name
        assert len(row["dataset"]) == 12

    def test_unknown_job_lookup_is_a_validation_error(self, client):
        r = client.get("/jobs/job-999")
        assert r.status_code == 422

    def test_duplicate_datasets_share_one_pooled_file(self, client, tmp_path):
        submit(client)
        submit(client)
        stored = list((tmp_path / "ws" / "datasets").glob("*.unnd"))
        assert len(stored) == 1
        rows = client.get("/jobs").json()
        assert rows[0]["dataset"] == rows[1]["dataset"]


class TestRuns:
    def test_empty_queue_is_a_state_conflict(self, client):
        r = client.post("/runs", json={"policy": "fcfs"})
        assert r.status_code == 409
        assert r.json()["detail"]["category"] == "state"

    def test_invalid_policy_is_a_request_validation_error(self, client):
        assert client.post("/runs", json={"policy": "lifo"}).status_code == 422

    def test_capacity_admission_rejection(self, client):
        submit(client)
        r = client.post("/runs", json={"policy": "fcfs", "capacity": 1})
        assert r.status_code == 409
        detail = r.json()["detail"]
        assert detail["category"] == "admission"
        assert "capacity" in detail["message"]
        # the queue survives for a retry with more room
        assert client.get("/jobs/job-000").json()["status"] == "queued"

    def test_full_run_produces_outputs_and_reports(self, client, tmp_path):
        submit(client, priority=5)
        submit(client, dataset=dataset_bytes("second", classes=2), priority=0)
        r = client.post("/runs", json={"policy": "priority"})
        assert r.status_code == 200
        body = r.json()
        assert body["policy"] == "priority"
        assert set(body["outputs"]) == {"job-000", "job-001"}
        for jid in ("job-000", "job-001"):
            assert body["jobs"][jid]["status"] == "complete"
            assert (tmp_path / "ws" / body["outputs"][jid]).exists()
        # job-001 got priority 0, so it finished first
        assert body["jobs"]["job-001"]["completion_index"] == 2
        assert body["jobs"]["job-000"]["completion_index"] == 4

        assert client.get("/jobs/job-000").json()["status"] == "complete"
        report = client.get("/reports/training").json()
        assert report["jobs"]["job-000"]["status"] == "complete"
        assert "wall_time" not in report["jobs"]["job-000"]
        mem = client.get("/reports/memory").json()
        assert mem["unified"]["total"] <= mem["baseline"]["total"]
        trace = client.get("/reports/memory/trace").text
        assert trace.splitlines()[0] == "slice,job_id,epoch,occupied_bytes"
        curves = client.get("/reports/training/curves").text
        assert curves.splitlines()[0] == "job_id,epoch,train_loss,train_accuracy"

    def test_fetched_output_is_a_loadable_model(self, client):
        from hybridnn.separate import load_package

        submit(client)
        client.post("/runs", json={"policy": "fcfs"})
        blob = client.get("/outputs/job-000").content
        graph, params = load_package(blob)
        assert graph == mlp_graph()
        assert sorted(params) == ["fc1.bias", "fc1.weight", "fc2.bias", "fc2.weight"]

    def test_reports_before_any_run_conflict(self, client):
        for path in (
            "/reports/training", "/reports/memory",
            "/reports/memory/trace", "/reports/training/curves",
        ):
            assert client.get(path).status_code == 409

    def test_missing_output_conflicts(self, client):
        assert client.get("/outputs/job-000").status_code == 409
        assert client.get("/checkpoints/job-000").status_code == 409

    def test_pause_without_an_active_run_conflicts(self, client):
        submit(client)
        r = client.post("/jobs/job-000/pause")
        assert r.status_code == 409
        assert "no run is active" in r.json()["detail"]["message"]


class TestWorkspacePauseResume:
    def test_marker_pause_checkpoint_resume_cycle(self, tmp_path):
        ws = Workspace(tmp_path / "ws")
        ws.submit(model_bytes(), dataset_bytes(), hyper_bytes(epochs=3))
        ws.submit(model_bytes(), dataset_bytes("other"), hyper_bytes(epochs=2))
        # marker placed up front pauses job-000 at the first slice boundary
        (ws.root / "control" / "pause-job-000").touch()
        ws.run("fcfs")
        rows = {r["job_id"]: r for r in ws.status()}
        assert rows["job-000"]["status"] == "paused"
        assert rows["job-001"]["status"] == "complete"
        ckpt_path = ws.root / "checkpoints" / "job-000.unnd"
        assert ckpt_path.exists()

        ws.resume("job-000", ckpt_path.read_bytes())
        assert {r["job_id"]: r["status"] for r in ws.status()}["job-000"] == "queued"
        ws.run("fcfs")
        assert {r["job_id"]: r["status"] for r in ws.status()}["job-000"] == "complete"
        assert (ws.root / "outputs" / "job-000.unnd").exists()

    def test_interrupted_run_output_matches_straight_run(self, tmp_path):
        interrupted = Workspace(tmp_path / "a")
        interrupted.submit(model_bytes(), dataset_bytes(), hyper_bytes(epochs=3))
        (interrupted.root / "control" / "pause-job-000").touch()
        interrupted.run("fcfs")
        ckpt = (interrupted.root / "checkpoints" / "job-000.unnd").read_bytes()
        interrupted.resume("job-000", ckpt)
        interrupted.run("fcfs")

        straight = Workspace(tmp_path / "b")
        straight.submit(model_bytes(), dataset_bytes(), hyper_bytes(epochs=3))
        straight.run("fcfs")

        a = (interrupted.root / "outputs" / "job-000.unnd").read_bytes()
        b = (straight.root / "outputs" / "job-000.unnd").read_bytes()
        assert a == b

    def test_resume_demands_a_matching_paused_job(self, tmp_path):
        ws = Workspace(tmp_path / "ws")
        ws.submit(model_bytes(), dataset_bytes(), hyper_bytes())
        from hybridnn.train import Checkpoint

        ckpt = Checkpoint(
            job_id="job-000", completed_epochs=1, data_cursor=1,
            optimizer_kind="sgd", optimizer_step=4, momentum=0.0, params={},
        )
        with pytest.raises(Exception, match="not paused"):
            ws.resume("job-000", ckpt.encode())
        wrong = Checkpoint(
            job_id="job-999", completed_epochs=1, data_cursor=1,
            optimizer_kind="sgd", optimizer_step=4, momentum=0.0, params={},
        )
        with pytest.raises(Exception, match="belongs to"):
            ws.resume("job-000", wrong.encode())

    def test_architecture_blob_roundtrips_through_parse(self):
        graph = parse_model_file(architecture_blob(mlp_graph()))
        assert graph == mlp_graph()


class TestCommandLine:
    def invoke(self, tmp_path, *args):
        runner = CliRunner()
        return runner.invoke(
            cli.main, ["-w", str(tmp_path / "ws"), *args], catch_exceptions=False
        )

    def write_inputs(self, tmp_path, hypers=None):
        model = tmp_path / "model.unnd"
        model.write_bytes(model_bytes())
        data = tmp_path / "data.unnd"
        data.write_bytes(dataset_bytes())
        hp = tmp_path / "hypers.json"
        hp.write_bytes(hypers if hypers is not None else hyper_bytes())
        return str(model), str(data), str(hp)

    def test_submit_prints_the_job_id(self, tmp_path):
        model, data, hp = self.write_inputs(tmp_path)
        result = self.invoke(tmp_path, "submit", model, data, hp)
        assert result.exit_code == 0
        assert result.output.strip() == "job-000"

    def test_submit_validation_failure_exits_2(self, tmp_path):
        model, data, hp = self.write_inputs(tmp_path, hypers=b'{"epochs": 0}')
        result = self.invoke(tmp_path, "submit", model, data, hp)
        assert result.exit_code == 2
        assert "error (validation)" in result.output

    def test_status_reads_back_the_queue(self, tmp_path):
        model, data, hp = self.write_inputs(tmp_path)
        self.invoke(tmp_path, "submit", model, data, hp)
        result = self.invoke(tmp_path, "status")
        assert result.exit_code == 0
        assert "job-000" in result.output
        assert "queued (0/2)" in result.output

    def test_status_of_an_empty_queue(self, tmp_path):
        result = self.invoke(tmp_path, "status")
        assert result.exit_code == 0
        assert "queue is empty" in result.output

    def test_run_then_reports_then_fetch(self, tmp_path):
        model, data, hp = self.write_inputs(tmp_path)
        self.invoke(tmp_path, "submit", model, data, hp)
        result = self.invoke(tmp_path, "run", "--policy", "fcfs")
        assert result.exit_code == 0
        assert "job-000: complete" in result.output
        assert "simulated time:" in result.output

        mem = self.invoke(tmp_path, "report", "--memory")
        assert mem.exit_code == 0
        assert "reduction:" in mem.output
        training = self.invoke(tmp_path, "report", "--training")
        assert training.exit_code == 0
        assert "job_id,epoch,train_loss,train_accuracy" in training.output
        as_json = self.invoke(tmp_path, "report", "--memory", "--json")
        assert json.loads(as_json.output)["trace_file"] == "reports/memory_trace.csv"

        dest = tmp_path / "model-out.unnd"
        fetched = self.invoke(tmp_path, "fetch", "job-000", str(dest))
        assert fetched.exit_code == 0
        assert dest.read_bytes()[:4] == b"UNND"

    def test_run_with_empty_queue_exits_2(self, tmp_path):
        result = self.invoke(tmp_path, "run", "--policy", "fcfs")
        assert result.exit_code == 2
        assert "error (state)" in result.output

    def test_admission_rejection_exits_3(self, tmp_path):
        model, data, hp = self.write_inputs(tmp_path)
        self.invoke(tmp_path, "submit", model, data, hp)
        result = self.invoke(tmp_path, "run", "--policy", "fcfs", "--capacity", "1")
        assert result.exit_code == 3
        assert "error (admission)" in result.output

    def test_aborted_job_exits_4(self, tmp_path):
        model, data, hp = self.write_inputs(
            tmp_path, hypers=hyper_bytes(lr=1e8)
        )
        self.invoke(tmp_path, "submit", model, data, hp)
        result = self.invoke(tmp_path, "run", "--policy", "fcfs")
        assert result.exit_code == 4
        assert "aborted" in result.output

    def test_report_without_a_kind_exits_2(self, tmp_path):
        result = self.invoke(tmp_path, "report")
        assert result.exit_code == 2
