"""Command-line client for the training service.

Every command talks to the same HTTP surface: either a remote server
(--server) or an in-process app bound to a local workspace directory
(--workspace, the default). Exit codes: 0 success, 2 validation or
state errors, 3 admission rejections, 4 when a run finished but at
least one job aborted.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

EXIT_BY_CATEGORY = {"validation": 2, "state": 2, "admission": 3}
EXIT_ABORTED = 4


def make_client(workspace: str, server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app(workspace))


def fail_from(response) -> None:
    try:
        detail = response.json()["detail"]
        category = detail.get("category", "validation")
        message = detail.get("message", str(detail))
    except Exception:
        category, message = "validation", response.text
    click.echo(f"error ({category}): {message}", err=True)
    sys.exit(EXIT_BY_CATEGORY.get(category, 2))


def checked(response):
    if response.status_code >= 400:
        fail_from(response)
    return response


@click.group()
@click.option(
    "--workspace",
    "-w",
    envvar="HYBRIDNN_WORKSPACE",
    default="hybridnn-workspace",
    show_default=True,
    help="Local workspace directory (used when no --server is given).",
)
@click.option("--server", envvar="HYBRIDNN_SERVER", default=None, help="Service URL.")
@click.pass_context
def main(ctx, workspace, server):
    """Submit models, train them as one hybrid, and collect the results."""
    ctx.obj = {"workspace": workspace, "server": server}


def client_of(ctx):
    return make_client(ctx.obj["workspace"], ctx.obj["server"])


@main.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.argument("hypers", type=click.Path(exists=True, dir_okay=False))
@click.option("--priority", type=int, default=None, help="Lower value runs first.")
@click.pass_context
def submit(ctx, model, dataset, hypers, priority):
    """Queue one training job from its three definition files."""
    data = {}
    if priority is not None:
        data["priority"] = str(priority)
    with client_of(ctx) as client:
        response = checked(
            client.post(
                "/jobs",
                files={
                    "model": (Path(model).name, Path(model).read_bytes()),
                    "dataset": (Path(dataset).name, Path(dataset).read_bytes()),
                    "hypers": (Path(hypers).name, Path(hypers).read_bytes()),
                },
                data=data,
            )
        )
    body = response.json()
    click.echo(body["job_id"])


@main.command()
@click.option(
    "--policy",
    type=click.Choice(["fcfs", "priority", "sjf", "rr"]),
    required=True,
)
@click.option(
    "--sjf-metric",
    type=click.Choice(["size", "epochs"]),
    default="epochs",
    show_default=True,
)
@click.option("--capacity", type=int, default=None, help="Device capacity in bytes.")
@click.option("--release-lag", type=int, default=0, show_default=True)
@click.pass_context
def run(ctx, policy, sjf_metric, capacity, release_lag):
    """Merge the queue, train under a policy, write outputs and reports."""
    payload = {
        "policy": policy,
        "sjf_metric": sjf_metric,
        "release_lag": release_lag,
    }
    if capacity is not None:
        payload["capacity"] = capacity
    with client_of(ctx) as client:
        response = checked(client.post("/runs", json=payload))
    body = response.json()
    aborted = False
    for job_id in sorted(body["jobs"]):
        job = body["jobs"][job_id]
        line = f"{job_id}: {job['status']}"
        if job["status"] == "complete":
            line += (
                f" (test acc {job['final_test_accuracy']:.3f},"
                f" slice {job['completion_index']})"
            )
        elif job["status"] == "aborted":
            aborted = True
            line += f" ({job['abort_reason']})"
        click.echo(line)
    click.echo(
        f"simulated time: unified {body['simulated_unified_time']:.1f}"
        f" vs baseline {body['simulated_baseline_time']:.1f}"
    )
    if aborted:
        sys.exit(EXIT_ABORTED)


@main.command()
@click.pass_context
def status(ctx):
    """List every job and its progress."""
    with client_of(ctx) as client:
        response = checked(client.get("/jobs"))
    rows = response.json()
    if not rows:
        click.echo("queue is empty")
        return
    for row in rows:
        label = row["status"]
        if label in ("training", "paused", "complete"):
            label += f" ({row['epochs_completed']}/{row['epochs_total']})"
        else:
            label += f" (0/{row['epochs_total']})"
        click.echo(
            f"{row['job_id']}  {label:<18} prio={row['priority']}"
            f"  model={row['model']}  data={row['dataset']}"
        )


@main.command()
@click.argument("job_id")
@click.pass_context
def pause(ctx, job_id):
    """Checkpoint a training job at its next epoch boundary."""
    with client_of(ctx) as client:
        checked(client.post(f"/jobs/{job_id}/pause"))
    click.echo(f"pause requested for {job_id}")


@main.command()
@click.argument("job_id")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def resume(ctx, job_id, checkpoint):
    """Re-queue a paused job from a checkpoint file."""
    blob = Path(checkpoint).read_bytes()
    with client_of(ctx) as client:
        checked(
            client.post(
                f"/jobs/{job_id}/resume",
                files={"checkpoint": (Path(checkpoint).name, blob)},
            )
        )
    click.echo(f"{job_id} queued from checkpoint")


@main.command()
@click.option("--memory", "kind", flag_value="memory")
@click.option("--training", "kind", flag_value="training")
@click.option("--json", "as_json", is_flag=True, help="Print the raw document.")
@click.pass_context
def report(ctx, kind, as_json):
    """Show the memory or training summary of the last run."""
    if kind is None:
        click.echo("pass --memory or --training", err=True)
        sys.exit(2)
    with client_of(ctx) as client:
        if kind == "memory":
            body = checked(client.get("/reports/memory")).json()
            if as_json:
                click.echo(json.dumps(body, indent=2, sort_keys=True))
                return
            unified, baseline = body["unified"], body["baseline"]
            click.echo(f"unified peak:   {unified['total']} bytes")
            click.echo(f"baseline peak:  {baseline['total']} bytes")
            click.echo(f"reduction:      {body['reduction_percent']:.1f}%")
            click.echo(
                f"simulated time: unified {body['simulated_unified_time']:.1f}"
                f" vs baseline {body['simulated_baseline_time']:.1f}"
            )
            click.echo(f"trace series:   {body['trace_file']}")
        else:
            body = checked(client.get("/reports/training")).json()
            if as_json:
                click.echo(json.dumps(body, indent=2, sort_keys=True))
                return
            for job_id in sorted(body["jobs"]):
                job = body["jobs"][job_id]
                click.echo(
                    f"{job_id}: {job['status']},"
                    f" train loss {fmt(job['final_train_loss'])},"
                    f" test acc {fmt(job['final_test_accuracy'])}"
                )
            curves = checked(client.get("/reports/training/curves")).text
            click.echo(curves.rstrip("\n"))


def fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


@main.command()
@click.argument("job_id")
@click.argument("dest", type=click.Path(dir_okay=False))
@click.option(
    "--checkpoint", is_flag=True, help="Fetch the pause checkpoint instead."
)
@click.pass_context
def fetch(ctx, job_id, dest, checkpoint):
    """Download a job's trained model (or checkpoint) to a local file."""
    path = f"/checkpoints/{job_id}" if checkpoint else f"/outputs/{job_id}"
    with client_of(ctx) as client:
        response = checked(client.get(path))
    Path(dest).write_bytes(response.content)
    click.echo(dest)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service over the local workspace."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ctx.obj["workspace"]), host=host, port=port)


if __name__ == "__main__":
    main()
