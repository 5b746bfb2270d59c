"""The ``mlforge`` command-line client: a thin wrapper over the /v1 API.

Exit codes: 0 success, 1 usage error, 2 remote error (the gateway's error
code appears verbatim on stderr), 3 connectivity failure.
"""

from __future__ import annotations

import base64
import json
import os
import sys

import click
import httpx

from mlforge import errors
from mlforge.canonical import fmt_float
from mlforge.cli.packaging import collect_files
from mlforge.leaderboard.board import iso_utc, render_table

click.exceptions.UsageError.exit_code = 1

DEFAULT_ENDPOINT = "http://127.0.0.1:8040"


def build_client(endpoint: str) -> httpx.Client:
    """Factory for the HTTP client; tests substitute an in-process transport."""
    return httpx.Client(base_url=endpoint, timeout=30.0)


class Ctx:
    def __init__(self, endpoint: str, user: str, output: str):
        self.endpoint = endpoint
        self.user = user
        self.output = output
        self._client: httpx.Client | None = None

    @property
    def client(self) -> httpx.Client:
        if self._client is None:
            self._client = build_client(self.endpoint)
        return self._client

    def request(self, method: str, path: str, **kwargs) -> httpx.Response:
        headers = kwargs.pop("headers", {})
        headers.setdefault("X-MLForge-User", self.user)
        try:
            resp = self.client.request(method, path, headers=headers, **kwargs)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach gateway: {exc}", err=True)
            raise SystemExit(3) from None
        if resp.status_code >= 400:
            try:
                body = resp.json()
                code, message = body.get("code", "error"), body.get("message", "")
            except json.JSONDecodeError:
                code, message = "error", resp.text
            click.echo(f"error: {code}: {message}", err=True)
            raise SystemExit(2)
        return resp

    def emit(self, resp: httpx.Response, render) -> None:
        """JSON mode prints the gateway body byte-for-byte; text mode renders."""
        if self.output == "json":
            sys.stdout.buffer.write(resp.content)
            sys.stdout.buffer.flush()
        else:
            render(resp)


def _parse_hyperparams(pairs: tuple[str, ...]) -> dict:
    out: dict[str, float | str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--hp expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            out[key] = float(raw)
        except ValueError:
            out[key] = raw
    return out


def _b64_files(files: dict[str, bytes]) -> dict[str, str]:
    return {path: base64.b64encode(data).decode("ascii") for path, data in files.items()}


def _split_dataset_ref(ref: str) -> tuple[str, int | None]:
    if "@v" in ref:
        name, _, ver = ref.rpartition("@v")
        return name, int(ver)
    return ref, None


@click.group()
@click.option("--endpoint", default=DEFAULT_ENDPOINT, show_default=True, help="gateway base URL")
@click.option("--user", default="anonymous", show_default=True, help="acting user")
@click.option(
    "--output", type=click.Choice(["text", "json"]), default="text", show_default=True
)
@click.pass_context
def cli(ctx, endpoint: str, user: str, output: str):
    """Submit, inspect and steer experiment sessions."""
    endpoint = os.environ.get("MLFORGE_ENDPOINT", endpoint)
    user = os.environ.get("MLFORGE_USER", user)
    ctx.obj = Ctx(endpoint, user, output)


# -- run --------------------------------------------------------------------


@cli.command("run")
@click.argument("entrypoint")
@click.option("-d", "--dataset", required=True, help="dataset name or name@vN")
@click.option("--hp", multiple=True, help="hyperparameter key=value (repeatable)")
@click.option("--priority", type=int, default=0, show_default=True)
@click.option("--gpus", type=int, default=1, show_default=True)
@click.option("--cpus", type=int, default=1, show_default=True)
@click.option("--mem-mb", type=int, default=1024, show_default=True)
@click.option("--dir", "directory", default=".", show_default=True, help="code directory to package")
@click.pass_obj
def run_cmd(ctx: Ctx, entrypoint, dataset, hp, priority, gpus, cpus, mem_mb, directory):
    """Package the working directory and run ENTRYPOINT against a dataset."""
    try:
        files = collect_files(directory)
    except errors.EmptyDirectory as exc:
        raise click.UsageError(str(exc)) from None
    if entrypoint not in files:
        raise click.UsageError(f"entrypoint {entrypoint!r} not found in {directory}")
    body = {
        "dataset": dataset,
        "code_files": _b64_files(files),
        "entrypoint": entrypoint,
        "hyperparams": _parse_hyperparams(hp),
        "priority": priority,
        "resources": {"gpus": gpus, "cpus": cpus, "mem_mb": mem_mb},
    }
    resp = ctx.request("POST", "/v1/sessions", json=body)
    ctx.emit(resp, lambda r: click.echo(r.json()["session_id"]))


# -- dataset ------------------------------------------------------------------


@cli.group("dataset")
def dataset_group():
    """Manage datasets and their leaderboards."""


@dataset_group.command("push")
@click.argument("name")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--board-metric", default=None, help="metric ranked on the board")
@click.option(
    "--board-direction",
    type=click.Choice(["maximize", "minimize"]),
    default=None,
)
@click.pass_obj
def dataset_push(ctx: Ctx, name, directory, board_metric, board_direction):
    """Upload a directory as the next version of NAME."""
    try:
        files = collect_files(directory)
    except errors.EmptyDirectory as exc:
        raise click.UsageError(str(exc)) from None
    body = {"name": name, "files": _b64_files(files)}
    if board_metric:
        body["board"] = {"metric": board_metric, "direction": board_direction or "maximize"}
    resp = ctx.request("POST", "/v1/datasets", json=body)
    ctx.emit(resp, lambda r: click.echo(r.json()["ref"]))


@dataset_group.command("list")
@click.option("--name", default=None, help="filter by dataset name")
@click.pass_obj
def dataset_list(ctx: Ctx, name):
    params = {"name": name} if name else {}
    resp = ctx.request("GET", "/v1/datasets", params=params)

    def render(r):
        rows = [
            [d["ref"], str(d["files"]), str(d["size_bytes"]),
             "-" if d["board"] is None else f"{d['board']['metric']}:{d['board']['direction']}"]
            for d in r.json()["datasets"]
        ]
        click.echo(render_table(["dataset", "files", "bytes", "board"], rows), nl=False)

    ctx.emit(resp, render)


@dataset_group.command("board")
@click.argument("dataset")
@click.option("--top", type=int, default=None, help="show only the best k entries")
@click.option("--per-user-best", is_flag=True, default=False)
@click.pass_obj
def dataset_board(ctx: Ctx, dataset, top, per_user_best):
    """Show the leaderboard for DATASET (name or name@vN; latest by default)."""
    name, version = _split_dataset_ref(dataset)
    if version is None:
        listing = ctx.request("GET", "/v1/datasets", params={"name": name}).json()["datasets"]
        if not listing:
            click.echo(f"error: unknown_dataset: dataset {name!r} not found", err=True)
            raise SystemExit(2)
        version = listing[-1]["version"]
    params: dict = {}
    if top is not None:
        params["top"] = top
    if per_user_best:
        params["per_user_best"] = "true"
    resp = ctx.request("GET", f"/v1/datasets/{name}/{version}/board", params=params)

    def render(r):
        rows = [
            [str(e["rank"]), e["session_id"], e["user"], fmt_float(e["value"]),
             iso_utc(e["achieved_at"])]
            for e in r.json()["entries"]
        ]
        click.echo(render_table(["rank", "session", "user", "value", "achieved_at"], rows), nl=False)

    ctx.emit(resp, render)


# -- logs and plots ----------------------------------------------------------------


def _log_line(point: dict) -> str:
    return f"{point['step']} {point['name']} {fmt_float(point['value'])}"


@cli.command("logs")
@click.argument("session")
@click.option("--tail", type=int, default=None, help="only the last k points")
@click.option("--name", default=None, help="metric name filter")
@click.option("--follow", is_flag=True, default=False, help="stream live points")
@click.pass_obj
def logs_cmd(ctx: Ctx, session, tail, name, follow):
    """Print metric points for SESSION."""
    if follow:
        _follow_logs(ctx, session, name)
        return
    params: dict = {}
    if tail is not None:
        params["tail"] = tail
    if name is not None:
        params["name"] = name
    resp = ctx.request("GET", f"/v1/sessions/{session}/logs", params=params)
    ctx.emit(resp, lambda r: [click.echo(_log_line(p)) for p in r.json()["points"]])


def _follow_logs(ctx: Ctx, session: str, name: str | None) -> None:
    headers = {"X-MLForge-User": ctx.user}
    try:
        with ctx.client.stream("GET", f"/v1/sessions/{session}/events", headers=headers) as resp:
            if resp.status_code >= 400:
                resp.read()
                body = resp.json()
                click.echo(f"error: {body.get('code')}: {body.get('message')}", err=True)
                raise SystemExit(2)
            for line in resp.iter_lines():
                if not line.startswith("data: "):
                    continue
                event = json.loads(line[len("data: "):])
                if event["type"] == "metric" and (name is None or event["name"] == name):
                    click.echo(_log_line(event))
                elif event["type"] == "end":
                    return
    except httpx.HTTPError as exc:
        click.echo(f"error: cannot reach gateway: {exc}", err=True)
        raise SystemExit(3) from None


@cli.command("plot")
@click.argument("sessions", nargs=-1, required=True)
@click.option("--metric", default="loss", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="write CSV here")
@click.pass_obj
def plot_cmd(ctx: Ctx, sessions, metric, out):
    """Export step-aligned metric series for one or more SESSIONS as CSV."""
    first, *rest = sessions
    params = [("metric", metric)] + [("extra", s) for s in rest]
    resp = ctx.request("GET", f"/v1/sessions/{first}/plot.csv", params=params)
    if out:
        with open(out, "wb") as fh:
            fh.write(resp.content)
        click.echo(out)
    else:
        ctx.emit(resp, lambda r: sys.stdout.buffer.write(r.content))


# -- session group ------------------------------------------------------------------


@cli.group("session")
def session_group():
    """Inspect and control sessions."""


@session_group.command("list")
@click.option("--user", default=None)
@click.option("--dataset", default=None)
@click.option("--state", default=None)
@click.pass_obj
def session_list(ctx: Ctx, user, dataset, state):
    params = {k: v for k, v in (("user", user), ("dataset", dataset), ("state", state)) if v}
    resp = ctx.request("GET", "/v1/sessions", params=params)

    def render(r):
        rows = [
            [s["session_id"], s["state"], s["dataset"], str(s["priority"])]
            for s in r.json()["sessions"]
        ]
        click.echo(render_table(["session", "state", "dataset", "priority"], rows), nl=False)

    ctx.emit(resp, render)


@session_group.command("stop")
@click.argument("session")
@click.pass_obj
def session_stop(ctx: Ctx, session):
    resp = ctx.request("POST", f"/v1/sessions/{session}/stop")
    ctx.emit(resp, lambda r: click.echo(f"{r.json()['session_id']} {r.json()['state']}"))


@session_group.command("tune")
@click.argument("session")
@click.option("--hp", multiple=True, required=True, help="hyperparameter key=value")
@click.pass_obj
def session_tune(ctx: Ctx, session, hp):
    """Pause SESSION, change hyperparameters, resume from its checkpoint."""
    body = {"hyperparams": _parse_hyperparams(hp)}
    resp = ctx.request("POST", f"/v1/sessions/{session}/tune", json=body)
    ctx.emit(resp, lambda r: click.echo(f"{r.json()['session_id']} {r.json()['state']}"))


@session_group.command("fork")
@click.argument("session")
@click.option("--checkpoint", default="latest", show_default=True, help="latest, best, or a step")
@click.option("--hp", multiple=True, help="hyperparameter overrides key=value")
@click.pass_obj
def session_fork(ctx: Ctx, session, checkpoint, hp):
    """Branch a new session from SESSION's checkpoint."""
    selector: int | str = int(checkpoint) if checkpoint.isdigit() else checkpoint
    body = {"checkpoint": selector, "hyperparams": _parse_hyperparams(hp)}
    resp = ctx.request("POST", f"/v1/sessions/{session}/fork", json=body)
    ctx.emit(resp, lambda r: click.echo(r.json()["session_id"]))


@session_group.command("reproduce")
@click.argument("session")
@click.pass_obj
def session_reproduce(ctx: Ctx, session):
    """Re-run SESSION's code with its original hyperparameters."""
    resp = ctx.request("POST", f"/v1/sessions/{session}/reproduce")
    ctx.emit(resp, lambda r: click.echo(r.json()["session_id"]))


# -- infer and cluster ---------------------------------------------------------------


@cli.command("infer")
@click.argument("session")
@click.option("--input", "input_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", default="latest", show_default=True, help="latest, best, or a step")
@click.pass_obj
def infer_cmd(ctx: Ctx, session, input_file, checkpoint):
    """Run one prediction from a SESSION checkpoint on an input file."""
    with open(input_file, "rb") as fh:
        data = fh.read()
    selector: int | str = int(checkpoint) if checkpoint.isdigit() else checkpoint
    body = {"input_b64": base64.b64encode(data).decode("ascii"), "checkpoint": selector}
    resp = ctx.request("POST", f"/v1/sessions/{session}/infer", json=body)
    ctx.emit(
        resp,
        lambda r: click.echo(
            f"label {r.json()['label']} confidence {fmt_float(r.json()['confidence'])}"
        ),
    )


@cli.command("cluster")
@click.pass_obj
def cluster_cmd(ctx: Ctx):
    """Show nodes, free resources and the pending queue."""
    resp = ctx.request("GET", "/v1/cluster")

    def render(r):
        body = r.json()
        rows = [
            [n["node_id"], "up" if n["alive"] else "down",
             f"{n['free_gpus']}/{n['total_gpus']}", f"{n['free_cpus']}/{n['total_cpus']}",
             f"{n['free_mem_mb']}/{n['total_mem_mb']}"]
            for n in body["nodes"]
        ]
        click.echo(render_table(["node", "state", "gpus", "cpus", "mem_mb"], rows), nl=False)
        if body["queue"]:
            qrows = [
                [str(q["position"]), q["job_id"], str(q["priority"]), str(q["gpus"])]
                for q in body["queue"]
            ]
            click.echo("queue:")
            click.echo(render_table(["pos", "job", "priority", "gpus"], qrows), nl=False)

    ctx.emit(resp, render)


def main() -> None:
    cli(auto_envvar_prefix="MLFORGE")


if __name__ == "__main__":
    main()
