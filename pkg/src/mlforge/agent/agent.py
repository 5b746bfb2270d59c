"""Node agent: reports free resources, caches environments, mounts datasets
once per host, and steps simulated workloads under master-granted allocations."""

from __future__ import annotations

import base64
import json
import shutil
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

from mlforge import errors
from mlforge.canonical import canonical_json, sha256_hex
from mlforge.clock import SystemClock
from mlforge.metrics.store import MetricPoint
from mlforge.scheduler.types import NodeDescriptor, ResourceReport
from mlforge.agent.trainer import SimTrainerState

RUNNING = "RUNNING"
PAUSED = "PAUSED"
FINISHED = "FINISHED"
FINISHED_BY_USER = "FINISHED_BY_USER"
LOST = "LOST"

_TERMINAL = (FINISHED, FINISHED_BY_USER, LOST)


@dataclass(frozen=True)
class EnvironmentSpec:
    """Opaque execution environment: base image tag plus pinned packages."""

    base_image: str
    packages: tuple[tuple[str, str], ...] = ()

    def canonical(self) -> EnvironmentSpec:
        return EnvironmentSpec(
            base_image=self.base_image,
            packages=tuple(sorted(set((str(n), str(v)) for n, v in self.packages))),
        )

    def digest(self) -> str:
        spec = self.canonical()
        return sha256_hex(
            canonical_json({"base_image": spec.base_image, "packages": list(spec.packages)})
        )


@dataclass(frozen=True)
class EnvHandle:
    env_digest: str
    build_count_at_creation: int
    cache_hit: bool


@dataclass
class Mount:
    path: str
    refcount: int = 0
    sessions: set[str] = field(default_factory=set)


def parse_dataset_id(dataset_id: str) -> tuple[str, int | None]:
    """Split ``name@vN`` (or bare ``name``, meaning latest) into parts."""
    if "@v" in dataset_id:
        name, _, ver = dataset_id.rpartition("@v")
        try:
            return name, int(ver)
        except ValueError:
            raise errors.UnknownDataset(f"bad dataset reference {dataset_id!r}") from None
    return dataset_id, None


def encode_launch_request(
    session_id: str,
    code_digest: str,
    env_digest: str,
    dataset_path: str,
    hyperparams: dict,
    resources: tuple[int, int, int],
    total_steps: int,
    checkpoint: SimTrainerState | None = None,
) -> bytes:
    """Canonical wire form of a launch RPC from master to agent."""
    return canonical_json(
        {
            "session_id": session_id,
            "code_digest": code_digest,
            "env_digest": env_digest,
            "dataset_path": dataset_path,
            "hyperparams": hyperparams,
            "resources": list(resources),
            "total_steps": total_steps,
            "checkpoint": (
                None if checkpoint is None else base64.b64encode(checkpoint.to_bytes()).decode()
            ),
        }
    )


def decode_launch_request(data: bytes) -> dict:
    payload = json.loads(data.decode("utf-8"))
    payload["resources"] = tuple(payload["resources"])
    if payload["checkpoint"] is not None:
        payload["checkpoint"] = SimTrainerState.from_bytes(
            base64.b64decode(payload["checkpoint"])
        )
    return payload


def encode_control_request(session_id: str, command: str) -> bytes:
    return canonical_json({"session_id": session_id, "command": command})


def decode_control_request(data: bytes) -> tuple[str, str]:
    payload = json.loads(data.decode("utf-8"))
    return payload["session_id"], payload["command"]


class Run:
    """One workload execution; steps only when the driver advances it."""

    def __init__(
        self,
        session_id: str,
        state: SimTrainerState,
        total_steps: int,
        checkpoint_interval: int,
        clock,
        step_time: float,
        emit_point,
        write_checkpoint,
        on_status,
    ):
        self.session_id = session_id
        self.state = state
        self.total_steps = total_steps
        self.checkpoint_interval = max(1, checkpoint_interval)
        self.status = RUNNING
        self._clock = clock
        self._step_time = step_time
        self._emit_point = emit_point
        self._write_checkpoint = write_checkpoint
        self._on_status = on_status
        self._lock = threading.RLock()

    @property
    def done(self) -> bool:
        return self.status in _TERMINAL

    def advance(self, max_steps: int | None = None) -> int:
        """Step up to ``max_steps`` (or to completion); returns steps taken."""
        taken = 0
        with self._lock:
            while self.status == RUNNING and self.state.step < self.total_steps:
                if max_steps is not None and taken >= max_steps:
                    break
                self.state.step_once()
                taken += 1
                self._clock.tick(self._step_time)
                at = self._clock.now()
                finishing = self.state.step >= self.total_steps
                if finishing:
                    self._write_checkpoint(self, is_final=True)
                elif self.state.step % self.checkpoint_interval == 0:
                    self._write_checkpoint(self, is_final=False)
                loss = self.state.loss()
                step = self.state.step
                self._emit_point(MetricPoint(self.session_id, step, "loss", loss, at))
                self._emit_point(MetricPoint(self.session_id, step, "acc", 1.0 - loss, at))
                if finishing:
                    self._set_status(FINISHED, "all steps completed")
        return taken

    def _set_status(self, status: str, detail: str) -> None:
        self.status = status
        self._on_status(self, status, detail)

    def pause(self) -> str:
        with self._lock:
            if self.status != RUNNING:
                raise errors.IllegalTransition(f"cannot pause a {self.status} run")
            self._write_checkpoint(self, is_final=False)
            self._set_status(PAUSED, f"paused at step {self.state.step}")
        return self.status

    def resume(self) -> str:
        with self._lock:
            if self.status != PAUSED:
                raise errors.IllegalTransition(f"cannot resume a {self.status} run")
            self._set_status(RUNNING, f"resumed at step {self.state.step}")
        return self.status

    def stop(self) -> str:
        with self._lock:
            if self.status not in (RUNNING, PAUSED):
                raise errors.IllegalTransition(f"cannot stop a {self.status} run")
            self._write_checkpoint(self, is_final=True)
            self._set_status(FINISHED_BY_USER, f"stopped at step {self.state.step}")
        return self.status

    def mark_lost(self) -> None:
        with self._lock:
            if self.status not in _TERMINAL:
                self._set_status(LOST, "node died")


class NodeAgent:
    """Daemon-side state for one node; all mutations are check-then-act atomic."""

    def __init__(
        self,
        descriptor: NodeDescriptor,
        storage,
        clock=None,
        metric_sink=None,
        on_transition=None,
        checkpoint_interval: int = 5,
        step_time: float = 1.0,
        base_dir: str | Path | None = None,
    ):
        self.descriptor = descriptor
        self.storage = storage
        self.clock = clock or SystemClock()
        self.metric_sink = metric_sink or (lambda point: None)
        self.on_transition = on_transition or (lambda run, status, detail: None)
        self.checkpoint_interval = checkpoint_interval
        self.step_time = step_time
        self._base_dir = Path(base_dir) if base_dir else None
        self.env_build_failures: set[str] = set()

        self.build_count = 0
        self._env_cache: dict[str, str] = {}  # digest -> base_image
        self.mounts: dict[str, Mount] = {}
        self.runs: dict[str, Run] = {}
        self._resources: dict[str, tuple[int, int, int]] = {}
        self._session_mounts: dict[str, set[str]] = {}
        self._seq = 0
        self._lock = threading.RLock()
        self.lost = False

    @property
    def node_id(self) -> str:
        return self.descriptor.node_id

    def base_dir(self) -> Path:
        if self._base_dir is None:
            self._base_dir = Path(tempfile.mkdtemp(prefix=f"mlforge-{self.node_id}-"))
        return self._base_dir

    # -- resource reporting -------------------------------------------------

    def report_resources(self, now: float | None = None) -> ResourceReport:
        with self._lock:
            self._seq += 1
            used_g = sum(g for g, _, _ in self._resources.values())
            used_c = sum(c for _, c, _ in self._resources.values())
            used_m = sum(m for _, _, m in self._resources.values())
            d = self.descriptor
            return ResourceReport(
                node_id=d.node_id,
                free_gpus=d.total_gpus - used_g,
                free_cpus=d.total_cpus - used_c,
                free_mem_mb=d.total_mem_mb - used_m,
                seq=self._seq,
                sent_at=self.clock.now() if now is None else now,
            )

    # -- environment cache -----------------------------------------------------

    def prepare_environment(self, spec: EnvironmentSpec) -> EnvHandle:
        digest = spec.digest()
        with self._lock:
            if digest in self._env_cache:
                return EnvHandle(digest, self.build_count, cache_hit=True)
            if spec.base_image in self.env_build_failures:
                raise errors.BuildFailed(f"environment build failed for {spec.base_image!r}")
            self.build_count += 1
            self._env_cache[digest] = spec.base_image
            return EnvHandle(digest, self.build_count, cache_hit=False)

    # -- dataset mounts ----------------------------------------------------------

    def mount_dataset(self, dataset_id: str, session_id: str) -> str:
        name, version = parse_dataset_id(dataset_id)
        with self._lock:
            mount = self.mounts.get(dataset_id)
            if mount is None:
                files = self.storage.fetch_dataset(name, version)  # may raise UnknownDataset
                root = self.base_dir() / "datasets" / dataset_id.replace("/", "_")
                for rel_path, data in files.items():
                    target = root / rel_path
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(data)
                mount = Mount(path=str(root))
                self.mounts[dataset_id] = mount
            if session_id not in mount.sessions:
                mount.sessions.add(session_id)
                mount.refcount += 1
                self._session_mounts.setdefault(session_id, set()).add(dataset_id)
            return mount.path

    def unmount_dataset(self, dataset_id: str, session_id: str) -> None:
        with self._lock:
            mount = self.mounts.get(dataset_id)
            if mount is None or session_id not in mount.sessions:
                return
            mount.sessions.discard(session_id)
            mount.refcount -= 1
            self._session_mounts.get(session_id, set()).discard(dataset_id)
            if mount.refcount <= 0:
                shutil.rmtree(mount.path, ignore_errors=True)
                del self.mounts[dataset_id]

    # -- workloads -------------------------------------------------------------

    def launch(
        self,
        session_id: str,
        code_digest: str,
        env: EnvHandle,
        dataset_path: str,
        hyperparams: dict,
        resources: tuple[int, int, int] = (1, 1, 1024),
        checkpoint: SimTrainerState | None = None,
        total_steps: int | None = None,
        checkpoint_interval: int | None = None,
    ) -> Run:
        if self.lost:
            raise errors.ResourceLost(f"node {self.node_id} is down")
        if not self.storage.has_blob(code_digest):
            raise errors.MissingCodeBundle(f"code bundle {code_digest} not in store")
        state = checkpoint.copy() if checkpoint else SimTrainerState(hyperparams=dict(hyperparams))
        if total_steps is None:
            total_steps = int(float(hyperparams.get("steps", 50)))
        run = Run(
            session_id=session_id,
            state=state,
            total_steps=total_steps,
            checkpoint_interval=checkpoint_interval or self.checkpoint_interval,
            clock=self.clock,
            step_time=self.step_time,
            emit_point=self.metric_sink,
            write_checkpoint=self._write_checkpoint,
            on_status=self.on_transition,
        )
        with self._lock:
            self.runs[session_id] = run
            self._resources[session_id] = resources
        return run

    def control(self, run_handle: Run | str, command: str) -> str:
        run = self._resolve_run(run_handle)
        if command == "pause":
            return run.pause()
        if command == "resume":
            return run.resume()
        if command == "stop":
            return run.stop()
        raise errors.IllegalTransition(f"unknown control command {command!r}")

    def _resolve_run(self, run_handle: Run | str) -> Run:
        if isinstance(run_handle, Run):
            return run_handle
        run = self.runs.get(run_handle)
        if run is None:
            raise errors.UnknownRun(f"no run for session {run_handle}")
        return run

    def release_session(self, session_id: str) -> None:
        """Free the session's resources and drop its dataset mounts."""
        with self._lock:
            self._resources.pop(session_id, None)
            for dataset_id in list(self._session_mounts.get(session_id, ())):
                self.unmount_dataset(dataset_id, session_id)
            self._session_mounts.pop(session_id, None)

    def fail(self) -> None:
        """Simulate the node dying: every hosted run is lost."""
        with self._lock:
            self.lost = True
            for run in self.runs.values():
                run.mark_lost()

    def revive(self) -> None:
        self.lost = False
        self._seq = 0

    def _write_checkpoint(self, run: Run, is_final: bool) -> None:
        latest = self.storage.latest_checkpoint_at_or_before(run.session_id, run.state.step)
        if latest is not None and latest.step == run.state.step:
            if is_final and not latest.is_final:
                self.storage.mark_checkpoint_final(run.session_id, run.state.step)
            return
        self.storage.put_checkpoint(
            run.session_id, run.state.step, run.state.to_bytes(), is_final=is_final
        )
