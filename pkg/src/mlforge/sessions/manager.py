"""Session manager: owns session records and drives the execution backend.

The backend (implemented by the control plane) performs the scheduler and
agent side effects; the manager owns identities, the state machine, history,
hyperparameter merging and best-score bookkeeping.
"""

from __future__ import annotations

import itertools
import random
import threading
from typing import Protocol

from mlforge import errors
from mlforge.agent.trainer import SimTrainerState
from mlforge.canonical import canonical_json
from mlforge.blobstore.archive import pack_tree
from mlforge.scheduler.types import JobSpec, PlacementDecision
from mlforge.sessions.model import BestScore, Session, SessionState

DEFAULT_HYPERPARAMS: dict[str, float] = {"lr": 0.1, "l0": 1.0, "steps": 50}
DEFAULT_RESOURCES = (1, 1, 1024)


class ExecutionBackend(Protocol):
    def submit(self, spec: JobSpec) -> PlacementDecision: ...

    def cancel(self, job_id: str) -> None: ...

    def launch(self, session: Session, init_state: SimTrainerState | None) -> None: ...

    def pause(self, session_id: str) -> int: ...

    def tune_resume(self, session_id: str, hyperparams: dict) -> None: ...

    def stop_run(self, session_id: str) -> None: ...


class SessionManager:
    def __init__(self, storage, leaderboard, backend: ExecutionBackend, clock):
        self.storage = storage
        self.leaderboard = leaderboard
        self.backend = backend
        self.clock = clock
        self.transition_listener = None  # called as (session, to_state, detail)
        self._sessions: dict[str, Session] = {}
        self._counters: dict[tuple[str, str], int] = {}
        self._init_states: dict[str, SimTrainerState] = {}
        self._sweep_count = 0
        self._lock = threading.RLock()

    def _transition(self, session: Session, to_state: SessionState, detail: str = "") -> None:
        session.transition(to_state, self.clock.now(), detail)
        if self.transition_listener is not None:
            self.transition_listener(session, to_state, detail)

    # -- lookup ----------------------------------------------------------

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise errors.UnknownSession(f"session {session_id} does not exist")
        return session

    def state_of(self, session_id: str) -> str | None:
        session = self._sessions.get(session_id)
        return None if session is None else session.state.value

    def export_history_jsonl(self, session_id: str) -> bytes:
        """Append-only history as canonical JSON lines."""
        session = self.get(session_id)
        return b"".join(canonical_json(entry.to_view()) + b"\n" for entry in session.history)

    def list_sessions(
        self, user: str | None = None, dataset: str | None = None, state: str | None = None
    ) -> list[Session]:
        out = []
        for session in self._sessions.values():
            if user is not None and session.user != user:
                continue
            if dataset is not None and dataset not in (session.dataset_name, session.dataset_ref):
                continue
            if state is not None and session.state.value != state:
                continue
            out.append(session)
        return out

    # -- creation ----------------------------------------------------------

    def _resolve_dataset(self, dataset_ref) -> tuple[str, int]:
        if isinstance(dataset_ref, tuple):
            name, version = dataset_ref
        else:
            from mlforge.agent.agent import parse_dataset_id

            name, version = parse_dataset_id(str(dataset_ref))
        ds = self.storage.get_dataset(name, version)
        return ds.name, ds.version

    def create_session(
        self,
        user: str,
        dataset_ref,
        code_files: dict[str, bytes] | None = None,
        entrypoint: str = "main.py",
        hyperparams: dict | None = None,
        priority: int = 0,
        resources: tuple[int, int, int] | None = None,
        *,
        code_digest: str | None = None,
        init_state: SimTrainerState | None = None,
        parent: tuple[str, int] | None = None,
        sweep_id: str | None = None,
    ) -> Session:
        with self._lock:
            name, version = self._resolve_dataset(dataset_ref)
            if code_digest is None:
                if not code_files:
                    raise errors.EmptyCode("a session needs at least one code file")
                code_digest = self.storage.put_blob(pack_tree(code_files))
            merged = dict(DEFAULT_HYPERPARAMS)
            merged.update(hyperparams or {})
            now = self.clock.now()
            counter_key = (user, name)
            number = self._counters.get(counter_key, 0) + 1
            session_id = f"{user}/{name}/{number}"
            session = Session(
                session_id=session_id,
                user=user,
                dataset_name=name,
                dataset_version=version,
                code_digest=code_digest,
                entrypoint=entrypoint,
                hyperparams=dict(merged),
                original_hyperparams=dict(merged),
                priority=priority,
                resources=resources or DEFAULT_RESOURCES,
                created_at=now,
                parent=parent,
                sweep_id=sweep_id,
            )
            spec = JobSpec(
                job_id=session.job_id,
                session_ref=session_id,
                gpus=session.resources[0],
                cpus=session.resources[1],
                mem_mb=session.resources[2],
                priority=priority,
                submitted_at=now,
            )
            decision = self.backend.submit(spec)
            if decision.is_rejected:
                raise errors.JobRejected(
                    f"job for {session_id} cannot run on this cluster: {decision.reason}"
                )
            self._counters[counter_key] = number
            self._sessions[session_id] = session
            if init_state is not None:
                self._init_states[session_id] = init_state
            if decision.is_placed:
                session.node_id = decision.node_id
                self._transition(session, SessionState.SCHEDULED, f"on {decision.node_id}")
                self.backend.launch(session, self._init_states.pop(session_id, None))
            else:
                self._transition(session, SessionState.QUEUED, f"position {decision.position}")
            return session

    def on_placed(self, job_id: str, node_id: str) -> None:
        """Queued job got resources (queue drain); schedule and launch it."""
        with self._lock:
            session = self.get(job_id)
            if session.state != SessionState.QUEUED:
                return
            session.node_id = node_id
            self._transition(session, SessionState.SCHEDULED, f"on {node_id}")
            self.backend.launch(session, self._init_states.pop(session.session_id, None))

    def notify_transition(self, session_id: str, to_state: SessionState, detail: str = "") -> None:
        """Agent-side transition report; duplicate deliveries are tolerated."""
        with self._lock:
            session = self.get(session_id)
            if session.state == to_state or session.is_terminal:
                return
            self._transition(session, to_state, detail)

    # -- lifecycle operations ---------------------------------------------------

    def pause_and_tune(self, session_id: str, new_hyperparams: dict) -> Session:
        with self._lock:
            session = self.get(session_id)
            if session.state != SessionState.RUNNING:
                raise errors.IllegalState(
                    f"session {session_id} is {session.state.value}; tune needs RUNNING"
                )
            unknown = set(new_hyperparams) - set(session.hyperparams)
            if unknown:
                raise errors.UnknownHyperparam(
                    f"unknown hyperparameters: {', '.join(sorted(unknown))}"
                )
            self.backend.pause(session_id)
            old_values = {k: session.hyperparams[k] for k in new_hyperparams}
            session.hyperparams.update(new_hyperparams)
            changes = ", ".join(
                f"{k}: {old_values[k]} -> {new_hyperparams[k]}" for k in sorted(new_hyperparams)
            )
            session.annotate("TUNED", self.clock.now(), changes or "no changes")
            self.backend.tune_resume(session_id, dict(session.hyperparams))
            return session

    def fork_session(
        self,
        parent_id: str,
        checkpoint_selector: int | str = "latest",
        new_hyperparams: dict | None = None,
        user: str | None = None,
    ) -> Session:
        with self._lock:
            parent = self.get(parent_id)
            best_step = (
                parent.best.checkpoint_step if parent.best is not None else None
            )
            record = self.storage.get_checkpoint(parent_id, checkpoint_selector, best_step=best_step)
            state = SimTrainerState.from_bytes(self.storage.get_blob(record.digest))
            hyperparams = dict(parent.hyperparams)
            unknown = set(new_hyperparams or {}) - set(hyperparams)
            if unknown:
                raise errors.UnknownHyperparam(
                    f"unknown hyperparameters: {', '.join(sorted(unknown))}"
                )
            hyperparams.update(new_hyperparams or {})
            state.apply_hyperparams(dict(hyperparams))
            return self.create_session(
                user or parent.user,
                (parent.dataset_name, parent.dataset_version),
                code_digest=parent.code_digest,
                entrypoint=parent.entrypoint,
                hyperparams=hyperparams,
                priority=parent.priority,
                resources=parent.resources,
                init_state=state,
                parent=(parent_id, record.step),
            )

    def reproduce(self, session_id: str) -> Session:
        """Fresh run of the same code and original hyperparameters."""
        with self._lock:
            original = self.get(session_id)
            return self.create_session(
                original.user,
                (original.dataset_name, original.dataset_version),
                code_digest=original.code_digest,
                entrypoint=original.entrypoint,
                hyperparams=dict(original.original_hyperparams),
                priority=original.priority,
                resources=original.resources,
            )

    def run_sweep(
        self,
        user: str,
        dataset_ref,
        code_files: dict[str, bytes],
        entrypoint: str = "main.py",
        grid: dict[str, list] | None = None,
        random_spec: dict | None = None,
        priority: int = 0,
        base_hyperparams: dict | None = None,
    ) -> tuple[str, list[Session]]:
        combos = self._sweep_combos(grid, random_spec)
        if not code_files:
            raise errors.EmptyCode("a sweep needs at least one code file")
        with self._lock:
            code_digest = self.storage.put_blob(pack_tree(code_files))
            self._sweep_count += 1
            sweep_id = f"sweep-{self._sweep_count}"
            sessions = []
            for combo in combos:
                hyperparams = dict(base_hyperparams or {})
                hyperparams.update(combo)
                sessions.append(
                    self.create_session(
                        user,
                        dataset_ref,
                        code_digest=code_digest,
                        entrypoint=entrypoint,
                        hyperparams=hyperparams,
                        priority=priority,
                        sweep_id=sweep_id,
                    )
                )
            return sweep_id, sessions

    @staticmethod
    def _sweep_combos(grid, random_spec) -> list[dict]:
        if grid:
            names = sorted(grid)
            if any(not grid[name] for name in names):
                raise errors.EmptySweep("every grid dimension needs at least one value")
            return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]
        if random_spec:
            ranges = random_spec.get("ranges") or {}
            n = int(random_spec.get("n", 0))
            if not ranges or n < 1:
                raise errors.EmptySweep("random sweep needs ranges and n >= 1")
            rng = random.Random(random_spec.get("seed", 0))
            names = sorted(ranges)
            return [
                {name: rng.uniform(ranges[name][0], ranges[name][1]) for name in names}
                for _ in range(n)
            ]
        raise errors.EmptySweep("sweep needs a grid or a random specification")

    # -- scores -------------------------------------------------------------

    def report_score(self, session_id: str, value: float, step: int | None = None) -> BestScore:
        with self._lock:
            session = self.get(session_id)
            ds = self.storage.get_dataset(session.dataset_name, session.dataset_version)
            if ds.board_config is None:
                raise errors.NoBoardConfig(f"dataset {ds.ref} has no board configured")
            _, direction = ds.board_config
            best = session.best
            improved = best is None or (
                value > best.value if direction == "maximize" else value < best.value
            )
            if improved:
                if step is None:
                    latest = self.storage.checkpoints(session_id)
                    step = latest[-1].step if latest else 0
                nearest = self.storage.latest_checkpoint_at_or_before(session_id, step)
                session.best = BestScore(
                    value=value,
                    step=step,
                    checkpoint_step=None if nearest is None else nearest.step,
                )
                self.leaderboard.record(
                    session.dataset_name,
                    session.dataset_version,
                    session_id,
                    session.user,
                    value,
                    at=self.clock.now(),
                    hyperparams=dict(session.hyperparams),
                )
            return session.best

    # -- stopping -----------------------------------------------------------

    def stop(self, session_id: str) -> Session:
        with self._lock:
            session = self.get(session_id)
            if session.state == SessionState.QUEUED:
                self.backend.cancel(session.job_id)
                self._transition(session, SessionState.STOPPED, "cancelled while queued")
            elif session.state in (SessionState.RUNNING, SessionState.PAUSED):
                self.backend.stop_run(session_id)
            else:
                raise errors.IllegalState(
                    f"session {session_id} is {session.state.value}; nothing to stop"
                )
            return session
