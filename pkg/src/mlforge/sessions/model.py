"""Session record and its state machine."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from mlforge import errors


class SessionState(str, Enum):
    CREATED = "CREATED"
    QUEUED = "QUEUED"
    SCHEDULED = "SCHEDULED"
    RUNNING = "RUNNING"
    PAUSED = "PAUSED"
    DONE = "DONE"
    FAILED = "FAILED"
    STOPPED = "STOPPED"


# PAUSED -> FAILED is allowed so a node death can terminate a paused session.
LEGAL_TRANSITIONS: dict[SessionState, frozenset[SessionState]] = {
    SessionState.CREATED: frozenset({SessionState.QUEUED, SessionState.SCHEDULED}),
    SessionState.QUEUED: frozenset({SessionState.SCHEDULED, SessionState.STOPPED}),
    SessionState.SCHEDULED: frozenset({SessionState.RUNNING, SessionState.FAILED}),
    SessionState.RUNNING: frozenset(
        {SessionState.PAUSED, SessionState.DONE, SessionState.FAILED, SessionState.STOPPED}
    ),
    SessionState.PAUSED: frozenset(
        {SessionState.RUNNING, SessionState.STOPPED, SessionState.FAILED}
    ),
    SessionState.DONE: frozenset(),
    SessionState.FAILED: frozenset(),
    SessionState.STOPPED: frozenset(),
}

TERMINAL_STATES = frozenset({SessionState.DONE, SessionState.FAILED, SessionState.STOPPED})


@dataclass(frozen=True)
class HistoryEntry:
    at: float
    event: str  # a SessionState name, or an annotation such as TUNED
    detail: str = ""

    def to_view(self) -> dict:
        return {"at": self.at, "event": self.event, "detail": self.detail}


@dataclass
class BestScore:
    value: float
    step: int
    checkpoint_step: int | None

    def to_view(self) -> dict:
        return {"value": self.value, "step": self.step, "checkpoint_step": self.checkpoint_step}


@dataclass
class Session:
    session_id: str
    user: str
    dataset_name: str
    dataset_version: int
    code_digest: str
    entrypoint: str
    hyperparams: dict
    original_hyperparams: dict
    priority: int
    resources: tuple[int, int, int]
    created_at: float
    state: SessionState = SessionState.CREATED
    history: list[HistoryEntry] = field(default_factory=list)
    parent: tuple[str, int] | None = None
    sweep_id: str | None = None
    node_id: str | None = None
    best: BestScore | None = None

    def __post_init__(self):
        if not self.history:
            self.history.append(HistoryEntry(self.created_at, SessionState.CREATED.value))

    @property
    def job_id(self) -> str:
        return self.session_id

    @property
    def dataset_ref(self) -> str:
        return f"{self.dataset_name}@v{self.dataset_version}"

    @property
    def is_terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def transition(self, to_state: SessionState, at: float, detail: str = "") -> None:
        if to_state not in LEGAL_TRANSITIONS[self.state]:
            raise errors.IllegalState(
                f"session {self.session_id}: {self.state.value} -> {to_state.value} is not legal"
            )
        self.state = to_state
        self.history.append(HistoryEntry(at, to_state.value, detail))

    def annotate(self, event: str, at: float, detail: str = "") -> None:
        self.history.append(HistoryEntry(at, event, detail))

    def to_view(self, with_history: bool = True) -> dict:
        view = {
            "session_id": self.session_id,
            "user": self.user,
            "dataset": self.dataset_ref,
            "entrypoint": self.entrypoint,
            "state": self.state.value,
            "priority": self.priority,
            "hyperparams": dict(sorted(self.hyperparams.items())),
            "code_digest": self.code_digest,
            "node_id": self.node_id,
            "parent": (
                None
                if self.parent is None
                else {"session_id": self.parent[0], "step": self.parent[1]}
            ),
            "sweep_id": self.sweep_id,
            "best": None if self.best is None else self.best.to_view(),
            "created_at": self.created_at,
        }
        if with_history:
            view["history"] = [h.to_view() for h in self.history]
        return view
