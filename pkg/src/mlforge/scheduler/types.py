"""Domain types exchanged between master, agents and the session layer."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from mlforge import errors
from mlforge.canonical import canonical_json


@dataclass(frozen=True)
class NodeDescriptor:
    """A node's constant capacities; node_id is unique cluster-wide."""

    node_id: str
    total_gpus: int
    total_cpus: int = 8
    total_mem_mb: int = 32768

    def __post_init__(self):
        if min(self.total_gpus, self.total_cpus, self.total_mem_mb) < 0:
            raise ValueError(f"node {self.node_id}: capacities must be >= 0")

    def to_payload(self) -> dict:
        return {
            "node_id": self.node_id,
            "total_gpus": self.total_gpus,
            "total_cpus": self.total_cpus,
            "total_mem_mb": self.total_mem_mb,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> NodeDescriptor:
        return cls(**payload)


@dataclass(frozen=True)
class ResourceReport:
    """One heartbeat's view of a node's free resources; seq is per-node monotonic."""

    node_id: str
    free_gpus: int
    free_cpus: int
    free_mem_mb: int
    seq: int
    sent_at: float

    def to_wire(self) -> bytes:
        return canonical_json(
            {
                "free_cpus": self.free_cpus,
                "free_gpus": self.free_gpus,
                "free_mem_mb": self.free_mem_mb,
                "node_id": self.node_id,
                "sent_at": self.sent_at,
                "seq": self.seq,
            }
        )

    @classmethod
    def from_wire(cls, data: bytes) -> ResourceReport:
        return cls(**json.loads(data.decode("utf-8")))


@dataclass(frozen=True)
class JobSpec:
    """A schedulable unit of work tied to one session."""

    job_id: str
    session_ref: str
    gpus: int
    cpus: int = 1
    mem_mb: int = 1024
    priority: int = 0
    submitted_at: float = 0.0

    def validate(self) -> None:
        if min(self.gpus, self.cpus, self.mem_mb) < 0:
            raise errors.InvalidSpec(f"job {self.job_id}: requested amounts must be >= 0")

    def to_payload(self) -> dict:
        return {
            "job_id": self.job_id,
            "session_ref": self.session_ref,
            "gpus": self.gpus,
            "cpus": self.cpus,
            "mem_mb": self.mem_mb,
            "priority": self.priority,
            "submitted_at": self.submitted_at,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> JobSpec:
        return cls(**{k: payload[k] for k in
                      ("job_id", "session_ref", "gpus", "cpus", "mem_mb", "priority", "submitted_at")})


@dataclass(frozen=True)
class PlacementDecision:
    """Outcome of submitting or draining one job."""

    kind: str  # "placed" | "queued" | "rejected"
    job_id: str
    node_id: str | None = None
    position: int | None = None
    reason: str | None = None

    @classmethod
    def placed(cls, job_id: str, node_id: str) -> PlacementDecision:
        return cls(kind="placed", job_id=job_id, node_id=node_id)

    @classmethod
    def queued(cls, job_id: str, position: int) -> PlacementDecision:
        return cls(kind="queued", job_id=job_id, position=position)

    @classmethod
    def rejected(cls, job_id: str, reason: str) -> PlacementDecision:
        return cls(kind="rejected", job_id=job_id, reason=reason)

    @property
    def is_placed(self) -> bool:
        return self.kind == "placed"

    @property
    def is_queued(self) -> bool:
        return self.kind == "queued"

    @property
    def is_rejected(self) -> bool:
        return self.kind == "rejected"


@dataclass
class NodeEntry:
    """Registry row: descriptor plus liveness and last accepted report."""

    descriptor: NodeDescriptor
    alive: bool = True
    last_seq: int = 0
    last_seen: float = 0.0
    last_report: ResourceReport | None = None
    registered_at: float = 0.0
    allocations: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    def free(self) -> tuple[int, int, int]:
        d = self.descriptor
        used_g = sum(g for g, _, _ in self.allocations.values())
        used_c = sum(c for _, c, _ in self.allocations.values())
        used_m = sum(m for _, _, m in self.allocations.values())
        return d.total_gpus - used_g, d.total_cpus - used_c, d.total_mem_mb - used_m
