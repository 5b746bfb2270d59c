"""Master scheduler: node registry, priority queue, placements, recovery.

Every state change is applied through the same small mutators used by log
replay, so a recovered master reproduces the live one's registry, queue and
allocations exactly. All mutations are serialized behind one lock (single
logical writer); reads take consistent snapshots.
"""

from __future__ import annotations

import bisect
import threading
from dataclasses import dataclass

from mlforge import errors
from mlforge.clock import SystemClock
from mlforge.scheduler.eventlog import EventLog
from mlforge.scheduler.policy import BestFitPolicy
from mlforge.scheduler.types import (
    JobSpec,
    NodeDescriptor,
    NodeEntry,
    PlacementDecision,
    ResourceReport,
)


@dataclass(frozen=True)
class HeartbeatAck:
    node_id: str
    accepted: bool
    next_deadline: float


def _queue_key(spec: JobSpec, submit_seq: int) -> tuple:
    # higher priority first, then FIFO by submission time, then arrival order
    return (-spec.priority, spec.submitted_at, submit_seq)


class Master:
    def __init__(
        self,
        policy=None,
        clock=None,
        event_log: EventLog | None = None,
        heartbeat_interval: float = 2.0,
        death_after_missed: int = 3,
        term: int = 0,
    ):
        self.policy = policy or BestFitPolicy()
        self.clock = clock or SystemClock()
        self.log = event_log or EventLog()
        self.heartbeat_interval = heartbeat_interval
        self.death_after_missed = death_after_missed
        self.term = term
        self.queue_ops = 0

        self._lock = threading.RLock()
        self._nodes: dict[str, NodeEntry] = {}
        self._queue: list[tuple[tuple, str]] = []  # (key, job_id), kept sorted
        self._allocations: dict[str, str] = {}  # job_id -> node_id
        self._specs: dict[str, JobSpec] = {}
        self._submit_seqs: dict[str, int] = {}
        self._next_submit_seq = 1
        self._deposed = False

    # -- guards ---------------------------------------------------------

    def _require_master(self) -> None:
        if self._deposed:
            raise errors.NotMaster("this master has been deposed")

    def depose(self) -> None:
        self._deposed = True

    # -- mutators shared by live ops and replay ---------------------------

    def _apply_register(self, descriptor: NodeDescriptor, at: float) -> None:
        entry = self._nodes.get(descriptor.node_id)
        if entry is None:
            self._nodes[descriptor.node_id] = NodeEntry(
                descriptor=descriptor, registered_at=at, last_seen=at
            )
        else:
            entry.alive = True
            entry.last_seq = 0
            entry.last_seen = at
            entry.last_report = None

    def _apply_enqueue(self, spec: JobSpec, submit_seq: int) -> int:
        self._specs[spec.job_id] = spec
        self._submit_seqs[spec.job_id] = submit_seq
        key = _queue_key(spec, submit_seq)
        bisect.insort(self._queue, (key, spec.job_id))
        self.queue_ops += 1
        return [job_id for _, job_id in self._queue].index(spec.job_id)

    def _apply_place(self, job_id: str, node_id: str) -> None:
        positions = [i for i, (_, jid) in enumerate(self._queue) if jid == job_id]
        for i in reversed(positions):
            del self._queue[i]
            self.queue_ops += 1
        spec = self._specs[job_id]
        self._allocations[job_id] = node_id
        self._nodes[node_id].allocations[job_id] = (spec.gpus, spec.cpus, spec.mem_mb)

    def _apply_complete(self, job_id: str, source: str) -> None:
        if source == "allocated":
            node_id = self._allocations.pop(job_id)
            self._nodes[node_id].allocations.pop(job_id, None)
        else:
            self._queue = [(k, jid) for k, jid in self._queue if jid != job_id]
            self.queue_ops += 1

    def _apply_death(self, node_id: str) -> list[str]:
        entry = self._nodes[node_id]
        entry.alive = False
        requeued = sorted(
            entry.allocations,
            key=lambda jid: _queue_key(self._specs[jid], self._submit_seqs[jid]),
        )
        for job_id in requeued:
            del entry.allocations[job_id]
            del self._allocations[job_id]
            key = _queue_key(self._specs[job_id], self._submit_seqs[job_id])
            bisect.insort(self._queue, (key, job_id))
            self.queue_ops += 1
        return requeued

    # -- operations --------------------------------------------------------

    def register_node(self, descriptor: NodeDescriptor) -> str:
        with self._lock:
            self._require_master()
            entry = self._nodes.get(descriptor.node_id)
            if entry is not None:
                if entry.descriptor != descriptor:
                    raise errors.DuplicateNodeConflict(
                        f"node {descriptor.node_id} already registered with different capacities"
                    )
                if entry.alive:
                    return descriptor.node_id  # idempotent re-registration
            self.log.append("register", descriptor.to_payload())
            self._apply_register(descriptor, self.clock.now())
            return descriptor.node_id

    def heartbeat(self, report: ResourceReport) -> HeartbeatAck:
        with self._lock:
            self._require_master()
            now = self.clock.now()
            entry = self._nodes.get(report.node_id)
            if entry is None or not entry.alive:
                raise errors.UnknownNode(
                    f"node {report.node_id} is not registered (or was declared dead)"
                )
            # the arriving beat proves this sender alive; then sweep the others
            entry.last_seen = now
            accepted = report.seq > entry.last_seq
            if accepted:
                entry.last_seq = report.seq
                entry.last_report = report
            self.tick(now)
            return HeartbeatAck(
                node_id=report.node_id,
                accepted=accepted,
                next_deadline=now + self.heartbeat_interval,
            )

    def tick(self, now: float | None = None) -> dict[str, list[str]]:
        """Declare dead any node silent past its third deadline.

        Returns ``{node_id: [requeued job ids]}`` for every death detected.
        """
        with self._lock:
            self._require_master()
            if now is None:
                now = self.clock.now()
            cutoff = self.heartbeat_interval * self.death_after_missed
            died: dict[str, list[str]] = {}
            for node_id in sorted(self._nodes):
                entry = self._nodes[node_id]
                if entry.alive and now - entry.last_seen > cutoff:
                    self.log.append("death", {"node_id": node_id})
                    died[node_id] = self._apply_death(node_id)
            return died

    def _alive_entries(self) -> list[NodeEntry]:
        return [e for e in self._nodes.values() if e.alive]

    def _fits_any_totals(self, spec: JobSpec) -> bool:
        return any(
            e.descriptor.total_gpus >= spec.gpus
            and e.descriptor.total_cpus >= spec.cpus
            and e.descriptor.total_mem_mb >= spec.mem_mb
            for e in self._nodes.values()
        )

    def submit_job(self, spec: JobSpec) -> PlacementDecision:
        with self._lock:
            self._require_master()
            spec.validate()
            if spec.job_id in self._specs:
                raise errors.InvalidSpec(f"job id {spec.job_id} already submitted")
            if not self._fits_any_totals(spec):
                return PlacementDecision.rejected(spec.job_id, "unsatisfiable")
            if not self._queue:
                node_id = self.policy.choose(self._alive_entries(), spec)
                if node_id is not None:
                    # fast path: allocate directly, no queue operation at all
                    self._specs[spec.job_id] = spec
                    self._submit_seqs[spec.job_id] = self._next_submit_seq
                    self._next_submit_seq += 1
                    self.log.append(
                        "submit", spec.to_payload() | {"submit_seq": self._submit_seqs[spec.job_id]}
                    )
                    self.log.append("place", {"job_id": spec.job_id, "node_id": node_id})
                    self._apply_place(spec.job_id, node_id)
                    return PlacementDecision.placed(spec.job_id, node_id)
            submit_seq = self._next_submit_seq
            self._next_submit_seq += 1
            self.log.append("submit", spec.to_payload() | {"submit_seq": submit_seq})
            position = self._apply_enqueue(spec, submit_seq)
            return PlacementDecision.queued(spec.job_id, position)

    def drain_queue(self) -> list[PlacementDecision]:
        """Place the head job while it fits somewhere; stop at the first that
        does not (head-of-line blocking is intentional, no skipping)."""
        with self._lock:
            self._require_master()
            placed: list[PlacementDecision] = []
            while self._queue:
                _, job_id = self._queue[0]
                spec = self._specs[job_id]
                node_id = self.policy.choose(self._alive_entries(), spec)
                if node_id is None:
                    break
                self.log.append("place", {"job_id": job_id, "node_id": node_id})
                self._apply_place(job_id, node_id)
                placed.append(PlacementDecision.placed(job_id, node_id))
            return placed

    def complete_job(self, job_id: str) -> list[PlacementDecision]:
        with self._lock:
            self._require_master()
            if job_id not in self._allocations:
                raise errors.UnknownJob(f"job {job_id} is not allocated")
            self.log.append("complete", {"job_id": job_id, "from": "allocated"})
            self._apply_complete(job_id, "allocated")
            return self.drain_queue()

    def cancel_queued(self, job_id: str) -> None:
        with self._lock:
            self._require_master()
            if not any(jid == job_id for _, jid in self._queue):
                raise errors.UnknownJob(f"job {job_id} is not queued")
            self.log.append("complete", {"job_id": job_id, "from": "queue"})
            self._apply_complete(job_id, "queue")

    # -- views ---------------------------------------------------------------

    def queued_jobs(self) -> list[JobSpec]:
        with self._lock:
            return [self._specs[job_id] for _, job_id in self._queue]

    def allocations(self) -> dict[str, str]:
        with self._lock:
            return dict(self._allocations)

    def allocation_of(self, job_id: str) -> str | None:
        return self._allocations.get(job_id)

    def nodes(self) -> list[NodeEntry]:
        with self._lock:
            return [self._nodes[node_id] for node_id in sorted(self._nodes)]

    def node(self, node_id: str) -> NodeEntry:
        entry = self._nodes.get(node_id)
        if entry is None:
            raise errors.UnknownNode(f"node {node_id} is not registered")
        return entry

    def persist(self, storage) -> str:
        with self._lock:
            return self.log.persist(storage)

    def snapshot(self) -> dict:
        """Canonical view of replayable state for crash-equivalence checks."""
        with self._lock:
            return {
                "term": self.term,
                "event_log_seq": self.log.last_seq,
                "registry": {
                    node_id: {
                        "descriptor": entry.descriptor.to_payload(),
                        "alive": entry.alive,
                    }
                    for node_id, entry in sorted(self._nodes.items())
                },
                "queue": [
                    self._specs[job_id].to_payload() | {"submit_seq": self._submit_seqs[job_id]}
                    for _, job_id in self._queue
                ],
                "allocations": {
                    job_id: {
                        "node_id": node_id,
                        "gpus": self._specs[job_id].gpus,
                        "cpus": self._specs[job_id].cpus,
                        "mem_mb": self._specs[job_id].mem_mb,
                    }
                    for job_id, node_id in sorted(self._allocations.items())
                },
            }


def recover_state(
    log: EventLog,
    policy=None,
    clock=None,
    heartbeat_interval: float = 2.0,
    death_after_missed: int = 3,
    term: int = 0,
) -> Master:
    """Rebuild a master by replaying a persisted event log.

    The returned master owns the log and continues appending after its last
    sequence number. Raises ``CorruptLog`` via ``EventLog.from_bytes`` when
    loading damaged bytes; replay itself trusts a well-formed log.
    """
    master = Master(
        policy=policy,
        clock=clock,
        event_log=log,
        heartbeat_interval=heartbeat_interval,
        death_after_missed=death_after_missed,
        term=term,
    )
    for event in log.events:
        payload = event.payload
        if event.kind == "register":
            master._apply_register(NodeDescriptor.from_payload(payload), at=0.0)
        elif event.kind == "submit":
            spec = JobSpec.from_payload(payload)
            master._apply_enqueue(spec, payload["submit_seq"])
            master._next_submit_seq = max(master._next_submit_seq, payload["submit_seq"] + 1)
        elif event.kind == "place":
            master._apply_place(payload["job_id"], payload["node_id"])
        elif event.kind == "complete":
            master._apply_complete(payload["job_id"], payload["from"])
        elif event.kind == "death":
            master._apply_death(payload["node_id"])
    # fresh deadlines: surviving nodes get a full window to reach the new master
    now = master.clock.now()
    for entry in master._nodes.values():
        if entry.alive:
            entry.last_seen = now
    master.queue_ops = 0
    return master
