"""Control plane: wires master, agents, storage, metrics, sessions and boards.

This layer owns the glue the individual modules deliberately do not: mapping
placements to agent launches, funneling heartbeats over the wire encoding,
persisting the master's event log after every command, simulated node death,
and master failover (depose, elect, replay, resume).
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field

from mlforge import errors
from mlforge.agent.agent import (
    EnvironmentSpec,
    NodeAgent,
    decode_control_request,
    decode_launch_request,
    encode_control_request,
    encode_launch_request,
)
from mlforge.agent.trainer import SimTrainerState, infer as trainer_infer
from mlforge.blobstore.store import Storage
from mlforge.clock import SimClock, SystemClock
from mlforge.leaderboard.board import Leaderboard
from mlforge.metrics.store import MetricPoint, MetricStore, Subscription
from mlforge.scheduler.election import elect_leader
from mlforge.scheduler.eventlog import EventLog
from mlforge.scheduler.master import Master, recover_state
from mlforge.scheduler.types import JobSpec, NodeDescriptor, PlacementDecision, ResourceReport
from mlforge.sessions.manager import SessionManager
from mlforge.sessions.model import Session, SessionState


@dataclass
class PlaneConfig:
    nodes: list[NodeDescriptor] = field(default_factory=list)
    clock: str = "sim"  # "sim" | "system"
    start_time: float = 1_700_000_000.0
    driver: str = "eager"  # "eager" | "manual" | "paced"
    step_time: float = 1.0  # sim seconds per step; real sleep when paced
    checkpoint_interval: int = 5
    replay: int = 50
    heartbeat_interval: float = 2.0
    death_after_missed: int = 3
    sse_heartbeat: float = 15.0
    base_image: str = "sim-python:3.10"
    replica_count: int = 3

    @classmethod
    def default_cluster(cls, n_nodes: int = 3, gpus: int = 8, **kwargs) -> PlaneConfig:
        nodes = [NodeDescriptor(node_id=f"node-{i}", total_gpus=gpus) for i in range(n_nodes)]
        return cls(nodes=nodes, **kwargs)


FEED_END = object()


class SessionFeed:
    """Merged per-session stream of metric points and state transitions."""

    def __init__(self, session_id: str, replay: int):
        self.session_id = session_id
        self._recent: deque[dict] = deque(maxlen=replay)
        self._subs: list[Subscription] = []
        self._terminal: str | None = None
        self._lock = threading.Lock()

    def publish_metric(self, point: MetricPoint) -> None:
        event = {
            "type": "metric",
            "session_id": point.session_id,
            "step": point.step,
            "name": point.name,
            "value": point.value,
            "at": point.at,
        }
        with self._lock:
            self._recent.append(event)
            self._fanout(event)

    def publish_state(self, state: str, at: float, detail: str) -> None:
        event = {
            "type": "state",
            "session_id": self.session_id,
            "state": state,
            "detail": detail,
            "at": at,
        }
        with self._lock:
            self._fanout(event)
            if state in ("DONE", "FAILED", "STOPPED"):
                self._terminal = state
                end = {"type": "end", "session_id": self.session_id, "state": state}
                self._fanout(end)
                for sub in self._subs:
                    sub.push(FEED_END)
                self._subs.clear()

    def _fanout(self, event: dict) -> None:
        for sub in list(self._subs):
            if not sub.push(event):
                self._subs.remove(sub)

    def attach(self, current_state: str) -> tuple[list[dict], Subscription | None]:
        """Replay tail plus a state snapshot; live subscription unless done."""
        with self._lock:
            replay = list(self._recent)
            replay.append(
                {
                    "type": "state",
                    "session_id": self.session_id,
                    "state": current_state,
                    "detail": "snapshot",
                    "at": None,
                }
            )
            if self._terminal is not None:
                replay.append(
                    {"type": "end", "session_id": self.session_id, "state": self._terminal}
                )
                return replay, None
            sub = Subscription(self.session_id, None, capacity=4096)
            self._subs.append(sub)
            return replay, sub

    def detach(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)


class ControlPlane:
    def __init__(self, config: PlaneConfig | None = None, storage: Storage | None = None):
        self.config = config or PlaneConfig.default_cluster()
        self.clock = (
            SimClock(self.config.start_time) if self.config.clock == "sim" else SystemClock()
        )
        self.storage = storage or Storage()
        self.storage.clock = self.clock
        self.master = Master(
            clock=self.clock,
            event_log=EventLog(),
            heartbeat_interval=self.config.heartbeat_interval,
            death_after_missed=self.config.death_after_missed,
        )
        self.master_available = True
        self.last_log_digest: str | None = None
        self.leaderboard = Leaderboard(self.storage)
        self.metrics = MetricStore(
            session_lookup=lambda sid: self.sessions.state_of(sid), replay=self.config.replay
        )
        self.sessions = SessionManager(self.storage, self.leaderboard, backend=self, clock=self.clock)
        self.sessions.transition_listener = self._on_session_transition
        self.default_env = EnvironmentSpec(base_image=self.config.base_image)
        self.metric_archives: dict[str, str] = {}

        self.agents: dict[str, NodeAgent] = {}
        for descriptor in self.config.nodes:
            self.add_node(descriptor)

        self._feeds: dict[str, SessionFeed] = {}
        self._run_queue: deque = deque()
        self._pumping = False
        self._deferred_completions: list[str] = []
        self._paced_thread: threading.Thread | None = None
        self._stop_paced = threading.Event()
        self._persist()

    # -- cluster assembly ---------------------------------------------------

    def add_node(self, descriptor: NodeDescriptor) -> NodeAgent:
        self.master.register_node(descriptor)
        agent = NodeAgent(
            descriptor,
            self.storage,
            clock=self.clock,
            metric_sink=self._metric_sink,
            on_transition=self._on_run_status,
            checkpoint_interval=self.config.checkpoint_interval,
            step_time=self.config.step_time,
        )
        self.agents[descriptor.node_id] = agent
        self.master.heartbeat(agent.report_resources())
        return agent

    def _persist(self) -> None:
        self.last_log_digest = self.master.persist(self.storage)

    def _feed(self, session_id: str) -> SessionFeed:
        feed = self._feeds.get(session_id)
        if feed is None:
            feed = self._feeds[session_id] = SessionFeed(session_id, self.config.replay)
        return feed

    # -- ExecutionBackend (called by the session manager) ------------------------

    def submit(self, spec: JobSpec) -> PlacementDecision:
        if not self.master_available:
            raise errors.MasterUnavailable("no master elected")
        decision = self.master.submit_job(spec)
        self._persist()
        return decision

    def cancel(self, job_id: str) -> None:
        self.master.cancel_queued(job_id)
        self._persist()

    def launch(self, session: Session, init_state: SimTrainerState | None) -> None:
        agent = self.agents[session.node_id]
        try:
            env = agent.prepare_environment(self.default_env)
            dataset_path = agent.mount_dataset(session.dataset_ref, session.session_id)
            # launch crosses the master->agent boundary in canonical wire form
            request = decode_launch_request(
                encode_launch_request(
                    session.session_id,
                    session.code_digest,
                    env.env_digest,
                    dataset_path,
                    session.hyperparams,
                    session.resources,
                    total_steps=int(float(session.hyperparams.get("steps", 50))),
                    checkpoint=init_state,
                )
            )
            run = agent.launch(
                session_id=request["session_id"],
                code_digest=request["code_digest"],
                env=env,
                dataset_path=request["dataset_path"],
                hyperparams=request["hyperparams"],
                resources=request["resources"],
                checkpoint=request["checkpoint"],
                total_steps=request["total_steps"],
            )
        except errors.MlforgeError as exc:
            self.sessions.notify_transition(session.session_id, SessionState.FAILED, str(exc))
            placements = self.master.complete_job(session.job_id)
            self._persist()
            self._dispatch_placements(placements)
            raise
        self.sessions.notify_transition(
            session.session_id, SessionState.RUNNING, f"run started on {agent.node_id}"
        )
        if self.config.driver == "eager":
            self._run_queue.append(run)
            self._pump_eager()

    def _control(self, session_id: str, command: str) -> None:
        agent = self._agent_for(session_id)
        agent.control(*decode_control_request(encode_control_request(session_id, command)))

    def pause(self, session_id: str) -> int:
        agent = self._agent_for(session_id)
        self._control(session_id, "pause")
        return agent.runs[session_id].state.step

    def tune_resume(self, session_id: str, hyperparams: dict) -> None:
        agent = self._agent_for(session_id)
        run = agent.runs[session_id]
        record = self.storage.get_checkpoint(session_id, "latest")
        state = SimTrainerState.from_bytes(self.storage.get_blob(record.digest))
        state.apply_hyperparams(dict(hyperparams))
        run.state = state
        run.total_steps = int(float(hyperparams.get("steps", run.total_steps)))
        self._control(session_id, "resume")
        if self.config.driver == "eager":
            self._run_queue.append(run)
            self._pump_eager()

    def stop_run(self, session_id: str) -> None:
        self._control(session_id, "stop")

    def _agent_for(self, session_id: str) -> NodeAgent:
        session = self.sessions.get(session_id)
        if session.node_id is None:
            raise errors.UnknownRun(f"session {session_id} has no active run")
        return self.agents[session.node_id]

    # -- run plumbing --------------------------------------------------------

    def _pump_eager(self) -> None:
        if self._pumping:
            return
        self._pumping = True
        try:
            while self._run_queue:
                run = self._run_queue.popleft()
                run.advance()
        finally:
            self._pumping = False

    def advance_session(self, session_id: str, steps: int | None = None) -> int:
        """Manual driver: step one session's run."""
        agent = self._agent_for(session_id)
        run = agent.runs.get(session_id)
        if run is None:
            raise errors.UnknownRun(f"session {session_id} has no run")
        return run.advance(steps)

    def advance_all(self, steps: int | None = None) -> int:
        total = 0
        for agent in self.agents.values():
            for run in list(agent.runs.values()):
                if not run.done:
                    total += run.advance(steps)
        return total

    def _metric_sink(self, point: MetricPoint) -> None:
        self.metrics.log(point)
        self._feed(point.session_id).publish_metric(point)
        session = self.sessions._sessions.get(point.session_id)
        if session is None:
            return
        ds = self.storage.get_dataset(session.dataset_name, session.dataset_version)
        if ds.board_config is not None and ds.board_config[0] == point.name:
            self.sessions.report_score(point.session_id, point.value, step=point.step)

    def _on_session_transition(self, session: Session, state: SessionState, detail: str) -> None:
        self._feed(session.session_id).publish_state(state.value, self.clock.now(), detail)

    def _on_run_status(self, run, status: str, detail: str) -> None:
        sid = run.session_id
        if status == "RUNNING":
            self.sessions.notify_transition(sid, SessionState.RUNNING, detail)
        elif status == "PAUSED":
            self.sessions.notify_transition(sid, SessionState.PAUSED, detail)
        elif status == "FINISHED":
            self._finalize(run, SessionState.DONE, detail, release_allocation=True)
        elif status == "FINISHED_BY_USER":
            self._finalize(run, SessionState.STOPPED, detail, release_allocation=True)
        elif status == "LOST":
            # node death: the master requeues and the plane cancels at tick()
            self._finalize(run, SessionState.FAILED, detail, release_allocation=False)

    def _finalize(
        self, run, state: SessionState, detail: str, release_allocation: bool
    ) -> None:
        sid = run.session_id
        self.sessions.notify_transition(sid, state, detail)
        session = self.sessions.get(sid)
        agent = self.agents.get(session.node_id)
        if agent is not None:
            agent.release_session(sid)
        self.metric_archives[sid] = self.storage.put_blob(self.metrics.export_json_lines(sid))
        self.metrics.close_session(sid)
        if release_allocation:
            try:
                placements = self.master.complete_job(session.job_id)
                self._persist()
            except errors.NotMaster:
                self._deferred_completions.append(session.job_id)
            else:
                self._dispatch_placements(placements)

    def _dispatch_placements(self, placements: list[PlacementDecision]) -> None:
        for decision in placements:
            self.sessions.on_placed(decision.job_id, decision.node_id)

    # -- heartbeats and death ----------------------------------------------------

    def pump_heartbeats(self) -> None:
        for node_id in sorted(self.agents):
            agent = self.agents[node_id]
            if agent.lost or not self.master_available:
                continue
            report = ResourceReport.from_wire(agent.report_resources().to_wire())
            try:
                self.master.heartbeat(report)
            except errors.UnknownNode:
                self.master.register_node(agent.descriptor)
                agent.revive()
                self.master.heartbeat(ResourceReport.from_wire(agent.report_resources().to_wire()))
                self._persist()
            except errors.NotMaster:
                return

    def tick(self, now: float | None = None) -> dict[str, list[str]]:
        """Run death detection and clean up sessions lost with their nodes."""
        died = self.master.tick(now)
        if died:
            self._persist()
        for node_id, job_ids in died.items():
            agent = self.agents.get(node_id)
            if agent is not None and not agent.lost:
                agent.fail()
            for job_id in job_ids:
                session = self.sessions._sessions.get(job_id)
                if session is not None and session.is_terminal:
                    try:
                        self.master.cancel_queued(job_id)
                        self._persist()
                    except errors.UnknownJob:
                        pass
        return died

    def kill_node(self, node_id: str) -> None:
        """Simulate a node dying right now; master notices via missed beats."""
        self.agents[node_id].fail()

    # -- failover -------------------------------------------------------------

    def fail_master(self) -> None:
        self.master.depose()
        self.master_available = False

    def recover_master(self) -> tuple[str, int]:
        """Elect a leader among replicas and rebuild state from the log."""
        log = EventLog.load(self.storage, self.last_log_digest)
        replicas = [(f"master-{i}", log.last_seq) for i in range(self.config.replica_count)]
        leader_id, new_term = elect_leader(replicas, self.master.term)
        self.master = recover_state(
            log,
            clock=self.clock,
            heartbeat_interval=self.config.heartbeat_interval,
            death_after_missed=self.config.death_after_missed,
            term=new_term,
        )
        self.master_available = True
        self.pump_heartbeats()
        deferred, self._deferred_completions = self._deferred_completions, []
        for job_id in deferred:
            try:
                self._dispatch_placements(self.master.complete_job(job_id))
            except errors.UnknownJob:
                pass
        self._persist()
        return leader_id, new_term

    # -- paced driver ------------------------------------------------------------

    def start_paced(self) -> None:
        if self._paced_thread is not None:
            return
        self._stop_paced.clear()
        self._paced_thread = threading.Thread(target=self._paced_loop, daemon=True)
        self._paced_thread.start()

    def stop_paced(self) -> None:
        if self._paced_thread is None:
            return
        self._stop_paced.set()
        self._paced_thread.join(timeout=5)
        self._paced_thread = None

    def _paced_loop(self) -> None:
        import time as _time

        while not self._stop_paced.is_set():
            stepped = 0
            for agent in list(self.agents.values()):
                for run in list(agent.runs.values()):
                    if not run.done and run.status == "RUNNING":
                        stepped += run.advance(1)
            try:
                if self.master_available:
                    self.pump_heartbeats()
                    self.tick()
            except errors.MlforgeError:
                pass
            if stepped == 0:
                _time.sleep(0.05)

    # -- queries used by the gateway ------------------------------------------------

    def infer(self, session_id: str, selector: int | str, input_bytes: bytes) -> dict:
        session = self.sessions.get(session_id)
        best_step = session.best.checkpoint_step if session.best is not None else None
        record = self.storage.get_checkpoint(session_id, selector, best_step=best_step)
        state = SimTrainerState.from_bytes(self.storage.get_blob(record.digest))
        label, confidence = trainer_infer(state, input_bytes)
        return {"label": label, "confidence": confidence, "checkpoint_step": record.step}

    def subscribe_events(self, session_id: str) -> tuple[list[dict], Subscription | None]:
        session = self.sessions.get(session_id)
        return self._feed(session_id).attach(session.state.value)

    def cluster_view(self) -> dict:
        nodes = []
        for entry in self.master.nodes():
            free_g, free_c, free_m = entry.free()
            d = entry.descriptor
            nodes.append(
                {
                    "node_id": d.node_id,
                    "alive": entry.alive,
                    "total_gpus": d.total_gpus,
                    "free_gpus": free_g,
                    "total_cpus": d.total_cpus,
                    "free_cpus": free_c,
                    "total_mem_mb": d.total_mem_mb,
                    "free_mem_mb": free_m,
                    "last_seq": entry.last_seq,
                }
            )
        queue = [
            {
                "position": i,
                "job_id": spec.job_id,
                "session": spec.session_ref,
                "priority": spec.priority,
                "gpus": spec.gpus,
            }
            for i, spec in enumerate(self.master.queued_jobs())
        ]
        return {
            "term": self.master.term,
            "master_available": self.master_available,
            "nodes": nodes,
            "queue": queue,
        }
