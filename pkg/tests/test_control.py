from __future__ import annotations

import json

import pytest

from mlforge import errors
from mlforge.sessions.model import SessionState

from conftest import CODE, make_plane, push_mnist


@pytest.fixture
def mplane():
    plane = make_plane(driver="manual")
    push_mnist(plane)
    return plane


def create(plane, user="kim", hp=None, resources=None):
    return plane.sessions.create_session(
        user, "mnist", code_files=dict(CODE),
        hyperparams=hp or {"lr": 0.1, "steps": 20}, resources=resources,
    )


class TestFailoverIntegration:
    def test_workload_survives_master_failover(self, mplane):
        running = create(mplane, resources=(8, 1, 1024))
        create(mplane, user="a", resources=(8, 1, 1024))
        create(mplane, user="b", resources=(8, 1, 1024))
        queued = create(mplane, user="c", resources=(8, 1, 1024))
        assert queued.state == SessionState.QUEUED

        mplane.advance_session(running.session_id, 5)
        mplane.fail_master()
        leader, term = mplane.recover_master()
        assert term == 1 and leader == "master-2"

        # allocations and the queue came back from the log
        assert mplane.master.allocations()[running.job_id] == running.node_id
        assert [s.job_id for s in mplane.master.queued_jobs()] == [queued.job_id]

        # finishing the running session drains the queued one on the new master
        mplane.advance_session(running.session_id, 15)
        assert running.state == SessionState.DONE
        assert queued.state == SessionState.RUNNING

    def test_completion_during_failover_is_deferred(self, mplane):
        running = create(mplane, resources=(8, 1, 1024))
        create(mplane, user="a", resources=(8, 1, 1024))
        create(mplane, user="b", resources=(8, 1, 1024))
        queued = create(mplane, user="c", resources=(8, 1, 1024))

        mplane.fail_master()
        mplane.advance_session(running.session_id, 20)  # finishes while no master
        assert running.state == SessionState.DONE
        assert queued.state == SessionState.QUEUED

        mplane.recover_master()
        assert queued.state == SessionState.RUNNING

    def test_submit_during_failover_surfaces_unavailable(self, mplane):
        mplane.fail_master()
        with pytest.raises(errors.MasterUnavailable):
            create(mplane)

    def test_failover_is_idempotent_for_election_inputs(self, mplane):
        create(mplane)
        mplane.fail_master()
        first = mplane.recover_master()
        mplane.fail_master()
        second = mplane.recover_master()
        assert first == ("master-2", 1)
        assert second == ("master-2", 2)


class TestNodeLifecycle:
    def test_dead_node_rejoins_via_heartbeat_pump(self, mplane):
        session = create(mplane)
        node = session.node_id
        mplane.kill_node(node)
        mplane.clock.advance(mplane.config.heartbeat_interval * 3 + 1)
        mplane.tick()
        assert mplane.master.node(node).alive is False

        mplane.agents[node].revive()
        mplane.pump_heartbeats()
        entry = mplane.master.node(node)
        assert entry.alive is True
        assert entry.free() == (8, 8, 32768)

        # the revived node is schedulable again
        fresh = create(mplane, user="again", resources=(8, 1, 1024))
        assert fresh.state == SessionState.RUNNING

    def test_heartbeats_flow_through_wire_encoding(self, mplane):
        mplane.pump_heartbeats()
        for entry in mplane.master.nodes():
            assert entry.last_report is not None
            assert entry.last_seq >= 1


class TestTerminalPlumbing:
    def test_metric_archive_written_at_session_end(self, mplane):
        session = create(mplane, hp={"lr": 0.1, "steps": 4})
        mplane.advance_session(session.session_id, 4)
        digest = mplane.metric_archives[session.session_id]
        lines = mplane.storage.get_blob(digest).decode().splitlines()
        points = [json.loads(line) for line in lines]
        assert len(points) == 8  # loss and acc for 4 steps
        assert points[-1]["name"] == "loss" and points[-1]["step"] == 4

    def test_mounts_released_at_session_end(self, mplane):
        a = create(mplane, hp={"lr": 0.1, "steps": 4})
        b = create(mplane, user="lee", hp={"lr": 0.1, "steps": 4})
        shared = [ag for ag in mplane.agents.values() if ag.mounts]
        node_a = mplane.agents[a.node_id]
        assert node_a.mounts["mnist@v1"].refcount >= 1
        mplane.advance_session(a.session_id, 4)
        mplane.advance_session(b.session_id, 4)
        for agent in shared:
            assert agent.mounts == {}

    def test_feed_replays_then_ends_for_late_subscriber(self, mplane):
        session = create(mplane, hp={"lr": 0.1, "steps": 4})
        mplane.advance_session(session.session_id, 4)
        replay, sub = mplane.subscribe_events(session.session_id)
        assert sub is None
        kinds = [e["type"] for e in replay]
        assert kinds[-1] == "end" and kinds[-2] == "state"
        metric_steps = [e["step"] for e in replay if e["type"] == "metric" and e["name"] == "loss"]
        assert metric_steps == [1, 2, 3, 4]
