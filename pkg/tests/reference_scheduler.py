"""Brute-force reference scheduler used as an independent oracle.

Deliberately naive: plain dicts and lists, re-sorting on every access,
re-deriving everything from first principles of the documented policy
(best-fit by leftover GPUs with node-id tiebreak, priority-then-FIFO queue,
no skipping past a blocked head, fast path only on an empty queue).
It shares no code with the production scheduler.
"""

from __future__ import annotations


class ReferenceScheduler:
    def __init__(self):
        self.nodes = {}  # id -> {"total": (g, c, m), "alive": bool}
        self.allocations = {}  # job_id -> node_id
        self.jobs = {}  # job_id -> job dict
        self.queue = []  # job ids, re-sorted on access
        self.arrival = 0

    # -- helpers -----------------------------------------------------------

    def _free(self, node_id):
        total = self.nodes[node_id]["total"]
        used = [0, 0, 0]
        for job_id, nid in self.allocations.items():
            if nid == node_id:
                req = self.jobs[job_id]["req"]
                used = [u + r for u, r in zip(used, req)]
        return tuple(t - u for t, u in zip(total, used))

    def _fits_free(self, node_id, req):
        return self.nodes[node_id]["alive"] and all(
            f >= r for f, r in zip(self._free(node_id), req)
        )

    def _best_fit(self, req):
        candidates = []
        for node_id in self.nodes:
            if self._fits_free(node_id, req):
                leftover = self._free(node_id)[0] - req[0]
                candidates.append((leftover, node_id))
        if not candidates:
            return None
        return min(candidates)[1]

    def _sorted_queue(self):
        return sorted(
            self.queue,
            key=lambda jid: (
                -self.jobs[jid]["priority"],
                self.jobs[jid]["submitted_at"],
                self.jobs[jid]["arrival"],
            ),
        )

    # -- operations ------------------------------------------------------------

    def register(self, node_id, gpus, cpus=8, mem=32768):
        self.nodes[node_id] = {"total": (gpus, cpus, mem), "alive": True}

    def submit(self, job_id, gpus, cpus=1, mem=1024, priority=0, submitted_at=0.0):
        req = (gpus, cpus, mem)
        if not any(
            all(t >= r for t, r in zip(info["total"], req)) for info in self.nodes.values()
        ):
            return ("rejected", None)
        self.jobs[job_id] = {
            "req": req,
            "priority": priority,
            "submitted_at": submitted_at,
            "arrival": self.arrival,
        }
        self.arrival += 1
        if not self.queue:
            node_id = self._best_fit(req)
            if node_id is not None:
                self.allocations[job_id] = node_id
                return ("placed", node_id)
        self.queue.append(job_id)
        self.queue = self._sorted_queue()
        return ("queued", self.queue.index(job_id))

    def drain(self):
        placed = []
        while self.queue:
            self.queue = self._sorted_queue()
            head = self.queue[0]
            node_id = self._best_fit(self.jobs[head]["req"])
            if node_id is None:
                break
            self.queue.pop(0)
            self.allocations[head] = node_id
            placed.append((head, node_id))
        return placed

    def complete(self, job_id):
        del self.allocations[job_id]
        return self.drain()

    def kill_node(self, node_id):
        self.nodes[node_id]["alive"] = False
        requeued = [jid for jid, nid in self.allocations.items() if nid == node_id]
        for jid in requeued:
            del self.allocations[jid]
            self.queue.append(jid)
        self.queue = self._sorted_queue()
        return requeued

    # -- state for comparison ------------------------------------------------------

    def snapshot(self):
        return {
            "queue": list(self._sorted_queue()),
            "allocations": dict(sorted(self.allocations.items())),
        }

    def node_free(self, node_id):
        return self._free(node_id)
