"""Pluggable node-selection policies. GPU is the fit dimension being ranked;
CPUs and memory are hard constraints only."""

from __future__ import annotations

from mlforge.scheduler.types import JobSpec, NodeEntry


def fits(entry: NodeEntry, spec: JobSpec) -> bool:
    free_g, free_c, free_m = entry.free()
    return entry.alive and free_g >= spec.gpus and free_c >= spec.cpus and free_m >= spec.mem_mb


class BestFitPolicy:
    """Minimize leftover GPUs after placement; ties broken by lowest node_id."""

    name = "best_fit"

    def choose(self, entries: list[NodeEntry], spec: JobSpec) -> str | None:
        best: tuple[int, str] | None = None
        for entry in entries:
            if not fits(entry, spec):
                continue
            leftover = entry.free()[0] - spec.gpus
            key = (leftover, entry.descriptor.node_id)
            if best is None or key < best:
                best = key
        return best[1] if best else None


class FirstFitPolicy:
    """First fitting node in node_id order; kept for comparison tests."""

    name = "first_fit"

    def choose(self, entries: list[NodeEntry], spec: JobSpec) -> str | None:
        for entry in sorted(entries, key=lambda e: e.descriptor.node_id):
            if fits(entry, spec):
                return entry.descriptor.node_id
        return None
