"""Deterministic leader election among master replicas."""

from __future__ import annotations

from mlforge import errors


def elect_leader(candidates: list[tuple[str, int]], old_term: int) -> tuple[str, int]:
    """Pick the replica with the most complete log; ties go to the larger id.

    Pure function of its inputs: any two replicas given the same candidate
    set agree on the winner. Returns ``(leader_id, old_term + 1)``.
    """
    if not candidates:
        raise errors.NoCandidates("election requires at least one candidate")
    leader_id, _ = max(candidates, key=lambda c: (c[1], c[0]))
    return leader_id, old_term + 1
