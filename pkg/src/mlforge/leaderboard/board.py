"""Leaderboard: one upserted entry per session per dataset version.

Scores on different versions of a dataset are never compared; the board key
is (name, version). The hyperparameter snapshot is captured at the report
that achieved the current best, so boards compare configurations, not just
final numbers.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone

from mlforge import errors
from mlforge.canonical import fmt_float


@dataclass
class LeaderboardEntry:
    dataset_name: str
    dataset_version: int
    session_id: str
    user: str
    metric_name: str
    best_value: float
    achieved_at: float
    hyperparams: dict

    def to_view(self) -> dict:
        return {
            "session_id": self.session_id,
            "user": self.user,
            "metric": self.metric_name,
            "value": self.best_value,
            "achieved_at": self.achieved_at,
            "hyperparams": dict(sorted(self.hyperparams.items())),
        }


def _improves(direction: str, new: float, old: float) -> bool:
    return new > old if direction == "maximize" else new < old


def iso_utc(ts: float) -> str:
    return datetime.fromtimestamp(ts, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class Leaderboard:
    def __init__(self, storage):
        self.storage = storage
        self._entries: dict[tuple[str, int], dict[str, LeaderboardEntry]] = {}
        self._lock = threading.RLock()

    def _board_config(self, name: str, version: int) -> tuple[str, str]:
        ds = self.storage.get_dataset(name, version)  # raises UnknownDataset
        if ds.board_config is None:
            raise errors.NoBoardConfig(f"dataset {ds.ref} has no board configured")
        return ds.board_config

    def has_board(self, name: str, version: int) -> bool:
        try:
            self._board_config(name, version)
            return True
        except (errors.NoBoardConfig, errors.UnknownDataset):
            return False

    def record(
        self,
        name: str,
        version: int,
        session_id: str,
        user: str,
        value: float,
        at: float,
        hyperparams: dict | None = None,
    ) -> LeaderboardEntry:
        metric, direction = self._board_config(name, version)
        with self._lock:
            board = self._entries.setdefault((name, version), {})
            entry = board.get(session_id)
            if entry is None or _improves(direction, value, entry.best_value):
                entry = LeaderboardEntry(
                    dataset_name=name,
                    dataset_version=version,
                    session_id=session_id,
                    user=user,
                    metric_name=metric,
                    best_value=value,
                    achieved_at=at,
                    hyperparams=dict(hyperparams or {}),
                )
                board[session_id] = entry
            return entry

    def board(
        self,
        name: str,
        version: int,
        top_k: int | None = None,
        per_user_best: bool = False,
    ) -> list[LeaderboardEntry]:
        metric, direction = self._board_config(name, version)
        del metric
        with self._lock:
            entries = list(self._entries.get((name, version), {}).values())
        sign = -1.0 if direction == "maximize" else 1.0
        entries.sort(key=lambda e: (sign * e.best_value, e.achieved_at, e.session_id))
        if per_user_best:
            seen: set[str] = set()
            entries = [e for e in entries if e.user not in seen and not seen.add(e.user)]
        if top_k is not None:
            entries = entries[:top_k]
        return entries

    def set_board_config(self, name: str, version: int, metric: str, direction: str):
        with self._lock:
            self.storage.get_dataset(name, version)  # raises UnknownDataset
            if self._entries.get((name, version)):
                raise errors.ConfigLocked(
                    f"board for {name}@v{version} already has scores; config is immutable"
                )
            return self.storage.set_board_config(name, version, metric, direction)

    # -- exports -------------------------------------------------------------

    def export_json(self, name: str, version: int, **kwargs) -> bytes:
        rows = [
            {"rank": i + 1} | e.to_view() for i, e in enumerate(self.board(name, version, **kwargs))
        ]
        return json.dumps(rows, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    def export_table(self, name: str, version: int, **kwargs) -> str:
        headers = ["rank", "session", "user", "value", "achieved_at"]
        rows = [
            [str(i + 1), e.session_id, e.user, fmt_float(e.best_value), iso_utc(e.achieved_at)]
            for i, e in enumerate(self.board(name, version, **kwargs))
        ]
        return render_table(headers, rows)


def render_table(headers: list[str], rows: list[list[str]]) -> str:
    """Left-aligned columns separated by two-space gutters."""
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip()
        for line in [headers, *rows]
    ]
    return "\n".join(lines) + "\n"
