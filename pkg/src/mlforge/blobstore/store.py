"""Content-addressed blob backends plus dataset and checkpoint catalogs."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from mlforge import errors
from mlforge.canonical import sha256_hex


class MemoryBackend:
    """In-process blob map, optionally capped to simulate a full disk."""

    def __init__(self, capacity_bytes: int | None = None):
        self._blobs: dict[str, bytes] = {}
        self._capacity = capacity_bytes
        self._used = 0
        self._lock = threading.Lock()

    def put(self, data: bytes) -> str:
        digest = sha256_hex(data)
        with self._lock:
            if digest in self._blobs:
                return digest
            if self._capacity is not None and self._used + len(data) > self._capacity:
                raise errors.StorageFull(f"capacity {self._capacity} bytes exceeded")
            self._blobs[digest] = bytes(data)
            self._used += len(data)
        return digest

    def get(self, digest: str) -> bytes:
        try:
            return self._blobs[digest]
        except KeyError:
            raise errors.BlobNotFound(f"blob {digest} not found") from None

    def has(self, digest: str) -> bool:
        return digest in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)


class DirectoryBackend:
    """Blobs on disk at ``objects/<first2>/<digest>`` with a JSON size index."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.index_path = self.root / "index.json"
        self.objects.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index: dict[str, int] = {}
        if self.index_path.exists():
            self._index = json.loads(self.index_path.read_text())

    def _path(self, digest: str) -> Path:
        return self.objects / digest[:2] / digest

    def put(self, data: bytes) -> str:
        digest = sha256_hex(data)
        with self._lock:
            if digest in self._index:
                return digest
            path = self._path(digest)
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
            self._index[digest] = len(data)
            self.index_path.write_text(json.dumps(self._index, sort_keys=True))
        return digest

    def get(self, digest: str) -> bytes:
        path = self._path(digest)
        if not path.exists():
            raise errors.BlobNotFound(f"blob {digest} not found")
        return path.read_bytes()

    def has(self, digest: str) -> bool:
        return digest in self._index or self._path(digest).exists()

    def __len__(self) -> int:
        return len(self._index)


@dataclass(frozen=True)
class DatasetVersion:
    name: str
    version: int
    manifest: tuple[tuple[str, str, int], ...]  # (path, blob digest, size)
    created_at: float
    board_config: tuple[str, str] | None = None  # (metric_name, direction)

    @property
    def ref(self) -> str:
        return f"{self.name}@v{self.version}"

    @property
    def size_bytes(self) -> int:
        return sum(size for _, _, size in self.manifest)


@dataclass
class CheckpointRecord:
    session_id: str
    step: int
    digest: str
    created_at: float
    is_final: bool = False


@dataclass
class StorageStats:
    puts: int = 0
    gets: int = 0
    stored_blobs: int = 0
    stored_bytes: int = 0
    dataset_fetches: int = 0


def _parse_direction(direction: str) -> str:
    if direction not in ("maximize", "minimize"):
        raise ValueError(f"direction must be maximize or minimize, got {direction!r}")
    return direction


@dataclass
class Storage:
    """Facade over one blob backend: blobs, dataset versions, checkpoints."""

    backend: MemoryBackend | DirectoryBackend = field(default_factory=MemoryBackend)
    clock: object | None = None

    def __post_init__(self):
        self._datasets: dict[str, list[DatasetVersion]] = {}
        self._checkpoints: dict[str, list[CheckpointRecord]] = {}
        self._lock = threading.RLock()
        self.stats = StorageStats()

    def _now(self) -> float:
        return self.clock.now() if self.clock is not None else 0.0

    # -- blobs ------------------------------------------------------------

    def put_blob(self, data: bytes) -> str:
        with self._lock:
            self.stats.puts += 1
            known = self.backend.has(sha256_hex(data))
            digest = self.backend.put(data)
            if not known:
                self.stats.stored_blobs += 1
                self.stats.stored_bytes += len(data)
        return digest

    def get_blob(self, digest: str) -> bytes:
        self.stats.gets += 1
        return self.backend.get(digest)

    def has_blob(self, digest: str) -> bool:
        return self.backend.has(digest)

    # -- datasets ----------------------------------------------------------

    def push_dataset(
        self,
        name: str,
        files: dict[str, bytes] | list[tuple[str, bytes]],
        board_config: tuple[str, str] | None = None,
    ) -> DatasetVersion:
        pairs = list(files.items()) if isinstance(files, dict) else list(files)
        if not pairs:
            raise errors.EmptyDataset(f"dataset {name!r} has no files")
        paths = [path for path, _ in pairs]
        if len(set(paths)) != len(paths):
            raise errors.DuplicatePath(f"dataset {name!r} repeats a path")
        files = dict(pairs)
        if board_config is not None:
            board_config = (board_config[0], _parse_direction(board_config[1]))
        with self._lock:
            manifest = tuple(
                (path, self.put_blob(files[path]), len(files[path])) for path in sorted(files)
            )
            versions = self._datasets.setdefault(name, [])
            version = DatasetVersion(
                name=name,
                version=len(versions) + 1,
                manifest=manifest,
                created_at=self._now(),
                board_config=board_config,
            )
            versions.append(version)
        return version

    def get_dataset(self, name: str, version: int | None = None) -> DatasetVersion:
        versions = self._datasets.get(name)
        if not versions:
            raise errors.UnknownDataset(f"dataset {name!r} not found")
        if version is None:
            return versions[-1]
        if not 1 <= version <= len(versions):
            raise errors.UnknownDataset(f"dataset {name!r} has no version {version}")
        return versions[version - 1]

    def fetch_dataset(self, name: str, version: int | None = None) -> dict[str, bytes]:
        """Materialize a dataset's files; counted once per call for dedup checks."""
        ds = self.get_dataset(name, version)
        with self._lock:
            self.stats.dataset_fetches += 1
        return {path: self.backend.get(digest) for path, digest, _ in ds.manifest}

    def list_datasets(self, name: str | None = None) -> list[DatasetVersion]:
        out = []
        for ds_name in sorted(self._datasets):
            if name is not None and ds_name != name:
                continue
            out.extend(self._datasets[ds_name])
        return out

    def set_board_config(self, name: str, version: int, metric: str, direction: str) -> DatasetVersion:
        direction = _parse_direction(direction)
        with self._lock:
            ds = self.get_dataset(name, version)
            updated = DatasetVersion(
                name=ds.name,
                version=ds.version,
                manifest=ds.manifest,
                created_at=ds.created_at,
                board_config=(metric, direction),
            )
            self._datasets[name][ds.version - 1] = updated
        return updated

    # -- checkpoints ---------------------------------------------------------

    def put_checkpoint(
        self, session_id: str, step: int, state_bytes: bytes, is_final: bool = False
    ) -> CheckpointRecord:
        with self._lock:
            records = self._checkpoints.setdefault(session_id, [])
            if records and step <= records[-1].step:
                raise errors.NonMonotonicStep(
                    f"checkpoint step {step} not after {records[-1].step} for {session_id}"
                )
            record = CheckpointRecord(
                session_id=session_id,
                step=step,
                digest=self.put_blob(state_bytes),
                created_at=self._now(),
                is_final=is_final,
            )
            records.append(record)
        return record

    def mark_checkpoint_final(self, session_id: str, step: int) -> CheckpointRecord:
        for record in self._checkpoints.get(session_id, []):
            if record.step == step:
                record.is_final = True
                return record
        raise errors.NoCheckpoint(f"no checkpoint at step {step} for {session_id}")

    def checkpoints(self, session_id: str) -> list[CheckpointRecord]:
        return list(self._checkpoints.get(session_id, []))

    def get_checkpoint(
        self,
        session_id: str,
        selector: int | str = "latest",
        best_step: int | None = None,
    ) -> CheckpointRecord:
        """Select a checkpoint by exact step, ``latest`` or resolved ``best``.

        ``best`` needs the caller to resolve the best step from reported
        scores; the session manager passes it through ``best_step``.
        """
        records = self._checkpoints.get(session_id, [])
        if not records:
            raise errors.NoCheckpoint(f"session {session_id} has no checkpoints")
        if selector == "latest":
            return records[-1]
        if selector == "best":
            if best_step is None:
                raise errors.NoCheckpoint(f"session {session_id} has no best score yet")
            selector = best_step
        for record in records:
            if record.step == int(selector):
                return record
        raise errors.NoCheckpoint(f"no checkpoint at step {selector} for {session_id}")

    def latest_checkpoint_at_or_before(self, session_id: str, step: int) -> CheckpointRecord | None:
        candidates = [r for r in self._checkpoints.get(session_id, []) if r.step <= step]
        return candidates[-1] if candidates else None
