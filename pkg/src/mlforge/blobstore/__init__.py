"""Content-addressed storage for datasets, code bundles, checkpoints and logs."""

from mlforge.blobstore.archive import pack_tree, unpack_tree
from mlforge.blobstore.store import (
    CheckpointRecord,
    DatasetVersion,
    DirectoryBackend,
    MemoryBackend,
    Storage,
)

__all__ = [
    "CheckpointRecord",
    "DatasetVersion",
    "DirectoryBackend",
    "MemoryBackend",
    "Storage",
    "pack_tree",
    "unpack_tree",
]
