"""Deterministic packaging of a local working directory."""

from __future__ import annotations

import fnmatch
from pathlib import Path

from mlforge import errors
from mlforge.blobstore.archive import pack_tree
from mlforge.canonical import sha256_hex

IGNORE_FILE = ".mlforgeignore"
ALWAYS_IGNORED = (".git", IGNORE_FILE, "__pycache__")


def _read_ignore_patterns(root: Path) -> list[str]:
    ignore_path = root / IGNORE_FILE
    if not ignore_path.is_file():
        return []
    patterns = []
    for line in ignore_path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            patterns.append(line.rstrip("/"))
    return patterns


def _ignored(rel_path: str, patterns: list[str]) -> bool:
    parts = rel_path.split("/")
    for pattern in patterns:
        if fnmatch.fnmatch(rel_path, pattern) or any(fnmatch.fnmatch(p, pattern) for p in parts):
            return True
    return False


def collect_files(directory: str | Path) -> dict[str, bytes]:
    """Gather files under ``directory`` honoring ``.mlforgeignore``."""
    root = Path(directory)
    if not root.is_dir():
        raise errors.EmptyDirectory(f"{directory} is not a readable directory")
    patterns = list(ALWAYS_IGNORED) + _read_ignore_patterns(root)
    files: dict[str, bytes] = {}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if _ignored(rel, patterns):
            continue
        files[rel] = path.read_bytes()
    if not files:
        raise errors.EmptyDirectory(f"no files to package under {directory}")
    return files


def package_code(directory: str | Path) -> tuple[bytes, str]:
    """Archive a directory; equal trees yield equal digests on any machine."""
    archive = pack_tree(collect_files(directory))
    return archive, sha256_hex(archive)
