"""Deterministic code-bundle archives: same tree, same bytes, same digest."""

from __future__ import annotations

import io
import tarfile

from mlforge import errors


def pack_tree(files: dict[str, bytes]) -> bytes:
    """Pack ``path -> bytes`` into a ustar archive with stable metadata.

    Entries are sorted by path; mtime, uid and gid are zeroed and modes
    normalized so equal trees produce equal bytes on any machine.
    """
    if not files:
        raise errors.EmptyDirectory("nothing to archive")
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for path in sorted(files):
            data = files[path]
            info = tarfile.TarInfo(name=path)
            info.size = len(data)
            info.mtime = 0
            info.uid = 0
            info.gid = 0
            info.uname = ""
            info.gname = ""
            info.mode = 0o644
            tar.addfile(info, io.BytesIO(data))
    return buf.getvalue()


def unpack_tree(archive: bytes) -> dict[str, bytes]:
    files: dict[str, bytes] = {}
    with tarfile.open(fileobj=io.BytesIO(archive), mode="r") as tar:
        for member in tar.getmembers():
            if not member.isfile():
                continue
            fh = tar.extractfile(member)
            files[member.name] = fh.read() if fh is not None else b""
    return files
