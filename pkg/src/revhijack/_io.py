"""Small file helpers shared by the pipeline stages."""
from __future__ import annotations

import contextlib
import gzip
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import IO, Iterator

GZIP_MAGIC = b"\x1f\x8b"


def open_binary(path: str | os.PathLike) -> IO[bytes]:
    """Open ``path`` for binary reading, transparently decompressing gzip.

    Compression is detected from the magic bytes, not the file extension.
    """
    fh = open(path, "rb")
    head = fh.read(2)
    fh.seek(0)
    if head == GZIP_MAGIC:
        return gzip.GzipFile(fileobj=fh, mode="rb")
    return fh


def open_text(path: str | os.PathLike) -> IO[str]:
    return io.TextIOWrapper(open_binary(path), encoding="utf-8", newline="")


@contextlib.contextmanager
def atomic_write(path: str | os.PathLike, mode: str = "w") -> Iterator[IO]:
    """Write to a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        if "b" in mode:
            fh = os.fdopen(fd, mode)
        else:
            fh = os.fdopen(fd, mode, encoding="utf-8", newline="")
        with fh:
            yield fh
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def dumps_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def stable_int(*parts) -> int:
    """Deterministic 64-bit integer from strings/ints (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def find_jsonl(directory: str | os.PathLike, stem: str) -> Path:
    """``stem.jsonl`` or ``stem.jsonl.gz`` inside ``directory`` (plain file preferred)."""
    d = Path(directory)
    plain = d / f"{stem}.jsonl"
    if plain.exists():
        return plain
    gz = d / f"{stem}.jsonl.gz"
    return gz if gz.exists() else plain
