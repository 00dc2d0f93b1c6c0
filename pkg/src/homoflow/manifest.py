"""Run manifests: config echo, seeds, input hashes, written atomically."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

from . import __version__

# fields that legitimately differ between otherwise identical runs
VOLATILE = ("wall_time_s", "content_hash")


def hash_path(path) -> str:
    """sha256 of a file, or of every file under a directory in sorted order."""
    p = Path(path)
    h = hashlib.sha256()
    files = [p] if p.is_file() else sorted(q for q in p.rglob("*") if q.is_file())
    for f in files:
        if p.is_dir():
            h.update(str(f.relative_to(p)).encode())
        with open(f, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def build_manifest(command: str, config: dict, seeds: dict, inputs: dict, outputs: list,
                   wall_time_s: float, extra: dict | None = None) -> dict:
    m = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "inputs": {k: {"path": str(v), "sha256": hash_path(v)} for k, v in inputs.items() if v is not None},
        "outputs": [str(o) for o in outputs],
        "tool_version": __version__,
        "wall_time_s": wall_time_s,
    }
    if extra:
        m.update(extra)
    m["content_hash"] = manifest_hash(m)
    return m


def manifest_hash(m: dict) -> str:
    body = {k: v for k, v in m.items() if k not in VOLATILE}
    return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    atomic_write_text(path, json.dumps(manifest, indent=1, sort_keys=True, default=str))
