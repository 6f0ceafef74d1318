"""Small JSON file helpers with atomic replace semantics."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path


def atomic_write_json(obj, path: str | Path, sort_keys: bool = True) -> None:
    """Write JSON via a temp file in the same directory, then rename.

    A crash mid-write leaves the old file intact; readers never see a
    half-written document.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, ensure_ascii=False, sort_keys=sort_keys, indent=None)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
