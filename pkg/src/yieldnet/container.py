"""Byte-reproducible array containers.

A container is a zip archive of ``.npy`` members plus a ``meta.json``
member.  All members carry a fixed timestamp, so writing the same content
twice yields identical bytes (``numpy.savez`` stamps the current time).
``numpy.load`` can read the archives directly.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

CONTAINER_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class ContainerError(ValueError):
    pass


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    return info


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def save_container(path, meta: dict, arrays: dict[str, np.ndarray], kind: str):
    path = Path(path)
    header = {"container_version": CONTAINER_VERSION, "kind": kind, "meta": meta}
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_member("meta.json"), canonical_json(header))
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            zf.writestr(_member(f"{name}.npy"), buf.getvalue())


def load_container(path, kind: str | None = None):
    """Return ``(meta, arrays)``; checks version and, if given, kind."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with zipfile.ZipFile(path) as zf:
        try:
            header = json.loads(zf.read("meta.json"))
        except KeyError:
            raise ContainerError(f"{path}: not a container (meta.json missing)") from None
        if header.get("container_version") != CONTAINER_VERSION:
            raise ContainerError(f"{path}: unsupported container version {header.get('container_version')!r}")
        if kind is not None and header.get("kind") != kind:
            raise ContainerError(f"{path}: expected a {kind!r} container, found {header.get('kind')!r}")
        arrays = {}
        for info in zf.infolist():
            if info.filename.endswith(".npy"):
                arrays[info.filename[:-4]] = np.lib.format.read_array(io.BytesIO(zf.read(info)), allow_pickle=False)
    return header["meta"], arrays


def container_kind(path) -> str:
    with zipfile.ZipFile(path) as zf:
        try:
            return json.loads(zf.read("meta.json")).get("kind")
        except KeyError:
            raise ContainerError(f"{path}: not a container (meta.json missing)") from None
