"""CSV record files plus a per-directory JSON manifest with content hashes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

MANIFEST_NAME = "manifest.json"


class RecordsError(Exception):
    """Base class for persistence failures."""


class RecordsMissingError(RecordsError):
    pass


class CorruptRecordsError(RecordsError):
    pass


class HashMismatchError(CorruptRecordsError):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def format_value(value) -> str:
    # repr round-trips floats exactly
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_bytes(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue().encode()


def dump_json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def read_manifest(directory: Path) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptRecordsError(f"{path}: unreadable manifest ({exc})") from exc


def write_file(path: Path, data: bytes, rows: int | None = None, meta: dict | None = None) -> dict:
    """Write ``data`` and register it (hash, row count) in the directory manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    manifest = read_manifest(path.parent)
    if meta:
        manifest.update(meta)
    entry = {"sha256": sha256_bytes(data)}
    if rows is not None:
        entry["rows"] = rows
    manifest.setdefault("files", {})[path.name] = entry
    (path.parent / MANIFEST_NAME).write_bytes(dump_json_bytes(manifest))
    return manifest


def write_csv(path: Path, header: list[str], rows, meta: dict | None = None) -> dict:
    rows = list(rows)
    return write_file(path, csv_bytes(header, rows), rows=len(rows), meta=meta)


def write_json(path: Path, obj, meta: dict | None = None) -> dict:
    return write_file(path, dump_json_bytes(obj), meta=meta)


def read_csv(path: Path, verify: bool = True) -> tuple[list[str], list[list[str]]]:
    """Read a CSV written by :func:`write_csv`, checking it against the manifest."""
    path = Path(path)
    if not path.exists():
        raise RecordsMissingError(f"{path}: no such records file")
    data = path.read_bytes()
    if verify:
        manifest = read_manifest(path.parent)
        entry = manifest.get("files", {}).get(path.name)
        if entry is None:
            raise CorruptRecordsError(f"{path}: not listed in {MANIFEST_NAME}")
        actual = sha256_bytes(data)
        if actual != entry["sha256"]:
            raise HashMismatchError(
                f"{path}: sha256 {actual[:12]}... does not match manifest {entry['sha256'][:12]}..."
            )
    rows = list(csv.reader(io.StringIO(data.decode())))
    if not rows:
        raise CorruptRecordsError(f"{path}: empty file, header missing")
    header, body = rows[0], rows[1:]
    if verify and "rows" in entry and entry["rows"] != len(body):
        raise CorruptRecordsError(f"{path}: {len(body)} rows, manifest says {entry['rows']}")
    for k, row in enumerate(body):
        if len(row) != len(header):
            raise CorruptRecordsError(f"{path}: row {k + 1} has {len(row)} fields, expected {len(header)}")
    return header, body
