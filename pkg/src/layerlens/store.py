"""SQLite activation store.

Table ``tensors`` holds the eight provenance columns followed by ``dtype``
(the capture precision before down-conversion). Tensors are always written as
little-endian float32, row-major; ``tensor_dim`` is JSON text.
"""

from __future__ import annotations

import json
import os
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

COLUMNS = ("name", "architecture", "image_path", "prompt", "label", "layer", "tensor_dim", "tensor", "dtype")
FILTER_KEYS = frozenset({"name", "architecture", "layer", "label", "prompt", "image_path"})
BATCH_SIZE = 64

_SCHEMA = """
CREATE TABLE IF NOT EXISTS tensors (
    name TEXT NOT NULL,
    architecture TEXT NOT NULL,
    image_path TEXT NOT NULL,
    prompt TEXT NOT NULL,
    label TEXT,
    layer TEXT NOT NULL,
    tensor_dim TEXT NOT NULL,
    tensor BLOB NOT NULL,
    dtype TEXT NOT NULL
)
"""

_WIRE = np.dtype("<f4")


class StoreError(RuntimeError):
    pass


class TensorCodecError(ValueError):
    pass


def encode_tensor(tensor, allow_nonfinite: bool = False) -> tuple[list[int], bytes]:
    arr = np.asarray(tensor)
    if arr.dtype.kind not in "fiub":
        raise TensorCodecError(f"cannot encode dtype {arr.dtype}")
    arr = arr.astype(_WIRE, copy=False)
    if not allow_nonfinite and not np.isfinite(arr).all():
        raise TensorCodecError("tensor contains NaN or Inf (set allow_nonfinite to store it)")
    return [int(d) for d in arr.shape], np.ascontiguousarray(arr).tobytes()


def decode_tensor(dims: Iterable[int], blob: bytes) -> np.ndarray:
    dims = [int(d) for d in dims]
    if any(d < 0 for d in dims):
        raise TensorCodecError(f"negative dimension in {dims}")
    expected = int(np.prod(dims, dtype=np.int64)) * _WIRE.itemsize
    if len(blob) != expected:
        raise TensorCodecError(f"blob has {len(blob)} bytes, dims {dims} need {expected}")
    return np.frombuffer(blob, dtype=_WIRE).reshape(dims).astype(np.float32)


@dataclass
class ActivationRecord:
    name: str
    architecture: str
    image_path: str
    prompt: str
    label: str | None
    layer: str
    tensor_dim: list[int]
    tensor: bytes
    dtype: str = "float32"
    id: int | None = None
    firing_index: int = 0

    @classmethod
    def from_array(cls, array, *, name, architecture, image_path, prompt, layer,
                   label=None, dtype=None, allow_nonfinite=False) -> ActivationRecord:
        dims, blob = encode_tensor(array, allow_nonfinite=allow_nonfinite)
        if dtype is None:
            dtype = str(np.asarray(array).dtype)
        return cls(name, architecture, image_path, prompt, label, layer, dims, blob, dtype)

    def array(self) -> np.ndarray:
        return decode_tensor(self.tensor_dim, self.tensor)

    def validate(self) -> None:
        expected = int(np.prod(self.tensor_dim, dtype=np.int64)) * _WIRE.itemsize
        if any(int(d) < 0 for d in self.tensor_dim):
            raise TensorCodecError(f"negative dimension in {self.tensor_dim}")
        if len(self.tensor) != expected:
            raise TensorCodecError(
                f"tensor_dim {self.tensor_dim} needs {expected} bytes, blob has {len(self.tensor)}"
            )


class ActivationStore:
    """Single-writer store. Inserts are committed in batches of 64; reads
    through the same connection see uncommitted rows."""

    def __init__(self, path: str | os.PathLike, readonly: bool = False):
        self.path = str(path)
        self.readonly = readonly
        if readonly:
            if not os.path.exists(self.path):
                raise StoreError(f"store not found: {self.path}")
            self._conn = sqlite3.connect(f"file:{self.path}?mode=ro", uri=True)
        else:
            parent = os.path.dirname(os.path.abspath(self.path))
            os.makedirs(parent, exist_ok=True)
            self._conn = sqlite3.connect(self.path)
            self._conn.execute(_SCHEMA)
            self._conn.commit()
        self._pending = 0

    # context manager
    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    @property
    def closed(self) -> bool:
        return self._conn is None

    def _require_open(self) -> sqlite3.Connection:
        if self._conn is None:
            raise StoreError("store is closed")
        return self._conn

    def insert(self, record: ActivationRecord) -> int:
        conn = self._require_open()
        if self.readonly:
            raise StoreError("store opened read-only")
        record.validate()
        cur = conn.execute(
            f"INSERT INTO tensors ({', '.join(COLUMNS)}) VALUES ({', '.join('?' * len(COLUMNS))})",
            (
                record.name,
                record.architecture,
                record.image_path,
                record.prompt,
                record.label,
                record.layer,
                json.dumps([int(d) for d in record.tensor_dim]),
                sqlite3.Binary(record.tensor),
                record.dtype,
            ),
        )
        self._pending += 1
        if self._pending >= BATCH_SIZE:
            self.flush()
        record.id = cur.lastrowid
        return cur.lastrowid

    def insert_many(self, records: Iterable[ActivationRecord]) -> list[int]:
        return [self.insert(r) for r in records]

    def flush(self) -> None:
        conn = self._require_open()
        if self._pending:
            conn.commit()
            self._pending = 0

    def close(self) -> None:
        if self._conn is not None:
            if not self.readonly:
                self._conn.commit()
            self._conn.close()
            self._conn = None

    def __len__(self) -> int:
        return self._require_open().execute("SELECT COUNT(*) FROM tensors").fetchone()[0]

    def query(self, **filters) -> list[ActivationRecord]:
        """Records matching every equality constraint, in insertion order.

        ``label=None`` matches rows whose label is NULL. ``firing_index`` on the
        returned records counts repeats of the same (name, architecture,
        image_path, prompt, layer) in insertion order.
        """
        conn = self._require_open()
        unknown = sorted(set(filters) - FILTER_KEYS)
        if unknown:
            raise StoreError(f"unknown filter key(s) {unknown}; allowed: {sorted(FILTER_KEYS)}")
        clauses, params = [], []
        for key in sorted(filters):
            value = filters[key]
            if value is None:
                clauses.append(f"{key} IS NULL")
            else:
                clauses.append(f"{key} = ?")
                params.append(value)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        sql = f"""
            SELECT rowid, {', '.join(COLUMNS)}, firing FROM (
                SELECT rowid, *, ROW_NUMBER() OVER (
                    PARTITION BY name, architecture, image_path, prompt, layer ORDER BY rowid
                ) - 1 AS firing
                FROM tensors
            ) {where} ORDER BY rowid
        """
        out = []
        for row in conn.execute(sql, params):
            rowid, name, arch, image_path, prompt, label, layer, dims, blob, dtype, firing = row
            out.append(
                ActivationRecord(
                    name, arch, image_path, prompt, label, layer,
                    json.loads(dims), bytes(blob), dtype, id=rowid, firing_index=firing,
                )
            )
        return out

    def distinct(self, column: str) -> list:
        if column not in COLUMNS or column == "tensor":
            raise StoreError(f"cannot list distinct values of {column!r}")
        conn = self._require_open()
        return [r[0] for r in conn.execute(f"SELECT {column} FROM tensors GROUP BY {column} ORDER BY MIN(rowid)")]

    def columns(self) -> list[str]:
        conn = self._require_open()
        return [row[1] for row in conn.execute("PRAGMA table_info(tensors)")]

    def export(self, out_dir: str | os.PathLike, **filters) -> Path:
        """Write every matching record as ``<id>.bin`` plus ``manifest.json``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for rec in self.query(**filters):
            fname = f"{rec.id:08d}.bin"
            (out / fname).write_bytes(rec.tensor)
            entries.append(
                {
                    "id": rec.id,
                    "file": fname,
                    "name": rec.name,
                    "architecture": rec.architecture,
                    "image_path": rec.image_path,
                    "prompt": rec.prompt,
                    "label": rec.label,
                    "layer": rec.layer,
                    "tensor_dim": rec.tensor_dim,
                    "dtype": rec.dtype,
                    "firing_index": rec.firing_index,
                }
            )
        manifest = {"encoding": "float32-le-row-major", "records": entries}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return out / "manifest.json"


def insert(store: ActivationStore, record: ActivationRecord) -> int:
    return store.insert(record)


def query(store: ActivationStore, **filters) -> list[ActivationRecord]:
    return store.query(**filters)
