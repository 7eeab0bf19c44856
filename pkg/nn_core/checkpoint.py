"""
Checkpoint serialization.

Layout (all text lines are ASCII, newline terminated):

    DSLNET-CKPT v1
    config <nbytes>
    <nbytes of JSON>\n
    param <name> <ndim> <dim_0> ... <dim_n>
    <row-major little-endian float64 payload>
    ...
    adam <name> <step>
    <m payload><v payload>
    ...
    end
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from config.errors import DSLNetError
from nn_core.params import AdamState, ParamStore
from skel_data.sequence_io import IoError

logger = logging.getLogger(__name__)

MAGIC = b"DSLNET-CKPT v1"
_PAYLOAD_DTYPE = np.dtype("<f8")


class CheckpointError(DSLNetError, ValueError):
    pass


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    params: Dict[str, np.ndarray]
    adam: Dict[str, AdamState] = field(default_factory=dict)

    @classmethod
    def from_store(cls, store: ParamStore, config: Dict[str, Any]) -> "Checkpoint":
        return cls(
            config=config,
            params=store.snapshot(),
            adam={
                name: AdamState(m=s.m.copy(), v=s.v.copy(), step=s.step)
                for name, s in store.state.items()
            },
        )

    def restore(self, store: ParamStore) -> ParamStore:
        """Copy parameters and optimizer moments into an identically built store."""
        if set(self.params) != set(store.params):
            missing = sorted(set(store.params) - set(self.params))
            extra = sorted(set(self.params) - set(store.params))
            raise CheckpointError(f"parameter sets differ: missing={missing[:3]} unexpected={extra[:3]}")
        store.load_snapshot(self.params)
        for name, state in self.adam.items():
            store.state[name] = AdamState(m=state.m.copy(), v=state.v.copy(), step=state.step)
        return store


def _payload(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=_PAYLOAD_DTYPE).tobytes()


def _check_name(name: str) -> None:
    if not name or any(ch.isspace() for ch in name):
        raise CheckpointError(f"parameter name {name!r} cannot be serialized")


def to_bytes(ckpt: Checkpoint) -> bytes:
    config_blob = json.dumps(ckpt.config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, b"\n", f"config {len(config_blob)}\n".encode(), config_blob, b"\n"]

    for name, array in ckpt.params.items():
        _check_name(name)
        dims = " ".join(str(d) for d in array.shape)
        header = f"param {name} {array.ndim} {dims}".rstrip()
        parts += [header.encode("ascii"), b"\n", _payload(array)]

    for name, state in ckpt.adam.items():
        _check_name(name)
        parts += [f"adam {name} {state.step}\n".encode("ascii"), _payload(state.m), _payload(state.v)]

    parts.append(b"end\n")
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def line(self) -> str:
        end = self.blob.find(b"\n", self.pos)
        if end < 0:
            raise CheckpointError("truncated checkpoint: missing record terminator")
        text = self.blob[self.pos:end]
        self.pos = end + 1
        try:
            return text.decode("ascii")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"corrupt record header at byte {self.pos}") from e

    def take(self, nbytes: int) -> bytes:
        if self.pos + nbytes > len(self.blob):
            raise CheckpointError("truncated checkpoint payload")
        chunk = self.blob[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def array(self, shape: Tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(count * _PAYLOAD_DTYPE.itemsize)
        return np.frombuffer(raw, dtype=_PAYLOAD_DTYPE).astype(np.float64).reshape(shape)


def _header_ints(fields: List[str], start: int, count: Optional[int] = None) -> Tuple[int, ...]:
    """Non-negative integers from a record header; malformed headers are CheckpointErrors."""
    raw = fields[start:] if count is None else fields[start:start + count]
    if count is not None and len(raw) != count:
        raise CheckpointError(f"corrupt {fields[0]} record header: {' '.join(fields)!r}")
    try:
        values = tuple(int(x) for x in raw)
    except ValueError as e:
        raise CheckpointError(f"corrupt {fields[0]} record header: {' '.join(fields)!r}") from e
    if any(v < 0 for v in values):
        raise CheckpointError(f"negative size in {fields[0]} record header: {' '.join(fields)!r}")
    return values


def from_bytes(blob: bytes) -> Checkpoint:
    reader = _Reader(blob)
    if reader.line().encode() != MAGIC:
        raise CheckpointError("not a DSLNET-CKPT v1 file")

    fields = reader.line().split(" ")
    if fields[0] != "config":
        raise CheckpointError(f"expected config record, found {fields[0]!r}")
    (size,) = _header_ints(fields, 1, 1)
    try:
        config = json.loads(reader.take(size).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"bad config record: {e}") from e
    reader.take(1)

    params: Dict[str, np.ndarray] = {}
    adam: Dict[str, AdamState] = {}
    while True:
        fields = reader.line().split(" ")
        if fields[0] == "end":
            break
        if fields[0] == "param":
            if len(fields) < 3:
                raise CheckpointError(f"corrupt param record header: {' '.join(fields)!r}")
            name = fields[1]
            (ndim,) = _header_ints(fields, 2, 1)
            shape = _header_ints(fields, 3)
            if len(shape) != ndim:
                raise CheckpointError(f"param {name}: expected {ndim} dims, got {len(shape)}")
            params[name] = reader.array(shape)
        elif fields[0] == "adam":
            if len(fields) != 3:
                raise CheckpointError(f"corrupt adam record header: {' '.join(fields)!r}")
            name = fields[1]
            (step,) = _header_ints(fields, 2, 1)
            if name not in params:
                raise CheckpointError(f"optimizer state for unknown parameter {name}")
            shape = params[name].shape
            adam[name] = AdamState(m=reader.array(shape), v=reader.array(shape), step=step)
        else:
            raise CheckpointError(f"unknown record {fields[0]!r}")

    if reader.pos != len(blob):
        raise CheckpointError("trailing bytes after end record")
    return Checkpoint(config=config, params=params, adam=adam)


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(to_bytes(ckpt))
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"✓ Saved checkpoint with {len(ckpt.params)} parameters to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read checkpoint {path}: {e}") from e
    return from_bytes(blob)
