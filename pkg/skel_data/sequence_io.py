"""Read and write skeleton sequence files and dataset manifests.

Sequence file::

    SKELSEQ v1 T=40 J=26 D=2 class=3
    <J*D floats for frame 0>
    ...

Manifest: one ``<relative path>\\t<class_id>`` line per sequence.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Iterable, List, Tuple

import numpy as np

from config.errors import DSLNetError
from skel_data.models import NUM_JOINTS, InvalidSequence, SkeletonSequence

logger = logging.getLogger(__name__)

HEADER_RE = re.compile(r"^SKELSEQ v1 T=(\d+) J=(\d+) D=(\d+) class=(-?\d+)$")


class IoError(DSLNetError, OSError):
    """A sequence or manifest file is missing or unreadable."""


class FormatError(DSLNetError, ValueError):
    """A file does not follow the documented format."""


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"Cannot read {path}: {e}") from e


def load_sequence(path: Path) -> SkeletonSequence:
    """
    Load one SKELSEQ v1 file.

    Args:
        path: sequence file

    Returns:
        validated SkeletonSequence
    """
    lines = [line for line in _read_text(path).splitlines() if line.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")

    match = HEADER_RE.match(lines[0].strip())
    if not match:
        raise FormatError(f"{path}: bad header {lines[0]!r}")
    t, j, d, class_id = (int(g) for g in match.groups())
    if j != NUM_JOINTS:
        raise FormatError(f"{path}: J={j}, expected {NUM_JOINTS}")
    if d not in (2, 3):
        raise FormatError(f"{path}: D={d}, expected 2 or 3")
    if len(lines) - 1 != t:
        raise FormatError(f"{path}: header says T={t} but found {len(lines) - 1} frame lines")

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            values = [float(tok) for tok in line.split()]
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: {e}") from e
        if len(values) != j * d:
            raise FormatError(f"{path}:{lineno}: expected {j * d} values, got {len(values)}")
        rows.append(values)

    frames = np.asarray(rows, dtype=np.float64).reshape(t, j, d)
    if not np.all(np.isfinite(frames)):
        raise FormatError(f"{path}: non-finite coordinate values")

    try:
        return SkeletonSequence(frames=frames, class_id=None if class_id < 0 else class_id)
    except InvalidSequence as e:
        raise FormatError(f"{path}: {e}") from e


def save_sequence(seq: SkeletonSequence, path: Path) -> None:
    """Write a sequence; float repr keeps the round trip exact."""
    t, j, d = seq.frames.shape
    class_id = -1 if seq.class_id is None else seq.class_id
    out = [f"SKELSEQ v1 T={t} J={j} D={d} class={class_id}"]
    for frame in seq.frames.reshape(t, j * d):
        out.append(" ".join(repr(float(v)) for v in frame))

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(out) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}") from e


def load_manifest(path: Path) -> List[Tuple[Path, int]]:
    """Return (absolute sequence path, class_id) pairs listed in a manifest."""
    path = Path(path)
    entries: List[Tuple[Path, int]] = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected '<path>\\t<class_id>'")
        try:
            class_id = int(parts[1])
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: bad class id {parts[1]!r}") from e
        entries.append((path.parent / parts[0], class_id))
    logger.info(f"✓ Manifest {path.name}: {len(entries)} sequences")
    return entries


def write_manifest(path: Path, entries: Iterable[Tuple[Path, int]]) -> None:
    """Write a manifest; paths are stored relative to the manifest directory."""
    path = Path(path)
    lines = []
    for seq_path, class_id in entries:
        rel = Path(seq_path).resolve().relative_to(path.parent.resolve())
        lines.append(f"{rel.as_posix()}\t{class_id}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}") from e


def load_dataset(manifest_path: Path) -> List[SkeletonSequence]:
    """Load every sequence in a manifest; the manifest label wins over the header."""
    sequences = []
    for seq_path, class_id in load_manifest(manifest_path):
        seq = load_sequence(seq_path)
        seq.class_id = class_id
        sequences.append(seq)
    return sequences
