"""On-disk artifact formats.

Chroma dataset ("ONRC"): u32 clip count, then per clip u64 clip_id,
u64 source_id, i32 label (-1 = unlabeled), u32 T, and 12*T float32
little-endian frame values.

Embedding matrix ("NCDE"): u32 n, u32 d, then n*d float32 little-endian
values; row order matches the label sidecar CSV.

Model checkpoints use the ONRK format from numkit. Every loader validates
magic/version up front and raises FormatError on mismatch.
"""

from __future__ import annotations

import csv
import hashlib
import struct

import numpy as np

from .errors import FormatError
from .features import ChromaClip, recording_contexts

CHROMA_MAGIC = b"ONRC"
EMBEDDING_MAGIC = b"NCDE"


def write_chroma_dataset(path, clips: list[ChromaClip], hide_labels: bool = False) -> None:
    with open(path, "wb") as fh:
        fh.write(CHROMA_MAGIC)
        fh.write(struct.pack("<I", len(clips)))
        for clip in clips:
            label = -1 if (hide_labels or clip.label is None) else int(clip.label)
            t = clip.frames.shape[1]
            fh.write(struct.pack("<QQiI", clip.clip_id, clip.source_id, label, t))
            fh.write(np.asarray(clip.frames, dtype="<f4").tobytes())


def read_chroma_dataset(path, frame_hop: float) -> list[ChromaClip]:
    """Load clips; start_frame offsets are rebuilt from per-source clip order."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHROMA_MAGIC:
        raise FormatError(f"bad chroma dataset magic {data[:4]!r} in {path}")
    pos = 4
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        clips = []
        for _ in range(count):
            clip_id, source_id, label, t = struct.unpack_from("<QQiI", data, pos)
            pos += struct.calcsize("<QQiI")
            nbytes = 12 * t * 4
            if pos + nbytes > len(data):
                raise FormatError(f"chroma dataset {path} truncated")
            frames = np.frombuffer(data, dtype="<f4", count=12 * t, offset=pos)
            pos += nbytes
            clips.append(ChromaClip(clip_id=clip_id, source_id=source_id,
                                    frames=frames.reshape(12, t).astype(np.float64),
                                    label=None if label < 0 else label,
                                    frame_hop=frame_hop))
    except struct.error as exc:
        raise FormatError(f"chroma dataset {path} truncated: {exc}") from exc
    if pos != len(data):
        raise FormatError(f"trailing bytes in chroma dataset {path}")
    recording_contexts(clips)  # rebuild start_frame offsets
    return clips


def write_embeddings(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise FormatError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(np.asarray(matrix, dtype="<f4").tobytes())


def read_embeddings(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"bad embedding magic {data[:4]!r} in {path}")
    if len(data) < 12:
        raise FormatError(f"embedding file {path} truncated")
    n, d = struct.unpack_from("<II", data, 4)
    if len(data) != 12 + 4 * n * d:
        raise FormatError(f"embedding file {path} has wrong payload size")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(n, d).astype(np.float64)


def write_label_csv(path, clips: list[ChromaClip], class_names: dict[int, str] | None = None) -> None:
    class_names = class_names or {}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clip_id", "source_id", "label", "class_name"])
        for clip in clips:
            label = -1 if clip.label is None else clip.label
            writer.writerow([clip.clip_id, clip.source_id, label,
                             class_names.get(label, "") if label >= 0 else ""])


def read_label_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["clip_id"] = int(row["clip_id"])
        row["source_id"] = int(row["source_id"])
        row["label"] = int(row["label"])
    return rows


def write_csv(path, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
