"""On-disk formats: the SSPTENS1 tensor container and checkpoint directories.

A .sspt file is:

    bytes 0..7   magic b"SSPTENS1"
    u32 LE       rank
    rank x u32   extents, slowest-varying first
    payload      float64 little-endian, C row-major

A checkpoint is a directory of .sspt files plus ``manifest.tsv`` with one
``name<TAB>relative-path<TAB>extents`` line per tensor. Readers validate
magic, rank, extents and payload size and raise FormatError naming the
offending file, never a bare struct error.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SSPTENS1"
MANIFEST_NAME = "manifest.tsv"

_MAX_RANK = 32   # sanity bound; nothing here is remotely close


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    # NB: np.ascontiguousarray would promote 0-d arrays to 1-d; keep rank as-is
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise FormatError(f"{path}: unreadable tensor file ({e})") from None
    if len(blob) < len(MAGIC) + 4:
        raise FormatError(f"{path}: truncated header")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic, not an SSPTENS1 file")
    (rank,) = struct.unpack_from("<I", blob, len(MAGIC))
    if rank > _MAX_RANK:
        raise FormatError(f"{path}: implausible rank {rank}")
    header_end = len(MAGIC) + 4 + 4 * rank
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated extents")
    shape = struct.unpack_from(f"<{rank}I", blob, len(MAGIC) + 4)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    payload = blob[header_end:]
    if len(payload) != 8 * count:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, extents {shape} need {8 * count}"
        )
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    return arr


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def array_sha256(array: np.ndarray) -> str:
    arr = np.ascontiguousarray(array, dtype=np.float64)
    h = hashlib.sha256()
    h.update(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
    h.update(arr.astype("<f8", copy=False).tobytes(order="C"))
    return h.hexdigest()


def _safe_component(name: str) -> str:
    # tensor names use dots (e.g. "layers.0.w_in"); keep file names flat
    return name.replace("/", "_").replace("\\", "_").replace(".", "_")


def save_checkpoint(directory: str | Path, tensors: dict[str, np.ndarray]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in sorted(tensors):
        rel = _safe_component(name) + ".sspt"
        write_tensor(directory / rel, tensors[name])
        extents = "x".join(str(n) for n in np.asarray(tensors[name]).shape)
        lines.append(f"{name}\t{rel}\t{extents}")
    (directory / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def load_checkpoint(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise FormatError(f"{manifest}: checkpoint manifest missing")
    out: dict[str, np.ndarray] = {}
    for ln, line in enumerate(manifest.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{manifest}:{ln}: expected name<TAB>path<TAB>extents")
        name, rel, extents = parts
        arr = read_tensor(directory / rel)
        want = tuple(int(n) for n in extents.split("x")) if extents else ()
        if arr.shape != want:
            raise FormatError(
                f"{directory / rel}: manifest says extents {want}, file has {arr.shape}"
            )
        out[name] = arr
    return out
