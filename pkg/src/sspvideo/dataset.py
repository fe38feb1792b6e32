"""Synthetic-motion video generator and the on-disk dataset format.

Six temporal programs over a bright square on a dark background:

    0 move right   1 move left   2 move down
    3 grow         4 shrink      5 blink on even frames

Classes 0-2 are confusable from any single frame (a square somewhere);
only the frame ORDER identifies them. Movers and the blinker sit on a
grid of side-aligned cells and advance one cell per frame with
wraparound, so the square always covers whole cells and the trajectory
of class 0 sweeps the same cell set as class 1; classes 0 and 1 share
their base position draw and step mirrored trajectories, so at sigma=0
every frame of a class-0 sample is the horizontal mirror of the same
frame of its class-1 twin, and the unordered frame sets are identical —
shuffling frames erases those labels by construction.

Generation is a pure function of (spec, class_id, index): base geometry
is drawn from (seed, index) so paired classes share it, while noise and
shuffle permutations are drawn from (seed, class_id, index, tag).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError
from .storage import array_sha256, read_tensor, write_tensor

INDEX_NAME = "index.csv"
SPEC_NAME = "spec.json"
SAMPLES_DIR = "samples"
VAL_FRACTION = 0.2
CLASS_NAMES = ("move_right", "move_left", "move_down", "grow", "shrink", "blink")


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 6
    samples_per_class: int = 20
    frames: int = 8
    channels: int = 1
    height: int = 16
    width: int = 16
    noise_sigma: float = 0.05
    seed: int = 0
    shuffle_frames: bool = False

    def __post_init__(self):
        if not (1 <= self.n_classes <= len(CLASS_NAMES)):
            raise ConfigError(
                f"SynthSpec: n_classes={self.n_classes} outside [1, {len(CLASS_NAMES)}]")
        for name in ("samples_per_class", "frames", "height", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"SynthSpec: {name} must be positive")
        if self.channels != 1:
            raise ConfigError("SynthSpec: only single-channel videos are generated")
        if self.noise_sigma < 0:
            raise ConfigError("SynthSpec: noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        bad = set(data) - known
        if bad:
            raise ConfigError(f"SynthSpec: unknown key {sorted(bad)[0]!r}")
        return cls(**data)


@dataclass(frozen=True)
class IndexEntry:
    path: str          # relative to the dataset root
    label: int
    split: str         # "train" | "val"
    sha256: str


@dataclass
class DatasetIndex:
    root: Path
    spec: SynthSpec
    entries: list[IndexEntry]

    def split_entries(self, split: str) -> list[IndexEntry]:
        return [e for e in self.entries if e.split == split]


# ---------------------------------------------------------------------------
# drawing primitives
# ---------------------------------------------------------------------------

def _draw_wrapped(frame: np.ndarray, r: int, c: int, side: int) -> None:
    """Paint a side x side square with toroidal wraparound, value 1."""
    h, w = frame.shape
    rows = (np.arange(r, r + side) % h)[:, None]
    cols = (np.arange(c, c + side) % w)[None, :]
    frame[rows, cols] = 1.0


def _draw_centered(frame: np.ndarray, cy: int, cx: int, side: int) -> None:
    """Paint a side x side square centered at (cy, cx), clipped to the frame."""
    h, w = frame.shape
    r0 = max(0, cy - side // 2)
    c0 = max(0, cx - side // 2)
    r1 = min(h, r0 + side)
    c1 = min(w, c0 + side)
    frame[r0:r1, c0:c1] = 1.0


def generate_sample(spec: SynthSpec, class_id: int, index: int) -> tuple[np.ndarray, int]:
    """One video [T, 1, H, W] in [0,1] plus its label. Pure in all arguments."""
    if not (0 <= class_id < spec.n_classes):
        raise ContractError(
            f"generate_sample: class_id={class_id} outside [0, {spec.n_classes})")
    if index < 0:
        raise ContractError(f"generate_sample: index={index} must be >= 0")

    T, h, w = spec.frames, spec.height, spec.width
    side = max(1, h // 4)
    rows = max(1, h // side)           # cell grid the square moves on
    cols = max(1, w // side)
    # enumerate base cells in a seed-keyed order so every cell recurs once
    # per n_cells consecutive indices (classes share the draw via the index)
    n_cells = rows * cols
    order = np.random.default_rng([spec.seed, 5]).permutation(n_cells)
    cell = int(order[index % n_cells])
    r0 = side * (cell // cols)
    c0 = side * (cell % cols)

    video = np.zeros((T, 1, h, w), dtype=np.float64)
    s_min, s_max = 2, max(3, min(h, w) // 2)
    for t in range(T):
        frame = video[t, 0]
        if class_id == 0:                                   # move right
            _draw_wrapped(frame, r0, (c0 + side * t) % w, side)
        elif class_id == 1:                                 # move left, mirror of 0
            _draw_wrapped(frame, r0, (w - side - c0 - side * t) % w, side)
        elif class_id == 2:                                 # move down
            _draw_wrapped(frame, (r0 + side * t) % h, c0, side)
        elif class_id == 3:                                 # grow
            s = s_min + round((s_max - s_min) * t / max(1, T - 1))
            _draw_centered(frame, h // 2, w // 2, s)
        elif class_id == 4:                                 # shrink
            s = s_max - round((s_max - s_min) * t / max(1, T - 1))
            _draw_centered(frame, h // 2, w // 2, s)
        else:                                               # blink on even frames
            if t % 2 == 0:
                _draw_wrapped(frame, r0, c0, side)

    if spec.shuffle_frames:
        perm_rng = np.random.default_rng([spec.seed, class_id, index, 11])
        video = video[perm_rng.permutation(T)]

    if spec.noise_sigma > 0:
        noise_rng = np.random.default_rng([spec.seed, class_id, index, 7])
        video = video + noise_rng.normal(0.0, spec.noise_sigma, video.shape)
        np.clip(video, 0.0, 1.0, out=video)
    return video, class_id


def generate_all(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """(videos [M, T, 1, H, W], labels [M]) for the whole spec, class-major order."""
    videos, labels = [], []
    for class_id in range(spec.n_classes):
        for index in range(spec.samples_per_class):
            video, label = generate_sample(spec, class_id, index)
            videos.append(video)
            labels.append(label)
    return np.stack(videos), np.asarray(labels, dtype=np.int64)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def assign_splits(spec: SynthSpec) -> list[str]:
    """Stratified train/val assignment, class-major sample order.

    Each class contributes exactly round(samples_per_class * VAL_FRACTION)
    validation samples, chosen by a permutation keyed on (seed, class, 13).
    """
    n_val = int(round(spec.samples_per_class * VAL_FRACTION))
    splits: list[str] = []
    for class_id in range(spec.n_classes):
        rng = np.random.default_rng([spec.seed, class_id, 13])
        val_idx = set(rng.permutation(spec.samples_per_class)[:n_val].tolist())
        splits.extend("val" if i in val_idx else "train"
                      for i in range(spec.samples_per_class))
    return splits


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------

def write_dataset(root: str | Path, spec: SynthSpec) -> DatasetIndex:
    """Materialize every sample plus index.csv and spec.json under root."""
    root = Path(root)
    (root / SAMPLES_DIR).mkdir(parents=True, exist_ok=True)
    splits = assign_splits(spec)
    entries: list[IndexEntry] = []
    flat = 0
    for class_id in range(spec.n_classes):
        for index in range(spec.samples_per_class):
            video, label = generate_sample(spec, class_id, index)
            rel = f"{SAMPLES_DIR}/c{class_id}_i{index:04d}.sspt"
            write_tensor(root / rel, video)
            entries.append(IndexEntry(rel, label, splits[flat], array_sha256(video)))
            flat += 1
    with open(root / INDEX_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "split", "sha256"])
        for e in entries:
            writer.writerow([e.path, e.label, e.split, e.sha256])
    (root / SPEC_NAME).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    return DatasetIndex(root, spec, entries)


def read_dataset(root: str | Path) -> DatasetIndex:
    """Load and verify a dataset directory written by write_dataset."""
    root = Path(root)
    index_path = root / INDEX_NAME
    spec_path = root / SPEC_NAME
    if not index_path.is_file():
        raise FormatError(f"{index_path}: dataset index missing")
    if not spec_path.is_file():
        raise FormatError(f"{spec_path}: dataset spec missing")
    spec = SynthSpec.from_dict(json.loads(spec_path.read_text()))
    entries: list[IndexEntry] = []
    with open(index_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path", "label", "split", "sha256"]:
            raise FormatError(f"{index_path}: unexpected header {header}")
        for ln, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise FormatError(f"{index_path}:{ln}: expected 4 fields")
            path, label, split, digest = row
            if split not in ("train", "val"):
                raise FormatError(f"{index_path}:{ln}: bad split {split!r}")
            entries.append(IndexEntry(path, int(label), split, digest))
    for e in entries:
        arr = read_tensor(root / e.path)
        got = array_sha256(arr)
        if got != e.sha256:
            raise FormatError(
                f"{root / e.path}: content hash {got[:12]}… does not match index "
                f"entry {e.sha256[:12]}…")
    return DatasetIndex(root, spec, entries)


def load_sample(index: DatasetIndex, entry: IndexEntry) -> np.ndarray:
    return read_tensor(index.root / entry.path)


def load_split_arrays(index: DatasetIndex, split: str) -> tuple[np.ndarray, np.ndarray]:
    """(videos [M, T, 1, H, W], labels [M]) for one split, index order."""
    chosen = index.split_entries(split)
    if not chosen:
        raise ContractError(f"load_split_arrays: no {split!r} entries in index")
    videos = np.stack([load_sample(index, e) for e in chosen])
    labels = np.asarray([e.label for e in chosen], dtype=np.int64)
    return videos, labels


def build_in_memory(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(train_videos, train_labels, val_videos, val_labels) without touching disk."""
    videos, labels = generate_all(spec)
    splits = np.asarray(assign_splits(spec))
    tr = splits == "train"
    va = splits == "val"
    return videos[tr], labels[tr], videos[va], labels[va]
