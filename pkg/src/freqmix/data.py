"""Skeleton ingestion, preprocessing, modalities, synthetic data and storage."""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .spectral import dct_matrix

MODALITIES = ("joint", "bone", "joint_motion", "bone_motion")

# NTU RGB+D 25-joint skeleton, (child, parent), 1-based; joint 21 (spine
# shoulder) is the root of the standard bone layout.
NTU_PAIRS = (
    (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7), (9, 21),
    (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15), (17, 1),
    (18, 17), (19, 18), (20, 19), (21, 21), (22, 23), (23, 8), (24, 25), (25, 12),
)

# X-Sub training subjects of NTU RGB+D 60.
NTU_XSUB_TRAIN = frozenset(
    (1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38)
)

TRAIN, TEST = 0, 1


class ParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(msg if line is None else f"line {line}: {msg}")
        self.line = line


class FormatError(ValueError):
    pass


@dataclass
class SkeletonSequence:
    joints: np.ndarray  # (J, 3, F_raw)
    label: int = -1
    subject_id: int = -1
    camera_id: int = -1
    source: str = ""

    @property
    def J(self) -> int:
        return self.joints.shape[0]

    @property
    def frames(self) -> int:
        return self.joints.shape[2]


_NTU_NAME = re.compile(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})")


def parse_ntu_skeleton(text: str, source: str = "") -> SkeletonSequence:
    """Read the first tracked body of an NTU ``.skeleton`` text file."""
    lines = text.splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file (truncated)", pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    def as_int(tok, lineno):
        if len(tok) != 1:
            raise ParseError(f"expected one integer, got {' '.join(tok)!r}", lineno)
        try:
            return int(tok[0])
        except ValueError:
            raise ParseError(f"non-numeric count {tok[0]!r}", lineno) from None

    if not any(s.strip() for s in lines):
        raise ParseError("empty sequence")
    lineno, tok = next_line()
    n_frames = as_int(tok, lineno)
    if n_frames <= 0:
        raise ParseError("empty sequence", 1)
    frames = []
    J = None
    for _ in range(n_frames):
        lineno, tok = next_line()
        n_bodies = as_int(tok, lineno)
        body = None
        for b in range(n_bodies):
            next_line()  # body metadata
            lineno, tok = next_line()
            n_joints = as_int(tok, lineno)
            coords = np.empty((n_joints, 3))
            for j in range(n_joints):
                lineno, tok = next_line()
                if len(tok) < 3:
                    raise ParseError(f"joint line has {len(tok)} fields, need at least 3", lineno)
                try:
                    coords[j] = [float(t) for t in tok[:3]]
                except ValueError:
                    raise ParseError(f"non-numeric joint coordinate in {' '.join(tok[:3])!r}", lineno) from None
                if not np.all(np.isfinite(coords[j])):
                    raise ParseError("non-finite joint coordinate", lineno)
            if b == 0:
                if J is None:
                    J = n_joints
                elif n_joints != J:
                    raise ParseError(f"joint count {n_joints} differs from earlier frames ({J})", lineno)
                body = coords
        frames.append(body)
    if J is None:
        raise ParseError("no tracked body in any frame")
    joints = np.stack([np.zeros((J, 3)) if f is None else f for f in frames], axis=-1)
    seq = SkeletonSequence(joints, source=source)
    m = _NTU_NAME.search(source)
    if m:
        seq.subject_id = int(m.group(3))
        seq.camera_id = int(m.group(2))
        seq.label = int(m.group(5)) - 1
    return seq


def write_ntu_skeleton(seq: SkeletonSequence) -> str:
    """Inverse of :func:`parse_ntu_skeleton` for a single-body sequence."""
    out = [str(seq.frames)]
    for f in range(seq.frames):
        out += ["1", "0 0 0 0 0 0 0 0 0 2", str(seq.J)]
        for j in range(seq.J):
            x, y, z = (repr(float(v)) for v in seq.joints[j, :, f])
            out.append(f"{x} {y} {z} 0 0 0 0 0 0 0 0 2")
    return "\n".join(out) + "\n"


def load_ntu_file(path) -> SkeletonSequence:
    path = Path(path)
    return parse_ntu_skeleton(path.read_text(), source=path.name)


def resample_center(seq, F: int, center: int = 0) -> np.ndarray:
    """Linear interpolation to F frames, then subtract the first-frame center joint.

    ``center`` is 0-based (0 is NTU joint 1, the spine base).
    """
    if F < 1:
        raise ValueError(f"F must be >= 1, got {F}")
    x = seq.joints if isinstance(seq, SkeletonSequence) else np.asarray(seq, dtype=np.float64)
    J, C, Fr = x.shape
    if Fr == F:
        out = x.astype(np.float64, copy=True)
    elif Fr == 1:
        out = np.repeat(x.astype(np.float64), F, axis=2)
    else:
        t = np.linspace(0.0, Fr - 1, F)
        lo = np.minimum(np.floor(t).astype(int), Fr - 2)
        w = t - lo
        out = x[:, :, lo] * (1.0 - w) + x[:, :, lo + 1] * w
    return out - out[center, :, 0][None, :, None]


def center_frames(x) -> np.ndarray:
    """Subtract every joint coordinate's mean over frames (the last axis)."""
    x = np.asarray(x, dtype=np.float64)
    return x - x.mean(axis=-1, keepdims=True)


def default_parents(J: int) -> np.ndarray:
    """0-based parent per joint: NTU layout for 25 joints, else a chain."""
    if J == 25:
        parents = np.empty(25, dtype=int)
        for child, parent in NTU_PAIRS:
            parents[child - 1] = parent - 1
        return parents
    return np.maximum(np.arange(J) - 1, 0)


def _motion(x):
    out = np.zeros_like(x)
    out[..., :-1] = x[..., 1:] - x[..., :-1]
    return out


def derive_modality(x, modality: str, parents=None) -> np.ndarray:
    """joint / bone (joint minus parent) / frame-difference motion streams."""
    x = np.asarray(x, dtype=np.float64)
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}; expected one of {MODALITIES}")
    if modality == "joint":
        return x.copy()
    if modality == "joint_motion":
        return _motion(x)
    J = x.shape[-3]
    parents = default_parents(J) if parents is None else np.asarray(parents)
    if parents.shape != (J,) or parents.min() < 0 or parents.max() >= J:
        raise ValueError(f"invalid parent indices for {J} joints: {parents}")
    bone = x - x[..., parents, :, :]
    return bone if modality == "bone" else _motion(bone)


# ---------------------------------------------------------------------------
# datasets

@dataclass
class Dataset:
    x: np.ndarray  # (N, J, C_in, F)
    labels: np.ndarray  # (N,) int
    split: np.ndarray  # (N,) uint8, 0 train / 1 test
    num_classes: int
    sources: list = field(default_factory=list)
    version: int = 1

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.split = np.asarray(self.split, dtype=np.uint8)
        n = len(self.x)
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise ValueError("labels and split tags must have one entry per sample")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")
        if not set(np.unique(self.split)) <= {TRAIN, TEST}:
            raise ValueError("split tags must be 0 (train) or 1 (test)")
        if not self.sources:
            self.sources = [f"sample{i}" for i in range(n)]

    @property
    def J(self) -> int:
        return self.x.shape[1]

    @property
    def C_in(self) -> int:
        return self.x.shape[2]

    @property
    def F(self) -> int:
        return self.x.shape[3]

    def __len__(self):
        return len(self.x)

    def indices(self, split: str) -> np.ndarray:
        tag = {"train": TRAIN, "test": TEST}[split]
        return np.flatnonzero(self.split == tag)

    def subset(self, split: str):
        idx = self.indices(split)
        return self.x[idx], self.labels[idx], idx

    def with_modality(self, modality: str) -> "Dataset":
        return Dataset(derive_modality(self.x, modality), self.labels, self.split,
                       self.num_classes, list(self.sources), self.version)

    def manifest_lines(self) -> list[str]:
        name = {TRAIN: "train", TEST: "test"}
        return [f"{i},{int(l)},{name[int(s)]},{src}"
                for i, (l, s, src) in enumerate(zip(self.labels, self.split, self.sources))]


MAGIC = b"FMXD"
_HEADER = struct.Struct("<4sB5I")


def write_canonical(path, ds: Dataset) -> None:
    """Binary dataset file plus a ``.manifest`` text sidecar."""
    path = Path(path)
    N, J, C, F = ds.x.shape
    buf = bytearray(_HEADER.pack(MAGIC, ds.version, J, C, F, ds.num_classes, N))
    rec = struct.Struct("<IB")
    payload = ds.x.astype("<f4")
    for i in range(N):
        buf += rec.pack(int(ds.labels[i]), int(ds.split[i]))
        buf += payload[i].tobytes()
    path.write_bytes(bytes(buf))
    Path(str(path) + ".manifest").write_text("\n".join(ds.manifest_lines()) + "\n")


def canonical_size(J: int, C: int, F: int, N: int) -> int:
    return _HEADER.size + N * (5 + 4 * J * C * F)


def read_canonical(path) -> Dataset:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, J, C, F, k, N = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = canonical_size(J, C, F, N)
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} != header-predicted {expected} (truncated payload?)")
    x = np.empty((N, J, C, F))
    labels = np.empty(N, dtype=np.int64)
    split = np.empty(N, dtype=np.uint8)
    off = _HEADER.size
    width = J * C * F
    for i in range(N):
        labels[i], split[i] = struct.unpack_from("<IB", data, off)
        off += 5
        x[i] = np.frombuffer(data, dtype="<f4", count=width, offset=off).reshape(J, C, F)
        off += 4 * width
    sources = []
    side = Path(str(path) + ".manifest")
    if side.exists():
        sources = [ln.split(",", 3)[3] for ln in side.read_text().splitlines() if ln.strip()]
    return Dataset(x, labels, split, k, sources, version)


def dataset_from_sequences(seqs, F: int, center: int = 0, train_subjects=NTU_XSUB_TRAIN,
                           num_classes: int | None = None) -> Dataset:
    """Resample/center parsed sequences and tag splits by subject (X-Sub style)."""
    if not seqs:
        raise ValueError("no sequences")
    x = np.stack([resample_center(s, F, center) for s in seqs])
    labels = np.array([max(s.label, 0) for s in seqs])
    split = np.array([TRAIN if s.subject_id in train_subjects else TEST for s in seqs])
    k = num_classes or int(labels.max()) + 1
    return Dataset(x, labels, split, max(k, 2), [s.source for s in seqs])


# ---------------------------------------------------------------------------
# synthetic confusable actions

@dataclass(frozen=True)
class SynthSpec:
    J: int = 25
    F: int = 64
    classes: int = 2
    samples: int = 600
    jitter_joints: tuple = (11, 23)  # 0-based: NTU right hand / left thumb region
    jitter_amp: float = 0.3
    noise: float = 0.01
    n_high: int = 12
    low_bins: int = 4
    low_var: float = 0.02
    test_fraction: float = 1 / 3
    center: bool = True  # remove each coordinate's mean over frames

    def validate(self):
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        if not self.jitter_amp > 0:
            raise ValueError("jitter_amp must be positive")
        if not self.jitter_joints:
            raise ValueError("jitter_joints must be nonempty")
        if any(not 0 <= j < self.J for j in self.jitter_joints):
            raise ValueError(f"jitter joints {self.jitter_joints} outside [0, {self.J})")
        if not 1 <= self.n_high <= self.F - self.low_bins:
            raise ValueError(f"n_high={self.n_high} must leave the {self.low_bins} low bins untouched")
        if self.samples < self.classes:
            raise ValueError("fewer samples than classes")

    def jitter_bin(self, c: int) -> int:
        """0-based DCT bin of class c's jitter, spread over the top n_high bins."""
        return self.F - self.n_high + (c * self.n_high) // self.classes

    def jitter_axis(self, c: int) -> int:
        return c % 3


def _base_trajectory(spec: SynthSpec, rng) -> np.ndarray:
    B = dct_matrix(spec.F)
    coef = np.zeros((spec.J, 3, spec.F))
    coef[:, :, 0] = rng.uniform(-1, 1, size=(spec.J, 3)) * np.sqrt(spec.F)
    decay = 0.5 ** np.arange(1, spec.low_bins)
    coef[:, :, 1:spec.low_bins] = rng.normal(size=(spec.J, 3, spec.low_bins - 1)) * decay * np.sqrt(spec.F) * 0.3
    return coef @ B


def class_jitter(spec: SynthSpec, c: int, amp: float = 1.0) -> np.ndarray:
    """Noise-free class signature: a pure high-bin cosine on the jitter joints."""
    B = dct_matrix(spec.F)
    sig = np.zeros((spec.J, 3, spec.F))
    atom = np.sqrt(spec.F / 2.0) * B[spec.jitter_bin(c)]  # unit-amplitude cosine
    for j in spec.jitter_joints:
        sig[j, spec.jitter_axis(c)] = amp * spec.jitter_amp * atom
    return sig


def class_prototypes(spec: SynthSpec, seed: int) -> np.ndarray:
    """(classes, J, 3, F) noiseless base + nominal jitter, sharing the generator's base."""
    spec.validate()
    base = _base_trajectory(spec, nx.make_rng(seed))
    return np.stack([base + class_jitter(spec, c) for c in range(spec.classes)])


def synth_confusable(spec: SynthSpec, seed: int) -> Dataset:
    """Classes share one smooth base; only high-frequency jitter tells them apart."""
    spec.validate()
    rng = nx.make_rng(seed)
    base = _base_trajectory(spec, rng)
    B = dct_matrix(spec.F)
    N, k = spec.samples, spec.classes
    labels = np.arange(N) % k
    x = np.empty((N, spec.J, 3, spec.F))
    for i in range(N):
        low = np.zeros((spec.J, 3, spec.F))
        low[:, :, :spec.low_bins] = rng.normal(size=(spec.J, 3, spec.low_bins)) * spec.low_var * np.sqrt(spec.F) / spec.low_bins
        amp = rng.uniform(0.75, 1.25)
        x[i] = base + low @ B + class_jitter(spec, labels[i], amp)
        x[i] += rng.normal(scale=spec.noise, size=x[i].shape)
    if spec.center:
        x = center_frames(x)
    split = np.full(N, TRAIN, dtype=np.uint8)
    for c in range(k):
        idx = np.flatnonzero(labels == c)
        n_test = int(round(len(idx) * spec.test_fraction))
        split[idx[len(idx) - n_test:]] = TEST
    return Dataset(x, labels, split, k, [f"synth{seed}_{i}" for i in range(N)])
