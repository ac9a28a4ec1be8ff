"""Dataset manifests and on-disk formats.

Feature matrices travel either as CSV (one sample per row, optional
header) or as the flat binary format: a 16-byte little-endian header
(magic "UOSF", u32 version, u32 m, u32 N) followed by m*N float64 values
stored column by column, so each sample's m values are contiguous.
Leaf-basis files use the same conventions under the magic "UOSL".
"""

from __future__ import annotations

import struct
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .sequences import LeafSet, SequenceSample
from .solver import FeatureMatrix

FEATURE_MAGIC = b"UOSF"
LEAVES_MAGIC = b"UOSL"
FORMAT_VERSION = 1

NORM_WARN_TOL = 1e-6


@dataclass
class DatasetManifest:
    """Paths and layout of one feature dataset."""

    features: Path
    fmt: str  # "csv" | "bin"
    labels: Path | None = None
    boundaries: Path | None = None
    block_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.features = Path(self.features)
        if self.fmt not in ("csv", "bin"):
            raise ConfigError(f"unknown feature format {self.fmt!r}")
        if self.labels is not None:
            self.labels = Path(self.labels)
        if self.boundaries is not None:
            self.boundaries = Path(self.boundaries)
        for p in (self.features, self.labels, self.boundaries):
            if p is not None and not p.exists():
                raise ConfigError(f"manifest file does not exist: {p}")


def _validate_entries(data: np.ndarray, source) -> None:
    bad = ~np.isfinite(data)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"{source}: non-finite value at row {r}, column {c}")


def _normalize_columns(data: np.ndarray, source) -> np.ndarray:
    norms = np.linalg.norm(data, axis=0)
    if np.any(norms == 0):
        col = int(np.argmin(norms))
        raise DataError(f"{source}: column {col} is identically zero")
    if np.any(np.abs(norms - 1.0) > NORM_WARN_TOL):
        warnings.warn(
            f"{source}: columns renormalized to unit l2 norm", stacklevel=3
        )
    return data / norms


def read_feature_csv(path) -> np.ndarray:
    """CSV with one sample per row; a non-numeric first line is treated as a header."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
        skip = 0
        try:
            [float(tok) for tok in first.replace(",", " ").split()]
        except ValueError:
            skip = 1
    rows = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    _validate_entries(rows, path)  # report positions in file coordinates
    return rows.T  # samples become columns


def write_feature_csv(path, data: np.ndarray) -> None:
    np.savetxt(path, np.asarray(data, dtype=float).T, delimiter=",")


def read_feature_bin(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != FEATURE_MAGIC:
        raise DataError(f"{path}: not a feature binary (bad magic)")
    version, m, n = struct.unpack("<III", raw[4:16])
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    expected = 16 + 8 * m * n
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f8", offset=16)
    data = flat.reshape((m, n), order="F").copy()
    _validate_entries(data, path)
    return data


def write_feature_bin(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=float)
    m, n = data.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, m, n))
        fh.write(np.asfortranarray(data).tobytes(order="F"))


def load_feature_matrix(manifest: DatasetManifest) -> FeatureMatrix:
    """Load, validate and column-normalize the manifest's feature matrix."""
    reader = read_feature_csv if manifest.fmt == "csv" else read_feature_bin
    data = reader(manifest.features)
    data = _normalize_columns(data, manifest.features)
    return FeatureMatrix(data, block_shape=manifest.block_shape)


def load_labels(path) -> np.ndarray:
    labels = np.loadtxt(path, dtype=int, ndmin=1)
    return labels


def write_labels(path, labels) -> None:
    np.savetxt(path, np.asarray(labels, dtype=int), fmt="%d")


def load_boundaries(path, n_samples: int) -> list[tuple[int, int]]:
    """Half-open [start, end) sequence ranges; must partition [0, n_samples)."""
    spans = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{path}: boundary lines need 'start end', got {line!r}")
            spans.append((int(parts[0]), int(parts[1])))
    cursor = 0
    for start, end in spans:
        if start != cursor or end <= start:
            raise DataError(f"{path}: boundaries do not partition [0, {n_samples})")
        cursor = end
    if cursor != n_samples:
        raise DataError(f"{path}: boundaries cover [0, {cursor}), expected {n_samples}")
    return spans


def write_boundaries(path, spans) -> None:
    with open(path, "w") as fh:
        for start, end in spans:
            fh.write(f"{start} {end}\n")


def save_leaves(path, leaves: LeafSet) -> None:
    with open(path, "wb") as fh:
        fh.write(LEAVES_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(leaves)))
        for basis in leaves.bases:
            fh.write(struct.pack("<II", basis.shape[0], basis.shape[1]))
            fh.write(np.ascontiguousarray(basis, dtype="<f8").tobytes())


def load_leaves(path) -> LeafSet:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != LEAVES_MAGIC:
            raise DataError(f"{path}: not a leaf-basis file (bad magic)")
        version, count = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        bases = []
        for _ in range(count):
            rows, cols = struct.unpack("<II", fh.read(8))
            basis = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
            bases.append(basis.reshape(rows, cols).copy())
    return LeafSet(bases)


def load_sequence_dataset(directory) -> list[SequenceSample]:
    """Load features.bin + boundaries.txt + labels.txt from a dataset directory."""
    directory = Path(directory)
    manifest = DatasetManifest(
        features=directory / "features.bin",
        fmt="bin",
        labels=directory / "labels.txt",
        boundaries=directory / "boundaries.txt",
    )
    fm = load_feature_matrix(manifest)
    labels = load_labels(manifest.labels)
    spans = load_boundaries(manifest.boundaries, fm.n_samples)
    if len(labels) != len(spans):
        raise DataError(f"{directory}: one label per sequence expected")
    return [
        SequenceSample(features=fm.data[:, start:end], label=int(lbl))
        for (start, end), lbl in zip(spans, labels)
    ]


def save_sequence_dataset(directory, samples: list[SequenceSample]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = np.hstack([s.features for s in samples])
    spans = []
    cursor = 0
    for s in samples:
        spans.append((cursor, cursor + s.length))
        cursor += s.length
    write_feature_bin(directory / "features.bin", data)
    write_boundaries(directory / "boundaries.txt", spans)
    write_labels(directory / "labels.txt", [s.label for s in samples])


def diag(message: str) -> None:
    """Diagnostic line on the error stream."""
    print(message, file=sys.stderr)
