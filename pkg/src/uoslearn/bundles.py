"""Trained-model bundles: leaf bases plus classifier parameters in one file.

Binary format, little-endian, versioned header (magic "UOSM", u32
version, u8 kind). Kinds: 1 nearest-neighbor, 2 open-set
nearest-neighbor, 3 one-vs-one SVM, 4 one-vs-all SVM, 5 open-set
one-vs-all SVM. Round-trips are lossless.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .sequences import (
    LeafSet,
    SequenceSample,
    class_distance_ceilings,
    knn_classify,
    leaf_distance_table,
    open_set_knn,
)
from .svm import BinarySvmModel, MulticlassSvmModel, open_set_svm, svm_predict_multiclass

BUNDLE_MAGIC = b"UOSM"
BUNDLE_VERSION = 1

KIND_KNN = 1
KIND_KNN_OPEN = 2
KIND_SVM_OVO = 3
KIND_SVM_OVA = 4
KIND_SVM_OPEN = 5

_SVM_KINDS = {
    KIND_SVM_OVO: "one_vs_one",
    KIND_SVM_OVA: "one_vs_all",
    KIND_SVM_OPEN: "one_vs_all",
}


@dataclass
class KnnModel:
    """Nearest-neighbor classifier state: labeled training sequences and k."""

    train: list[SequenceSample]
    k: int
    open_set: bool = False
    varsigma: float = 1.2
    ceilings: dict[int, float] | None = None

    def fit_ceilings(self, leaves: LeafSet) -> None:
        if self.open_set and self.ceilings is None:
            self.ceilings = class_distance_ceilings(self.train, leaves, self.k)

    def predict(self, test: SequenceSample, leaves: LeafSet, cost_table=None):
        table = leaf_distance_table(leaves) if cost_table is None else cost_table
        if self.open_set:
            self.fit_ceilings(leaves)
            return open_set_knn(
                test, self.train, leaves, self.k, self.varsigma, self.ceilings, table
            )
        return knn_classify(test, self.train, leaves, self.k, table)


def _write_array(fh, arr, dtype):
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _write_leaves(fh, leaves: LeafSet):
    fh.write(struct.pack("<I", len(leaves)))
    for basis in leaves.bases:
        fh.write(struct.pack("<II", basis.shape[0], basis.shape[1]))
        _write_array(fh, basis, "<f8")


def _read_leaves(fh) -> LeafSet:
    (count,) = struct.unpack("<I", fh.read(4))
    bases = []
    for _ in range(count):
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8")
        bases.append(data.reshape(rows, cols).copy())
    return LeafSet(bases)


def _write_assignment(fh, psi):
    psi = np.asarray(psi, dtype=int)
    fh.write(struct.pack("<I", len(psi)))
    _write_array(fh, psi, "<u4")


def _read_assignment(fh) -> np.ndarray:
    (length,) = struct.unpack("<I", fh.read(4))
    return np.frombuffer(fh.read(4 * length), dtype="<u4").astype(int)


def save_model_bundle(path, leaves: LeafSet, model, open_set: bool = False) -> None:
    """Write a bundle; `open_set` marks a one-vs-all SVM for open-set prediction."""
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack("<I", BUNDLE_VERSION))
        if isinstance(model, KnnModel):
            kind = KIND_KNN_OPEN if model.open_set else KIND_KNN
            fh.write(struct.pack("<B", kind))
            _write_leaves(fh, leaves)
            fh.write(struct.pack("<Id", model.k, model.varsigma))
            ceilings = model.ceilings or {}
            fh.write(struct.pack("<I", len(ceilings)))
            for cid in sorted(ceilings):
                fh.write(struct.pack("<id", cid, ceilings[cid]))
            fh.write(struct.pack("<I", len(model.train)))
            for s in model.train:
                if s.label is None or s.assignment is None:
                    raise ConfigError("training sequences need labels and assignments")
                fh.write(struct.pack("<i", s.label))
                fh.write(struct.pack("<II", *s.features.shape))
                _write_array(fh, s.features, "<f8")
                _write_assignment(fh, s.assignment)
        elif isinstance(model, MulticlassSvmModel):
            if model.mode == "one_vs_one":
                kind = KIND_SVM_OVO
            else:
                kind = KIND_SVM_OPEN if open_set else KIND_SVM_OVA
            fh.write(struct.pack("<B", kind))
            _write_leaves(fh, leaves)
            fh.write(struct.pack("<dd", model.nu, model.c))
            fh.write(struct.pack("<I", len(model.train_assignments)))
            for label, psi in zip(model.labels, model.train_assignments):
                fh.write(struct.pack("<i", int(label)))
                _write_assignment(fh, psi)
            fh.write(struct.pack("<I", len(model.models)))
            for key in sorted(model.models):
                binary, idx = model.models[key]
                ca, cb = key if isinstance(key, tuple) else (key, -1)
                fh.write(struct.pack("<iid", ca, cb, binary.bias))
                fh.write(struct.pack("<I", len(idx)))
                _write_array(fh, idx, "<u4")
                _write_array(fh, binary.alpha, "<f8")
                _write_array(fh, binary.y, "<f8")
        else:
            raise ConfigError(f"cannot bundle model of type {type(model).__name__}")


def load_model_bundle(path):
    """Load a bundle; returns (leaves, model, kind)."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != BUNDLE_MAGIC:
            raise DataError(f"{path}: not a model bundle (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != BUNDLE_VERSION:
            raise DataError(f"{path}: unsupported bundle version {version}")
        (kind,) = struct.unpack("<B", fh.read(1))
        leaves = _read_leaves(fh)
        if kind in (KIND_KNN, KIND_KNN_OPEN):
            k, varsigma = struct.unpack("<Id", fh.read(12))
            (n_ceil,) = struct.unpack("<I", fh.read(4))
            ceilings = {}
            for _ in range(n_ceil):
                cid, ceil = struct.unpack("<id", fh.read(12))
                ceilings[cid] = ceil
            (n_train,) = struct.unpack("<I", fh.read(4))
            train = []
            for _ in range(n_train):
                (label,) = struct.unpack("<i", fh.read(4))
                rows, cols = struct.unpack("<II", fh.read(8))
                feats = np.frombuffer(fh.read(8 * rows * cols), dtype="<f8").reshape(
                    rows, cols
                )
                psi = _read_assignment(fh)
                train.append(
                    SequenceSample(features=feats.copy(), label=label, assignment=psi)
                )
            model = KnnModel(
                train=train,
                k=k,
                open_set=(kind == KIND_KNN_OPEN),
                varsigma=varsigma,
                ceilings=ceilings or None,
            )
            return leaves, model, kind
        if kind in _SVM_KINDS:
            nu, c = struct.unpack("<dd", fh.read(16))
            (n_train,) = struct.unpack("<I", fh.read(4))
            labels = []
            assignments = []
            for _ in range(n_train):
                (label,) = struct.unpack("<i", fh.read(4))
                labels.append(label)
                assignments.append(_read_assignment(fh))
            (n_models,) = struct.unpack("<I", fh.read(4))
            models = {}
            for _ in range(n_models):
                ca, cb, bias = struct.unpack("<iid", fh.read(16))
                (n_sub,) = struct.unpack("<I", fh.read(4))
                idx = np.frombuffer(fh.read(4 * n_sub), dtype="<u4").astype(int)
                alpha = np.frombuffer(fh.read(8 * n_sub), dtype="<f8").copy()
                y = np.frombuffer(fh.read(8 * n_sub), dtype="<f8").copy()
                key = (ca, cb) if cb >= 0 else ca
                models[key] = (BinarySvmModel(alpha=alpha, y=y, bias=bias), idx)
            labels_arr = np.asarray(labels, dtype=int)
            model = MulticlassSvmModel(
                mode=_SVM_KINDS[kind],
                classes=sorted(set(labels)),
                train_assignments=assignments,
                labels=labels_arr,
                nu=nu,
                c=c,
                models=models,
            )
            return leaves, model, kind
        raise DataError(f"{path}: unknown bundle kind {kind}")


def predict_with_bundle(model, kind: int, test: SequenceSample, leaves: LeafSet):
    """Dispatch prediction for a loaded bundle; returns a class id or None."""
    if kind in (KIND_KNN, KIND_KNN_OPEN):
        return model.predict(test, leaves)
    from .sequences import assign_to_leaves

    psi = assign_to_leaves(test, leaves)
    if kind == KIND_SVM_OPEN:
        return open_set_svm(model, psi, leaves)
    return svm_predict_multiclass(model, psi, leaves)
