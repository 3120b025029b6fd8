# federated/libsvm.py
"""
LIBSVM text ingestion.

One example per line: ``label index:value index:value ...`` with 1-based,
strictly increasing feature indices. Blank lines are skipped; anything else
that does not parse aborts with the offending line number.
"""

import argparse
import logging
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy import sparse

from federated.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LibsvmDataset:
    features: sparse.csr_matrix
    labels: np.ndarray
    source: Optional[str] = None

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def _parse_line(line: str, lineno: int, indices: List[int], values: List[float]) -> float:
    tokens = line.split()
    try:
        label = float(tokens[0])
    except ValueError:
        raise DataError(f"line {lineno}: bad label '{tokens[0]}'") from None

    last = 0
    for token in tokens[1:]:
        idx_str, sep, val_str = token.partition(":")
        if not sep:
            raise DataError(f"line {lineno}: malformed token '{token}'")
        try:
            idx = int(idx_str)
            val = float(val_str)
        except ValueError:
            raise DataError(f"line {lineno}: malformed token '{token}'") from None
        if idx < 1:
            raise DataError(f"line {lineno}: feature index {idx} is not 1-based")
        if idx == last:
            raise DataError(f"line {lineno}: duplicate feature index {idx}")
        if idx < last:
            raise DataError(f"line {lineno}: feature index {idx} after {last} is not increasing")
        last = idx
        indices.append(idx - 1)
        values.append(val)
    return label


def parse_libsvm_lines(lines, n_features: Optional[int] = None, binarize_labels: bool = False,
                       source: Optional[str] = None) -> LibsvmDataset:
    labels: List[float] = []
    indices: List[int] = []
    values: List[float] = []
    indptr = [0]

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        labels.append(_parse_line(line, lineno, indices, values))
        indptr.append(len(indices))

    if not labels:
        raise DataError("no examples found")

    width = (max(indices) + 1) if indices else 0
    if n_features is not None:
        if width > n_features:
            raise DataError(f"feature index {width} exceeds n_features={n_features}")
        width = n_features

    features = sparse.csr_matrix(
        (np.asarray(values, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), width),
    )
    label_arr = np.asarray(labels, dtype=float)
    if binarize_labels:
        label_arr = _binarize(label_arr)
    return LibsvmDataset(features=features, labels=label_arr, source=source)


def _binarize(labels: np.ndarray) -> np.ndarray:
    distinct = np.unique(labels)
    if distinct.size != 2:
        raise DataError(f"binarize_labels needs exactly two distinct labels, found {distinct.size}")
    return np.where(labels == distinct[0], -1.0, 1.0)


def load_libsvm(path: str, n_features: Optional[int] = None, binarize_labels: bool = False) -> LibsvmDataset:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"LIBSVM file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        dataset = parse_libsvm_lines(f, n_features=n_features, binarize_labels=binarize_labels, source=path)
    logger.info("Loaded %s: %d rows, %d features", path, dataset.n_rows, dataset.n_features)
    return dataset


# ---------------- CLI ----------------
def _parse_args():
    p = argparse.ArgumentParser(description="Inspect a LIBSVM file")
    p.add_argument("--file", required=True, help="Path to LIBSVM text file")
    p.add_argument("--binarize", action="store_true", help="Map two distinct labels to -1/+1")
    return p.parse_args()


def main():
    args = _parse_args()
    ds = load_libsvm(args.file, binarize_labels=args.binarize)
    labels, counts = np.unique(ds.labels, return_counts=True)
    print(f"[INFO] rows={ds.n_rows} features={ds.n_features} nnz={ds.features.nnz}")
    for label, count in zip(labels, counts):
        print(f"  label {label:g}: {count}")


if __name__ == "__main__":
    main()
