"""Dataset loading, validation, column/row slicing, and stratified folds.

The on-disk format is a plain comma-separated table of numeric cells whose
final column is a 0/1 class label, with an optional single header line.
A thin ARFF reader accepts the same content wrapped in @attribute/@data
headers.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Provenance",
    "TabularDataset",
    "FoldAssignment",
    "load_csv",
    "load_arff",
    "load_table",
    "save_csv",
    "class_distribution",
    "project_features",
    "take_rows",
    "stratified_k_folds",
]


@dataclass(frozen=True)
class Provenance:
    """Where a dataset came from and how many rows it had at load time."""

    source: str
    n_rows: int


@dataclass(frozen=True)
class TabularDataset:
    """Immutable numeric feature matrix plus binary labels.

    features: float64 array of shape (n_rows, n_features), all finite.
    labels: int64 array of shape (n_rows,), values in {0, 1}.
    feature_names: unique names, one per feature column.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    provenance: Provenance

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64, order="C")
        labs = np.array(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise ValueError("labels must be 1-D with one entry per feature row")
        if not np.isfinite(feats).all():
            raise ValueError("features must be finite (no NaN or infinity)")
        if labs.size and not np.isin(labs, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != feats.shape[1]:
            raise ValueError("feature_names must match the number of feature columns")
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique")
        feats.setflags(write=False)
        labs.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @classmethod
    def from_arrays(cls, features, labels, feature_names=None, source="memory") -> "TabularDataset":
        feats = np.asarray(features, dtype=np.float64)
        if feature_names is None:
            feature_names = tuple(f"f{j}" for j in range(feats.shape[1]))
        return cls(feats, np.asarray(labels), tuple(feature_names), Provenance(source, feats.shape[0]))


@dataclass(frozen=True)
class FoldAssignment:
    """Maps every row of a dataset to one of k cross-validation folds."""

    fold_of_row: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        ids = np.asarray(self.fold_of_row, dtype=np.int64)
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if ids.ndim != 1 or ids.size == 0:
            raise ValueError("fold_of_row must be a non-empty 1-D array")
        counts = np.bincount(ids, minlength=self.k)
        if ids.min() < 0 or ids.max() >= self.k or (counts == 0).any():
            raise ValueError("every fold in [0, k) must receive at least one row")
        ids.setflags(write=False)
        object.__setattr__(self, "fold_of_row", ids)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_row != fold)


def _read_text(source) -> tuple[str, str]:
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        with open(path, "rb") as fh:
            return fh.read().decode("utf-8"), path
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    name = getattr(source, "name", "<stream>")
    return data, str(name)


def _looks_like_header(line: str) -> bool:
    for cell in line.split(","):
        try:
            float(cell.strip())
        except ValueError:
            return True
    return False


def _parse_rows(lines, names_hint, source_name):
    """Parse comma-separated numeric rows; last column is the 0/1 label."""
    if not lines:
        raise ValueError("empty data section")
    n_cols = len(lines[0].split(","))
    if n_cols < 2:
        raise ValueError("need at least one feature column and a label column")
    feats = np.empty((len(lines), n_cols - 1), dtype=np.float64)
    labs = np.empty(len(lines), dtype=np.int64)
    for i, line in enumerate(lines):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise ValueError(f"row {i}: expected {n_cols} fields, found {len(cells)}")
        for j, cell in enumerate(cells):
            text = cell.strip()
            try:
                value = float(text)
            except ValueError:
                raise ValueError(f"row {i}, column {j}: non-numeric value {text!r}") from None
            if j < n_cols - 1:
                feats[i, j] = value
            elif value == 0.0 or value == 1.0:
                labs[i] = int(value)
            else:
                raise ValueError(f"row {i}: label must be 0 or 1, found {text!r}")
    if not np.isfinite(feats).all():
        bad = np.argwhere(~np.isfinite(feats))[0]
        raise ValueError(f"row {bad[0]}, column {bad[1]}: non-finite value")
    if names_hint is None:
        names = tuple(f"f{j}" for j in range(n_cols - 1))
    else:
        names = tuple(names_hint)
        if len(names) != n_cols - 1:
            raise ValueError(
                f"header names {len(names)} columns of features, rows have {n_cols - 1}"
            )
    return TabularDataset(feats, labs, names, Provenance(source_name, len(lines)))


def load_csv(source, has_header: bool | None = None) -> TabularDataset:
    """Load a CSV table whose final column is the class label.

    source is a filesystem path or a readable text/byte stream.  has_header
    forces the first line to be treated as a header (True) or data (False);
    None sniffs it by looking for non-numeric cells.
    """
    text, name = _read_text(source)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    names_hint = None
    if lines:
        if has_header is None:
            has_header = _looks_like_header(lines[0])
        if has_header:
            header = [c.strip() for c in lines[0].split(",")]
            names_hint = header[:-1]
            lines = lines[1:]
    return _parse_rows(lines, names_hint, name)


def load_arff(source) -> TabularDataset:
    """Load an ARFF file with numeric attributes and a {0,1} class.

    Only dense data rows are accepted; the class is the final attribute and
    may be declared numeric or as the nominal set {0,1}.
    """
    text, name = _read_text(source)
    attr_names: list[str] = []
    data_lines: list[str] = []
    in_data = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if in_data:
            if line.startswith("{"):
                raise ValueError("sparse ARFF rows are not supported")
            data_lines.append(line)
            continue
        low = line.lower()
        if low.startswith("@relation"):
            continue
        if low.startswith("@attribute"):
            rest = line[len("@attribute"):].strip()
            if rest.startswith(("'", '"')):
                quote = rest[0]
                end = rest.index(quote, 1)
                attr_name = rest[1:end]
                attr_type = rest[end + 1:].strip()
            else:
                parts = rest.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"malformed attribute declaration: {line!r}")
                attr_name, attr_type = parts
            attr_names.append(attr_name)
            type_low = attr_type.strip().lower()
            nominal01 = type_low.startswith("{") and set(
                v.strip() for v in type_low.strip("{}").split(",")
            ) <= {"0", "1"}
            if type_low not in ("numeric", "real", "integer") and not nominal01:
                raise ValueError(
                    f"attribute {attr_name!r}: only numeric attributes and a {{0,1}} class are supported"
                )
            continue
        if low.startswith("@data"):
            in_data = True
            continue
        raise ValueError(f"unrecognized ARFF directive: {line!r}")
    if not in_data:
        raise ValueError("missing @data section")
    if len(attr_names) < 2:
        raise ValueError("need at least one feature attribute and a class attribute")
    return _parse_rows(data_lines, attr_names[:-1], name)


def load_table(source) -> TabularDataset:
    """Load a dataset from CSV or ARFF, sniffing the format."""
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if path.lower().endswith(".arff"):
            return load_arff(path)
        with open(path, "rb") as fh:
            head = fh.read(4096).decode("utf-8", errors="replace")
        for line in head.splitlines():
            if line.strip() and not line.startswith("%"):
                if line.lstrip().startswith("@"):
                    return load_arff(path)
                break
        return load_csv(path)
    text, _ = _read_text(source)
    stripped = text.lstrip()
    if stripped.startswith(("@", "%")):
        return load_arff(io.StringIO(text))
    return load_csv(io.StringIO(text))


def save_csv(ds: TabularDataset, path) -> None:
    """Write the dataset as CSV with a header; floats keep full precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([*ds.feature_names, "class"]) + "\n")
        for row, label in zip(ds.features, ds.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def class_distribution(ds: TabularDataset) -> dict[int, int]:
    """Count rows per class, always reporting both classes."""
    return {0: int((ds.labels == 0).sum()), 1: int((ds.labels == 1).sum())}


def project_features(ds: TabularDataset, indices) -> TabularDataset:
    """Keep only the named feature columns, in the order given."""
    idx = [int(i) for i in indices]
    if not idx:
        raise ValueError("at least one feature index is required")
    seen = set()
    for i in idx:
        if i < 0 or i >= ds.n_features:
            raise ValueError(f"feature index {i} out of range for {ds.n_features} features")
        if i in seen:
            raise ValueError(f"duplicate feature index {i}")
        seen.add(i)
    return TabularDataset(
        ds.features[:, idx],
        ds.labels,
        tuple(ds.feature_names[i] for i in idx),
        ds.provenance,
    )


def take_rows(ds: TabularDataset, rows) -> TabularDataset:
    """Row-subset view used for fold splitting; keeps provenance."""
    rows = np.asarray(rows, dtype=np.int64)
    return TabularDataset(
        ds.features[rows], ds.labels[rows], ds.feature_names, ds.provenance
    )


def _stratified_fold_ids(labels: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Assign fold ids so per-class counts across folds differ by at most one.

    Each class is shuffled and dealt round-robin; the starting fold rotates
    by the class size so overall fold sizes also differ by at most one.
    """
    rng = np.random.default_rng(seed)
    fold_of_row = np.empty(labels.shape[0], dtype=np.int64)
    start = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < k:
            raise ValueError(f"class {cls} has {idx.size} rows, fewer than k={k}")
        rng.shuffle(idx)
        fold_of_row[idx] = (np.arange(idx.size) + start) % k
        start = (start + idx.size) % k
    return fold_of_row


def stratified_k_folds(ds: TabularDataset, k: int, seed: int) -> FoldAssignment:
    """Deterministic stratified k-fold assignment for the dataset."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    return FoldAssignment(_stratified_fold_ids(ds.labels, k, seed), k, seed)
