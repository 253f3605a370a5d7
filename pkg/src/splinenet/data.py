"""Dataset ingestion (CSV, IDX images), normalization into the unit
hypercube, deterministic splits, and synthetic regression generators.

Datasets are immutable after construction and safe to share between
threads.
"""

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    """Feature matrix plus targets.

    ``targets`` is a 1-D integer array of class indices for
    classification, or a 2-D float array for regression. ``norm_lo`` and
    ``norm_hi`` record the per-column ranges used by minmax_normalize;
    ``target_range`` records any target rescaling.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: list = field(default_factory=list)
    norm_lo: np.ndarray | None = None
    norm_hi: np.ndarray | None = None
    target_range: tuple | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError("features must be 2-D (samples, columns)")
        if np.isnan(self.features).any():
            raise DataError("features contain NaN")
        self.targets = np.ascontiguousarray(self.targets)
        if len(self.targets) != len(self.features):
            raise DataError(
                f"{len(self.targets)} targets for {len(self.features)} samples"
            )
        if self.targets.dtype.kind in "iu":
            self.targets = self.targets.astype(np.int64)
            if self.targets.ndim != 1:
                raise DataError("class targets must be 1-D")
        else:
            self.targets = self.targets.astype(np.float64)
            if self.targets.ndim == 1:
                self.targets = self.targets[:, None]
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]

    @property
    def task(self):
        return "classification" if self.targets.dtype.kind == "i" else "regression"

    @property
    def num_classes(self):
        if self.task != "classification":
            raise DataError("regression dataset has no classes")
        return int(self.targets.max()) + 1

    @property
    def num_outputs(self):
        return self.num_classes if self.task == "classification" else self.targets.shape[1]

    def __len__(self):
        return len(self.features)

    def take(self, indices):
        return Dataset(
            features=self.features[indices],
            targets=self.targets[indices],
            feature_names=list(self.feature_names),
            norm_lo=self.norm_lo,
            norm_hi=self.norm_hi,
            target_range=self.target_range,
        )


_INT_KINDS = {"numeric", "categorical", "target"}


def load_csv(path, schema):
    """Load a CSV with a header row into a Dataset.

    ``schema`` maps column name -> 'numeric' | 'categorical' | 'target'.
    Categorical columns are one-hot encoded (levels sorted). Exactly one
    target column is required; integer-looking or non-numeric target
    values become class indices (sorted label order), anything else is
    treated as a regression target.
    """
    for col, kind in schema.items():
        if kind not in _INT_KINDS:
            raise DataError(f"schema column {col!r} has unknown kind {kind!r}")
    targets_cols = [c for c, k in schema.items() if k == "target"]
    if len(targets_cols) != 1:
        raise DataError(f"schema must name exactly one target column, got {targets_cols}")
    target_col = targets_cols[0]

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    for col in schema:
        if col not in header:
            raise DataError(f"schema column {col!r} not present in CSV header {header}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            if cell == "" and header[j] in schema:
                raise DataError(f"{path}: missing value in row {i + 1}, column {header[j]!r}")

    def column(name):
        j = header.index(name)
        return [row[j] for row in rows]

    blocks = []
    names = []
    for col in header:
        kind = schema.get(col)
        if kind is None or kind == "target":
            continue
        values = column(col)
        if kind == "numeric":
            try:
                blocks.append(np.array([float(v) for v in values])[:, None])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value in column {col!r}: {exc}") from None
            names.append(col)
        else:
            levels = sorted(set(values))
            onehot = np.zeros((len(values), len(levels)))
            index = {lv: k for k, lv in enumerate(levels)}
            for i, v in enumerate(values):
                onehot[i, index[v]] = 1.0
            blocks.append(onehot)
            names.extend(f"{col}={lv}" for lv in levels)
    if not blocks:
        raise DataError(f"{path}: schema selects no feature columns")
    features = np.hstack(blocks)

    raw_targets = column(target_col)
    if all(_is_int_like(v) for v in raw_targets):
        labels = sorted(set(raw_targets), key=int)
        targets = np.array([labels.index(v) for v in raw_targets], dtype=np.int64)
    else:
        try:
            targets = np.array([float(v) for v in raw_targets])
        except ValueError:
            labels = sorted(set(raw_targets))
            targets = np.array([labels.index(v) for v in raw_targets], dtype=np.int64)
    return Dataset(features=features, targets=targets, feature_names=names)


def _is_int_like(s):
    s = s.strip()
    if s.startswith(("-", "+")):
        s = s[1:]
    return s.isdigit()


def _read_be32(fh, path, what):
    raw = fh.read(4)
    if len(raw) != 4:
        raise DataError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", raw)[0]


def read_idx_images(path):
    """Raw uint8 image tensor (count, rows, cols) from an IDX file."""
    with open(path, "rb") as fh:
        magic = _read_be32(fh, path, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(f"{path}: bad image magic 0x{magic:08x}")
        count = _read_be32(fh, path, "count")
        rows = _read_be32(fh, path, "rows")
        cols = _read_be32(fh, path, "cols")
        payload = fh.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise DataError(f"{path}: truncated pixel data")
        return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path):
    """Raw uint8 label vector from an IDX file."""
    with open(path, "rb") as fh:
        magic = _read_be32(fh, path, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise DataError(f"{path}: bad label magic 0x{magic:08x}")
        count = _read_be32(fh, path, "count")
        payload = fh.read(count)
        if len(payload) != count:
            raise DataError(f"{path}: truncated label data")
        return np.frombuffer(payload, dtype=np.uint8).copy()


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataError("images must be (count, rows, cols)")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def load_idx(images_path, labels_path):
    """IDX image/label pair as a Dataset with pixels scaled into [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataError(
            f"{len(images)} images but {len(labels)} labels ({images_path}, {labels_path})"
        )
    features = images.reshape(len(images), -1).astype(np.float64) / 255.0
    names = [f"px{r}_{c}" for r in range(images.shape[1]) for c in range(images.shape[2])]
    return Dataset(features=features, targets=labels.astype(np.int64), feature_names=names)


def minmax_normalize(ds):
    """Per-column (x - min) / (max - min); constant columns map to 0.5."""
    lo = ds.features.min(axis=0)
    hi = ds.features.max(axis=0)
    span = hi - lo
    flat = span == 0
    safe = np.where(flat, 1.0, span)
    features = (ds.features - lo) / safe
    features[:, flat] = 0.5
    return Dataset(
        features=features,
        targets=ds.targets,
        feature_names=list(ds.feature_names),
        norm_lo=lo,
        norm_hi=hi,
        target_range=ds.target_range,
    )


def split(ds, fraction, seed):
    """Deterministic train/test split; stratified by class for
    classification datasets."""
    if not 0 < fraction < 1:
        raise DataError(f"split fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    n = len(ds)
    if ds.task == "classification":
        train_idx = []
        test_idx = []
        for cls in np.unique(ds.targets):
            members = np.flatnonzero(ds.targets == cls)
            members = members[rng.permutation(len(members))]
            cut = int(round(fraction * len(members)))
            train_idx.append(members[:cut])
            test_idx.append(members[cut:])
        train_idx = np.sort(np.concatenate(train_idx))
        test_idx = np.sort(np.concatenate(test_idx))
    else:
        order = rng.permutation(n)
        cut = int(round(fraction * n))
        train_idx = np.sort(order[:cut])
        test_idx = np.sort(order[cut:])
    return ds.take(train_idx), ds.take(test_idx)


@dataclass(frozen=True)
class SymbolicTask:
    """One synthetic regression target: a named function on a box."""

    name: str
    dim: int
    fn: callable
    domain: tuple = (0.0, 1.0)


def _f1(x):
    return np.sin(2 * np.pi * x[:, 0])


def _f2(x):
    return x[:, 0] * x[:, 1]


def _f3(x):
    return np.exp(-(x[:, 0] ** 2 + x[:, 1] ** 2))


def _f4(x):
    return np.sin(np.pi * x[:, 0]) + x[:, 1] ** 2


def _f5(x):
    return np.sin(np.pi * x).sum(axis=1) / 4.0


SYMBOLIC_TASKS = {
    "f1": SymbolicTask("f1", 1, _f1),
    "f2": SymbolicTask("f2", 2, _f2),
    "f3": SymbolicTask("f3", 2, _f3),
    "f4": SymbolicTask("f4", 2, _f4),
    "f5": SymbolicTask("f5", 4, _f5),
}


def gen_symbolic(task, seed, n_samples=1024, noise=0.0):
    """Sample a synthetic regression dataset, reproducibly.

    Features are uniform on the task's box; targets are f(x) plus
    optional Gaussian noise, then min-max scaled into [0, 1] (the raw
    range is kept in ``target_range``).
    """
    if isinstance(task, str):
        try:
            task = SYMBOLIC_TASKS[task]
        except KeyError:
            raise DataError(
                f"unknown symbolic task {task!r}; have {sorted(SYMBOLIC_TASKS)}"
            ) from None
    rng = np.random.default_rng(seed)
    x = rng.uniform(task.domain[0], task.domain[1], (n_samples, task.dim))
    y = task.fn(x)
    if noise > 0:
        y = y + noise * rng.standard_normal(n_samples)
    lo, hi = float(y.min()), float(y.max())
    scaled = (y - lo) / (hi - lo) if hi > lo else np.full_like(y, 0.5)
    ds = Dataset(
        features=x,
        targets=scaled[:, None],
        feature_names=[f"x{i}" for i in range(task.dim)],
        target_range=(lo, hi),
    )
    return minmax_normalize(ds) if task.domain != (0.0, 1.0) else ds
