"""Dataset files, standardization, and the synthetic GZSL benchmark.

File layouts
------------
``features.bin``
    ``b"GSMX"``, then version, n and d as little-endian uint32, then n int32
    labels, then n*d float64 features in row-major order.
``attributes.txt``
    one class per line: ``class_id,v1,v2,...,va``.
``split.txt``
    ``seen: id ...`` and ``unseen: id ...`` (class ids), optionally followed by
    ``train_seen: idx ...``, ``test_seen: idx ...`` and ``test_unseen: idx ...``
    (row indices into the feature file).  When the index lines are missing,
    unseen-class rows all go to ``test_unseen`` and every seen class is split
    80/20 into train/test.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, ParseError
from .semantics import AttributeTable

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"GSMX"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIII")
SPLIT_KEYS = ("train_seen", "test_seen", "test_unseen")


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    kept: np.ndarray
    dropped: tuple = ()

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (raw[:, self.kept] - self.mean) / self.std

    def invert(self, features: np.ndarray) -> np.ndarray:
        """Map standardized features back to raw units (kept dimensions only)."""
        return features * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "kept": self.kept.tolist(), "dropped": list(self.dropped)}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   np.array(d["kept"], dtype=np.intp), tuple(d["dropped"]))


def fit_standardization(train_raw: np.ndarray) -> Standardization:
    mean = train_raw.mean(axis=0)
    std = train_raw.std(axis=0)
    # roundoff leaves ~1e-16 std on exactly constant columns
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    kept = np.flatnonzero(~constant)
    dropped = tuple(int(i) for i in np.flatnonzero(constant))
    if dropped:
        log.warning("dropping %d constant feature dimension(s): %s", len(dropped), list(dropped))
    return Standardization(mean[kept], std[kept], kept, dropped)


@dataclass
class Dataset:
    features: np.ndarray          # standardized, n x d_kept
    labels: np.ndarray            # class ids, n
    table: AttributeTable
    split: dict                   # SPLIT_KEYS -> index arrays
    standardization: Standardization
    raw: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        validate_split(self.split, self.labels, self.table)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def view(self, key: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.split[key]
        return self.features[idx], self.labels[idx]


def validate_split(split: dict, labels: np.ndarray, table: AttributeTable) -> None:
    n = labels.shape[0]
    seen = set(table.seen_ids)
    unseen = set(table.unseen_ids)
    missing = set(np.unique(labels).tolist()) - set(table.class_ids)
    if missing:
        raise IntegrityError(f"label(s) without attribute row: {sorted(missing)}")
    owner: dict[int, str] = {}
    for key in SPLIT_KEYS:
        for i in split[key].tolist():
            if not 0 <= i < n:
                raise IntegrityError(f"{key} index {i} out of range for {n} rows")
            if i in owner:
                raise IntegrityError(f"index {i} appears in both {owner[i]} and {key}")
            owner[i] = key
        classes = set(labels[split[key]].tolist())
        allowed = unseen if key == "test_unseen" else seen
        if not classes <= allowed:
            kind = "unseen" if key == "test_unseen" else "seen"
            raise IntegrityError(f"{key} holds non-{kind} classes {sorted(classes - allowed)}")


# feature matrix file

def write_features(path, features: np.ndarray, labels) -> None:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    n, d = features.shape
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d)
    body = labels.astype("<i4").tobytes() + np.ascontiguousarray(features, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def read_features(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _FEATURE_HEADER.size:
        raise ParseError("truncated feature header", path)
    magic, version, n, d = _FEATURE_HEADER.unpack_from(raw, 0)
    if magic != FEATURE_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {FEATURE_MAGIC!r}", path)
    if version != FEATURE_VERSION:
        raise ParseError(f"unsupported feature file version {version}", path)
    expected = _FEATURE_HEADER.size + 4 * n + 8 * n * d
    if len(raw) != expected:
        raise ParseError(f"file holds {len(raw)} bytes, header implies {expected}", path)
    off = _FEATURE_HEADER.size
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off).astype(np.int64)
    features = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off + 4 * n)
    return features.astype(np.float64).reshape(n, d), labels


# attribute and split text files

def write_attributes(path, class_ids, attributes) -> None:
    lines = []
    for cid, row in zip(class_ids, np.asarray(attributes, dtype=np.float64)):
        lines.append(",".join([str(int(cid))] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_attributes(path) -> tuple[list[int], np.ndarray]:
    ids, rows = [], []
    width = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            cid = int(parts[0])
            values = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ParseError(f"malformed attribute row ({exc})", path, lineno) from None
        if not values:
            raise ParseError("attribute row has no values", path, lineno)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"expected {width} attribute values, got {len(values)}", path, lineno)
        ids.append(cid)
        rows.append(values)
    if not ids:
        raise ParseError("no attribute rows", path)
    return ids, np.array(rows, dtype=np.float64)


def write_split(path, seen, unseen, indices: dict | None = None) -> None:
    lines = [
        "seen: " + " ".join(str(int(c)) for c in seen),
        "unseen: " + " ".join(str(int(c)) for c in unseen),
    ]
    for key in SPLIT_KEYS:
        if indices is not None and key in indices:
            lines.append(f"{key}: " + " ".join(str(int(i)) for i in indices[key]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_split(path) -> tuple[list[int], list[int], dict]:
    entries: dict[str, list[int]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or key not in ("seen", "unseen") + SPLIT_KEYS:
            raise ParseError(f"unrecognized split line {line!r}", path, lineno)
        if key in entries:
            raise ParseError(f"duplicate {key!r} line", path, lineno)
        try:
            entries[key] = [int(tok) for tok in rest.split()]
        except ValueError as exc:
            raise ParseError(f"malformed id list ({exc})", path, lineno) from None
    for key in ("seen", "unseen"):
        if key not in entries:
            raise ParseError(f"missing {key!r} line", path)
    overlap = set(entries["seen"]) & set(entries["unseen"])
    if overlap:
        raise IntegrityError(f"classes listed as both seen and unseen: {sorted(overlap)}")
    indices = {k: entries[k] for k in SPLIT_KEYS if k in entries}
    return entries["seen"], entries["unseen"], indices


def default_split(labels: np.ndarray, seen, unseen, train_fraction: float = 0.8, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cid in seen:
        rows = np.flatnonzero(labels == cid)
        rows = rows[rng.permutation(rows.size)]
        cut = int(round(train_fraction * rows.size))
        train.append(rows[:cut])
        test.append(rows[cut:])
    unseen_rows = np.flatnonzero(np.isin(labels, list(unseen)))
    cat = lambda parts: np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.intp)  # noqa: E731
    return {"train_seen": cat(train), "test_seen": cat(test), "test_unseen": unseen_rows}


def build_dataset(raw: np.ndarray, labels: np.ndarray, table: AttributeTable, split: dict) -> Dataset:
    split = {k: np.asarray(split[k], dtype=np.intp) for k in SPLIT_KEYS}
    validate_split(split, labels, table)
    if split["train_seen"].size == 0:
        raise IntegrityError("train_seen split is empty")
    std = fit_standardization(raw[split["train_seen"]])
    return Dataset(std.apply(raw), labels, table, split, std, raw=raw)


def load_dataset(features_path, attributes_path, split_path) -> Dataset:
    raw, labels = read_features(features_path)
    ids, attrs = read_attributes(attributes_path)
    seen, unseen, indices = read_split(split_path)
    listed = set(seen) | set(unseen)
    unknown = listed - set(ids)
    if unknown:
        raise IntegrityError(f"split lists classes without attribute rows: {sorted(unknown)}")
    missing = set(np.unique(labels).tolist()) - set(ids)
    if missing:
        raise IntegrityError(f"label(s) without attribute row: {sorted(missing)}")
    unlisted = set(np.unique(labels).tolist()) - listed
    if unlisted:
        raise IntegrityError(f"labels missing from the split file: {sorted(unlisted)}")
    table = AttributeTable(tuple(ids), attrs, np.array([c in set(seen) for c in ids]))
    if all(k in indices for k in SPLIT_KEYS):
        split = indices
    elif indices:
        raise ParseError("split index lines must list all of " + ", ".join(SPLIT_KEYS), split_path)
    else:
        split = default_split(labels, seen, unseen)
    return build_dataset(raw, labels, table, split)


def load_data_dir(data_dir) -> Dataset:
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    paths = [data_dir / "features.bin", data_dir / "attributes.txt", data_dir / "split.txt"]
    for p in paths:
        if not p.is_file():
            raise FileNotFoundError(f"missing data file: {p}")
    return load_dataset(*paths)


def save_dataset(dataset: Dataset, data_dir) -> None:
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    write_features(data_dir / "features.bin", dataset.raw, dataset.labels)
    write_attributes(data_dir / "attributes.txt", dataset.table.class_ids, dataset.table.attributes)
    write_split(data_dir / "split.txt", dataset.table.seen_ids, dataset.table.unseen_ids,
                {k: dataset.split[k] for k in SPLIT_KEYS})


# synthetic benchmark

@dataclass(frozen=True)
class BenchmarkSpec:
    n_seen: int = 15
    n_unseen: int = 5
    d: int = 32
    a: int = 16
    samples_per_class: int = 300
    class_cov_scale: tuple = (0.5, 1.5)
    map_scale: float = 1.0
    attr_map: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("n_seen", "d", "a", "samples_per_class"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_unseen < 0:
            raise ValueError("n_unseen must be >= 0")
        lo, hi = self.class_cov_scale
        if not 0 < lo <= hi:
            raise ValueError(f"class_cov_scale must satisfy 0 < lo <= hi, got {self.class_cov_scale}")
        if self.attr_map is not None and np.shape(self.attr_map) != (self.d, self.a):
            raise ValueError(f"attr_map must be {self.d} x {self.a}")


@dataclass
class BenchmarkTruth:
    """Ground truth in raw feature units: class means and diagonal variances."""

    class_ids: tuple
    attr_map: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def index(self, class_id) -> int:
        return list(self.class_ids).index(int(class_id))

    def to_dict(self) -> dict:
        return {"class_ids": list(self.class_ids), "attr_map": self.attr_map.tolist(),
                "means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkTruth":
        return cls(tuple(d["class_ids"]), np.array(d["attr_map"]), np.array(d["means"]),
                   np.array(d["variances"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "BenchmarkTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate_benchmark(spec: BenchmarkSpec) -> tuple[Dataset, BenchmarkTruth]:
    """Per-class Gaussians whose means are a linear image of the class attributes."""
    rng = np.random.default_rng(spec.seed)
    n_classes = spec.n_seen + spec.n_unseen
    if spec.attr_map is None:
        attr_map = rng.normal(0.0, spec.map_scale, (spec.d, spec.a))
    else:
        attr_map = np.asarray(spec.attr_map, dtype=np.float64)
    attrs = rng.random((n_classes, spec.a))
    means = attrs @ attr_map.T
    lo, hi = spec.class_cov_scale
    variances = rng.uniform(lo, hi, (n_classes, spec.d))
    m = spec.samples_per_class
    raw = np.empty((n_classes * m, spec.d))
    labels = np.repeat(np.arange(n_classes), m)
    for c in range(n_classes):
        raw[c * m:(c + 1) * m] = means[c] + np.sqrt(variances[c]) * rng.standard_normal((m, spec.d))
    class_ids = tuple(range(n_classes))
    seen = np.arange(n_classes) < spec.n_seen
    table = AttributeTable(class_ids, attrs, seen)
    split = default_split(labels, class_ids[:spec.n_seen], class_ids[spec.n_seen:],
                          seed=int(rng.integers(2**31)))
    truth = BenchmarkTruth(class_ids, attr_map, means, variances)
    return build_dataset(raw, labels, table, split), truth
