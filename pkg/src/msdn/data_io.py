"""Dataset container, binary tensor file format, and synthetic data.

A dataset bundles per-image region features, attribute word vectors,
per-class semantic vectors, labels, the seen/unseen class partition, and
the train/test split index sets.  On disk everything lives in a little
endian "ZSLD" container; float tensors are stored as f32 and widened to
f64 in memory (the widening is exact, so save/load round-trips are
bit-exact for data produced by this module).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configfile import dataclass_from_kv, parse_kv_file
from .errors import (
    ArgumentError,
    BadMagicError,
    ContainerFormatError,
    DatasetValidationError,
    TruncatedFileError,
    VersionMismatchError,
)
from .ndmath import Rng

_MAGIC = b"ZSLD"
_VERSION = 1
_DTYPE_F32 = 1
_DTYPE_I32 = 3

REQUIRED_TENSORS = (
    "features",
    "attributes",
    "class_semantics",
    "labels",
    "seen_classes",
    "unseen_classes",
    "train_idx",
    "test_seen_idx",
    "test_unseen_idx",
)

# Extra tensor written by generate_synthetic: the attribute index that
# produced each (image, region) feature, for attention ground-truth tests.
GEN_REGION_ATTRIBUTE = "gen_region_attribute"


@dataclass
class Dataset:
    """In-memory dataset; float tensors are float64, index tensors int32."""

    features: np.ndarray        # (N, R, d_v)
    attributes: np.ndarray      # (K, d_a)
    class_semantics: np.ndarray  # (C, K)
    labels: np.ndarray          # (N,)
    seen_classes: np.ndarray
    unseen_classes: np.ndarray
    train_idx: np.ndarray
    test_seen_idx: np.ndarray
    test_unseen_idx: np.ndarray
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_regions(self) -> int:
        return self.features.shape[1]

    @property
    def visual_dim(self) -> int:
        return self.features.shape[2]

    @property
    def num_attributes(self) -> int:
        return self.attributes.shape[0]

    @property
    def attr_dim(self) -> int:
        return self.attributes.shape[1]

    @property
    def num_classes(self) -> int:
        return self.class_semantics.shape[0]


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic generator; defaults are the stock benchmark.

    ``active_attributes`` is the number of attributes each seen class
    expresses (its class semantic vector is zero elsewhere); 0 means auto,
    a quarter of the attributes and at least one.  Each unseen class's
    semantic vector is a convex blend of two seen classes' vectors, so an
    unseen class shares partial attribute information with a set of seen
    classes.  Sparse seen vectors keep classes separable from few regions;
    the blending ties unseen classes into the span the seen-class loss
    constrains, which is what makes the transfer measurable.
    """

    num_seen: int = 8
    num_unseen: int = 4
    num_attributes: int = 12
    num_regions: int = 9
    visual_dim: int = 16
    attr_dim: int = 10
    samples_per_class: int = 50
    noise_std: float = 0.1
    seed: int = 1
    active_attributes: int = 0

    def validate(self) -> None:
        counts = {
            "num_seen": self.num_seen,
            "num_unseen": self.num_unseen,
            "num_attributes": self.num_attributes,
            "num_regions": self.num_regions,
            "visual_dim": self.visual_dim,
            "attr_dim": self.attr_dim,
            "samples_per_class": self.samples_per_class,
        }
        for name, value in counts.items():
            if value < 1:
                raise ArgumentError(f"SynthSpec.{name} must be >= 1, got {value}")
        if self.noise_std < 0:
            raise ArgumentError(f"SynthSpec.noise_std must be >= 0, got {self.noise_std}")
        if not 0 <= self.active_attributes <= self.num_attributes:
            raise ArgumentError(
                f"SynthSpec.active_attributes must lie in [0, {self.num_attributes}], "
                f"got {self.active_attributes}"
            )

    def resolved_active_attributes(self) -> int:
        if self.active_attributes > 0:
            return self.active_attributes
        return max(1, self.num_attributes // 4)


def load_synth_spec(path: str | Path) -> SynthSpec:
    """Read a SynthSpec from a flat key=value file."""
    spec = dataclass_from_kv(SynthSpec, parse_kv_file(path))
    spec.validate()
    return spec


# --------------------------------------------------------------------------
# Container file format
# --------------------------------------------------------------------------

def write_container(path: str | Path, items: list[tuple[str, np.ndarray]]) -> None:
    """Write named tensors; floats stored as f32, integers as i32."""
    seen_names = set()
    chunks = [_MAGIC, struct.pack("<II", _VERSION, len(items))]
    for name, arr in items:
        if name in seen_names:
            raise ContainerFormatError(f"duplicate tensor name {name!r}")
        seen_names.add(name)
        data = np.ascontiguousarray(arr)
        if data.dtype.kind == "f":
            code, payload = _DTYPE_F32, data.astype("<f4")
        elif data.dtype.kind in "iu":
            code, payload = _DTYPE_I32, data.astype("<i4")
        else:
            raise ContainerFormatError(
                f"tensor {name!r} has unsupported dtype {data.dtype}"
            )
        name_bytes = name.encode("utf-8")
        if len(name_bytes) > 0xFFFF:
            raise ContainerFormatError(f"tensor name too long: {name!r}")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<BB", code, payload.ndim))
        chunks.append(struct.pack(f"<{payload.ndim}I", *payload.shape))
        chunks.append(payload.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def read_container(path: str | Path) -> list[tuple[str, np.ndarray]]:
    """Read named tensors, widening f32 to float64 and keeping i32 as int32."""
    blob = Path(path).read_bytes()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise TruncatedFileError(f"file ends inside {what}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic bytes") != _MAGIC:
        raise BadMagicError(
            f"bad magic {blob[:4]!r}, expected {_MAGIC!r}"
        )
    version, count = struct.unpack("<II", take(8, "header"))
    if version != _VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {_VERSION}")

    items: list[tuple[str, np.ndarray]] = []
    names = set()
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "tensor name length"))
        name = take(name_len, "tensor name").decode("utf-8")
        if name in names:
            raise ContainerFormatError(f"duplicate tensor name {name!r}")
        names.add(name)
        code, ndim = struct.unpack("<BB", take(2, "tensor dtype/rank"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, f"dims of {name!r}"))
        n_elems = math.prod(dims)
        if code == _DTYPE_F32:
            raw_dtype, out_dtype = "<f4", np.float64
        elif code == _DTYPE_I32:
            raw_dtype, out_dtype = "<i4", np.int32
        else:
            raise ContainerFormatError(f"unknown dtype code {code} for tensor {name!r}")
        payload = take(4 * n_elems, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype=raw_dtype).reshape(dims).astype(out_dtype)
        items.append((name, arr))
    if pos != len(blob):
        raise ContainerFormatError(f"{len(blob) - pos} trailing bytes after last tensor")
    return items


def save_container(ds: Dataset, path: str | Path) -> None:
    """Validate and write a dataset; extras follow the required tensors."""
    violations = validate_dataset(ds)
    if violations:
        raise DatasetValidationError(violations)
    items = [(name, getattr(ds, name)) for name in REQUIRED_TENSORS]
    items.extend(ds.extras.items())
    write_container(path, items)


def load_container(path: str | Path) -> Dataset:
    """Read and validate a dataset; unknown tensors are kept in ``extras``."""
    tensors = dict(read_container(path))
    missing = [name for name in REQUIRED_TENSORS if name not in tensors]
    if missing:
        raise ContainerFormatError(f"missing required tensors: {', '.join(missing)}")
    extras = {
        name: arr for name, arr in tensors.items() if name not in REQUIRED_TENSORS
    }
    ds = Dataset(
        **{name: tensors[name] for name in REQUIRED_TENSORS},
        extras=extras,
    )
    violations = validate_dataset(ds)
    if violations:
        raise DatasetValidationError(violations)
    return ds


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

def _first_nonfinite(name: str, arr: np.ndarray) -> str | None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(v) for v in np.argwhere(bad)[0])
        return f"non-finite value in {name} at index {idx}"
    return None


def validate_dataset(ds: Dataset) -> list[str]:
    """Return a list of invariant violations; empty means the dataset is valid."""
    out: list[str] = []

    ranks = {
        "features": (ds.features, 3),
        "attributes": (ds.attributes, 2),
        "class_semantics": (ds.class_semantics, 2),
        "labels": (ds.labels, 1),
        "seen_classes": (ds.seen_classes, 1),
        "unseen_classes": (ds.unseen_classes, 1),
        "train_idx": (ds.train_idx, 1),
        "test_seen_idx": (ds.test_seen_idx, 1),
        "test_unseen_idx": (ds.test_unseen_idx, 1),
    }
    for name, (arr, rank) in ranks.items():
        if arr.ndim != rank:
            out.append(f"{name} must have rank {rank}, got shape {arr.shape}")
    if out:
        return out  # shapes are broken; deeper checks would be misleading

    n = ds.num_samples
    c = ds.num_classes
    if ds.class_semantics.shape[1] != ds.num_attributes:
        out.append(
            "class_semantics columns must match attribute count: "
            f"{ds.class_semantics.shape[1]} vs {ds.num_attributes}"
        )
    if ds.labels.shape[0] != n:
        out.append(f"labels length {ds.labels.shape[0]} != sample count {n}")

    for name in ("features", "attributes", "class_semantics"):
        msg = _first_nonfinite(name, getattr(ds, name))
        if msg:
            out.append(msg)

    seen = set(int(v) for v in ds.seen_classes)
    unseen = set(int(v) for v in ds.unseen_classes)
    if len(seen) != len(ds.seen_classes):
        out.append("seen_classes contains duplicates")
    if len(unseen) != len(ds.unseen_classes):
        out.append("unseen_classes contains duplicates")
    overlap = seen & unseen
    if overlap:
        out.append(f"seen/unseen classes overlap: {sorted(overlap)}")
    if seen | unseen != set(range(c)):
        out.append(
            f"seen and unseen classes must partition 0..{c - 1}, "
            f"got union {sorted(seen | unseen)}"
        )

    if ds.labels.size and (ds.labels.min() < 0 or ds.labels.max() >= c):
        out.append(f"labels must lie in [0, {c}), found range "
                   f"[{int(ds.labels.min())}, {int(ds.labels.max())}]")

    splits = {
        "train_idx": ds.train_idx,
        "test_seen_idx": ds.test_seen_idx,
        "test_unseen_idx": ds.test_unseen_idx,
    }
    as_sets = {}
    for name, idx in splits.items():
        values = set(int(v) for v in idx)
        as_sets[name] = values
        if len(values) != len(idx):
            out.append(f"{name} contains duplicate indices")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            out.append(f"{name} has out-of-range indices for {n} samples")
    pairs = [("train_idx", "test_seen_idx"), ("train_idx", "test_unseen_idx"),
             ("test_seen_idx", "test_unseen_idx")]
    for a, b in pairs:
        shared = as_sets[a] & as_sets[b]
        if shared:
            out.append(f"{a} and {b} share indices: {sorted(shared)[:5]}")

    if out:
        return out  # label membership checks need clean indices

    label_rules = [
        ("train_idx", ds.train_idx, seen, "seen"),
        ("test_seen_idx", ds.test_seen_idx, seen, "seen"),
        ("test_unseen_idx", ds.test_unseen_idx, unseen, "unseen"),
    ]
    for name, idx, allowed, kind in label_rules:
        if idx.size:
            bad = set(int(v) for v in ds.labels[idx]) - allowed
            if bad:
                out.append(
                    f"{name} contains samples of non-{kind} classes: {sorted(bad)}"
                )
    return out


# --------------------------------------------------------------------------
# Synthetic generation
# --------------------------------------------------------------------------

def _holdout_per_class(samples_per_class: int) -> int:
    # A fifth of each seen class is held out for GZSL seen-class testing
    # (at least one sample once the class has two).
    if samples_per_class >= 5:
        return samples_per_class // 5
    return 1 if samples_per_class >= 2 else 0


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Deterministic synthetic zero-shot dataset with recoverable attention.

    Attribute vectors are uniform in [-1, 1)^d_a and class semantic vectors
    uniform in [0, 1)^K.  A single linear map shared by all classes sends
    attribute space to visual space; each region feature is that map applied
    to one attribute vector (picked with probability proportional to the
    class semantic vector) plus i.i.d. Gaussian noise.  Because the map is
    shared, the visual-attribute correspondence learned on seen classes
    carries over to unseen ones.  The picked attribute index per region is
    recorded in ``extras["gen_region_attribute"]``.

    Float tensors are rounded through f32 so that container round-trips are
    bit-exact.
    """
    spec.validate()
    rng = Rng(spec.seed)

    num_classes = spec.num_seen + spec.num_unseen
    n = num_classes * spec.samples_per_class
    attributes = rng.uniform(-1.0, 1.0, spec.num_attributes, spec.attr_dim)
    class_semantics = rng.uniform(0.0, 1.0, num_classes, spec.num_attributes)
    active = spec.resolved_active_attributes()
    if active < spec.num_attributes:
        # Each seen class keeps only its strongest attributes; the rest
        # drop to zero so region picks concentrate on a small,
        # class-specific attribute subset.
        for row in class_semantics[: spec.num_seen]:
            cutoff = np.sort(row)[-active]
            row[row < cutoff] = 0.0
    # Unseen classes blend two seen classes' semantic vectors, with a
    # random mixing weight in [0.3, 0.7).  The second parent is drawn
    # distinct from the first whenever two seen classes exist.
    for j in range(spec.num_seen, num_classes):
        first = rng.next_below(spec.num_seen)
        if spec.num_seen > 1:
            second = rng.next_below(spec.num_seen - 1)
            if second >= first:
                second += 1
        else:
            second = first
        weight = 0.3 + 0.4 * rng.next_f64()
        class_semantics[j] = (
            weight * class_semantics[first]
            + (1.0 - weight) * class_semantics[second]
        )
    vis_map = rng.uniform(-1.0, 1.0, spec.visual_dim, spec.attr_dim)
    prototypes = attributes @ vis_map.T  # (K, d_v): image of each attribute

    features = np.empty((n, spec.num_regions, spec.visual_dim), dtype=np.float64)
    region_attr = np.empty((n, spec.num_regions), dtype=np.int32)
    labels = np.empty(n, dtype=np.int32)

    i = 0
    for c in range(num_classes):
        weights = class_semantics[c]
        for _ in range(spec.samples_per_class):
            labels[i] = c
            for r in range(spec.num_regions):
                k = rng.choice_weighted(weights)
                region_attr[i, r] = k
                noise = rng.normal(spec.visual_dim)
                features[i, r] = prototypes[k] + spec.noise_std * noise
            i += 1

    spc = spec.samples_per_class
    holdout = _holdout_per_class(spc)
    train, test_seen, test_unseen = [], [], []
    for c in range(num_classes):
        block = range(c * spc, (c + 1) * spc)
        if c < spec.num_seen:
            train.extend(block[: spc - holdout])
            test_seen.extend(block[spc - holdout:])
        else:
            test_unseen.extend(block)

    def _f32_exact(arr: np.ndarray) -> np.ndarray:
        return arr.astype(np.float32).astype(np.float64)

    return Dataset(
        features=_f32_exact(features),
        attributes=_f32_exact(attributes),
        class_semantics=_f32_exact(class_semantics),
        labels=labels,
        seen_classes=np.arange(spec.num_seen, dtype=np.int32),
        unseen_classes=np.arange(spec.num_seen, num_classes, dtype=np.int32),
        train_idx=np.asarray(train, dtype=np.int32),
        test_seen_idx=np.asarray(test_seen, dtype=np.int32),
        test_unseen_idx=np.asarray(test_unseen, dtype=np.int32),
        extras={GEN_REGION_ATTRIBUTE: region_attr},
    )
