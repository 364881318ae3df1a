"""Binary feature files and the in-memory feature store.

Layout (all integers little-endian)::

    b"DEFV"            magic
    u32                format version (1)
    u32                feature_dim
    u64                record_count
    record_count x {
        u16            image_id byte length
        bytes          image_id, UTF-8
        u32            box index
        f32[dim]       feature values
    }
"""

from __future__ import annotations

import struct

import numpy as np

from ..core import FeatureVector, ModelSpec
from ..exceptions import (
    CoverageError,
    FeatureFormatError,
    SpecMismatchError,
    TruncatedFileError,
    ValidationError,
)
from ..io import atomic_write

MAGIC = b"DEFV"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_IDLEN = struct.Struct("<H")
_BOXIDX = struct.Struct("<I")


class FeatureStore:
    """Feature vectors of one network keyed by ``(image_id, box_index)``.

    Vectors are held as a single ``float32`` matrix; ``keys[i]`` names row ``i``.
    The store is read-only after construction.
    """

    def __init__(self, model_name, feature_dim, keys, matrix):
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            matrix = matrix.reshape(len(keys), int(feature_dim))
        if matrix.shape != (len(keys), int(feature_dim)):
            raise ValidationError(
                f"feature matrix shape {matrix.shape} does not match {len(keys)} keys x dim {feature_dim}"
            )
        if not np.all(np.isfinite(matrix)):
            raise ValidationError("feature matrix contains non-finite values")
        self.model_name = model_name
        self.feature_dim = int(feature_dim)
        self.keys = [(str(i), int(b)) for i, b in keys]
        self._index = {}
        for row, key in enumerate(self.keys):
            if key in self._index:
                raise ValidationError(f"duplicate feature key {key}")
            self._index[key] = row
        matrix.setflags(write=False)
        self.matrix = matrix

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return tuple(key) in self._index

    def __repr__(self):
        return f"FeatureStore(model_name={self.model_name!r}, feature_dim={self.feature_dim}, n={len(self)})"

    def get(self, image_id, box_index) -> FeatureVector:
        return FeatureVector(self.matrix[self._row(image_id, box_index)])

    def _row(self, image_id, box_index):
        try:
            return self._index[(image_id, int(box_index))]
        except KeyError:
            raise CoverageError(
                f"no {self.model_name} feature for image {image_id!r} box {box_index}"
            ) from None

    def rows(self, keys) -> np.ndarray:
        """float64 matrix of the vectors for ``keys``, in order."""
        idx = [self._row(i, b) for i, b in keys]
        return self.matrix[idx].astype(np.float64)

    def image_rows(self, image_id, n_boxes) -> np.ndarray:
        return self.rows([(image_id, b) for b in range(n_boxes)])

    def validate_against(self, proposals: dict) -> None:
        """Require the key set to equal the proposal keys exactly."""
        expected = {(i, b) for i, boxes in proposals.items() for b in range(len(boxes))}
        have = set(self._index)
        missing = sorted(expected - have)
        if missing:
            raise CoverageError(f"no {self.model_name} feature for image {missing[0][0]!r} box {missing[0][1]}")
        extra = sorted(have - expected)
        if extra:
            raise ValidationError(f"feature store has key {extra[0]} that matches no proposal")


def dumps_features(store: FeatureStore) -> bytes:
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, store.feature_dim, len(store))]
    rows = np.ascontiguousarray(store.matrix, dtype="<f4")
    for row, (image_id, box) in enumerate(store.keys):
        raw = image_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValidationError(f"image_id too long for feature file: {image_id[:40]!r}...")
        parts.append(_IDLEN.pack(len(raw)))
        parts.append(raw)
        parts.append(_BOXIDX.pack(box))
        parts.append(rows[row].tobytes())
    return b"".join(parts)


def write_feature_file(store: FeatureStore, path) -> None:
    atomic_write(path, dumps_features(store))


def loads_features(data: bytes, model_name="") -> FeatureStore:
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"feature file has {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FeatureFormatError(f"unsupported feature file version {version}")
    if dim == 0:
        raise FeatureFormatError("feature_dim must be positive")
    vec_bytes = 4 * dim
    pos = _HEADER.size
    end = len(data)
    if pos + count * (vec_bytes + 6) > end:
        raise TruncatedFileError(f"feature file declares {count} records of dim {dim} but has {end} bytes")
    keys = []
    matrix = np.empty((count, dim), dtype=np.float32)
    for r in range(count):
        if pos + 2 > end:
            raise TruncatedFileError(f"truncated at record {r} of {count}")
        (n,) = _IDLEN.unpack_from(data, pos)
        pos += 2
        if pos + n + 4 + vec_bytes > end:
            raise TruncatedFileError(f"truncated at record {r} of {count}")
        image_id = data[pos:pos + n].decode("utf-8")
        pos += n
        (box,) = _BOXIDX.unpack_from(data, pos)
        pos += 4
        matrix[r] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += vec_bytes
        keys.append((image_id, box))
    if pos != end:
        raise FeatureFormatError(f"{end - pos} trailing bytes after {count} records")
    return FeatureStore(model_name, dim, keys, matrix)


def read_feature_file(path, model_name="") -> FeatureStore:
    with open(path, "rb") as fh:
        return loads_features(fh.read(), model_name)


def load_feature_store(path, expected: ModelSpec) -> FeatureStore:
    """Read a feature file and check its dimension against ``expected``."""
    store = read_feature_file(path, expected.model_name)
    if store.feature_dim != expected.feature_dim:
        raise SpecMismatchError(expected.feature_dim, store.feature_dim, what=str(path))
    return store
