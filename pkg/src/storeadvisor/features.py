"""Feature extraction: the fixed model-input vector and the key-order metric."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields as dc_fields

from .core import (
    AccessOp,
    DegenerateSequence,
    LengthKind,
    OpType,
    SchemaMismatch,
    TableSchema,
    UnknownColumn,
)

# --------------------------------------------------------------------------
# key-order randomness


def inversions(seq) -> int:
    """Number of strictly out-of-order pairs (i < j, seq[i] > seq[j]).

    Merge-count, O(n log n).  Ties contribute nothing.
    """
    arr = list(seq)
    if len(arr) < 2:
        return 0
    count = 0
    width = 1
    n = len(arr)
    buf = arr[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if arr[j] < arr[i]:  # strict: equal keys are not inverted
                    buf[k] = arr[j]
                    count += mid - i
                    j += 1
                else:
                    buf[k] = arr[i]
                    i += 1
                k += 1
            buf[k:hi] = arr[i:mid] if i < mid else arr[j:hi]
        arr, buf = buf, arr
        width *= 2
    return count


def randomness(seq) -> float:
    """Disorder of a key sequence on a 0..1 scale.

    0 for sorted or reverse-sorted input, 1 when the inversion count sits at
    its midpoint (a uniformly shuffled sequence in expectation).  Piecewise:
    4v/D below D/4 inversions, 2 - 4v/D above, with D = n^2 - n.
    """
    n = len(seq)
    if n < 2:
        raise DegenerateSequence("randomness needs at least two keys")
    d = n * n - n
    v = inversions(seq)
    r = 4.0 * v / d if v < d / 4.0 else 2.0 - 4.0 * v / d
    return min(1.0, max(0.0, r))


# --------------------------------------------------------------------------
# runtime state


@dataclass(frozen=True)
class RuntimeState:
    """Engine-side counters sampled just before an operation runs."""

    disk_read_tput: float = 0.0   # bytes/sec over the trailing window
    disk_write_tput: float = 0.0
    cached_pages: int = 0
    total_pages: int = 1
    file_count: int = 1
    l1_file_count: int = 0
    l2_file_count: int = 0

    def __post_init__(self) -> None:
        if self.cached_pages > self.total_pages:
            raise SchemaMismatch("cached_pages exceeds total_pages")
        if self.l1_file_count + self.l2_file_count > self.file_count:
            raise SchemaMismatch("L1+L2 file counts exceed file_count")

    @property
    def cache_ratio(self) -> float:
        return self.cached_pages / self.total_pages if self.total_pages else 0.0


# --------------------------------------------------------------------------
# feature vector

FEATURE_ORDER = (
    "avg_row_len",
    "num_key_fields",
    "num_value_fields",
    "key_bytes",
    "value_bytes",
    "num_fixed_fields",
    "num_var_fields",
    "fixed_bytes",
    "var_bytes",
    "op_is_point",
    "op_is_scan",
    "op_is_insert",
    "result_size",
    "selectivity",
    "insert_randomness",
    "disk_read_tput",
    "disk_write_tput",
    "cache_ratio",
    "file_count",
    "l1_file_count",
    "l2_file_count",
)

FEATURE_VERSION = "fv1-" + hashlib.sha1(",".join(FEATURE_ORDER).encode()).hexdigest()[:8]


@dataclass(frozen=True)
class FeatureVector:
    avg_row_len: float
    num_key_fields: float
    num_value_fields: float
    key_bytes: float
    value_bytes: float
    num_fixed_fields: float
    num_var_fields: float
    fixed_bytes: float
    var_bytes: float
    op_is_point: float
    op_is_scan: float
    op_is_insert: float
    result_size: float
    selectivity: float
    insert_randomness: float
    disk_read_tput: float
    disk_write_tput: float
    cache_ratio: float
    file_count: float
    l1_file_count: float
    l2_file_count: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_ORDER)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FEATURE_ORDER}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVector":
        return cls(**{name: float(d[name]) for name in FEATURE_ORDER})


assert tuple(f.name for f in dc_fields(FeatureVector)) == FEATURE_ORDER


def extract_features(
    schema: TableSchema,
    op: AccessOp,
    state: RuntimeState,
    group=None,
) -> FeatureVector:
    """Build the model input for one operation against one column group.

    ``group`` is the tuple of value-column names the record describes; None
    means the whole row (NSM).  The effective schema is the key prefix plus
    the group's columns — a group read is indistinguishable from a narrow
    table read, which is what lets NSM benchmark data price arbitrary
    layouts.
    """
    if group is None:
        group = tuple(f.name for f in schema.value_fields)
    key_fields = schema.key_fields
    value_fields = []
    for col in group:
        f = schema.field_by_name(col)
        if f.role.value != "value":
            raise UnknownColumn(f"{col!r} is not a value column")
        value_fields.append(f)
    eff = list(key_fields) + value_fields
    key_bytes = sum(f.avg_length_bytes for f in key_fields)
    value_bytes = sum(f.avg_length_bytes for f in value_fields)
    fixed = [f for f in eff if f.length_kind is LengthKind.FIXED]
    variable = [f for f in eff if f.length_kind is LengthKind.VARIABLE]

    return FeatureVector(
        avg_row_len=float(key_bytes + value_bytes),
        num_key_fields=float(len(key_fields)),
        num_value_fields=float(len(value_fields)),
        key_bytes=float(key_bytes),
        value_bytes=float(value_bytes),
        num_fixed_fields=float(len(fixed)),
        num_var_fields=float(len(variable)),
        fixed_bytes=float(sum(f.avg_length_bytes for f in fixed)),
        var_bytes=float(sum(f.avg_length_bytes for f in variable)),
        op_is_point=1.0 if op.op_type is OpType.POINT_LOOKUP else 0.0,
        op_is_scan=1.0 if op.op_type is OpType.RANGE_SCAN else 0.0,
        op_is_insert=1.0 if op.op_type is OpType.INSERT else 0.0,
        result_size=float(op.result_rows),
        selectivity=float(op.selectivity),
        insert_randomness=float(op.key_randomness if op.op_type is OpType.INSERT else 0.0),
        disk_read_tput=float(state.disk_read_tput),
        disk_write_tput=float(state.disk_write_tput),
        cache_ratio=float(state.cache_ratio),
        file_count=float(state.file_count),
        l1_file_count=float(state.l1_file_count),
        l2_file_count=float(state.l2_file_count),
    )
