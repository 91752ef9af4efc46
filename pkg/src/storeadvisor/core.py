"""Domain types shared by every stage of the advisor pipeline.

Everything here is an immutable value object; mutable state lives in the
engine simulators.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field


# --------------------------------------------------------------------------
# error vocabulary


class AdvisorError(Exception):
    """Base class for every structured error raised by this package."""


class UnknownColumn(AdvisorError):
    pass


class OverlappingGroups(AdvisorError):
    pass


class MissingColumn(AdvisorError):
    pass


class SchemaMismatch(AdvisorError):
    pass


class KeyNotFound(AdvisorError):
    """Point lookup miss.  Surfaces as a trace flag, not an abort."""


class DegenerateSequence(AdvisorError):
    pass


class EmptyInput(AdvisorError):
    pass


class EmptyWorkload(AdvisorError):
    pass


class InsufficientData(AdvisorError):
    pass


class FeatureVersionMismatch(AdvisorError):
    pass


class ModelMissing(AdvisorError):
    pass


class UnknownFormatVersion(AdvisorError):
    pass


class CorruptSnapshot(AdvisorError):
    pass


class ConversionVerifyFailed(AdvisorError):
    pass


class TargetInvalid(AdvisorError):
    pass


# --------------------------------------------------------------------------
# schema


class FieldRole(str, enum.Enum):
    KEY = "key"
    VALUE = "value"


class LengthKind(str, enum.Enum):
    FIXED = "fixed"
    VARIABLE = "variable"


MAX_FIXED_BYTES = 8


@dataclass(frozen=True)
class FieldSpec:
    name: str
    role: FieldRole
    length_kind: LengthKind
    avg_length_bytes: int

    def __post_init__(self) -> None:
        if self.avg_length_bytes < 1:
            raise SchemaMismatch(f"field {self.name!r}: avg_length_bytes must be >= 1")
        if self.length_kind is LengthKind.FIXED and self.avg_length_bytes > MAX_FIXED_BYTES:
            raise SchemaMismatch(
                f"field {self.name!r}: fixed fields are at most {MAX_FIXED_BYTES} bytes"
            )


@dataclass(frozen=True)
class TableSchema:
    name: str
    fields: tuple[FieldSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"schema {self.name!r}: duplicate field names")
        roles = [f.role for f in self.fields]
        if FieldRole.KEY not in roles or FieldRole.VALUE not in roles:
            raise SchemaMismatch(f"schema {self.name!r}: need at least one key and one value field")
        # key fields must form a contiguous prefix
        first_value = roles.index(FieldRole.VALUE)
        if any(r is FieldRole.KEY for r in roles[first_value:]):
            raise SchemaMismatch(f"schema {self.name!r}: key fields must be a contiguous prefix")

    @property
    def key_fields(self) -> tuple[FieldSpec, ...]:
        return tuple(f for f in self.fields if f.role is FieldRole.KEY)

    @property
    def value_fields(self) -> tuple[FieldSpec, ...]:
        return tuple(f for f in self.fields if f.role is FieldRole.VALUE)

    @property
    def key_bytes(self) -> int:
        return sum(f.avg_length_bytes for f in self.key_fields)

    @property
    def row_bytes(self) -> int:
        return sum(f.avg_length_bytes for f in self.fields)

    def field_by_name(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise UnknownColumn(f"schema {self.name!r} has no field {name!r}")


# --------------------------------------------------------------------------
# operations / workload


class OpType(str, enum.Enum):
    POINT_LOOKUP = "point_lookup"
    RANGE_SCAN = "range_scan"
    INSERT = "insert"


@dataclass(frozen=True)
class AccessOp:
    """One (possibly repeated) access against a table.

    ``columns`` names the value fields touched; empty means all of them.
    ``key_randomness`` only matters for inserts (0 = strictly ordered keys).
    """

    op_type: OpType
    columns: frozenset[str] = frozenset()
    result_rows: int = 1
    selectivity: float = 0.0
    key_randomness: float = 0.0
    frequency: int = 1
    age: int = 0

    def __post_init__(self) -> None:
        if self.result_rows < 0:
            raise SchemaMismatch("result_rows must be non-negative")
        if not 0.0 <= self.selectivity <= 1.0:
            raise SchemaMismatch("selectivity must be in [0, 1]")
        if not 0.0 <= self.key_randomness <= 1.0:
            raise SchemaMismatch("key_randomness must be in [0, 1]")
        if self.frequency < 1:
            raise SchemaMismatch("frequency must be a positive integer")
        if self.age < 0:
            raise SchemaMismatch("age must be non-negative")
        if self.op_type is OpType.POINT_LOOKUP and self.result_rows > 1:
            raise SchemaMismatch("point lookups return at most one row")


@dataclass(frozen=True)
class Workload:
    table: str
    ops: tuple[AccessOp, ...]
    initial_table_rows: int = 0

    def __post_init__(self) -> None:
        if self.initial_table_rows < 0:
            raise SchemaMismatch("initial_table_rows must be non-negative")


# --------------------------------------------------------------------------
# storage structure


class EngineKind(str, enum.Enum):
    BPLUS_ROW = "bplus"
    LSM_ROW = "lsm"
    COLUMNAR = "columnar"


@dataclass(frozen=True)
class DataLayout:
    """A partition of the value columns into column groups.

    On disk every group also carries the full key fields (the usual
    replicated-key column-group design), which row_bytes_for_group accounts
    for.
    """

    groups: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if not self.groups or any(not g for g in self.groups):
            raise SchemaMismatch("layout groups must be non-empty")

    @property
    def columns(self) -> frozenset[str]:
        return frozenset(c for g in self.groups for c in g)

    def group_of(self, column: str) -> int:
        for i, g in enumerate(self.groups):
            if column in g:
                return i
        raise UnknownColumn(f"layout has no column {column!r}")


def nsm_layout(schema: TableSchema) -> DataLayout:
    """All value columns in a single group."""
    return DataLayout((tuple(f.name for f in schema.value_fields),))


def dsm_layout(schema: TableSchema) -> DataLayout:
    """Every value column in its own group."""
    return DataLayout(tuple((f.name,) for f in schema.value_fields))


def canonical_layout(schema: TableSchema, groups) -> DataLayout:
    """Normalize group/column order to schema order so layouts compare equal."""
    order = {f.name: i for i, f in enumerate(schema.value_fields)}
    for g in groups:
        for c in g:
            if c not in order:
                raise UnknownColumn(f"schema {schema.name!r} has no value column {c!r}")
    normal = tuple(tuple(sorted(g, key=order.__getitem__)) for g in groups)
    return DataLayout(tuple(sorted(normal, key=lambda g: order[g[0]])))


def validate_layout(layout: DataLayout, schema: TableSchema) -> None:
    """Raise if ``layout`` is not a partition of the schema's value columns."""
    value_names = {f.name for f in schema.value_fields}
    seen: set[str] = set()
    for group in layout.groups:
        for col in group:
            if col not in value_names:
                raise UnknownColumn(f"layout column {col!r} not a value column of {schema.name!r}")
            if col in seen:
                raise OverlappingGroups(f"column {col!r} appears in more than one group")
            seen.add(col)
    missing = value_names - seen
    if missing:
        raise MissingColumn(f"layout misses value columns {sorted(missing)!r}")


def row_bytes_for_group(schema: TableSchema, group) -> int:
    """Average on-disk bytes per row for one column group (keys replicated)."""
    total = schema.key_bytes
    for col in group:
        f = schema.field_by_name(col)
        if f.role is not FieldRole.VALUE:
            raise UnknownColumn(f"{col!r} is not a value column")
        total += f.avg_length_bytes
    return total


@dataclass(frozen=True)
class StorageStructure:
    engine: EngineKind
    layout: DataLayout

    def __post_init__(self) -> None:
        if self.engine is EngineKind.COLUMNAR and any(len(g) != 1 for g in self.layout.groups):
            raise TargetInvalid("the columnar engine requires the DSM layout")

    def describe(self) -> str:
        groups = ")(".join(",".join(g) for g in self.layout.groups)
        return f"{self.engine.value}:({groups})"


def structure_is_valid(engine: EngineKind, layout: DataLayout) -> bool:
    return not (engine is EngineKind.COLUMNAR and any(len(g) != 1 for g in layout.groups))


@dataclass(frozen=True)
class Candidate:
    structure: StorageStructure
    predicted_cost_us: float = field(default=0.0, compare=False)
