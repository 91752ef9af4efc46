"""Canned what-if scenarios over a wide order-lines table.

Four workload mixes on the same 4-key / 12-value schema, spanning the
write-heavy .. read-heavy spectrum.  Used by the experiment scripts and the
end-to-end tests; sized so a full ground-truth simulation of every valid
structure stays in the tens of seconds.
"""
from __future__ import annotations

from .core import (
    AccessOp,
    FieldRole,
    FieldSpec,
    LengthKind,
    OpType,
    TableSchema,
    Workload,
)
from .serde import ScenarioSpec, default_current_structure

_K = FieldRole.KEY
_V = FieldRole.VALUE
_FIX = LengthKind.FIXED
_VAR = LengthKind.VARIABLE


def order_lines_schema() -> TableSchema:
    """A wide fact table: 4 fixed key parts, 12 value columns of mixed width."""
    return TableSchema(
        name="order_lines",
        fields=(
            FieldSpec("K1", _K, _FIX, 8),
            FieldSpec("K2", _K, _FIX, 8),
            FieldSpec("K3", _K, _FIX, 4),
            FieldSpec("K4", _K, _FIX, 4),
            FieldSpec("V1", _V, _FIX, 8),
            FieldSpec("V2", _V, _FIX, 8),
            FieldSpec("V3", _V, _FIX, 8),
            FieldSpec("V4", _V, _FIX, 8),
            FieldSpec("V5", _V, _FIX, 1),
            FieldSpec("V6", _V, _FIX, 1),
            FieldSpec("V7", _V, _FIX, 4),
            FieldSpec("V8", _V, _FIX, 4),
            FieldSpec("V9", _V, _FIX, 4),
            FieldSpec("V10", _V, _VAR, 25),
            FieldSpec("V11", _V, _VAR, 10),
            FieldSpec("V12", _V, _VAR, 44),
        ),
    )


# Column sets of the four recurring queries against order_lines.
SCAN_WIDE_COLUMNS = frozenset({"V2", "V3", "V7"})
SCAN_NARROW_COLUMNS = frozenset({"V2", "V3"})
POINT_ALL_COLUMNS = frozenset(
    {"V1", "V2", "V3", "V4", "V5", "V6", "V7", "V8", "V9", "V10", "V11", "V12"}
)
POINT_SUBSET_COLUMNS = frozenset({"V1", "V2", "V3", "V5", "V6", "V7", "V8", "V11"})


def _insert(count: int, table_rows_after: int) -> AccessOp:
    return AccessOp(
        op_type=OpType.INSERT,
        columns=frozenset(),
        result_rows=1,
        selectivity=min(1.0, count / max(table_rows_after, 1)),
        key_randomness=1.0,
        frequency=count,
    )


def _lookup(columns: frozenset, freq: int, table_rows: int) -> AccessOp:
    return AccessOp(
        op_type=OpType.POINT_LOOKUP,
        columns=columns,
        result_rows=1,
        selectivity=1.0 / max(table_rows, 1),
        frequency=freq,
    )


def _scan(columns: frozenset, rows: int, freq: int, table_rows: int) -> AccessOp:
    return AccessOp(
        op_type=OpType.RANGE_SCAN,
        columns=columns,
        result_rows=rows,
        selectivity=min(1.0, rows / max(table_rows, 1)),
        frequency=freq,
    )


def write_heavy_scenario(seed: int = 101) -> ScenarioSpec:
    """Pure ingest plus a trickle of point reads; table starts empty."""
    schema = order_lines_schema()
    final = 45_000
    ops = (
        _insert(45_000, final),
        _lookup(POINT_ALL_COLUMNS, 50, final),
        _lookup(POINT_SUBSET_COLUMNS, 50, final),
    )
    return ScenarioSpec(
        schema=schema,
        workload=Workload(table=schema.name, ops=ops, initial_table_rows=0),
        seed=seed,
        current_structure=default_current_structure(schema),
    )


def mixed_write_scenario(seed: int = 102) -> ScenarioSpec:
    """Ongoing ingest against a populated table, with reads and a few scans."""
    schema = order_lines_schema()
    initial = 45_000
    final = initial + 15_000
    ops = (
        _insert(15_000, final),
        _lookup(POINT_ALL_COLUMNS, 150, final),
        _lookup(POINT_SUBSET_COLUMNS, 150, final),
        _scan(SCAN_WIDE_COLUMNS, initial // 2, 5, initial),
        _scan(SCAN_NARROW_COLUMNS, initial // 2, 5, initial),
    )
    return ScenarioSpec(
        schema=schema,
        workload=Workload(table=schema.name, ops=ops, initial_table_rows=initial),
        seed=seed,
        current_structure=default_current_structure(schema),
    )


def mixed_read_scenario(seed: int = 103) -> ScenarioSpec:
    """Static table, point reads plus recurring two- and three-column scans."""
    schema = order_lines_schema()
    initial = 60_000
    ops = (
        _lookup(POINT_ALL_COLUMNS, 50, initial),
        _lookup(POINT_SUBSET_COLUMNS, 50, initial),
        _scan(SCAN_WIDE_COLUMNS, initial // 2, 15, initial),
        _scan(SCAN_NARROW_COLUMNS, initial // 2, 15, initial),
    )
    return ScenarioSpec(
        schema=schema,
        workload=Workload(table=schema.name, ops=ops, initial_table_rows=initial),
        seed=seed,
        current_structure=default_current_structure(schema),
    )


def scan_heavy_scenario(seed: int = 104) -> ScenarioSpec:
    """Static table, nothing but the two recurring column scans."""
    schema = order_lines_schema()
    initial = 60_000
    ops = (
        _scan(SCAN_WIDE_COLUMNS, initial // 2, 30, initial),
        _scan(SCAN_NARROW_COLUMNS, initial // 2, 30, initial),
    )
    return ScenarioSpec(
        schema=schema,
        workload=Workload(table=schema.name, ops=ops, initial_table_rows=initial),
        seed=seed,
        current_structure=default_current_structure(schema),
    )


def all_scenarios() -> dict:
    """Name -> scenario, ordered write-heavy to scan-heavy."""
    return {
        "write_heavy": write_heavy_scenario(),
        "mixed_write": mixed_write_scenario(),
        "mixed_read": mixed_read_scenario(),
        "scan_heavy": scan_heavy_scenario(),
    }
