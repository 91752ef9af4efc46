"""File formats: schemas, structures, scenarios.  All JSON, all versioned."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .core import (
    AccessOp,
    DataLayout,
    EngineKind,
    FieldRole,
    FieldSpec,
    LengthKind,
    OpType,
    SchemaMismatch,
    StorageStructure,
    TableSchema,
    UnknownColumn,
    UnknownFormatVersion,
    Workload,
    canonical_layout,
    nsm_layout,
)

SCENARIO_FORMAT_VERSION = 1


# --------------------------------------------------------------------------
# schema / layout / structure


def schema_to_dict(schema: TableSchema) -> dict:
    return {
        "name": schema.name,
        "fields": [
            {
                "name": f.name,
                "role": f.role.value,
                "kind": f.length_kind.value,
                "avg_bytes": f.avg_length_bytes,
            }
            for f in schema.fields
        ],
    }


def schema_from_dict(d: dict) -> TableSchema:
    fields = tuple(
        FieldSpec(
            name=f["name"],
            role=FieldRole(f["role"]),
            length_kind=LengthKind(f["kind"]),
            avg_length_bytes=int(f["avg_bytes"]),
        )
        for f in d["fields"]
    )
    return TableSchema(name=d["name"], fields=fields)


def layout_to_text(layout: DataLayout) -> str:
    """Pipe-separated groups, comma-separated columns: "a,b|c"."""
    return "|".join(",".join(g) for g in layout.groups)


def layout_from_text(text: str, schema: TableSchema) -> DataLayout:
    groups = []
    for part in text.split("|"):
        cols = tuple(c.strip() for c in part.split(",") if c.strip())
        if cols:
            groups.append(cols)
    if not groups:
        raise SchemaMismatch(f"layout text {text!r} has no groups")
    return canonical_layout(schema, groups)


def structure_to_dict(structure: StorageStructure) -> dict:
    return {
        "engine": structure.engine.value,
        "layout": [list(g) for g in structure.layout.groups],
    }


def structure_from_dict(d: dict, schema: TableSchema) -> StorageStructure:
    layout = canonical_layout(schema, [tuple(g) for g in d["layout"]])
    return StorageStructure(engine=EngineKind(d["engine"]), layout=layout)


# --------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class ScenarioSpec:
    """A reproducible what-if: schema + workload + table size + seed."""

    schema: TableSchema
    workload: Workload
    seed: int = 0
    current_structure: StorageStructure | None = None

    @property
    def initial_rows(self) -> int:
        return self.workload.initial_table_rows


_OP_NAMES = {
    "insert": OpType.INSERT,
    "point_lookup": OpType.POINT_LOOKUP,
    "range_scan": OpType.RANGE_SCAN,
}


def _op_from_dict(d: dict, schema: TableSchema, initial_rows: int) -> AccessOp:
    kind = _OP_NAMES.get(d["op"])
    if kind is None:
        raise SchemaMismatch(f"unknown op kind {d.get('op')!r}")
    value_names = {f.name for f in schema.value_fields}
    key_names = {f.name for f in schema.key_fields}
    cols = set()
    for c in d.get("columns", []):
        if c in value_names:
            cols.add(c)
        elif c in key_names:
            continue  # keys ride along in every group
        else:
            raise UnknownColumn(f"scenario op column {c!r} not in schema")
    rows = int(d.get("rows", 1))
    if kind is OpType.INSERT:
        sel = min(1.0, rows / (initial_rows + rows)) if rows else 0.0
    elif kind is OpType.POINT_LOOKUP:
        sel = 1.0 / initial_rows if initial_rows else 0.0
        rows = min(rows, 1)
    else:
        sel = min(1.0, rows / initial_rows) if initial_rows else 1.0
    return AccessOp(
        op_type=kind,
        columns=frozenset(cols),
        result_rows=rows,
        selectivity=sel,
        key_randomness=float(d.get("randomness", 0.0)),
        frequency=int(d.get("frequency", 1)),
        age=int(d.get("age", 0)),
    )


def _op_to_dict(op: AccessOp) -> dict:
    name = {v: k for k, v in _OP_NAMES.items()}[op.op_type]
    out: dict = {"op": name, "rows": op.result_rows}
    if op.columns:
        out["columns"] = sorted(op.columns)
    if op.key_randomness:
        out["randomness"] = op.key_randomness
    if op.frequency != 1:
        out["frequency"] = op.frequency
    if op.age:
        out["age"] = op.age
    return out


def scenario_to_dict(s: ScenarioSpec) -> dict:
    out = {
        "format_version": SCENARIO_FORMAT_VERSION,
        "seed": s.seed,
        "schema": schema_to_dict(s.schema),
        "initial_rows": s.workload.initial_table_rows,
        "workload": [_op_to_dict(op) for op in s.workload.ops],
    }
    if s.current_structure is not None:
        out["current_structure"] = structure_to_dict(s.current_structure)
    return out


def scenario_from_dict(d: dict) -> ScenarioSpec:
    if d.get("format_version") != SCENARIO_FORMAT_VERSION:
        raise UnknownFormatVersion(
            f"scenario format {d.get('format_version')!r} not supported"
        )
    schema = schema_from_dict(d["schema"])
    initial = int(d.get("initial_rows", 0))
    ops = tuple(_op_from_dict(o, schema, initial) for o in d.get("workload", []))
    workload = Workload(table=schema.name, ops=ops, initial_table_rows=initial)
    current = None
    if "current_structure" in d:
        current = structure_from_dict(d["current_structure"], schema)
    return ScenarioSpec(
        schema=schema,
        workload=workload,
        seed=int(d.get("seed", 0)),
        current_structure=current,
    )


def save_scenario(s: ScenarioSpec, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)
        fh.write("\n")


def load_scenario(path: str) -> ScenarioSpec:
    if not os.path.exists(path):
        raise SchemaMismatch(f"scenario file {path!r} does not exist")
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))


def default_current_structure(schema: TableSchema) -> StorageStructure:
    """What a fresh deployment runs before any advice: LSM row store on NSM."""
    return StorageStructure(engine=EngineKind.LSM_ROW, layout=nsm_layout(schema))
