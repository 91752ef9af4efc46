"""Structure conversion: snapshot -> rebuild -> verify -> atomic manifest swap.

A partition directory holds one generation-numbered snapshot file per build
plus a manifest naming the active generation.  The manifest is replaced
atomically (write-temp + rename), so a failure anywhere before the swap
leaves the previous generation active.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .core import (
    ConversionVerifyFailed,
    CorruptSnapshot,
    StorageStructure,
    TableSchema,
    TargetInvalid,
    UnknownFormatVersion,
    structure_is_valid,
)
from .engine_sim import EnginePartition, SimConfig
from .serde import schema_from_dict, schema_to_dict, structure_from_dict, structure_to_dict

MANIFEST_FORMAT_VERSION = 1
SNAPSHOT_FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class PartitionManifest:
    partition_id: str
    generation: int
    structure_dict: dict
    data_file: str

    def structure(self, schema: TableSchema) -> StorageStructure:
        return structure_from_dict(self.structure_dict, schema)


def manifest_path(data_dir: str) -> str:
    return os.path.join(data_dir, MANIFEST_NAME)


def save_manifest(data_dir: str, manifest: PartitionManifest) -> None:
    payload = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "partition_id": manifest.partition_id,
        "generation": manifest.generation,
        "structure": manifest.structure_dict,
        "data_file": manifest.data_file,
    }
    tmp = manifest_path(data_dir) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, manifest_path(data_dir))  # atomic swap


def load_manifest(data_dir: str) -> PartitionManifest:
    path = manifest_path(data_dir)
    if not os.path.exists(path):
        raise CorruptSnapshot(f"no manifest in {data_dir!r}")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise UnknownFormatVersion(f"manifest format {d.get('format_version')!r} not supported")
    return PartitionManifest(
        partition_id=d["partition_id"],
        generation=int(d["generation"]),
        structure_dict=d["structure"],
        data_file=d["data_file"],
    )


# --------------------------------------------------------------------------
# snapshots


def snapshot_file_name(generation: int) -> str:
    return f"gen-{generation}.snap"


def write_snapshot(
    path: str, schema: TableSchema, structure: StorageStructure, rows
) -> None:
    with open(path, "w") as fh:
        header = {
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "schema": schema_to_dict(schema),
            "structure": structure_to_dict(structure),
            "row_count": len(rows),
        }
        fh.write(json.dumps(header) + "\n")
        for key, values in rows:
            fh.write(json.dumps([key, list(values)]) + "\n")


def read_snapshot(path: str):
    """Returns (schema, structure, rows) or raises CorruptSnapshot."""
    if not os.path.exists(path):
        raise CorruptSnapshot(f"snapshot {path!r} does not exist")
    with open(path) as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as e:
            raise CorruptSnapshot(f"snapshot {path!r}: bad header") from e
        if header.get("format_version") != SNAPSHOT_FORMAT_VERSION:
            raise UnknownFormatVersion(
                f"snapshot format {header.get('format_version')!r} not supported"
            )
        schema = schema_from_dict(header["schema"])
        structure = structure_from_dict(header["structure"], schema)
        rows = []
        for line in fh:
            if not line.strip():
                continue
            try:
                key, values = json.loads(line)
            except (json.JSONDecodeError, ValueError) as e:
                raise CorruptSnapshot(f"snapshot {path!r}: bad row line") from e
            rows.append((int(key), tuple(values)))
        if len(rows) != header["row_count"]:
            raise CorruptSnapshot(
                f"snapshot {path!r}: {len(rows)} rows, header says {header['row_count']}"
            )
    return schema, structure, rows


# --------------------------------------------------------------------------
# conversion


def convert(
    partition: EnginePartition,
    target: StorageStructure,
    data_dir: str | None = None,
    fail_before_swap: bool = False,
    _builder=None,
) -> EnginePartition:
    """Rebuild ``partition`` under ``target`` and verify content equality.

    With a data_dir, the new generation's snapshot is written and the
    manifest swapped only after verification; ``fail_before_swap`` injects
    a crash between build and swap (the old generation stays active).
    """
    if not structure_is_valid(target.engine, target.layout):
        raise TargetInvalid("columnar engine requires the DSM layout")
    schema = partition.schema
    rows = partition.snapshot_rows()
    builder = _builder or EnginePartition.from_rows
    rebuilt = builder(
        schema, target, rows, config=partition.config, seed=partition.seed
    )
    if rebuilt.snapshot_rows() != rows:
        raise ConversionVerifyFailed(
            f"rebuild under {target.describe()} lost or altered rows"
        )
    if data_dir is not None:
        manifest = load_manifest(data_dir)
        gen = manifest.generation + 1
        snap = snapshot_file_name(gen)
        write_snapshot(os.path.join(data_dir, snap), schema, target, rows)
        if fail_before_swap:
            raise ConversionVerifyFailed("injected failure before manifest swap")
        save_manifest(
            data_dir,
            PartitionManifest(
                partition_id=manifest.partition_id,
                generation=gen,
                structure_dict=structure_to_dict(target),
                data_file=snap,
            ),
        )
    return rebuilt


def init_partition_dir(
    data_dir: str,
    partition_id: str,
    schema: TableSchema,
    structure: StorageStructure,
    rows,
) -> PartitionManifest:
    os.makedirs(data_dir, exist_ok=True)
    snap = snapshot_file_name(1)
    write_snapshot(os.path.join(data_dir, snap), schema, structure, rows)
    manifest = PartitionManifest(
        partition_id=partition_id,
        generation=1,
        structure_dict=structure_to_dict(structure),
        data_file=snap,
    )
    save_manifest(data_dir, manifest)
    return manifest


def load_partition(
    data_dir: str, config: SimConfig | None = None, seed: int = 0
) -> EnginePartition:
    """Materialize the active generation of a partition directory."""
    manifest = load_manifest(data_dir)
    schema, structure, rows = read_snapshot(os.path.join(data_dir, manifest.data_file))
    return EnginePartition.from_rows(schema, structure, rows, config=config, seed=seed)
