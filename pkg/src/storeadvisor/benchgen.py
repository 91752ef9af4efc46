"""Benchmark generation: random schemas + long-tailed workloads, executed on
every engine to produce the training corpus for the cost model.

Benchmarks run row engines on NSM and the columnar engine on DSM (its only
legal layout).  Every record describes one (op, touched column group) pair,
so layout never needs to be benchmarked directly: a group read looks exactly
like a narrow-table read.
"""
from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AccessOp,
    DataLayout,
    EngineKind,
    FieldRole,
    FieldSpec,
    LengthKind,
    OpType,
    StorageStructure,
    TableSchema,
    UnknownFormatVersion,
    FeatureVersionMismatch,
    Workload,
    dsm_layout,
    nsm_layout,
)
from .engine_sim import EnginePartition, SimConfig, build_partition, run_workload
from .features import FEATURE_ORDER, FEATURE_VERSION, FeatureVector, extract_features

PERF_FORMAT_VERSION = 1

READ_CLASS = "read"
WRITE_CLASS = "write"


def op_class_of(op_type: OpType) -> str:
    return WRITE_CLASS if op_type is OpType.INSERT else READ_CLASS


@dataclass
class BenchConfig:
    num_schemas: int = 18
    ops_per_schema: int = 700
    field_count_range: tuple[int, int] = (3, 24)
    varlen_range: tuple[int, int] = (4, 120)
    long_tail_shape: float = 1.2        # lognormal sigma for scan lengths
    write_rows_tail_shape: float = 1.2  # lognormal sigma for batch sizes
    cache_clear_prob: float = 0.10
    idle_prob: float = 0.05
    seed: int = 0
    # shape medians / clamps
    scan_len_median: float = 64.0
    batch_rows_median: float = 8.0
    batch_rows_max: int = 400
    initial_rows_median: float = 3000.0
    initial_rows_range: tuple[int, int] = (200, 30000)
    fixed_field_prob: float = 0.55
    varlen_median: float = 12.0
    op_mix: tuple[float, float, float] = (0.35, 0.30, 0.35)  # insert, point, scan


@dataclass(frozen=True)
class PerfRecord:
    engine: EngineKind
    op_class: str
    features: FeatureVector
    elapsed_per_row_us: float
    surge: bool
    source: str = "benchmark"


# --------------------------------------------------------------------------
# generators


def _lognormal_int(rng: np.random.Generator, median: float, sigma: float, lo: int, hi: int) -> int:
    v = int(round(float(rng.lognormal(math.log(median), sigma))))
    return max(lo, min(hi, v))


def gen_schema(rng: np.random.Generator, config: BenchConfig, name: str = "t0") -> TableSchema:
    """Random table: 1-4 fixed key fields as a prefix, then a long-tailed mix
    of fixed and variable-width value fields."""
    lo, hi = config.field_count_range
    n_fields = _lognormal_int(rng, median=max(lo + 3, 8), sigma=0.6, lo=lo, hi=hi)
    n_keys = int(rng.integers(1, min(4, max(1, n_fields - 1)) + 1))
    fields = []
    for i in range(n_keys):
        fields.append(
            FieldSpec(
                name=f"K{i + 1}",
                role=FieldRole.KEY,
                length_kind=LengthKind.FIXED,
                avg_length_bytes=int(rng.choice([4, 8])),
            )
        )
    for i in range(n_fields - n_keys):
        if rng.random() < config.fixed_field_prob:
            kind = LengthKind.FIXED
            nbytes = int(rng.integers(1, 9))
        else:
            kind = LengthKind.VARIABLE
            nbytes = _lognormal_int(
                rng, config.varlen_median, config.long_tail_shape * 0.8,
                config.varlen_range[0], config.varlen_range[1],
            )
        fields.append(
            FieldSpec(
                name=f"V{i + 1}", role=FieldRole.VALUE, length_kind=kind, avg_length_bytes=nbytes
            )
        )
    return TableSchema(name=name, fields=tuple(fields))


def _pick_columns(rng: np.random.Generator, schema: TableSchema) -> frozenset[str]:
    """Column subset for a read op; empty set means select-all."""
    values = [f.name for f in schema.value_fields]
    if rng.random() < 0.30 or len(values) == 1:
        return frozenset()
    k = 1 + min(len(values) - 1, int(rng.geometric(0.45)) - 1)
    return frozenset(rng.choice(values, size=k, replace=False).tolist())


def gen_workload(schema: TableSchema, rng: np.random.Generator, config: BenchConfig) -> Workload:
    """Interleaved inserts / lookups / scans with long-tailed sizes.

    The table starts bulk-loaded (initial_table_rows; no op, no trace) so
    reads always have rows to hit; tracks the running row count so scan
    lengths and selectivities stay valid at execution time.
    """
    ops: list[AccessOp] = []
    rows = _lognormal_int(
        rng, config.initial_rows_median, 1.0,
        config.initial_rows_range[0], config.initial_rows_range[1],
    )
    initial_rows = rows
    w_ins, w_point, w_scan = config.op_mix
    for _ in range(config.ops_per_schema):
        u = rng.random() * (w_ins + w_point + w_scan)
        if u < w_ins:
            if rng.random() < 0.5:
                b = 1
            else:
                b = _lognormal_int(rng, config.batch_rows_median,
                                   config.write_rows_tail_shape, 1, config.batch_rows_max)
            mode = int(rng.integers(0, 3))
            if mode == 0:
                r = 0.0                                   # sequential
            elif mode == 1:
                r = float(rng.uniform(0.85, 1.0))         # random
            else:
                r = float(rng.uniform(0.10, 0.90))        # shuffled blocks
            ops.append(
                AccessOp(
                    op_type=OpType.INSERT,
                    result_rows=b,
                    selectivity=min(1.0, b / (rows + b)),
                    key_randomness=r,
                )
            )
            rows += b
        elif u < w_ins + w_point:
            hit = rng.random() < 0.9
            ops.append(
                AccessOp(
                    op_type=OpType.POINT_LOOKUP,
                    columns=_pick_columns(rng, schema),
                    result_rows=1 if hit else 0,
                    selectivity=min(1.0, 1.0 / max(rows, 1)),
                )
            )
        else:
            m = _lognormal_int(rng, config.scan_len_median, config.long_tail_shape, 1, max(rows, 1))
            ops.append(
                AccessOp(
                    op_type=OpType.RANGE_SCAN,
                    columns=_pick_columns(rng, schema),
                    result_rows=m,
                    selectivity=m / max(rows, 1),
                )
            )
    return Workload(table=schema.name, ops=tuple(ops), initial_table_rows=initial_rows)


# --------------------------------------------------------------------------
# execution


def benchmark_structure(schema: TableSchema, engine: EngineKind) -> StorageStructure:
    layout = dsm_layout(schema) if engine is EngineKind.COLUMNAR else nsm_layout(schema)
    return StorageStructure(engine=engine, layout=layout)


def records_from_trace(
    partition: EnginePartition,
    trace,
    source: str = "benchmark",
) -> list[PerfRecord]:
    """One PerfRecord per touched column group."""
    op = trace.op
    rows = max(op.result_rows, 1)
    out = []
    for gi, us in trace.per_group_us.items():
        group = partition.groups[gi].columns
        feats = extract_features(partition.schema, op, trace.state_before, group=group)
        out.append(
            PerfRecord(
                engine=partition.engine,
                op_class=op_class_of(op.op_type),
                features=feats,
                elapsed_per_row_us=us / rows,
                surge=trace.surge,
                source=source,
            )
        )
    return out


def run_benchmark(
    config: BenchConfig,
    sim_config: SimConfig | None = None,
    engines=(EngineKind.BPLUS_ROW, EngineKind.LSM_ROW, EngineKind.COLUMNAR),
) -> list[PerfRecord]:
    """Generate schemas+workloads and execute them on every engine, with
    cache clears and idle gaps interposed to vary the runtime state."""
    master = np.random.default_rng(config.seed)
    sim_config = sim_config or SimConfig()
    records: list[PerfRecord] = []
    for si in range(config.num_schemas):
        schema_seed, workload_seed = master.integers(0, 2**31, size=2)
        schema = gen_schema(np.random.default_rng(schema_seed), config, name=f"t{si}")
        workload = gen_workload(schema, np.random.default_rng(workload_seed), config)
        for ei, engine in enumerate(engines):
            structure = benchmark_structure(schema, engine)
            part = EnginePartition(
                schema, structure, config=sim_config, seed=int(workload_seed) ^ (ei + 1)
            )
            if workload.initial_table_rows:
                part.bulk_load(workload.initial_table_rows)
            gaps = random.Random(int(schema_seed) * 31 + ei)
            for op in workload.ops:
                if gaps.random() < config.cache_clear_prob:
                    part.clear_page_cache()
                if gaps.random() < config.idle_prob:
                    part.idle(gaps.uniform(0.1, 1.2) * sim_config.throughput_window_us)
                trace = part.execute(op)
                records.extend(records_from_trace(part, trace))
    return records


def sample_runtime(
    partition: EnginePartition,
    traces,
    rate: float,
    rng: random.Random,
) -> list[PerfRecord]:
    """Bernoulli-sample production traces into runtime-sourced perf records."""
    out = []
    for tr in traces:
        if rng.random() < rate:
            out.extend(records_from_trace(partition, tr, source="runtime"))
    return out


def insert_stream_records(
    engine: EngineKind,
    n_ops: int = 10_000,
    seed: int = 7,
    sim_config: SimConfig | None = None,
    rate: float = 1.0,
) -> list[PerfRecord]:
    """Runtime-sampled records from a single-row sequential insert stream.

    The synthetic benchmark writes in batches, so its data says little about
    the per-op surge rate of one-row-at-a-time ingest; a few sampled streams
    teach the surge classifier that regime.  Minimal two-field schema, empty
    table, strictly ordered keys.
    """
    schema = TableSchema(
        name="ingest",
        fields=(
            FieldSpec("k", FieldRole.KEY, LengthKind.FIXED, 8),
            FieldSpec("v", FieldRole.VALUE, LengthKind.FIXED, 8),
        ),
    )
    structure = StorageStructure(engine=engine, layout=DataLayout(groups=(("v",),)))
    part = EnginePartition(schema, structure, config=sim_config, seed=seed)
    op = AccessOp(
        op_type=OpType.INSERT, columns=frozenset({"v"}), result_rows=1,
        frequency=1, key_randomness=0.0,
    )
    result = run_workload(part, Workload(table="ingest", ops=(op,) * n_ops), collect=True)
    return sample_runtime(part, result.traces, rate=rate, rng=random.Random(seed * 1009 + 1))


_SCAN_STREAM_WIDTHS = (8, 4, 16, 2, 32, 8, 4, 24)


def read_stream_records(
    engine: EngineKind,
    n_value_fields: int = 2,
    rows: int = 6000,
    n_ops: int = 1200,
    seed: int = 11,
    sim_config: SimConfig | None = None,
    rate: float = 1.0,
    clear_prob: float = 0.06,
    lookup_prob: float = 0.2,
) -> list[PerfRecord]:
    """Runtime-sampled records from sustained read traffic over a static
    table.

    Benchmark workloads are write-interleaved and short-scan-heavy, so the
    corpus is thin where a stable table is scanned end to end over and over —
    the regime a read-mostly deployment settles into.  A few sampled read
    streams over static tables (narrow through wide rows) pin each engine's
    warm-read asymptote; occasional cache clears re-walk the cold-to-warm
    ramp so mid-ratio states stay covered at every scan length.
    """
    fields = [FieldSpec("k", FieldRole.KEY, LengthKind.FIXED, 8)]
    for i in range(n_value_fields):
        width = _SCAN_STREAM_WIDTHS[i % len(_SCAN_STREAM_WIDTHS)]
        kind = LengthKind.FIXED if width <= 8 else LengthKind.VARIABLE
        fields.append(FieldSpec(f"v{i + 1}", FieldRole.VALUE, kind, width))
    schema = TableSchema(name="readstream", fields=tuple(fields))
    layout = dsm_layout(schema) if engine is EngineKind.COLUMNAR else nsm_layout(schema)
    structure = StorageStructure(engine=engine, layout=layout)
    part = build_partition(schema, structure, rows, config=sim_config, seed=seed)
    rng = np.random.default_rng(seed * 7919 + 3)
    names = [f.name for f in schema.value_fields]
    ops = []
    for _ in range(n_ops):
        k = int(rng.integers(1, len(names) + 1))
        cols = frozenset(rng.choice(names, size=k, replace=False).tolist())
        if rng.random() >= lookup_prob:
            m = int(round(math.exp(rng.uniform(math.log(8), math.log(rows)))))
            ops.append(
                AccessOp(
                    op_type=OpType.RANGE_SCAN, columns=cols,
                    result_rows=m, selectivity=m / rows,
                )
            )
        else:
            ops.append(
                AccessOp(
                    op_type=OpType.POINT_LOOKUP, columns=cols,
                    result_rows=1, selectivity=1.0 / rows,
                )
            )
    gaps = random.Random(seed * 6151 + 7)

    def interpose(partition, _i):
        if gaps.random() < clear_prob:
            partition.clear_page_cache()

    result = run_workload(
        part, Workload(table="readstream", ops=tuple(ops), initial_table_rows=rows),
        collect=True, interpose=interpose,
    )
    return sample_runtime(part, result.traces, rate=rate, rng=random.Random(seed * 1009 + 5))


SCAN_STREAM_SHAPES = ((1, 4000), (3, 6000), (8, 20000), (8, 60000))


def training_corpus(
    config: BenchConfig | None = None,
    sim_config: SimConfig | None = None,
    stream_seeds=(7, 8, 9),
    scan_shapes=SCAN_STREAM_SHAPES,
) -> list[PerfRecord]:
    """The full training mix: synthetic benchmark, sampled ingest streams for
    each row engine (the columnar engine sees the same buffered-write path
    through the benchmark itself), and sampled steady-read streams for every
    engine."""
    records = run_benchmark(config or BenchConfig(), sim_config=sim_config)
    for engine in (EngineKind.BPLUS_ROW, EngineKind.LSM_ROW):
        for s in stream_seeds:
            records.extend(
                insert_stream_records(engine, seed=s, sim_config=sim_config)
            )
    for engine in (EngineKind.BPLUS_ROW, EngineKind.LSM_ROW, EngineKind.COLUMNAR):
        for i, (n_vals, rows) in enumerate(scan_shapes):
            records.extend(
                read_stream_records(
                    engine, n_value_fields=n_vals, rows=rows,
                    seed=11 + i, sim_config=sim_config,
                )
            )
        # lookup-dominated stream with sparse clears: point reads re-warm the
        # cache one page at a time, so this walks the whole cold-to-warm ramp
        # slowly, filling in the mid-ratio states scans skip over
        records.extend(
            read_stream_records(
                engine, n_value_fields=3, rows=8000, n_ops=6000,
                seed=17, sim_config=sim_config,
                clear_prob=0.008, lookup_prob=0.9,
            )
        )
    return records


# --------------------------------------------------------------------------
# perf-data files: line-delimited JSON, one file per (engine, op class)


def perf_file_name(engine: EngineKind, op_class: str) -> str:
    return f"perf_{engine.value}_{op_class}.ndjson"


def write_perf_files(records, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    buckets: dict[tuple[EngineKind, str], list[PerfRecord]] = {}
    for r in records:
        buckets.setdefault((r.engine, r.op_class), []).append(r)
    written = []
    for (engine, op_class), recs in sorted(buckets.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        path = os.path.join(out_dir, perf_file_name(engine, op_class))
        with open(path, "w") as fh:
            header = {
                "format_version": PERF_FORMAT_VERSION,
                "feature_version": FEATURE_VERSION,
                "engine": engine.value,
                "op_class": op_class,
                "fields": list(FEATURE_ORDER),
            }
            fh.write(json.dumps(header) + "\n")
            for r in recs:
                row = {
                    "elapsed_per_row_us": r.elapsed_per_row_us,
                    "surge": r.surge,
                    "source": r.source,
                }
                row.update(r.features.to_dict())
                fh.write(json.dumps(row) + "\n")
        written.append(path)
    return written


def read_perf_file(path: str) -> list[PerfRecord]:
    records = []
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format_version") != PERF_FORMAT_VERSION:
            raise UnknownFormatVersion(
                f"{path}: perf format {header.get('format_version')!r} not supported"
            )
        if header.get("feature_version") != FEATURE_VERSION:
            raise FeatureVersionMismatch(
                f"{path}: feature order {header.get('feature_version')!r} != {FEATURE_VERSION}"
            )
        engine = EngineKind(header["engine"])
        op_class = header["op_class"]
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            records.append(
                PerfRecord(
                    engine=engine,
                    op_class=op_class,
                    features=FeatureVector.from_dict(row),
                    elapsed_per_row_us=float(row["elapsed_per_row_us"]),
                    surge=bool(row["surge"]),
                    source=str(row.get("source", "benchmark")),
                )
            )
    return records


def read_perf_dir(data_dir: str) -> list[PerfRecord]:
    records = []
    for name in sorted(os.listdir(data_dir)):
        if name.startswith("perf_") and name.endswith(".ndjson"):
            records.extend(read_perf_file(os.path.join(data_dir, name)))
    return records
