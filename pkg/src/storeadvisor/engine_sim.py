"""Deterministic storage-engine simulators.

Three engines (B+ row store, LSM row store, columnar store) execute real
operations over materialized rows under virtual time.  Costs come from a
small set of closed-form rules — page reads through an LRU cache, buffered
writes with flush surges, LSM compaction — so identical (seed, op sequence)
inputs give bit-identical traces.  One microsecond is the cost unit.
"""
from __future__ import annotations

import math
import random
from bisect import bisect_left
from collections import OrderedDict, deque
from dataclasses import dataclass, field, replace

from .core import (
    AccessOp,
    DataLayout,
    EngineKind,
    OpType,
    SchemaMismatch,
    StorageStructure,
    TableSchema,
    TargetInvalid,
    nsm_layout,
    row_bytes_for_group,
    structure_is_valid,
    validate_layout,
)
from .features import RuntimeState


@dataclass
class SimConfig:
    """Cost constants. Defaults put flush-surge delay in the 5-10% share
    band for small-row insert streams (see tests)."""

    page_size: int = 4096
    cache_hit_us: float = 1.0          # read of a cached page
    cache_miss_us: float = 100.0       # read of an uncached page
    buffer_row_us: float = 0.5         # buffered insert, per row per group
    flush_page_us: float = 10.0        # flush write, per page
    node_level_us: float = 0.2         # tree descent, per level
    file_probe_us: float = 2.0         # LSM per-file probe
    merge_page_us: float = 1.0         # compaction IO, per page (sequential)
    write_buffer_capacity_rows: int = 1000
    cache_capacity_pages: int = 1024
    l1_merge_threshold: int = 4        # compact when l1 file count exceeds this
    rows_per_l2_file: int = 5000
    throughput_window_us: float = 1_000_000.0
    # stored-format byte overhead seen by reads (fill factor, block metadata,
    # obsolete versions); columnar files are densely packed
    format_overhead: dict = field(
        default_factory=lambda: {
            EngineKind.BPLUS_ROW: 1.3,
            EngineKind.LSM_ROW: 1.5,
            EngineKind.COLUMNAR: 1.0,
        }
    )
    # per-row CPU while scanning one group (iterator merge / reconstruction)
    scan_row_cpu_us: dict = field(
        default_factory=lambda: {
            EngineKind.BPLUS_ROW: 0.02,
            EngineKind.LSM_ROW: 0.05,
            EngineKind.COLUMNAR: 0.005,
        }
    )


@dataclass
class LsmFile:
    lo: int            # smallest key covered
    hi: int            # largest key covered
    rows: int


@dataclass
class GroupState:
    columns: tuple[str, ...]
    row_bytes: int                      # keys + group columns, per row
    value_idx: tuple[int, ...]          # positions into the full value tuple
    values: dict = field(default_factory=dict)   # key -> tuple of cell values
    l1_files: list = field(default_factory=list)  # LSM only
    l2_files: list = field(default_factory=list)


@dataclass
class OpTrace:
    op: AccessOp
    elapsed_us: float
    surge: bool
    state_before: RuntimeState
    per_group_us: dict
    pages_read: int = 0
    pages_written: int = 0
    result: list | None = None
    error: str | None = None


@dataclass
class WorkloadResult:
    total_us: float
    op_count: int
    surge_count: int
    traces: list | None = None


class EnginePartition:
    """One simulated table under a chosen storage structure."""

    def __init__(
        self,
        schema: TableSchema,
        structure: StorageStructure,
        config: SimConfig | None = None,
        seed: int = 0,
    ):
        validate_layout(structure.layout, schema)
        if not structure_is_valid(structure.engine, structure.layout):
            raise TargetInvalid("columnar engine requires the DSM layout")
        self.schema = schema
        self.structure = structure
        self.config = config or SimConfig()
        self.seed = seed
        self.rng = random.Random(seed)

        value_order = {f.name: i for i, f in enumerate(schema.value_fields)}
        self.groups: list[GroupState] = []
        for g in structure.layout.groups:
            self.groups.append(
                GroupState(
                    columns=g,
                    row_bytes=row_bytes_for_group(schema, g),
                    value_idx=tuple(value_order[c] for c in g),
                )
            )
        self._col_group = {c: i for i, gs in enumerate(self.groups) for c in gs.columns}

        self.keys: list[int] = []       # append-only ascending, so always sorted
        self.next_key = 0
        self.buffer_rows = 0
        self.buffer_lo: int | None = None
        self.buffer_hi: int | None = None
        self.buffer_disorder = 0.0      # row-weighted mean key_randomness since last flush
        self.page_cache: OrderedDict = OrderedDict()
        self.clock_us = 0.0
        self.io_events: deque = deque()  # (t_end, read_bytes, write_bytes)

    # -- geometry ----------------------------------------------------------

    @property
    def engine(self) -> EngineKind:
        return self.structure.engine

    @property
    def row_count(self) -> int:
        return len(self.keys)

    def _fmt(self) -> float:
        return self.config.format_overhead[self.engine]

    def _group_pages(self, gi: int, rows: int) -> int:
        return math.ceil(rows * self.groups[gi].row_bytes * self._fmt() / self.config.page_size)

    def total_pages(self) -> int:
        n = self.row_count
        return max(1, sum(self._group_pages(gi, n) for gi in range(len(self.groups))))

    # -- runtime counters ----------------------------------------------------

    def runtime_state(self) -> RuntimeState:
        win = self.config.throughput_window_us
        horizon = self.clock_us - win
        ev = self.io_events
        while ev and ev[0][0] <= horizon:
            ev.popleft()
        rbytes = sum(e[1] for e in ev)
        wbytes = sum(e[2] for e in ev)
        secs = win / 1e6
        if self.engine is EngineKind.LSM_ROW:
            l1 = sum(len(g.l1_files) for g in self.groups)
            l2 = sum(len(g.l2_files) for g in self.groups)
            files = l1 + l2
        else:
            l1 = l2 = 0
            files = len(self.groups)
        return RuntimeState(
            disk_read_tput=rbytes / secs,
            disk_write_tput=wbytes / secs,
            cached_pages=len(self.page_cache),
            total_pages=self.total_pages(),
            file_count=files,
            l1_file_count=l1,
            l2_file_count=l2,
        )

    def clear_page_cache(self) -> None:
        self.page_cache.clear()

    def idle(self, duration_us: float) -> None:
        if duration_us < 0:
            raise SchemaMismatch("idle duration must be non-negative")
        self.clock_us += duration_us

    # -- page cache ----------------------------------------------------------

    def _read_page(self, page_id) -> float:
        """Cost of reading one page through the LRU cache."""
        cache = self.page_cache
        if page_id in cache:
            cache.move_to_end(page_id)
            return self.config.cache_hit_us
        cache[page_id] = None
        if len(cache) > self.config.cache_capacity_pages:
            cache.popitem(last=False)
        return self.config.cache_miss_us

    # -- loading -------------------------------------------------------------

    def bulk_load(self, n_rows: int) -> None:
        """Populate the table with n_rows sorted rows (no virtual time passes).

        LSM partitions come up fully compacted: L2 runs split every
        rows_per_l2_file rows, empty L1.
        """
        keys = list(range(self.next_key, self.next_key + n_rows))
        nvals = len(self.schema.value_fields)
        rng = self.rng
        rows = [tuple(rng.getrandbits(31) for _ in range(nvals)) for _ in keys]
        self._load_rows(keys, rows)

    def _load_rows(self, keys, rows) -> None:
        for g in self.groups:
            idx = g.value_idx
            vals = g.values
            for k, row in zip(keys, rows):
                vals[k] = tuple(row[i] for i in idx)
        self.keys.extend(keys)
        if keys:
            self.next_key = max(self.next_key, keys[-1] + 1)
        if self.engine is EngineKind.LSM_ROW and keys:
            per_file = self.config.rows_per_l2_file
            for g in self.groups:
                g.l1_files.clear()
                g.l2_files.clear()
                for lo in range(0, len(keys), per_file):
                    chunk = keys[lo : lo + per_file]
                    g.l2_files.append(LsmFile(lo=chunk[0], hi=chunk[-1], rows=len(chunk)))

    # -- write path ----------------------------------------------------------

    def _flush(self, per_group_us: dict) -> tuple[int, int]:
        """Flush one buffer's worth of rows to every group; returns
        (pages_written, rows_flushed)."""
        cfg = self.config
        rows = min(self.buffer_rows, cfg.write_buffer_capacity_rows)
        pages_written = 0
        wbytes = 0
        for gi, g in enumerate(self.groups):
            pages = math.ceil(rows * g.row_bytes / cfg.page_size)   # dense write
            per_group_us[gi] = per_group_us.get(gi, 0.0) + cfg.flush_page_us * pages
            pages_written += pages
            wbytes += rows * g.row_bytes
            if self.engine is EngineKind.LSM_ROW:
                pages_written += self._lsm_append(gi, g, rows, per_group_us)
        self._io(0, wbytes)
        self.buffer_rows -= rows
        self.buffer_lo = self.buffer_hi = None
        self.buffer_disorder = 0.0
        return pages_written, rows

    def _lsm_append(self, gi: int, g: GroupState, rows: int, per_group_us: dict) -> int:
        """Register a flushed L1 run and compact if L1 is over threshold.

        Runs of disordered keys cover a wider key range (they interleave with
        the existing domain), so later compactions must merge more data —
        write randomness is cheap now, paid for later.
        """
        cfg = self.config
        lo = self.buffer_lo if self.buffer_lo is not None else self.next_key
        hi = self.buffer_hi if self.buffer_hi is not None else self.next_key
        d = self.buffer_disorder
        glo = self.keys[0] if self.keys else lo
        ghi = self.keys[-1] if self.keys else hi
        lo = int(lo - d * (lo - glo))
        hi = int(hi + d * (ghi - hi))
        g.l1_files.append(LsmFile(lo=lo, hi=hi, rows=rows))
        if len(g.l1_files) <= cfg.l1_merge_threshold:
            return 0

        # L1 -> L2 merge: read every L1 run plus the L2 runs they overlap,
        # write one combined run back, split into fixed-size files.
        merged = list(g.l1_files)
        keep = []
        mlo = min(f.lo for f in merged)
        mhi = max(f.hi for f in merged)
        for f in g.l2_files:
            if f.lo <= mhi and f.hi >= mlo:
                merged.append(f)
            else:
                keep.append(f)
        in_rows = sum(f.rows for f in merged)
        mlo = min(f.lo for f in merged)
        mhi = max(f.hi for f in merged)
        in_pages = sum(math.ceil(f.rows * g.row_bytes / cfg.page_size) for f in merged)
        out_pages = math.ceil(in_rows * g.row_bytes / cfg.page_size)
        per_group_us[gi] = per_group_us.get(gi, 0.0) + cfg.merge_page_us * (in_pages + out_pages)
        self._io(in_rows * g.row_bytes, in_rows * g.row_bytes)
        g.l1_files.clear()
        new_l2 = []
        remaining = in_rows
        span = max(1, mhi - mlo + 1)
        offset = 0
        while remaining > 0:
            take = min(cfg.rows_per_l2_file, remaining)
            flo = mlo + offset * span // in_rows
            fhi = mlo + min(in_rows, offset + take) * span // in_rows
            new_l2.append(LsmFile(lo=flo, hi=max(flo, fhi - 1), rows=take))
            offset += take
            remaining -= take
        g.l2_files = keep + new_l2
        g.l2_files.sort(key=lambda f: f.lo)
        return out_pages

    def _exec_insert(self, op: AccessOp, per_group_us: dict) -> OpTrace:
        cfg = self.config
        state = self._state_before
        b = op.result_rows
        keys = list(range(self.next_key, self.next_key + b))
        self.next_key += b
        nvals = len(self.schema.value_fields)
        rng = self.rng
        rows = [tuple(rng.getrandbits(31) for _ in range(nvals)) for _ in keys]

        n_before = self.row_count
        r = op.key_randomness
        h = state.cache_ratio
        pages_read = 0
        for gi, g in enumerate(self.groups):
            idx = g.value_idx
            vals = g.values
            for k, row in zip(keys, rows):
                vals[k] = tuple(row[i] for i in idx)
            cost = cfg.buffer_row_us * b
            if self.engine is EngineKind.BPLUS_ROW and b:
                # ordered inserts coalesce into fresh tail pages; random keys
                # touch one existing leaf per row through the page cache
                grown = self._group_pages_at(g, n_before + b) - self._group_pages_at(g, n_before)
                seq_cost = grown * cfg.cache_hit_us
                rand_cost = b * (h * cfg.cache_hit_us + (1.0 - h) * cfg.cache_miss_us)
                cost += (1.0 - r) * seq_cost + r * rand_cost
            per_group_us[gi] = per_group_us.get(gi, 0.0) + cost
        self.keys.extend(keys)

        if b:
            lo, hi = keys[0], keys[-1]
            tot = self.buffer_rows + b
            self.buffer_disorder = (self.buffer_disorder * self.buffer_rows + r * b) / tot
            self.buffer_rows = tot
            self.buffer_lo = lo if self.buffer_lo is None else min(self.buffer_lo, lo)
            self.buffer_hi = hi if self.buffer_hi is None else max(self.buffer_hi, hi)

        surge = False
        pages_written = 0
        while self.buffer_rows >= cfg.write_buffer_capacity_rows:
            surge = True
            pw, _ = self._flush(per_group_us)
            pages_written += pw

        return OpTrace(
            op=op,
            elapsed_us=sum(per_group_us.values()),
            surge=surge,
            state_before=state,
            per_group_us=per_group_us,
            pages_read=pages_read,
            pages_written=pages_written,
        )

    def _group_pages_at(self, g: GroupState, rows: int) -> int:
        return math.ceil(rows * g.row_bytes * self._fmt() / self.config.page_size)

    # -- read path -----------------------------------------------------------

    def _target_groups(self, op: AccessOp) -> list[int]:
        if not op.columns:
            return list(range(len(self.groups)))
        unknown = op.columns - set(self._col_group)
        if unknown:
            raise SchemaMismatch(f"op touches unknown columns {sorted(unknown)!r}")
        return sorted({self._col_group[c] for c in op.columns})

    def _locate_cost(self, g: GroupState, n: int, scan: bool) -> float:
        cfg = self.config
        if self.engine is EngineKind.LSM_ROW:
            if scan:
                probes = len(g.l1_files) + (1 if g.l2_files else 0)
            else:
                probes = len(g.l1_files) + len(g.l2_files)
            return cfg.file_probe_us * probes
        return cfg.node_level_us * math.log2(max(n, 2))

    def _exec_lookup(self, op: AccessOp, per_group_us: dict, collect: bool) -> OpTrace:
        cfg = self.config
        state = self._state_before
        n = self.row_count
        if op.result_rows == 1 and n > 0:
            key = self.keys[self.rng.randrange(n)]
            found = True
        else:
            key = -1 - self.rng.randrange(1 << 30)   # below any synthesized key
            found = False
        rank = min(bisect_left(self.keys, key), max(n - 1, 0))

        if self.engine is EngineKind.COLUMNAR:
            targets = list(range(len(self.groups)))   # row materialization
        else:
            targets = self._target_groups(op)
        pages_read = 0
        fmt = self._fmt()
        for gi in targets:
            g = self.groups[gi]
            cost = self._locate_cost(g, n, scan=False)
            if n > 0:
                pid = (gi, int(rank * g.row_bytes * fmt) // cfg.page_size)
                c = self._read_page(pid)
                if c == cfg.cache_miss_us:
                    self._io(cfg.page_size, 0)
                cost += c
                pages_read += 1
            per_group_us[gi] = per_group_us.get(gi, 0.0) + cost

        result = None
        if collect and found:
            result = [self._assemble_row(key, op)]
        return OpTrace(
            op=op,
            elapsed_us=sum(per_group_us.values()),
            surge=False,
            state_before=state,
            per_group_us=per_group_us,
            pages_read=pages_read,
            result=result if collect else None,
            error=None if found else "KeyNotFound",
        )

    def _exec_scan(self, op: AccessOp, per_group_us: dict, collect: bool) -> OpTrace:
        cfg = self.config
        state = self._state_before
        n = self.row_count
        m = min(op.result_rows, n)
        start = self.rng.randrange(n - m + 1) if n > 0 and m > 0 else 0
        targets = self._target_groups(op)
        fmt = self._fmt()
        pages_read = 0
        cpu = cfg.scan_row_cpu_us[self.engine]
        for gi in targets:
            g = self.groups[gi]
            cost = self._locate_cost(g, n, scan=True)
            if m > 0:
                first = int(start * g.row_bytes * fmt) // cfg.page_size
                last = math.ceil((start + m) * g.row_bytes * fmt / cfg.page_size)
                miss_bytes = 0
                for p in range(first, last):
                    c = self._read_page((gi, p))
                    cost += c
                    if c == cfg.cache_miss_us:
                        miss_bytes += cfg.page_size
                if miss_bytes:
                    self._io(miss_bytes, 0)
                pages_read += last - first
                cost += cpu * m
            per_group_us[gi] = per_group_us.get(gi, 0.0) + cost

        result = None
        if collect:
            result = [self._assemble_row(k, op) for k in self.keys[start : start + m]]
        return OpTrace(
            op=op,
            elapsed_us=sum(per_group_us.values()),
            surge=False,
            state_before=state,
            per_group_us=per_group_us,
            pages_read=pages_read,
            result=result,
        )

    def _assemble_row(self, key: int, op: AccessOp):
        wanted = op.columns or frozenset(self._col_group)
        cells = {}
        for gi, g in enumerate(self.groups):
            vals = g.values.get(key)
            if vals is None:
                continue
            for c, v in zip(g.columns, vals):
                if c in wanted:
                    cells[c] = v
        return (key, tuple(cells[c] for c in sorted(wanted)))

    # -- entry point ---------------------------------------------------------

    def execute(self, op: AccessOp, collect: bool = False) -> OpTrace:
        self._state_before = self.runtime_state()
        per_group_us: dict = {}
        if op.op_type is OpType.INSERT:
            trace = self._exec_insert(op, per_group_us)
        elif op.op_type is OpType.POINT_LOOKUP:
            trace = self._exec_lookup(op, per_group_us, collect)
        elif op.op_type is OpType.RANGE_SCAN:
            trace = self._exec_scan(op, per_group_us, collect)
        else:  # pragma: no cover
            raise SchemaMismatch(f"unknown op type {op.op_type!r}")
        self.clock_us += trace.elapsed_us
        return trace

    def _io(self, read_bytes: int, write_bytes: int) -> None:
        if read_bytes or write_bytes:
            self.io_events.append((self.clock_us, read_bytes, write_bytes))

    # -- snapshot / restore ---------------------------------------------------

    def snapshot_rows(self):
        """Logical content: (key, full value tuple) in key order."""
        out = []
        idx_of = {}
        for gi, g in enumerate(self.groups):
            for j, c in enumerate(g.columns):
                idx_of[c] = (gi, j)
        order = [idx_of[f.name] for f in self.schema.value_fields]
        group_vals = [g.values for g in self.groups]
        for k in self.keys:
            out.append((k, tuple(group_vals[gi][k][j] for gi, j in order)))
        return out

    @classmethod
    def from_rows(
        cls,
        schema: TableSchema,
        structure: StorageStructure,
        rows,
        config: SimConfig | None = None,
        seed: int = 0,
    ) -> "EnginePartition":
        part = cls(schema, structure, config=config, seed=seed)
        part._load_rows([k for k, _ in rows], [v for _, v in rows])
        return part


def run_workload(
    partition: EnginePartition,
    workload,
    collect: bool = False,
    interpose=None,
) -> WorkloadResult:
    """Execute every op, repeated op.frequency times, in order.

    ``interpose(partition, op_index)`` runs before each repetition — the
    benchmark driver uses it for cache clears and idle gaps.
    """
    total = 0.0
    count = 0
    surges = 0
    traces = [] if collect else None
    i = 0
    for op in workload.ops:
        for _ in range(op.frequency):
            if interpose is not None:
                interpose(partition, i)
            tr = partition.execute(op, collect=collect)
            total += tr.elapsed_us
            surges += 1 if tr.surge else 0
            count += 1
            if collect:
                traces.append(tr)
            i += 1
    return WorkloadResult(total_us=total, op_count=count, surge_count=surges, traces=traces)


def predict_initial_state(
    structure: StorageStructure,
    schema: TableSchema,
    rows: int,
    config: SimConfig | None = None,
) -> RuntimeState:
    """The RuntimeState a freshly bulk-loaded partition would report.

    Matches bulk_load arithmetic exactly (asserted in tests); used by the
    advisor for per-candidate what-if states without building partitions.
    """
    cfg = config or SimConfig()
    fmt = cfg.format_overhead[structure.engine]
    total = max(
        1,
        sum(
            math.ceil(rows * row_bytes_for_group(schema, g) * fmt / cfg.page_size)
            for g in structure.layout.groups
        ),
    )
    ngroups = len(structure.layout.groups)
    if structure.engine is EngineKind.LSM_ROW:
        l2 = math.ceil(rows / cfg.rows_per_l2_file) * ngroups if rows else 0
        return RuntimeState(
            total_pages=total, file_count=l2, l1_file_count=0, l2_file_count=l2
        )
    return RuntimeState(total_pages=total, file_count=ngroups)


def build_partition(
    schema: TableSchema,
    structure: StorageStructure,
    initial_rows: int,
    config: SimConfig | None = None,
    seed: int = 0,
) -> EnginePartition:
    part = EnginePartition(schema, structure, config=config, seed=seed)
    if initial_rows:
        part.bulk_load(initial_rows)
    return part


def default_structure(schema: TableSchema, engine: EngineKind = EngineKind.LSM_ROW) -> StorageStructure:
    """The deployment default: row engine over NSM."""
    if engine is EngineKind.COLUMNAR:
        raise TargetInvalid("the default structure must be a row engine")
    return StorageStructure(engine=engine, layout=nsm_layout(schema))
