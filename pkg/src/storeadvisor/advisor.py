"""Candidate enumeration and the apply/hold decision."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import (
    Candidate,
    DataLayout,
    EngineKind,
    OpType,
    StorageStructure,
    TableSchema,
    Workload,
    row_bytes_for_group,
    structure_is_valid,
)
from .engine_sim import SimConfig, predict_initial_state
from .features import RuntimeState
from .layout import recommend_layouts

DEFAULT_EPSILON = 0.10

ALL_ENGINES = (EngineKind.BPLUS_ROW, EngineKind.LSM_ROW, EngineKind.COLUMNAR)


def generate_candidates(layouts, engines=ALL_ENGINES) -> list[StorageStructure]:
    """Cartesian product of engines x layouts, minus invalid combinations
    (the columnar engine only runs DSM)."""
    out: list[StorageStructure] = []
    seen = set()
    for engine in engines:
        for layout in layouts:
            if not structure_is_valid(engine, layout):
                continue
            s = StorageStructure(engine=engine, layout=layout)
            if s not in seen:
                seen.add(s)
                out.append(s)
    return out


def _segment_sizes(freq: int) -> list[int]:
    """Doubling split of an op's repetition count: 1, 2, 4, ... — fine where
    the state moves fast, coarse in the long steady tail."""
    out, size, left = [], 1, freq
    while left > 0:
        take = min(size, left)
        out.append(take)
        left -= take
        size *= 2
    return out


def _touched_indices(groups, engine: EngineKind, op) -> list[int]:
    """Group indices an op reaches (mirrors the engines: writes hit every
    group, columnar point reads materialize whole rows)."""
    if (
        op.op_type is OpType.INSERT
        or not op.columns
        or (engine is EngineKind.COLUMNAR and op.op_type is OpType.POINT_LOOKUP)
    ):
        return list(range(len(groups)))
    return [i for i, g in enumerate(groups) if op.columns.intersection(g)]


def warm_trajectory(
    structure: StorageStructure,
    schema: TableSchema,
    workload: Workload,
    base: RuntimeState,
    sim_config: SimConfig | None = None,
) -> list[tuple]:
    """Expected-state schedule (op, state, repetitions) for pricing a
    workload that starts on a freshly built structure.

    Read costs hinge on how much of the table the page cache holds, and a
    fresh structure earns its cache as the workload runs: scans sweep it warm
    almost immediately, random point reads fill it one page at a time,
    inserts grow the table underneath it (buffered writes bypass the page
    cache).  The schedule tracks the expected fill with plain page
    arithmetic — mean-field LRU, where each page read caches a new page with
    probability 1 - cached/total — splitting every op's repetitions into
    doubling segments so the fast-moving early state is finely resolved.
    File counts stay at their fresh-build values.
    """
    cfg = sim_config or SimConfig()
    fmt = cfg.format_overhead[structure.engine]
    groups = structure.layout.groups
    gbytes = [row_bytes_for_group(schema, g) * fmt for g in groups]
    page = float(cfg.page_size)
    cap = float(cfg.cache_capacity_pages)
    rows = float(workload.initial_table_rows)

    def group_pages() -> list[float]:
        return [float(math.ceil(rows * gb / page)) for gb in gbytes]

    def filled(cached: float, pages: float, k: float, reps: int) -> float:
        if pages <= 0.0:
            return 0.0
        if k >= pages:
            return pages
        return pages - (pages - cached) * (1.0 - k / pages) ** reps

    # Seed each group's fill from the observed table-wide ratio; from here on
    # every group warms at its own pace, because an op that only touches a
    # narrow group fills (and hits) far fewer pages than the table holds.
    gp = group_pages()
    fill0 = min(1.0, base.cached_pages / max(1.0, sum(gp)))
    cached = [fill0 * p for p in gp]

    sched = []
    for op in workload.ops:
        b = max(op.result_rows, 1)
        touched = _touched_indices(groups, structure.engine, op)
        for reps in _segment_sizes(op.frequency):
            gp = group_pages()
            total = max(1.0, sum(gp))
            # Hit odds for this op are set by the touched groups' fill, not
            # the table-wide one, so scale the snapshot to match.
            tpages = sum(gp[i] for i in touched)
            tcached = sum(min(cached[i], gp[i]) for i in touched)
            ratio = tcached / tpages if tpages > 0.0 else sum(cached) / total
            state = RuntimeState(
                disk_read_tput=base.disk_read_tput,
                disk_write_tput=base.disk_write_tput,
                cached_pages=int(round(min(ratio * total, total))),
                total_pages=max(1, int(round(total))),
                file_count=base.file_count,
                l1_file_count=base.l1_file_count,
                l2_file_count=base.l2_file_count,
            )
            sched.append((op, state, reps))
            if op.op_type is OpType.INSERT:
                rows += b * reps
                cached = [min(c, p) for c, p in zip(cached, group_pages())]
                continue
            if op.op_type is OpType.RANGE_SCAN:
                m = min(float(b), rows)
                if m > 0.0:
                    for i in touched:
                        k = min(m * gbytes[i] / page + 1.0, gp[i])
                        cached[i] = filled(cached[i], gp[i], k, reps)
            elif rows > 0.0:
                for i in touched:
                    cached[i] = filled(cached[i], gp[i], 1.0, reps)
            spill = sum(cached) - cap
            if spill > 0.0:  # LRU evicts; shed the excess proportionally
                scale = cap / (spill + cap)
                cached = [c * scale for c in cached]
    return sched


@dataclass(frozen=True)
class Recommendation:
    current: Candidate
    candidates: tuple[Candidate, ...]      # ranked, cheapest first
    chosen: Candidate | None
    epsilon: float
    improvement: float                     # (current - best) / current
    decision: str                          # "apply" | "hold"
    reason: str

    @property
    def best(self) -> Candidate:
        return self.candidates[0]


def evaluate(
    candidates,
    workload: Workload,
    schema: TableSchema,
    model,
    state: RuntimeState,
    current: StorageStructure,
    epsilon: float = DEFAULT_EPSILON,
    sim_config: SimConfig | None = None,
) -> Recommendation:
    """Rank candidates by predicted workload cost and apply the epsilon rule.

    Every structure (the incumbent included) is priced under its own what-if
    conditions — the file population a fresh build of that structure would
    have, a cold page cache that warms along the workload's own expected
    trajectory (warm_trajectory), and throughputs carried over from the
    observed state — so the comparison is apples to apples.
    """
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1)")
    rows = workload.initial_table_rows

    def cost_of(structure: StorageStructure) -> float:
        fresh = predict_initial_state(structure, schema, rows, sim_config)
        base = RuntimeState(
            disk_read_tput=state.disk_read_tput,
            disk_write_tput=state.disk_write_tput,
            cached_pages=0,
            total_pages=fresh.total_pages,
            file_count=fresh.file_count,
            l1_file_count=fresh.l1_file_count,
            l2_file_count=fresh.l2_file_count,
        )
        sched = warm_trajectory(structure, schema, workload, base, sim_config)
        return model.predict_schedule(schema, structure, sched)

    current_cost = cost_of(current)
    ranked = sorted(
        (Candidate(structure=s, predicted_cost_us=cost_of(s)) for s in candidates),
        key=lambda c: (c.predicted_cost_us, c.structure.describe()),
    )
    if not ranked:
        raise ValueError("no candidates to evaluate")
    best = ranked[0]
    improvement = (
        (current_cost - best.predicted_cost_us) / current_cost if current_cost > 0 else 0.0
    )
    if improvement > epsilon:
        decision, chosen = "apply", best
        reason = (
            f"predicted improvement {improvement:.1%} exceeds epsilon {epsilon:.1%}"
        )
    else:
        decision, chosen = "hold", None
        reason = (
            f"predicted improvement {improvement:.1%} does not exceed epsilon {epsilon:.1%}"
        )
    return Recommendation(
        current=Candidate(structure=current, predicted_cost_us=current_cost),
        candidates=tuple(ranked),
        chosen=chosen,
        epsilon=epsilon,
        improvement=improvement,
        decision=decision,
        reason=reason,
    )


def recommend(
    workload: Workload,
    schema: TableSchema,
    model,
    state: RuntimeState,
    current: StorageStructure,
    epsilon: float = DEFAULT_EPSILON,
    decay_alpha: float = 0.1,
    engines=ALL_ENGINES,
    sim_config: SimConfig | None = None,
) -> Recommendation:
    """Full pipeline: layout candidates -> structures -> ranked decision."""
    layouts = recommend_layouts(workload, schema, decay_alpha=decay_alpha)
    candidates = generate_candidates(layouts, engines=engines)
    return evaluate(
        candidates, workload, schema, model, state, current, epsilon, sim_config
    )
