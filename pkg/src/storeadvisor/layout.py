"""Candidate data-layout generation.

Read queries are pruned to weighted representatives, value columns become
vectors of the query weights that touch them, and agglomerative clustering
(Euclidean, average linkage) turns co-access structure into column groups.
Every dendrogram level from one group down to DSM is emitted, so the
evaluation stage chooses the granularity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DataLayout,
    EmptyWorkload,
    OpType,
    TableSchema,
    Workload,
    canonical_layout,
    dsm_layout,
    nsm_layout,
)

DEFAULT_DECAY_ALPHA = 0.1
WEIGHT_FLOOR_FRAC = 0.01


@dataclass(frozen=True)
class RepresentativeQuery:
    columns: frozenset[str]
    weight: float


def prune(
    workload: Workload,
    schema: TableSchema,
    decay_alpha: float = DEFAULT_DECAY_ALPHA,
    floor_frac: float = WEIGHT_FLOOR_FRAC,
    cost_fn=None,
) -> list[RepresentativeQuery]:
    """Collapse read ops with identical column sets into weighted
    representatives.

    weight = sum over ops of (1-alpha)^age * frequency * cost proxy; the
    proxy is bytes-accessed (rows x touched bytes incl. keys) unless a
    model-backed cost_fn(op) is supplied.  Representatives below
    floor_frac of the total weight are dropped.  Inserts never shape
    layout.
    """
    if not 0.0 <= decay_alpha < 1.0:
        raise EmptyWorkload(f"decay_alpha {decay_alpha} outside [0, 1)")
    all_values = frozenset(f.name for f in schema.value_fields)
    weights: dict[frozenset, float] = {}
    for op in workload.ops:
        if op.op_type is OpType.INSERT:
            continue
        cols = op.columns or all_values
        if cost_fn is not None:
            proxy = float(cost_fn(op))
        else:
            touched = schema.key_bytes + sum(
                schema.field_by_name(c).avg_length_bytes for c in cols
            )
            proxy = max(op.result_rows, 1) * touched
        w = (1.0 - decay_alpha) ** op.age * op.frequency * proxy
        weights[cols] = weights.get(cols, 0.0) + w
    if not weights:
        raise EmptyWorkload("workload contains no read operations")
    total = sum(weights.values())
    reps = [
        RepresentativeQuery(columns=cols, weight=w)
        for cols, w in weights.items()
        if w >= floor_frac * total
    ]
    reps.sort(key=lambda r: (-r.weight, tuple(sorted(r.columns))))
    return reps


def vectorize(schema: TableSchema, reps) -> tuple[list[str], np.ndarray]:
    """Column vectors: coordinate j of column i is the weight of
    representative j if it touches column i, else 0."""
    names = [f.name for f in schema.value_fields]
    mat = np.zeros((len(names), len(reps)), dtype=np.float64)
    for j, rep in enumerate(reps):
        for i, name in enumerate(names):
            if name in rep.columns:
                mat[i, j] = rep.weight
    return names, mat


@dataclass(frozen=True)
class Merge:
    a: int          # cluster ids being merged
    b: int
    new: int
    distance: float


@dataclass(frozen=True)
class Dendrogram:
    leaves: tuple[str, ...]
    merges: tuple[Merge, ...]

    def partition_after(self, n_merges: int) -> list[tuple[str, ...]]:
        members: dict[int, list[str]] = {i: [name] for i, name in enumerate(self.leaves)}
        for m in self.merges[:n_merges]:
            members[m.new] = members.pop(m.a) + members.pop(m.b)
        return [tuple(v) for v in members.values()]


def cluster(names, vectors: np.ndarray) -> Dendrogram:
    """Agglomerative clustering, Euclidean metric, average linkage.

    Distance ties break on the lexicographically smallest column name in
    each cluster, so the merge sequence is deterministic.  Average linkage
    is monotone: merge distances never decrease.
    """
    n = len(names)
    if n == 0:
        raise EmptyWorkload("no columns to cluster")
    vectors = np.asarray(vectors, dtype=np.float64)
    dist: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in range(i + 1, n):
            dist[(i, j)] = float(np.linalg.norm(vectors[i] - vectors[j]))
    size = {i: 1 for i in range(n)}
    tag = {i: names[i] for i in range(n)}    # smallest member name
    active = set(range(n))
    merges: list[Merge] = []
    next_id = n
    while len(active) > 1:
        best_pair = None
        best_d = math.inf
        best_tag = None
        for (i, j), d in dist.items():
            t = tuple(sorted((tag[i], tag[j])))
            if best_pair is None:
                best_d, best_pair, best_tag = d, (i, j), t
                continue
            tol = 1e-9 * max(abs(d), abs(best_d), 1.0)
            if d < best_d - tol or (abs(d - best_d) <= tol and t < best_tag):
                best_d, best_pair, best_tag = d, (i, j), t
        a, b = best_pair
        new = next_id
        next_id += 1
        merges.append(Merge(a=a, b=b, new=new, distance=best_d))
        # Lance-Williams update for average linkage
        for k in list(active):
            if k in (a, b):
                continue
            dak = dist.pop((min(a, k), max(a, k)))
            dbk = dist.pop((min(b, k), max(b, k)))
            dist[(min(new, k), max(new, k))] = (size[a] * dak + size[b] * dbk) / (
                size[a] + size[b]
            )
        del dist[(min(a, b), max(a, b))]
        size[new] = size.pop(a) + size.pop(b)
        tag[new] = min(tag.pop(a), tag.pop(b))
        active.discard(a)
        active.discard(b)
        active.add(new)
    return Dendrogram(leaves=tuple(names), merges=tuple(merges))


def recommend_layouts(
    workload: Workload,
    schema: TableSchema,
    decay_alpha: float = DEFAULT_DECAY_ALPHA,
    floor_frac: float = WEIGHT_FLOOR_FRAC,
    cost_fn=None,
) -> list[DataLayout]:
    """Candidate layouts from co-access clustering, coarsest (NSM) first.

    Zero-distance merges (identical column vectors) collapse into a single
    level step; NSM and DSM are always present.  Workloads with no reads
    fall back to [NSM, DSM].
    """
    nsm = canonical_layout(schema, nsm_layout(schema).groups)
    dsm = canonical_layout(schema, dsm_layout(schema).groups)
    try:
        reps = prune(workload, schema, decay_alpha, floor_frac, cost_fn)
    except EmptyWorkload:
        return [nsm] if nsm == dsm else [nsm, dsm]
    names, vectors = vectorize(schema, reps)
    if len(names) == 1:
        return [nsm]
    dend = cluster(names, vectors)
    zeros = 0
    for m in dend.merges:
        if m.distance <= 1e-12:
            zeros += 1
        else:
            break
    levels = [len(dend.merges)]                      # NSM
    levels.extend(range(len(dend.merges) - 1, zeros - 1, -1))
    if zeros > 0:
        levels.append(0)                             # DSM below the collapse
    out: list[DataLayout] = []
    seen = set()
    for m in levels:
        layout = canonical_layout(schema, dend.partition_after(m))
        if layout not in seen:
            seen.add(layout)
            out.append(layout)
    for required in (nsm, dsm):
        if required not in seen:
            out.append(required)
            seen.add(required)
    return out


def recommend_layouts_query_oriented(
    workload: Workload,
    schema: TableSchema,
    decay_alpha: float = DEFAULT_DECAY_ALPHA,
    floor_frac: float = WEIGHT_FLOOR_FRAC,
    cost_fn=None,
) -> list[DataLayout]:
    """Greedy query-grouping baseline, one layout per primary query.

    The primary query's columns form the first group.  Each further query
    (in weight order) claims a group only while its column set is still
    fully unclaimed; columns left over at the end join the last non-primary
    group, or form one themselves.  Partial overlaps never split off
    single-column fragments, which keeps these layouts coarse on purpose —
    it's the comparison baseline, not the clustering path.
    """
    reps = prune(workload, schema, decay_alpha, floor_frac, cost_fn)
    all_values = frozenset(f.name for f in schema.value_fields)
    out: list[DataLayout] = []
    seen = set()
    for primary in range(len(reps)):
        order = [reps[primary]] + [r for i, r in enumerate(reps) if i != primary]
        remaining = set(all_values) - order[0].columns
        groups: list[set] = [set(order[0].columns)]
        for q in order[1:]:
            if q.columns and q.columns <= remaining:
                groups.append(set(q.columns))
                remaining -= q.columns
        if remaining:
            if len(groups) > 1:
                groups[-1] |= remaining
            else:
                groups.append(set(remaining))
        layout = canonical_layout(schema, [tuple(g) for g in groups])
        if layout not in seen:
            seen.add(layout)
            out.append(layout)
    return out
