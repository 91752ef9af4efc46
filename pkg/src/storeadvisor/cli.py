"""Command-line front end: bench, train, recommend, simulate, convert.

Exit codes: 0 success, 1 structured user-facing error, 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .advisor import DEFAULT_EPSILON, recommend
from .benchgen import BenchConfig, read_perf_dir, training_corpus, write_perf_files
from .converter import convert, load_manifest, load_partition
from .core import AdvisorError, EngineKind, StorageStructure
from .engine_sim import build_partition, predict_initial_state, run_workload
from .learner import CostModel
from .serde import (
    default_current_structure,
    layout_from_text,
    load_scenario,
    structure_to_dict,
)

_ENGINE_NAMES = [e.value for e in EngineKind]


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = BenchConfig(
        seed=args.seed, num_schemas=args.schemas, ops_per_schema=args.ops
    )
    records = training_corpus(cfg)
    paths = write_perf_files(records, args.out)
    print(f"wrote {len(records)} perf records to {len(paths)} files under {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    records = read_perf_dir(args.data)
    model = CostModel.train(records)
    model.save(args.out)
    print(
        f"trained {len(model.models)} per-engine/class models "
        f"on {len(records)} records -> {args.out} (version {model.model_version})"
    )
    return 0


def _scenario_structure(args: argparse.Namespace, spec) -> StorageStructure:
    structure = spec.current_structure or default_current_structure(spec.schema)
    if args.engine or args.layout:
        engine = EngineKind(args.engine) if args.engine else structure.engine
        layout = (
            layout_from_text(args.layout, spec.schema) if args.layout else structure.layout
        )
        structure = StorageStructure(engine=engine, layout=layout)
    return structure


def cmd_recommend(args: argparse.Namespace) -> int:
    spec = load_scenario(args.scenario)
    model = CostModel.load(args.model)
    current = spec.current_structure or default_current_structure(spec.schema)
    state = predict_initial_state(current, spec.schema, spec.initial_rows)
    rec = recommend(
        spec.workload, spec.schema, model, state, current, epsilon=args.epsilon
    )
    if args.json:
        payload = {
            "decision": rec.decision,
            "reason": rec.reason,
            "epsilon": rec.epsilon,
            "improvement": rec.improvement,
            "current": {
                "structure": structure_to_dict(rec.current.structure),
                "predicted_cost_us": rec.current.predicted_cost_us,
            },
            "candidates": [
                {
                    "structure": structure_to_dict(c.structure),
                    "predicted_cost_us": c.predicted_cost_us,
                }
                for c in rec.candidates
            ],
        }
        print(json.dumps(payload, indent=2))
        return 0
    print(f"current   {rec.current.structure.describe():<40} "
          f"{rec.current.predicted_cost_us:>16.1f} us")
    for i, c in enumerate(rec.candidates):
        marker = "->" if i == 0 else "  "
        print(f"{marker} #{i + 1:<5} {c.structure.describe():<40} "
              f"{c.predicted_cost_us:>16.1f} us")
    print(f"decision: {rec.decision} ({rec.reason})")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_scenario(args.scenario)
    structure = _scenario_structure(args, spec)
    seed = spec.seed if args.seed is None else args.seed
    part = build_partition(spec.schema, structure, spec.initial_rows, seed=seed)
    result = run_workload(part, spec.workload)
    if args.json:
        print(
            json.dumps(
                {
                    "structure": structure_to_dict(structure),
                    "seed": seed,
                    "total_us": result.total_us,
                    "op_count": result.op_count,
                    "surge_count": result.surge_count,
                }
            )
        )
        return 0
    print(f"structure {structure.describe()}")
    print(f"ops       {result.op_count}")
    print(f"surges    {result.surge_count}")
    print(f"total     {result.total_us:.1f} us")
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    part = load_partition(args.data_dir)
    schema = part.schema
    engine = EngineKind(args.engine) if args.engine else part.structure.engine
    layout = (
        layout_from_text(args.layout, schema) if args.layout else part.structure.layout
    )
    target = StorageStructure(engine=engine, layout=layout)
    if args.dry_run:
        print(
            f"would convert {part.structure.describe()} -> {target.describe()} "
            f"({len(part.keys)} rows)"
        )
        return 0
    convert(part, target, data_dir=args.data_dir)
    manifest = load_manifest(args.data_dir)
    print(
        f"converted to {target.describe()} "
        f"(generation {manifest.generation}, {manifest.data_file})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storeadvisor",
        description="Benchmark, learn, and recommend storage structures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="generate training data on the simulators")
    p.add_argument("--out", required=True, help="directory for perf NDJSON files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schemas", type=int, default=BenchConfig.num_schemas)
    p.add_argument("--ops", type=int, default=BenchConfig.ops_per_schema)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="fit the cost model from perf files")
    p.add_argument("--data", required=True, help="directory of perf NDJSON files")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recommend", help="rank structures for a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("simulate", help="measure a scenario on the simulator")
    p.add_argument("--scenario", required=True)
    p.add_argument("--engine", choices=_ENGINE_NAMES)
    p.add_argument("--layout", help="column groups, e.g. 'V1,V2|V3'")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("convert", help="rebuild a partition dir under a new structure")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--engine", choices=_ENGINE_NAMES)
    p.add_argument("--layout", help="column groups, e.g. 'V1,V2|V3'")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AdvisorError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - last-resort guard for the CLI
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
