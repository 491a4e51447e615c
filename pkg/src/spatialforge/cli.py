"""forge: command-line front end for the scene/relation/QA/reward pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, qa, relations, scenes, service, sim, traces
from .rewards import PRESETS, score_completion


def _cmd_filter(args: argparse.Namespace) -> int:
    cfg = scenes.FilterConfig.from_json(args.config) if args.config else scenes.FilterConfig()
    scene_set = scenes.load_scenes(args.infile)
    out, report = scenes.filter_scenes(scene_set, cfg)
    scenes.save_scenes(out, args.out)
    print(f"scenes in: {report.scenes_in}")
    print(f"scenes out: {report.scenes_out}")
    print(f"clutter scenes removed: {report.clutter_scenes_removed}")
    print(f"excluded-category objects removed: {report.category_objects_removed}")
    print(f"boundary scenes removed: {report.boundary_scenes_removed}")
    return 0


def _cmd_mix(args: argparse.Namespace) -> int:
    verified = scenes.load_scenes(args.verified)
    unverified = scenes.load_scenes(args.unverified)
    mixed = scenes.mix_datasets(verified, unverified, args.fraction, args.seed)
    count = scenes.save_scenes(mixed, args.out)
    print(f"wrote {count} scenes ({len(verified)} verified + "
          f"{count - len(verified)} sampled unverified)")
    return 0


def _relation_config(path: str | None) -> relations.RelationConfig:
    if path is None:
        return relations.RelationConfig()
    return relations.RelationConfig(**json.loads(Path(path).read_text()))


def _cmd_relations(args: argparse.Namespace) -> int:
    cfg = _relation_config(args.config)
    scene_set = scenes.load_scenes(args.infile)
    pairs = []
    skipped = 0
    for scene in scene_set:
        result = relations.derive_all(scene, cfg)
        pairs.extend((scene.scene_id, fact) for fact in result.facts)
        skipped += len(result.skipped)
    count = relations.save_fact_table(pairs, cfg, args.out)
    print(f"wrote {count} facts from {len(scene_set)} scenes ({skipped} degenerate skips)")
    return 0


def _cmd_gen(args: argparse.Namespace) -> int:
    scene_set = scenes.load_scenes(args.scenes)
    cfg = _relation_config(args.config)
    facts_by_scene: dict[str, list[relations.RelationFact]] = {}
    if args.facts:
        pairs, cfg = relations.load_fact_table(args.facts)
        for scene_id, fact in pairs:
            facts_by_scene.setdefault(scene_id, []).append(fact)
    items: list[tuple[qa.QARecord, str | None]] = []
    for scene in scene_set:
        if args.variant == "basic3d":
            for record in qa.gen_basic3d(scene, args.seed):
                items.append((record, None))
            continue
        facts = facts_by_scene.get(scene.scene_id)
        if facts is None:
            facts = list(relations.derive_all(scene, cfg).facts)
        records = qa.gen_srqa(scene, facts, args.seed)
        if args.variant == "srqa":
            items.extend((record, None) for record in records)
        else:
            for record in records:
                upgraded, trace = qa.upgrade_to_cot(record, scene, cfg)
                items.append((upgraded, qa.render_record(upgraded, trace)))
    variant_key = {"basic3d": "basic3d", "srqa": "sr_qa", "srcot": "sr_cot"}[args.variant]
    limit = args.limit if args.limit is not None else qa.DEFAULT_CORPUS_SIZES[variant_key]
    if limit > 0:
        items = items[:limit]
    count = qa.save_records(items, args.out)
    print(f"wrote {count} {args.variant} records")
    return 0


def _cmd_reward(args: argparse.Namespace) -> int:
    records = {record.record_id: record for record, _ in qa.load_records(args.records)}
    weights = PRESETS[args.preset]
    n = 0
    with open(args.completions, "r", encoding="utf-8") as fh, \
            open(args.out, "w", encoding="utf-8") as out:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            record = records.get(raw["record_id"])
            if record is None:
                print(f"warning: unknown record_id {raw['record_id']!r}", file=sys.stderr)
                continue
            breakdown = score_completion(raw["completion"], record, weights)
            out.write(json.dumps({
                "record_id": record.record_id,
                "accuracy": breakdown.accuracy,
                "format": breakdown.format,
                "reasoning_steps": breakdown.reasoning_steps,
                "process_3d": breakdown.process_3d,
                "composite": breakdown.composite,
                "weights": {
                    "accuracy": weights.accuracy,
                    "format": weights.format,
                    "reasoning_steps": weights.reasoning_steps,
                    "process_3d": weights.process_3d,
                },
            }) + "\n")
            n += 1
    print(f"scored {n} completions with preset {args.preset}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    bank = tuple(record for record, _ in qa.load_records(args.bank))
    cfg = sim.SimConfig(
        bank=bank, group_size=args.group_size, steps=args.steps,
        learning_rate=args.learning_rate, reward_preset=args.preset,
        kl_weight=args.kl, seed=args.seed,
    )
    report = sim.run_simulation(cfg)
    Path(args.out).write_text(sim.report_to_tsv(report))
    print(f"final accuracy: {report.final_accuracy:.4f} "
          f"(steps={args.steps}, kl={args.kl}, seed={args.seed})")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    bench = evaluation.load_bench(args.bench)
    if args.predictions:
        predictions = evaluation.load_predictions(args.predictions)
        report = evaluation.score_predictions(bench, predictions, args.permutations)
    elif args.adapter:
        adapter = evaluation.command_adapter(args.adapter)
        record_to = Path(args.out) / "predictions.jsonl" if args.record else None
        if record_to:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        report = evaluation.run_eval(bench, adapter, args.permutations, record_to=record_to)
    else:
        print("error: provide --adapter or --predictions", file=sys.stderr)
        return 2
    evaluation.emit_report(report, args.out)
    print(f"overall accuracy: {report.overall_accuracy:.4f} over {len(report.outcomes)} questions")
    for category, (count, accuracy) in sorted(report.per_category.items()):
        print(f"  {category}: {accuracy:.4f} (n={count})")
    return 0


def _cmd_baseline_2d(args: argparse.Namespace) -> int:
    bench = evaluation.load_bench(args.bench)
    report = evaluation.run_baseline_2d(bench)
    evaluation.emit_report(report, args.out)
    print(f"2D bbox-center heuristic accuracy: {report.overall_accuracy:.4f} "
          f"over {len(report.outcomes)} questions")
    return 0


def _cmd_verify_traces(args: argparse.Namespace) -> int:
    scene_set = scenes.load_scenes(args.scenes)
    items = qa.load_records(args.traces)
    thresholds = traces.AttributionThresholds(consistency_tol=args.tol)
    attributions = []
    total_violations = 0
    checked = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for record, trace_text in items:
            if trace_text is None:
                continue
            parsed = traces.parse_trace(trace_text)
            report = traces.check_consistency(parsed, tol=args.tol)
            checked += report.checked_claims
            total_violations += len(report.violations)
            try:
                scene = scene_set.get(record.scene_id)
            except KeyError:
                continue
            attribution = traces.attribute_failure(parsed, scene, record, thresholds)
            attributions.append(attribution)
            out.write(json.dumps({
                "record_id": record.record_id,
                "outcome": attribution.outcome,
                "checked_claims": report.checked_claims,
                "violations": len(report.violations),
            }) + "\n")
        if attributions:
            metrics = traces.failure_metrics(attributions)
            out.write("# " + json.dumps({
                "total": metrics.total,
                "outcome_counts": metrics.outcome_counts,
                "orientation_accuracy": metrics.orientation_accuracy,
                "location_mean_error_m": metrics.location_mean_error_m,
                "angle_accuracy": metrics.angle_accuracy,
                "distance_mean_error_m": metrics.distance_mean_error_m,
                "depth_mean_error_m": metrics.depth_mean_error_m,
            }) + "\n")
            print(traces.metrics_table(metrics))
    print(f"checked {checked} claims, {total_violations} violations at tol {args.tol}")
    return 0 if total_violations == 0 else 1


def _cmd_serve(args: argparse.Namespace) -> int:
    scene_set = scenes.load_scenes(args.scenes)
    pairs = []
    if args.facts:
        pairs, _ = relations.load_fact_table(args.facts)
    queue = service.ReviewQueue(
        scene_set, pairs, verdict_log=args.verdict_log,
        lease_seconds=args.lease_seconds,
    )
    server = service.VerifyServer(
        queue, port=args.port, media_root=args.media_root, static_dir=args.static_dir,
    )
    stats = queue.stats()
    print(f"serving on http://127.0.0.1:{server.port} "
          f"({stats['pending']} items pending, log: {args.verdict_log})",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="filter scenes by clutter/category/boundary rules")
    p.add_argument("--config", default=None)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("mix", help="mix verified with sampled unverified scenes")
    p.add_argument("--verified", required=True)
    p.add_argument("--unverified", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mix)

    p = sub.add_parser("relations", help="derive relation facts from scenes")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_relations)

    p = sub.add_parser("gen", help="generate training QA records")
    p.add_argument("--variant", choices=("basic3d", "srqa", "srcot"), required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--facts", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None,
                   help="record cap; defaults to the per-variant corpus size, 0 = unlimited")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("reward", help="score completions against records")
    p.add_argument("--records", required=True)
    p.add_argument("--completions", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="final")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reward)

    p = sub.add_parser("simulate", help="run the toy GRPO training loop")
    p.add_argument("--bank", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default="final")
    p.add_argument("--kl", type=float, default=0.0)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--group-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("eval", help="evaluate an adapter or recorded predictions")
    p.add_argument("--bench", required=True)
    p.add_argument("--adapter", default=None, help="shell command: prompt on stdin")
    p.add_argument("--predictions", default=None)
    p.add_argument("--permutations", type=int, default=2)
    p.add_argument("--record", action="store_true", help="record completions for re-scoring")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline-2d", help="run the bbox-center shortcut heuristic")
    p.add_argument("--bench", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline_2d)

    p = sub.add_parser("verify-traces", help="consistency-check and attribute traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--scenes", required=True)
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_verify_traces)

    p = sub.add_parser("serve", help="run the human-verification service")
    p.add_argument("--scenes", required=True)
    p.add_argument("--facts", default=None)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--verdict-log", required=True)
    p.add_argument("--lease-seconds", type=float, default=600.0)
    p.add_argument("--media-root", default=None)
    p.add_argument("--static-dir", default=None)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
