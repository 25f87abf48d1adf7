"""Command line: ``mixmas {sample,search,train,report,gen-synth}``.

Exit codes: 0 success, 1 validation error, 2 search/stage failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import defaultdict
from pathlib import Path

from . import __version__
from .data import SyntheticSpec, generate_synthetic, load_dataset, load_manifest
from .errors import DataIOError, MixmasError, ValidationError
from .sampling import DEFAULT_EPSILON, DEFAULT_P_HAT, DEFAULT_Z, validated_sample
from .search import Ledger, SearchConfig, full_train, load_spec, run_search
from .synthetic import bundled_spec
from .training import TrainConfig

DEFAULT_LEDGER = "mixmas_ledger.jsonl"
STAGE_TITLES = {"encoder": "Encoder Selection", "fusion_function": "Fusion Function Selection",
                "fusion_network": "Fusion Network Selection"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _ledger_path(arg: str | None) -> str:
    return arg or os.environ.get("MIXMAS_LEDGER") or DEFAULT_LEDGER


def _emit(obj):
    print(json.dumps(obj, indent=2))


def cmd_sample(args) -> int:
    dataset = load_dataset(load_manifest(args.manifest))
    task = dataset.manifest.task
    plan = validated_sample(dataset.labels, args.z, args.p_hat, args.epsilon, args.seed,
                            args.max_attempts,
                            num_classes=dataset.manifest.num_classes if task == "multiclass" else None)
    if args.out:
        try:
            plan.save(args.out)
        except OSError as exc:
            raise DataIOError(f"cannot write {args.out}: {exc}") from exc
    if args.json:
        _emit({"N": plan.N, "n": plan.n, "N_prime": plan.N_prime, "seed": plan.seed,
               "distance": plan.distance, "attempts": plan.attempts})
    else:
        print(f"N  = {plan.N}")
        print(f"n  = {plan.n:.4f}")
        print(f"N' = {plan.N_prime}  ({100 * plan.N_prime / plan.N:.1f}% of the dataset)")
        print(f"accepted seed {plan.seed} after {plan.attempts} attempt(s), "
              f"L-inf distance {plan.distance:.4f}")
    return 0


def _stage_rows(result):
    rows = []
    for name, res in result.stages["encoder"].items():
        rows.append((f"Encoder Selection [{name}]", res))
    rows.append(("Fusion Function Selection", result.stages["fusion_function"]))
    rows.append(("Fusion Network Selection", result.stages["fusion_network"]))
    return rows


def cmd_search(args) -> int:
    cfg = SearchConfig.load(args.config)
    dataset = load_dataset(load_manifest(args.manifest))
    ledger = Ledger(_ledger_path(args.ledger))
    result = run_search(dataset, cfg, ledger, out=args.out)
    metric = result.spec["metric"]
    if args.json:
        _emit({"spec": result.spec, "trainings": result.stats.trainings,
               "param_updates": result.stats.param_updates,
               "cache_hits": result.stats.cache_hits})
        return 0
    plan = result.plan
    print(f"Sampling: {plan.N_prime}/{plan.N} ({100 * plan.N_prime / plan.N:.1f}%)")
    for title, res in _stage_rows(result):
        print()
        print(title)
        print(f"  {'Module':<16} Score {metric} (%)")
        if res.fixed:
            print(f"* {res.choice:<16} (fixed)")
            continue
        for rec in res.records:
            mark = "*" if rec.key == res.winner else " "
            note = "  diverged" if rec.diverged else ""
            print(f"{mark} {rec.module:<16} {100 * rec.score:6.2f}{note}")
    print()
    print(f"{result.stats.trainings} trainings, {result.stats.cache_hits} cached, "
          f"{result.stats.param_updates} parameter updates")
    if args.out:
        print(f"architecture written to {args.out}")
    return 0


def cmd_train(args) -> int:
    spec = load_spec(args.arch)
    dataset = load_dataset(load_manifest(args.manifest))
    ledger_path = _ledger_path(args.ledger)
    if not Path(ledger_path).exists():
        raise ValidationError(f"ledger {ledger_path} not found; provenance cannot be checked")
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                      scheduler=True)
    _, report, result = full_train(spec, dataset, cfg, Ledger(ledger_path))
    if args.json:
        _emit({"metric": report.metric, "score": report.score, "n": report.n,
               "epochs": args.epochs, "final_lr": result.lrs[-1] if result.lrs else args.lr})
    else:
        print(f"trained {args.epochs} epochs ({result.steps} steps)")
        print(f"test {report.metric}: {report.score:.4f} on {report.n} samples")
    return 0


def cmd_report(args) -> int:
    path = _ledger_path(args.ledger)
    ledger = Ledger(path)
    groups = defaultdict(list)
    for rec in ledger.records.values():
        groups[rec.stage].append(rec)
    if args.json:
        _emit({"records": len(ledger),
               "stages": {stage: [{"key": r.key, "module": r.module, "score": r.score,
                                   "metric": r.metric, "diverged": r.diverged}
                                  for r in recs] for stage, recs in groups.items()}})
        return 0
    print(f"{len(ledger)} records in {path}")
    for stage, recs in groups.items():
        print()
        print(STAGE_TITLES.get(stage, stage))
        for r in recs:
            where = r.config.get("modality", "")
            print(f"  {r.key[:12]}  {r.module:<16} {where:<10} {100 * r.score:6.2f}  {r.metric}"
                  + ("  diverged" if r.diverged else ""))
    return 0


def cmd_gen_synth(args) -> int:
    if args.spec:
        try:
            data = json.loads(Path(args.spec).read_text())
        except FileNotFoundError as exc:
            raise DataIOError(f"synthetic spec {args.spec} not found") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"synthetic spec {args.spec} is not valid JSON") from exc
        try:
            spec = SyntheticSpec.from_dict(data)
        except TypeError as exc:
            raise ValidationError(f"synthetic spec: {exc}") from None
    else:
        spec = bundled_spec()
    manifest = generate_synthetic(spec, args.out_dir)
    print(f"wrote {spec.num_samples} samples, {len(manifest.modalities)} modalities "
          f"to {Path(args.out_dir) / 'manifest.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mixmas", description="Sampling-based mixer architecture search")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sample", help="compute and draw a validated sample")
    s.add_argument("--manifest", required=True)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--z", type=float, default=DEFAULT_Z)
    s.add_argument("--p-hat", type=float, default=DEFAULT_P_HAT)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-attempts", type=int, default=32)
    s.add_argument("--out")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("search", help="run the four-stage search")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--ledger")
    s.add_argument("--out", required=True)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("train", help="fully train a searched architecture")
    s.add_argument("--manifest", required=True)
    s.add_argument("--arch", required=True)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--ledger")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("report", help="show ledger records grouped by stage")
    s.add_argument("--ledger")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("gen-synth", help="write a planted-signal synthetic dataset")
    s.add_argument("--spec", help="SyntheticSpec JSON (default: the bundled bimodal spec)")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_gen_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MixmasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
