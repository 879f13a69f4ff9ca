"""Subcommand front-end wiring the pipeline stages.

`pipeline` chains the four stages over one JSON config and exits nonzero
unless every stage invariant (bank validity, purity, budgets, one-shot
retrieval) verifies.  Individual subcommands map one-to-one onto module
entry points for piecemeal runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

from . import dataset as datasetmod
from . import report as reportmod
from .agents import few_shot_for, scaffold_for
from .config import ConfigError, PipelineConfig, load_config
from .envs.types import HOUSE, SHOP, TaskSpec, max_steps_for
from .envs.tasks import generate_tasks
from .hints import build_bank, load_bank, save_bank, validate_bank
from .llm.backends import Backend, HttpBackend
from .llm.rules import offline_backend
from .retrieval import Scorer
from .rollout import (
    PolicyConfig,
    failure_records,
    load_trajectories,
    run_split,
    save_trajectories,
)

logger = logging.getLogger(__name__)

SCAFFOLD_CHOICES = ("react", "stateact", "act")


def _make_backend(kind: str, endpoint: str = "", model: str = "", api_key_env: str = "HINTPIPE_API_KEY") -> Backend:
    if kind == "rulebased":
        return offline_backend()
    if kind == "http":
        return HttpBackend(endpoint=endpoint, model=model, api_key_env=api_key_env)
    raise ValueError(f"backend kind {kind!r} is not available from the CLI")


def _make_scorer(kind: str, backend: Backend) -> Scorer:
    if kind == "lexical":
        return Scorer(kind="lexical")
    return Scorer(kind="llm_rerank", backend=backend)


def _policy(args, backend: Backend, mode: str) -> PolicyConfig:
    scorer = _make_scorer(getattr(args, "scorer", "lexical"), backend) if mode == "rag" else None
    return PolicyConfig(
        mode=mode,
        scaffold=scaffold_for(args.scaffold, args.env),
        backend=backend,
        k=getattr(args, "k", 3),
        scorer=scorer,
        charge_block=getattr(args, "charge_block", "per_step"),
    )


def _load_tasks(path: str) -> list[TaskSpec]:
    with open(path, encoding="utf-8") as fh:
        return [TaskSpec.from_dict(d) for d in json.load(fh)]


def _save_tasks(tasks: list[TaskSpec], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in tasks], fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_tasks(args) -> list[TaskSpec]:
    if getattr(args, "tasks", None):
        return _load_tasks(args.tasks)
    return generate_tasks(args.env, args.split, args.count, args.seed)


def few_shot_assets_for(env_kinds: set[str]) -> list[str]:
    assets = []
    for env_kind in sorted(env_kinds):
        for scaffold_kind in SCAFFOLD_CHOICES:
            assets.append(few_shot_for(env_kind, scaffold_kind))
    return assets


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen_tasks(args) -> int:
    tasks = generate_tasks(args.env, args.split, args.count, args.seed)
    _save_tasks(tasks, args.out)
    print(f"wrote {len(tasks)} tasks to {args.out}")
    return 0


def cmd_rollout(args) -> int:
    backend = _make_backend(args.backend, args.endpoint, args.model)
    bank = load_bank(args.bank) if args.bank else None
    mode = args.mode
    if mode == "rag" and bank is None:
        print("error: --mode rag requires --bank", file=sys.stderr)
        return 2
    tasks = _resolve_tasks(args)
    policy = _policy(args, backend, mode)
    trajectories = run_split(tasks, policy, bank=bank, parallelism=args.parallelism)
    save_trajectories(trajectories, args.out)
    successes = sum(t.outcome.success for t in trajectories)
    print(f"wrote {len(trajectories)} trajectories to {args.out} ({successes} successes)")
    return 0


def cmd_extract(args) -> int:
    trajectories = load_trajectories(args.failures)
    failures = failure_records(trajectories)
    env_kinds = {t.task.env_kind for t in trajectories}
    if len(env_kinds) != 1:
        print("error: transcript file mixes environments", file=sys.stderr)
        return 2
    backend = _make_backend(args.backend, args.endpoint, args.model)
    bank = build_bank(failures, backend, env_kinds.pop())
    save_bank(bank, args.out)
    print(f"extracted {bank.size()} hints from {len(failures)} failures into {args.out}")
    return 0


def cmd_bank(args) -> int:
    try:
        bank = load_bank(args.bank)
    except (ValueError, OSError) as exc:
        print(f"bank invalid: {exc}", file=sys.stderr)
        return 1
    validate_bank(bank)
    print(f"bank {args.bank}: env={bank.env_kind} hints={bank.size()}")
    for category in sorted(bank.partitions):
        for hint in bank.partitions[category]:
            print(f"  [{category}] {hint.text}")
    return 0


def cmd_teach(args) -> int:
    args.mode = "rag"
    return cmd_rollout(args)


def cmd_dataset(args) -> int:
    trajectories = load_trajectories(args.input)
    bank = load_bank(args.bank) if args.bank else None
    manifest = datasetmod.build_dataset(
        trajectories, args.kind, datasetmod.FilterPolicy(), args.out, bank=bank
    )
    manifest_path = args.out + ".manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"wrote {manifest.counts['serialized']} examples to {args.out} "
        f"(kept {manifest.counts['kept']}/{manifest.counts['input']})"
    )
    return 0


def cmd_verify(args) -> int:
    bank = load_bank(args.bank) if args.bank else None
    examples = datasetmod.load_examples(args.dataset)
    env_kinds = {e.meta["env_kind"] for e in examples} or {HOUSE, SHOP}
    report = datasetmod.verify_purity(args.dataset, bank, few_shot_assets_for(env_kinds))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    if report.clean:
        print(f"purity ok: {report.scanned} examples, no violations")
        return 0
    for violation in report.violations:
        print(
            f"violation in example {violation['example']} ({violation['task_id']}): "
            f"{violation['kind']}: {violation['detail'][:60]!r}",
            file=sys.stderr,
        )
    return 1


def cmd_report(args) -> int:
    rows = []
    for item in args.inputs:
        label, _, path = item.partition("=")
        if not path:
            print(f"error: --in expects label=path, got {item!r}", file=sys.stderr)
            return 2
        if label not in reportmod.METHODS:
            print(
                f"error: unknown method label {label!r}; choose from {', '.join(reportmod.METHODS)}",
                file=sys.stderr,
            )
            return 2
        trajectories = load_trajectories(path)
        rows.append(reportmod.aggregate(trajectories, label))
    reportmod.export_frontier(rows, args.out)
    print(reportmod.render_table(rows))
    if args.figure:
        from .figures import render_frontier

        render_frontier(rows, args.figure)
        print(f"figure written to {args.figure}")
    return 0


def cmd_sweep_k(args) -> int:
    backend = _make_backend(args.backend, args.endpoint, args.model)
    bank = load_bank(args.bank)
    tasks = _resolve_tasks(args)
    policy = _policy(args, backend, "rag")
    ks = [int(k) for k in args.ks.split(",")]
    rows = reportmod.k_sweep(tasks, ks, policy, bank, parallelism=args.parallelism)
    lines = ["k,success_rate,mean_score,tokens_per_episode,steps_per_episode"]
    for k, row in rows:
        score = "" if row.mean_score is None else f"{row.mean_score:.4f}"
        lines.append(
            f"{k},{row.success_rate:.4f},{score},{row.tokens_per_episode:.4f},{row.steps_per_episode:.4f}"
        )
    content = "\n".join(lines) + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(content)
    print(content, end="")
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _run_pipeline(config: PipelineConfig) -> int:
    os.makedirs(config.out_dir, exist_ok=True)
    backend = _make_backend(
        config.backend.kind, config.backend.endpoint, config.backend.model, config.backend.api_key_env
    )
    scaffold = scaffold_for(config.scaffold, config.env_kind)
    stages: list[dict] = []

    def record(stage: str, inputs: list[str], outputs: list[str], started: float) -> None:
        stages.append(
            {
                "stage": stage,
                "inputs": {os.path.basename(p): _sha256_file(p) for p in inputs},
                "outputs": {os.path.basename(p): _sha256_file(p) for p in outputs},
                "seconds": round(time.perf_counter() - started, 3),
            }
        )

    # Stage A: base rollouts over the training split.
    t0 = time.perf_counter()
    tasks = generate_tasks(config.env_kind, config.split, config.count, config.seed)
    tasks_path = config.path("tasks.json")
    _save_tasks(tasks, tasks_path)
    base_policy = PolicyConfig(
        mode="base", scaffold=scaffold, backend=backend, charge_block=config.charge_block
    )
    base_trajectories = run_split(tasks, base_policy, parallelism=config.parallelism)
    base_path = config.path("base.jsonl")
    save_trajectories(base_trajectories, base_path)
    record("A-base-rollouts", [], [tasks_path, base_path], t0)

    # Stage B: hint extraction from failures.
    t0 = time.perf_counter()
    failures = failure_records(base_trajectories)
    bank = build_bank(failures, backend, config.env_kind)
    bank_path = config.path("bank.json")
    save_bank(bank, bank_path)
    record("B-hint-extraction", [base_path], [bank_path], t0)

    # Stage C: retrieval-augmented teacher rollouts.
    t0 = time.perf_counter()
    rag_policy = PolicyConfig(
        mode="rag",
        scaffold=scaffold,
        backend=backend,
        k=config.k,
        scorer=_make_scorer(config.scorer, backend),
        charge_block=config.charge_block,
    )
    rag_trajectories = run_split(tasks, rag_policy, bank=bank, parallelism=config.parallelism)
    teach_path = config.path("teach.jsonl")
    save_trajectories(rag_trajectories, teach_path)
    record("C-teacher-rollouts", [tasks_path, bank_path], [teach_path], t0)

    # Stage D: datasets, purity, report.
    t0 = time.perf_counter()
    outputs = []
    problems: list[str] = []
    for kind, source in (("sft", base_trajectories), ("distill", rag_trajectories)):
        out_path = config.path(f"{kind}.jsonl")
        manifest = datasetmod.build_dataset(source, kind, config.filter_policy, out_path, bank=bank)
        manifest_path = out_path + ".manifest.json"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        purity = datasetmod.verify_purity(
            out_path, bank, few_shot_assets_for({config.env_kind})
        )
        purity_path = config.path(f"{kind}.purity.json")
        with open(purity_path, "w", encoding="utf-8") as fh:
            json.dump(purity.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if not purity.clean:
            problems.append(f"{kind} dataset failed purity with {len(purity.violations)} violations")
        outputs += [out_path, manifest_path, purity_path]

    rows = [
        reportmod.aggregate(base_trajectories, "base"),
        reportmod.aggregate(rag_trajectories, "rag"),
    ]
    report_path = config.path("report.csv")
    reportmod.export_frontier(rows, report_path)
    figure_path = config.path("frontier.png")
    from .figures import render_frontier

    render_frontier(rows, figure_path)
    outputs += [report_path, figure_path]
    record("D-datasets-and-report", [base_path, teach_path, bank_path], outputs, t0)

    # Stage invariants gate the exit code.
    try:
        validate_bank(load_bank(bank_path))
    except ValueError as exc:
        problems.append(f"bank failed re-validation: {exc}")
    cap = max_steps_for(config.env_kind)
    for trajectory in base_trajectories + rag_trajectories:
        if trajectory.outcome.steps_used > cap:
            problems.append(f"{trajectory.task.id} exceeded the step cap")
    for trajectory in rag_trajectories:
        if trajectory.retrieval_invocations != 1:
            problems.append(f"{trajectory.task.id} invoked retrieval {trajectory.retrieval_invocations} times")

    manifest_path = config.path("run_manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({"stages": stages, "problems": problems}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(reportmod.render_table(rows))
    if problems:
        for problem in problems:
            print(f"pipeline problem: {problem}", file=sys.stderr)
        return 1
    print(f"pipeline complete; artifacts in {config.out_dir}")
    return 0


def cmd_pipeline(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return _run_pipeline(config)


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_env_args(p: argparse.ArgumentParser, with_mode: bool = False) -> None:
    p.add_argument("--env", choices=(HOUSE, SHOP), default=HOUSE)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--count", type=int, default=60)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tasks", help="task file; overrides --env/--split/--count/--seed")
    p.add_argument("--scaffold", choices=SCAFFOLD_CHOICES, default="react")
    p.add_argument("--backend", choices=("rulebased", "http"), default="rulebased")
    p.add_argument("--endpoint", default="")
    p.add_argument("--model", default="")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--charge-block", dest="charge_block", choices=("per_step", "once"), default="per_step")
    if with_mode:
        p.add_argument("--mode", choices=("base", "rag"), default="base")
    p.add_argument("--bank")
    p.add_argument("-k", type=int, default=3)
    p.add_argument("--scorer", choices=("lexical", "rerank"), default="lexical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hintpipe", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tasks", help="generate a seeded task file")
    p.add_argument("--env", choices=(HOUSE, SHOP), default=HOUSE)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_tasks)

    p = sub.add_parser("rollout", help="run base or rag episodes")
    _add_env_args(p, with_mode=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("extract", help="extract a hint bank from failures")
    p.add_argument("--failures", required=True)
    p.add_argument("--backend", choices=("rulebased", "http"), default="rulebased")
    p.add_argument("--endpoint", default="")
    p.add_argument("--model", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("bank", help="validate and inspect a hint bank")
    p.add_argument("--bank", required=True)
    p.set_defaults(func=cmd_bank)

    p = sub.add_parser("teach", help="run the retrieval-augmented teacher")
    _add_env_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("dataset", help="build a training dataset from transcripts")
    p.add_argument("--kind", choices=("sft", "distill"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--bank")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("verify", help="scan a dataset for hint/few-shot leakage")
    p.add_argument("--dataset", required=True)
    p.add_argument("--bank")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="aggregate transcripts into metric rows")
    p.add_argument("--in", dest="inputs", action="append", required=True, metavar="LABEL=PATH")
    p.add_argument("--out", required=True)
    p.add_argument("--figure")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep-k", help="sweep retrieval depth k")
    _add_env_args(p)
    p.add_argument("--ks", default="1,3,6,9")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("pipeline", help="run stages A-D from one config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
