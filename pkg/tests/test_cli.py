"""CLI surface tests: every subcommand end to end with the offline backend."""

import json
from pathlib import Path

from hintpipe.cli import main


def _write_config(tmp_path, **overrides):
    config = {
        "env_kind": "house",
        "scaffold": "react",
        "backend": {"kind": "rulebased"},
        "k": 3,
        "scorer": "lexical",
        "seed": 42,
        "count": 12,
        "split": "train",
        "parallelism": 2,
        "out_dir": str(tmp_path / "run"),
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_gen_tasks_zero_count_writes_empty_file(tmp_path, capsys):
    out = tmp_path / "tasks.json"
    assert main(["gen-tasks", "--count", "0", "--out", str(out)]) == 0
    assert json.loads(out.read_text()) == []


def test_rollout_extract_teach_dataset_verify_chain(tmp_path):
    tasks = tmp_path / "tasks.json"
    base = tmp_path / "base.jsonl"
    bank = tmp_path / "bank.json"
    teach = tmp_path / "teach.jsonl"
    distill = tmp_path / "distill.jsonl"

    assert main(["gen-tasks", "--count", "12", "--out", str(tasks)]) == 0
    assert main(["rollout", "--tasks", str(tasks), "--mode", "base", "--out", str(base)]) == 0
    assert main(["extract", "--failures", str(base), "--out", str(bank)]) == 0
    assert main(["bank", "--bank", str(bank)]) == 0
    assert main(
        ["teach", "--tasks", str(tasks), "--bank", str(bank), "-k", "3", "--out", str(teach)]
    ) == 0
    assert main(
        ["dataset", "--kind", "distill", "--in", str(teach), "--bank", str(bank), "--out", str(distill)]
    ) == 0
    assert Path(str(distill) + ".manifest.json").exists()
    assert main(["verify", "--dataset", str(distill), "--bank", str(bank)]) == 0


def test_rollout_rag_without_bank_errors(tmp_path):
    out = tmp_path / "x.jsonl"
    assert main(["rollout", "--count", "2", "--mode", "rag", "--out", str(out)]) == 2


def test_verify_detects_planted_violation(tmp_path):
    tasks = tmp_path / "tasks.json"
    base = tmp_path / "base.jsonl"
    bank = tmp_path / "bank.json"
    teach = tmp_path / "teach.jsonl"
    distill = tmp_path / "distill.jsonl"
    main(["gen-tasks", "--count", "8", "--out", str(tasks)])
    main(["rollout", "--tasks", str(tasks), "--mode", "base", "--out", str(base)])
    main(["extract", "--failures", str(base), "--out", str(bank)])
    main(["teach", "--tasks", str(tasks), "--bank", str(bank), "--out", str(teach)])
    main(["dataset", "--kind", "distill", "--in", str(teach), "--bank", str(bank), "--out", str(distill)])

    lines = distill.read_text().splitlines()
    record = json.loads(lines[0])
    hint = json.loads(bank.read_text())
    some_hint = next(
        h["text"] for hints in hint["partitions"].values() for h in hints
    )
    record["text"] += some_hint + "\n"
    lines[0] = json.dumps(record)
    distill.write_text("\n".join(lines) + "\n")

    assert main(["verify", "--dataset", str(distill), "--bank", str(bank)]) == 1


def test_report_writes_csv_table_and_figure(tmp_path, capsys):
    tasks = tmp_path / "tasks.json"
    base = tmp_path / "base.jsonl"
    main(["gen-tasks", "--count", "6", "--out", str(tasks)])
    main(["rollout", "--tasks", str(tasks), "--mode", "base", "--out", str(base)])
    csv = tmp_path / "report.csv"
    figure = tmp_path / "frontier.png"
    assert main(
        ["report", "--in", f"base={base}", "--out", str(csv), "--figure", str(figure)]
    ) == 0
    assert csv.read_text().startswith("method,scaffold,tokens_per_episode,success_or_score")
    assert figure.stat().st_size > 0
    assert "Tokens/Episode" in capsys.readouterr().out


def test_sweep_k_outputs_one_row_per_k(tmp_path, capsys):
    tasks = tmp_path / "tasks.json"
    base = tmp_path / "base.jsonl"
    bank = tmp_path / "bank.json"
    main(["gen-tasks", "--count", "6", "--out", str(tasks)])
    main(["rollout", "--tasks", str(tasks), "--mode", "base", "--out", str(base)])
    main(["extract", "--failures", str(base), "--out", str(bank)])
    out = tmp_path / "sweep.csv"
    assert main(
        ["sweep-k", "--tasks", str(tasks), "--bank", str(bank), "--ks", "1,3", "--out", str(out)]
    ) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3  # header + one row per k


def test_pipeline_runs_offline_and_exits_zero(tmp_path):
    config = _write_config(tmp_path)
    assert main(["pipeline", "--config", config]) == 0
    run = tmp_path / "run"
    for name in (
        "tasks.json",
        "base.jsonl",
        "bank.json",
        "teach.jsonl",
        "sft.jsonl",
        "distill.jsonl",
        "sft.purity.json",
        "distill.purity.json",
        "report.csv",
        "frontier.png",
        "run_manifest.json",
    ):
        assert (run / name).exists(), name
    manifest = json.loads((run / "run_manifest.json").read_text())
    assert [s["stage"] for s in manifest["stages"]] == [
        "A-base-rollouts",
        "B-hint-extraction",
        "C-teacher-rollouts",
        "D-datasets-and-report",
    ]
    assert manifest["problems"] == []


def test_pipeline_config_validation_reports_field_paths(tmp_path, capsys):
    config = _write_config(tmp_path, k="three")
    assert main(["pipeline", "--config", config]) == 2
    assert "k: must be an integer >= 0" in capsys.readouterr().err
