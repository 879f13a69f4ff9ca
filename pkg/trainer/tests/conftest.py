import json
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def pilot_artifacts(tmp_path_factory):
    """Produce the upstream pilot artifacts through the pipeline CLI, the
    external interface this package consumes."""
    root = tmp_path_factory.mktemp("pipeline")
    out_dir = root / "run"
    config = {
        "env_kind": "house",
        "scaffold": "react",
        "backend": {"kind": "rulebased"},
        "k": 3,
        "scorer": "lexical",
        "seed": 42,
        "count": 60,
        "split": "train",
        "out_dir": str(out_dir),
    }
    config_path = root / "pilot.json"
    config_path.write_text(json.dumps(config))
    subprocess.run(
        [sys.executable, "-m", "hintpipe.cli", "pipeline", "--config", str(config_path)],
        check=True,
        capture_output=True,
    )
    return {
        "distill": str(out_dir / "distill.jsonl"),
        "distill_purity": str(out_dir / "distill.purity.json"),
        "sft": str(out_dir / "sft.jsonl"),
        "sft_purity": str(out_dir / "sft.purity.json"),
        "dir": str(out_dir),
    }
