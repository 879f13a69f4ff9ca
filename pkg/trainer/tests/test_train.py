"""Training tests: purity gate, frozen backbone, determinism, loss drop."""

import json

import pytest
import torch

from hinttrainer import (
    PurityGateError,
    StudentArtifact,
    attach_adapters,
    backbone_hash,
    build_backbone,
    train,
)
from hinttrainer.model import encode
from hinttrainer.train import TINY_PILOT, HOUSE_DEFAULTS, SHOP_DEFAULTS, _batch_loss


def test_defaults_mirror_reference_hyperparameters():
    assert (HOUSE_DEFAULTS.rank, HOUSE_DEFAULTS.alpha) == (64, 128.0)
    assert (HOUSE_DEFAULTS.dropout, HOUSE_DEFAULTS.weight_decay) == (0.10, 0.01)
    assert (SHOP_DEFAULTS.rank, SHOP_DEFAULTS.alpha) == (16, 32.0)
    assert (SHOP_DEFAULTS.dropout, SHOP_DEFAULTS.weight_decay) == (0.20, 0.05)
    for config in (HOUSE_DEFAULTS, SHOP_DEFAULTS):
        assert config.learning_rate == 2e-4
        assert config.seq_len == 1024
        assert config.epochs == 1
        assert config.warmup_fraction == 0.1


def test_refuses_to_train_without_purity_report(pilot_artifacts, tmp_path):
    orphan = tmp_path / "orphan.jsonl"
    orphan.write_text(open(pilot_artifacts["distill"]).read())
    with pytest.raises(PurityGateError, match="no purity report"):
        train(str(orphan), TINY_PILOT)


def test_refuses_dataset_with_violations(pilot_artifacts, tmp_path):
    tainted = tmp_path / "tainted.jsonl"
    tainted.write_text(open(pilot_artifacts["distill"]).read())
    report = {
        "scanned": 1,
        "clean": False,
        "violations": [{"example": 0, "kind": "preamble", "detail": "Apply these rules silently"}],
    }
    (tmp_path / "tainted.purity.json").write_text(json.dumps(report))
    with pytest.raises(PurityGateError, match="refusing to train"):
        train(str(tainted), TINY_PILOT)


@pytest.fixture(scope="session")
def trained(pilot_artifacts, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("student")
    artifact = train(
        pilot_artifacts["distill"],
        TINY_PILOT,
        purity_report_path=pilot_artifacts["distill_purity"],
        out_dir=str(out_dir),
    )
    return artifact, out_dir


def test_one_epoch_drops_mean_loss_at_least_30_percent(trained):
    artifact, _ = trained
    initial = artifact.manifest["initial_loss"]
    final = artifact.manifest["final_loss"]
    assert final <= 0.7 * initial, (initial, final)


def test_backbone_hash_unchanged_by_training(trained):
    artifact, _ = trained
    fresh = build_backbone(artifact.backbone_ref, seed=artifact.config.seed)
    assert backbone_hash(fresh) == artifact.manifest["backbone_hash"]
    assert backbone_hash(artifact.build_model()) == artifact.manifest["backbone_hash"]


def test_training_twice_with_same_seed_is_identical(pilot_artifacts):
    losses = []
    for _ in range(2):
        artifact = train(
            pilot_artifacts["distill"],
            TINY_PILOT,
            purity_report_path=pilot_artifacts["distill_purity"],
        )
        losses.append(artifact.manifest["final_loss"])
    assert losses[0] == losses[1]


def test_artifact_round_trips_through_disk(trained):
    artifact, out_dir = trained
    loaded = StudentArtifact.load(str(out_dir))
    assert loaded.backbone_ref == artifact.backbone_ref
    assert loaded.config == artifact.config
    for name, tensor in artifact.adapters.items():
        assert torch.equal(loaded.adapters[name], tensor)


def test_label_smoothing_routed_per_example():
    torch.manual_seed(0)
    model = build_backbone("tiny-32x1")
    attach_adapters(model, rank=4, alpha=8, dropout=0.0)
    model.eval()
    ids = encode("You arrive at the bench 1.\n> take bowl 1 from bench 1\n")
    with torch.no_grad():
        plain = float(_batch_loss(model, [(ids, 0.0)]))
        smoothed = float(_batch_loss(model, [(ids, 0.1)]))
        mixed = float(_batch_loss(model, [(ids, 0.0), (ids, 0.1)]))
    assert plain != pytest.approx(smoothed, abs=1e-9)
    assert mixed == pytest.approx((plain + smoothed) / 2, abs=1e-6)
