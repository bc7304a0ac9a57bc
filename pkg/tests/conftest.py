"""Shared fixtures: small trained models and CSV fixtures on disk.

Training fixtures are session-scoped — several test modules and the
acceptance suite lean on the same desk-scale runs, and each run costs
seconds, not milliseconds.
"""

import time

import numpy as np
import pytest

from signseq.checkpoint import save_checkpoint
from signseq.landmarks import ClassVocabulary, write_landmark_csv
from signseq.model import ModelConfig
from signseq.synthetic import make_drift_clips, make_drift_records
from signseq.training import TrainConfig, evaluate, train_loop

DESK_MODEL = dict(input_dim=144, hidden_dim=64, num_heads=4, num_layers=2,
                  ffn_dim=128, dropout_p=0.1, embed_dropout_p=0.1,
                  num_classes=3, max_seq_len=17)


@pytest.fixture(scope="session")
def drift30():
    """30 pipeline-built clips, 10 per gesture family."""
    return make_drift_clips(30, seed=11)


@pytest.fixture(scope="session")
def overfit_run(drift30):
    """The 200-epoch-budget overfit run; returns everything it measured."""
    clips, vocab = drift30
    mc = ModelConfig(**DESK_MODEL)
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=200,
                     early_stop_patience=200, seed=3)
    t0 = time.perf_counter()
    params, log = train_loop(clips, clips, mc, tc)
    elapsed = time.perf_counter() - t0
    report = evaluate(params, mc, clips, vocab)
    return {"params": params, "config": mc, "vocab": vocab, "clips": clips,
            "log": log, "elapsed_s": elapsed, "train_report": report}


@pytest.fixture(scope="session")
def desk_model(overfit_run):
    """(params, config, vocab, clips) of a model that fits its data."""
    r = overfit_run
    return r["params"], r["config"], r["vocab"], r["clips"]


@pytest.fixture(scope="session")
def two_class_model():
    """Model over the two drift families only (for hand-sized metric checks)."""
    clips, vocab3 = make_drift_clips(30, seed=19)
    vocab = ClassVocabulary.from_labels(["drift_left", "drift_right"])
    kept = []
    for c in clips:
        name = vocab3.name_of(c.label_index)
        if name in vocab.names:
            c.label_index = vocab.index_of(name)
            kept.append(c)
    mc = ModelConfig(**{**DESK_MODEL, "num_classes": 2})
    tc = TrainConfig(learning_rate=1e-3, batch_size=8, max_epochs=25,
                     early_stop_patience=50, seed=5)
    params, _ = train_loop(kept, kept, mc, tc)
    report = evaluate(params, mc, kept, vocab)
    assert report.accuracy == 1.0, "fixture model must fit its tiny dataset"
    return params, mc, vocab, kept


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """CSV + checkpoint fixtures for CLI-level tests."""
    root = tmp_path_factory.mktemp("cli_fixtures")
    records = make_drift_records(30, seed=11)
    (root / "data.csv").write_text(write_landmark_csv(records))
    first_id = records[0].video_id
    one = [r for r in records if r.video_id == first_id]
    (root / "one_clip.csv").write_text(write_landmark_csv(one))
    (root / "config.txt").write_text(
        "# desk-scale settings\n"
        "hidden_dim = 64\nnum_heads = 4\nnum_layers = 2\nffn_dim = 128\n"
        "dropout_p = 0.1\nembed_dropout_p = 0.1\n"
        "learning_rate = 1e-3\nbatch_size = 8\nmax_epochs = 15\n"
        "early_stop_patience = 50\nseed = 3\n")
    return root


@pytest.fixture(scope="session")
def ckpt_path(desk_model, tmp_path_factory):
    params, config, vocab, _ = desk_model
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(params, config, vocab, path, seed=3,
                    metrics={"train_accuracy": 1.0})
    return path


@pytest.fixture()
def rng_np():
    return np.random.default_rng(20240817)


def pytest_runtest_logreport(report):
    """Always-visible pass/fail line per acceptance criterion (the in-test
    prints land in the capture buffer, which pytest discards on success)."""
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1].removeprefix("test_").replace("_", "-")
    status = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {status}", flush=True)
