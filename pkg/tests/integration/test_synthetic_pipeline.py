"""
The whole command line pipeline on a synthetic task family.
"""

import pytest
from click.testing import CliRunner

from metaimpute.cli import cli
from metaimpute.training.evaluate import Report

pytestmark = pytest.mark.slow


def invoke(*args):
    result = CliRunner().invoke(cli, [str(arg) for arg in args])
    assert result.exit_code == 0, result.output
    return result


def per_episode(report, method, setting="default"):
    return {
        row.episode: row.test_mse
        for row in report.rows
        if row.method == method and row.setting == setting and not row.is_aggregate
    }


def test_meta_learning_beats_baselines(tmp_path):
    data = tmp_path / "synthetic"
    model = tmp_path / "model.mmf"
    path = tmp_path / "report.tsv"
    invoke("synth", "-o", data, "--tasks", "60", "--rows", "12", "--cols", "12", "--rank", "2", "--observed", "0.4", "--episodes", "10")
    invoke(
        "train", "-s", data, "-o", model,
        "--epochs", "40", "--batches-per-epoch", "10", "--batch-size", "8", "--lr", "3e-3",
        "--rows", "12", "--cols", "12", "--channels", "8", "--hidden", "16", "--rank", "4",
        "--inner-steps", "5", "--eta", "0.05", "--valid-episodes", "6", "--patience", "40",
    )  # fmt: skip
    invoke(
        "eval", "-c", model, "-s", data, "-o", path, "--sweep", "inner-steps",
        "--method", "ours", "--method", "mean", "--method", "mf", "--method", "prior-product",
    )  # fmt: skip
    report = Report.read(path)
    scores = {(row.method, row.setting): row.test_mse for row in report.aggregates()}
    assert scores["ours", "default"] < scores["mean", "default"]
    assert scores["ours", "default"] < scores["mf", "default"]

    # paired over the same ten episodes
    ours, mean = per_episode(report, "ours"), per_episode(report, "mean")
    assert len(ours) == len(mean) == 10
    assert sum(ours[e] < mean[e] for e in ours) >= 8

    assert scores["ours", "inner-steps=10"] <= scores["ours", "inner-steps=0"]
