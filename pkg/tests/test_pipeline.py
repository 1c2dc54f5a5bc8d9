import filecmp
import json
import os
import sys
from types import SimpleNamespace

import numpy as np
import pytest

from vizrefine.agent import (AgentError, DiagnosticReport, MockAgent,
                             Recommendation, WeightVector,
                             apply_recommendations)
from vizrefine.dr import default_config
from vizrefine.pipeline import (METRIC_COLUMNS, Trajectory, check_convergence,
                                export_trajectory, replay_trajectory,
                                run_pipeline)

from conftest import make_blobs

ECHO = os.path.join(os.path.dirname(__file__), "backends", "echo_backend.py")
WEIGHTS = WeightVector.from_preset("gpt-5.2")


def small_dataset():
    X, labels = make_blobs(48, 6, n_clusters=3, separation=12.0, seed=4)
    return X, labels


def fast_tsne_config(n_rows=48, n_cols=6):
    return default_config("tsne", n_rows=n_rows, n_cols=n_cols).with_params(
        perplexity=8.0, n_iter=250, n_pcs=4)


class ScriptedAgent:
    """Replays a fixed list of recommendation batches, one per step."""

    def __init__(self, batches, quality=5.0):
        self.batches = list(batches)
        self.quality = quality
        self.calls = 0

    def step(self, prompt, history=()):
        batch = self.batches[self.calls] if self.calls < len(self.batches) else []
        self.calls += 1
        return DiagnosticReport(
            quality_score=self.quality,
            recommendations=[Recommendation(**r) for r in batch])


class FailingAgent:
    def step(self, prompt, history=()):
        raise AgentError("model produced unusable output", raw="GARBAGE TEXT")


# ---------------------------------------------------------------------------
# convergence check
# ---------------------------------------------------------------------------

def test_convergence_on_flat_scores():
    assert check_convergence([7.0, 7.0, 7.0], 0.05) is True


def test_no_convergence_on_rising_scores():
    assert check_convergence([6.0, 7.0, 8.0], 0.05) is False


def test_convergence_needs_patience_plus_one_scores():
    assert check_convergence([7.0, 7.0], 0.05, patience=2) is False
    assert check_convergence([7.0, 7.0], 0.05, patience=1) is True


def test_convergence_inspects_only_the_tail():
    assert check_convergence([1.0, 5.0, 5.01, 5.02], 0.05) is True
    assert check_convergence([5.0, 5.01, 5.02, 9.0], 0.05) is False


def test_convergence_threshold_is_strict():
    assert check_convergence([1.0, 1.05, 1.10], 0.05) is False
    assert check_convergence([1.0, 1.049, 1.098], 0.05) is True


# ---------------------------------------------------------------------------
# trajectory bookkeeping
# ---------------------------------------------------------------------------

def fake_record(iteration, composite, quality):
    return SimpleNamespace(iteration=iteration, composite=composite,
                           quality=quality)


def test_selected_score_depends_on_mode():
    rec = fake_record(1, composite=0.5, quality=6.0)
    explicit = Trajectory(run_id="r", dataset_ref="d", mode="explicit",
                          weights=WEIGHTS)
    implicit = Trajectory(run_id="r", dataset_ref="d", mode="implicit",
                          weights=WEIGHTS)
    assert explicit.selected_score(rec) == 0.5
    assert implicit.selected_score(rec) == 6.0


def test_best_index_ties_go_earliest():
    traj = Trajectory(run_id="r", dataset_ref="d", mode="explicit",
                      weights=WEIGHTS)
    traj.records = [fake_record(1, 0.5, 5.0), fake_record(2, 0.7, 7.0),
                    fake_record(3, 0.7, 7.0)]
    assert traj.best_index == 1
    assert traj.best.iteration == 2


def test_best_index_empty_trajectory_rejected():
    traj = Trajectory(run_id="r", dataset_ref="d", mode="explicit",
                      weights=WEIGHTS)
    with pytest.raises(ValueError, match="empty"):
        traj.best_index


# ---------------------------------------------------------------------------
# run_pipeline argument validation
# ---------------------------------------------------------------------------

def test_pipeline_rejects_unknown_mode():
    X, labels = small_dataset()
    with pytest.raises(ValueError, match="implicit or explicit"):
        run_pipeline(X, labels, fast_tsne_config(), MockAgent(WEIGHTS),
                     mode="banana", weights=WEIGHTS)


def test_pipeline_requires_weights():
    X, labels = small_dataset()
    with pytest.raises(ValueError, match="WeightVector"):
        run_pipeline(X, labels, fast_tsne_config(), MockAgent(WEIGHTS),
                     weights=None)


def test_pipeline_rejects_infeasible_perplexity():
    X, labels = small_dataset()
    config = default_config("tsne", n_rows=200, n_cols=6).with_params(
        perplexity=30.0)
    with pytest.raises(ValueError, match=r"3\*perplexity"):
        run_pipeline(X, labels, config, MockAgent(WEIGHTS), weights=WEIGHTS)


# ---------------------------------------------------------------------------
# full runs (in memory)
# ---------------------------------------------------------------------------

def test_single_iteration_run():
    X, labels = small_dataset()
    traj = run_pipeline(X, labels, fast_tsne_config(), MockAgent(WEIGHTS),
                        weights=WEIGHTS, max_iterations=1)
    assert traj.stop_reason == "max_iterations"
    assert len(traj.records) == 1
    rec = traj.records[0]
    assert rec.iteration == 1
    assert rec.embedding.shape == (48, 2)
    assert rec.config.params["perplexity"] == 8.0
    assert rec.quality == pytest.approx(10.0 * rec.composite)
    assert rec.hd_dimension == "4D (PCA)"  # n_pcs=4 reduced the 6 columns


def test_config_chain_follows_recommendations():
    X, labels = small_dataset()
    traj = run_pipeline(X, labels, fast_tsne_config(), MockAgent(WEIGHTS),
                        weights=WEIGHTS, max_iterations=3)
    assert len(traj.records) >= 2
    for before, after in zip(traj.records, traj.records[1:]):
        expected = apply_recommendations(before.config, before.diagnostic)
        assert after.config.params == expected.params


def test_scripted_parameter_updates_are_applied():
    X, labels = small_dataset()
    batches = [[
        {"parameter": "tsne.perplexity", "current_value": "8.0",
         "suggested_value": "12", "priority": "high"},
        {"parameter": "tsne.learning_rate", "current_value": "200.0",
         "suggested_value": "500", "priority": "medium"},
        {"parameter": "tsne.n_iter", "current_value": "250",
         "suggested_value": "300", "priority": "low"},
        {"parameter": "tsne.n_pcs", "current_value": "4",
         "suggested_value": "6", "priority": "low"},
    ], []]
    traj = run_pipeline(X, labels, fast_tsne_config(),
                        ScriptedAgent(batches), weights=WEIGHTS,
                        max_iterations=3)
    assert len(traj.records) == 2
    params = traj.records[1].config.params
    assert params["perplexity"] == 12.0
    assert params["learning_rate"] == 500.0
    assert params["n_iter"] == 300
    assert params["n_pcs"] == 6
    assert traj.records[1].hd_dimension == "6D"  # n_pcs now covers all columns
    assert traj.stop_reason == "agent_empty_recommendations"


def test_pca_run_stops_immediately_without_recommendations():
    X, labels = small_dataset()
    config = default_config("pca", n_rows=48, n_cols=6)
    traj = run_pipeline(X, labels, config, MockAgent(WEIGHTS),
                        weights=WEIGHTS)
    assert traj.stop_reason == "agent_empty_recommendations"
    assert len(traj.records) == 1
    assert traj.records[0].hd_dimension == "6D"


def test_convergence_stop_with_stationary_agent():
    X, labels = small_dataset()
    batch = [{"parameter": "tsne.learning_rate", "current_value": "200.0",
              "suggested_value": "200.0", "priority": "low"}]
    traj = run_pipeline(X, labels, fast_tsne_config(),
                        ScriptedAgent([batch] * 5), weights=WEIGHTS,
                        max_iterations=5, epsilon=0.005, patience=2)
    # identical config => identical deterministic score, patience trips at 3
    assert traj.stop_reason == "converged"
    assert len(traj.records) == 3
    scores = [r.composite for r in traj.records]
    assert scores[0] == scores[1] == scores[2]


def test_implicit_mode_tracks_quality():
    X, labels = small_dataset()
    traj = run_pipeline(X, labels, fast_tsne_config(), MockAgent(WEIGHTS),
                        mode="implicit", weights=WEIGHTS, max_iterations=2)
    rec = traj.records[0]
    assert traj.selected_score(rec) == rec.quality
    assert rec.composite is not None  # explicit score still recorded


def test_kmeans_labels_when_none_given():
    X, _ = small_dataset()
    traj = run_pipeline(X, None, fast_tsne_config(), MockAgent(WEIGHTS),
                        weights=WEIGHTS, max_iterations=1, cluster_k=3)
    assert len(traj.labels) == 48
    assert set(traj.labels) == {"cluster_0", "cluster_1", "cluster_2"}
    assert set(traj.records[0].report.label_summary) == set(traj.labels)


def test_embedding_failure_stops_with_error():
    X, labels = small_dataset()
    config = default_config("external:echo", n_rows=48, n_cols=6)
    backends = {"echo": [sys.executable, ECHO, "--fail"]}
    traj = run_pipeline(X, labels, config, MockAgent(WEIGHTS),
                        weights=WEIGHTS, backends=backends)
    assert traj.stop_reason == "error"
    assert "embedding failed" in traj.error
    assert traj.records == []


def test_agent_failure_archives_raw_response(tmp_path):
    X, labels = small_dataset()
    out = tmp_path / "run"
    traj = run_pipeline(X, labels, fast_tsne_config(), FailingAgent(),
                        weights=WEIGHTS, out_dir=str(out))
    assert traj.stop_reason == "error"
    assert "agent failed" in traj.error
    assert traj.records == []
    raw = out / "iter_1_raw_response.txt"
    assert raw.read_text() == "GARBAGE TEXT"
    # the iteration-1 plots were produced before the agent step
    assert (out / "iter_1_scatter.svg").exists()
    assert (out / "manifest.json").exists()


# ---------------------------------------------------------------------------
# export / replay
# ---------------------------------------------------------------------------

def exported_run(tmp_path, name="run"):
    X, labels = small_dataset()
    out = tmp_path / name
    traj = run_pipeline(X, labels, fast_tsne_config(), MockAgent(WEIGHTS),
                        weights=WEIGHTS, max_iterations=2, out_dir=str(out),
                        run_id="testrun", dataset_ref="blobs48")
    return traj, out


def test_export_writes_manifest_and_per_iteration_files(tmp_path):
    traj, out = exported_run(tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run_id"] == "testrun"
    assert manifest["dataset"] == "blobs48"
    assert manifest["mode"] == "explicit"
    assert manifest["stop_reason"] == traj.stop_reason
    assert manifest["best_iteration"] == traj.best.iteration
    assert len(manifest["iterations"]) == len(traj.records)
    for entry in manifest["iterations"]:
        for filename in entry["files"].values():
            assert (out / filename).exists(), filename
        assert set(entry["files"]) == {"scatter", "dendro_hd", "dendro_2d",
                                       "prompt", "response", "embedding"}


def test_export_metrics_csv_shape(tmp_path):
    traj, out = exported_run(tmp_path)
    lines = (out / "metrics.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header == ["iteration", *METRIC_COLUMNS, "composite_score",
                      "quality_score"]
    assert len(lines) == 1 + len(traj.records)
    first = lines[1].split(",")
    assert first[0] == "1"
    assert float(first[header.index("composite_score")]) == pytest.approx(
        traj.records[0].composite)


def test_export_prompt_and_response_files_match_records(tmp_path):
    traj, out = exported_run(tmp_path)
    rec = traj.records[0]
    assert (out / "iter_1_prompt.json").read_text() == rec.prompt_text
    response = json.loads((out / "iter_1_response.json").read_text())
    assert response["quality_score"] == rec.quality


def test_export_embedding_roundtrip(tmp_path):
    traj, out = exported_run(tmp_path)
    emb = np.loadtxt(out / "iter_1_embedding.csv", delimiter=",", ndmin=2)
    np.testing.assert_array_equal(emb, traj.records[0].embedding)


def test_reexport_is_byte_identical(tmp_path):
    traj, out = exported_run(tmp_path)
    second = tmp_path / "again"
    export_trajectory(traj, str(second))
    names = sorted(os.listdir(out))
    assert sorted(os.listdir(second)) == names
    match, mismatch, errors = filecmp.cmpfiles(out, second, names,
                                               shallow=False)
    assert mismatch == [] and errors == []


def test_replay_reproduces_prompts_and_svgs(tmp_path):
    traj, out = exported_run(tmp_path)
    replay_dir = tmp_path / "replexcept"
    written = replay_trajectory(str(out), str(replay_dir))
    assert written
    for path in written:
        name = os.path.basename(path)
        assert (replay_dir / name).read_bytes() == (out / name).read_bytes()
    replayed = {os.path.basename(p) for p in written}
    for i in (1, 2):
        if (out / f"iter_{i}_prompt.json").exists():
            assert f"iter_{i}_prompt.json" in replayed
            assert f"iter_{i}_scatter.svg" in replayed


def test_export_rejects_unwritable_directory(tmp_path, monkeypatch):
    traj, _ = exported_run(tmp_path)
    monkeypatch.setattr("vizrefine.pipeline.os.access",
                        lambda path, mode: False)
    with pytest.raises(OSError, match="not writable"):
        export_trajectory(traj, str(tmp_path / "blocked"))


def test_export_empty_trajectory_writes_manifest_only(tmp_path):
    traj = Trajectory(run_id="empty", dataset_ref="none", mode="explicit",
                      weights=WEIGHTS)
    traj.stop_reason = "error"
    traj.error = "embedding failed before the first iteration"
    out = tmp_path / "emptyrun"
    written = export_trajectory(traj, str(out))
    names = {os.path.basename(p) for p in written}
    assert names == {"manifest.json", "metrics.csv"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["best_iteration"] is None
    assert manifest["iterations"] == []
