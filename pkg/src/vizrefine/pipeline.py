"""The iterative refinement loop: embed, measure, ask the agent, apply.

A run produces a Trajectory of per-iteration records (config, metrics,
scores, artifacts) that can be exported to disk and replayed
byte-identically.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .agent import (AgentError, apply_recommendations, build_master_prompt,
                    explicit_composite_score, serialize_diagnostic)
from .dr import compute_embedding
from .hierarchy import Dendrogram, label_centroids, upgma
from .metrics import (DEFAULT_LOF_K, DEFAULT_NEIGHBOR_K, MetricsReport,
                      SUBSAMPLE_CAP, assemble_report, pairwise_distances)
from .render import PlotSpec, render_dendrogram, render_scatter

log = logging.getLogger(__name__)

MAX_ITERATIONS = 10
PATIENCE = 2
EPSILON_IMPLICIT = 0.05
EPSILON_EXPLICIT = 0.005

STOP_CONVERGED = "converged"
STOP_MAX_ITERATIONS = "max_iterations"
STOP_EMPTY = "agent_empty_recommendations"
STOP_ERROR = "error"


@dataclass
class IterationRecord:
    iteration: int
    config: object
    report: MetricsReport
    composite: float
    quality: float
    diagnostic: object
    embedding: np.ndarray
    tree_hd: Dendrogram
    tree_2d: Dendrogram
    prompt_text: str
    hd_dimension: str
    artifacts: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    run_id: str
    dataset_ref: str
    mode: str
    weights: object
    records: list = field(default_factory=list)
    stop_reason: str = STOP_MAX_ITERATIONS
    labels: list = field(default_factory=list)
    error: str = ""

    def selected_score(self, record):
        return record.quality if self.mode == "implicit" else record.composite

    @property
    def best_index(self):
        """0-based index of the best-scoring record; ties go earliest."""
        if not self.records:
            raise ValueError("empty trajectory")
        scores = [self.selected_score(r) for r in self.records]
        return int(np.argmax(scores))

    @property
    def best(self):
        return self.records[self.best_index]


def check_convergence(scores, epsilon, patience=PATIENCE):
    """True when the score's absolute change stayed below epsilon for
    `patience` consecutive iterations."""
    if len(scores) < patience + 1:
        return False
    tail = scores[-(patience + 1):]
    return all(abs(tail[i + 1] - tail[i]) < epsilon for i in range(patience))


def _artifact_names(iteration):
    return {
        "scatter": f"iter_{iteration}_scatter.svg",
        "dendro_hd": f"iter_{iteration}_dendro_hd.svg",
        "dendro_2d": f"iter_{iteration}_dendro_2d.svg",
        "prompt": f"iter_{iteration}_prompt.json",
        "response": f"iter_{iteration}_response.json",
        "embedding": f"iter_{iteration}_embedding.csv",
    }


def run_pipeline(X, labels, config, agent, mode="explicit", weights=None,
                 max_iterations=MAX_ITERATIONS, epsilon=None, patience=PATIENCE,
                 out_dir=None, backends=None, run_id="run",
                 dataset_ref="<memory>", neighbor_k=DEFAULT_NEIGHBOR_K,
                 lof_k=DEFAULT_LOF_K, subsample_cap=SUBSAMPLE_CAP,
                 cluster_k=10, seed=0, plot_spec=None):
    """Iterate embed -> metrics -> agent -> new config until convergence.

    labels may be None: leaves of the dendrograms then come from k-means
    clusters computed once on the raw features. Returns a Trajectory;
    when out_dir is given every per-iteration artifact is persisted
    there.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if mode not in ("implicit", "explicit"):
        raise ValueError(f"mode must be implicit or explicit, got {mode!r}")
    if weights is None:
        raise ValueError("a WeightVector is required (explicit scores are always tracked)")
    config.validate()
    if config.method == "tsne" and n <= 3 * float(config.params["perplexity"]):
        raise ValueError(
            f"dataset has {n} rows; t-SNE needs more than 3*perplexity "
            f"= {3 * config.params['perplexity']:g}")
    if epsilon is None:
        epsilon = EPSILON_IMPLICIT if mode == "implicit" else EPSILON_EXPLICIT

    if labels is None:
        from .hierarchy import kmeans_labels
        labels_eff = kmeans_labels(X, n_clusters=cluster_k, seed=seed)
    else:
        labels_eff = [str(l) for l in labels]

    n_metric = min(n, subsample_cap)
    neighbor_k_eff = max(1, min(neighbor_k, (n_metric - 1) // 2))
    lof_k_eff = max(1, min(lof_k, n_metric - 1))
    if neighbor_k_eff != neighbor_k:
        log.warning("neighbor k reduced from %d to %d for n=%d",
                    neighbor_k, neighbor_k_eff, n_metric)

    spec = plot_spec or PlotSpec()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    traj = Trajectory(run_id=run_id, dataset_ref=dataset_ref, mode=mode,
                      weights=weights, labels=labels_eff)
    current = config
    for iteration in range(1, max_iterations + 1):
        try:
            result = compute_embedding(X, current, backends=backends)
        except Exception as exc:
            traj.stop_reason = STOP_ERROR
            traj.error = f"iteration {iteration}: embedding failed: {exc}"
            log.error("%s", traj.error)
            break
        coords = result.coordinates
        reference = result.reference
        pca_applied = reference.shape[1] < X.shape[1]
        hd_dimension = (f"{reference.shape[1]}D (PCA)" if pca_applied
                        else f"{reference.shape[1]}D")

        report = assemble_report(
            reference, coords, labels_eff, neighbor_k=neighbor_k_eff,
            lof_k=lof_k_eff, subsample_cap=subsample_cap, subsample_seed=seed)
        cents_hd, label_order = label_centroids(reference, labels_eff)
        cents_2d, _ = label_centroids(coords, labels_eff)
        tree_hd = upgma(pairwise_distances(cents_hd), label_order)
        tree_2d = upgma(pairwise_distances(cents_2d), label_order)

        names = _artifact_names(iteration)
        plot_path = None
        artifacts = {}
        if out_dir is not None:
            plot_path = os.path.join(out_dir, names["scatter"])
            _write_text(plot_path, render_scatter(coords, labels_eff, spec))
            _write_text(os.path.join(out_dir, names["dendro_hd"]),
                        render_dendrogram(tree_hd, spec))
            _write_text(os.path.join(out_dir, names["dendro_2d"]),
                        render_dendrogram(tree_2d, spec))
            artifacts = {k: names[k] for k in ("scatter", "dendro_hd", "dendro_2d")}

        prompt = build_master_prompt(report, tree_hd, tree_2d, current,
                                     iteration, hd_dimension, plot_path)
        try:
            diagnostic = agent.step(prompt, history=traj.records)
        except AgentError as exc:
            traj.stop_reason = STOP_ERROR
            traj.error = f"iteration {iteration}: agent failed: {exc}"
            log.error("%s", traj.error)
            if out_dir is not None and exc.raw:
                _write_text(os.path.join(out_dir, f"iter_{iteration}_raw_response.txt"),
                            exc.raw)
            break

        composite = explicit_composite_score(report, weights)
        traj.records.append(IterationRecord(
            iteration=iteration, config=current, report=report,
            composite=composite, quality=diagnostic.quality_score,
            diagnostic=diagnostic, embedding=coords, tree_hd=tree_hd,
            tree_2d=tree_2d, prompt_text=prompt.to_json(),
            hd_dimension=hd_dimension, artifacts=artifacts))

        if not diagnostic.recommendations:
            traj.stop_reason = STOP_EMPTY
            break
        scores = [traj.selected_score(r) for r in traj.records]
        if check_convergence(scores, epsilon, patience):
            traj.stop_reason = STOP_CONVERGED
            break
        current = apply_recommendations(current, diagnostic)
    else:
        traj.stop_reason = STOP_MAX_ITERATIONS

    if out_dir is not None:
        export_trajectory(traj, out_dir, plot_spec=spec)
    return traj


def _write_text(path, text):
    with open(path, "w") as fh:
        fh.write(text)


METRIC_COLUMNS = ("spearman", "stress", "mean_distance_ratio", "trustworthiness",
                  "continuity", "silhouette", "lof_median", "lof_outlier_count")


def export_trajectory(traj, directory, plot_spec=None):
    """Persist one run: manifest, prompts, responses, metrics CSV, SVGs.

    Pure function of the trajectory contents, so re-exporting writes
    byte-identical files.
    """
    os.makedirs(directory, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise OSError(f"directory {directory!r} is not writable")
    spec = plot_spec or PlotSpec()

    written = []
    manifest = {
        "run_id": traj.run_id,
        "dataset": traj.dataset_ref,
        "mode": traj.mode,
        "weights": dict(traj.weights.weights),
        "stop_reason": traj.stop_reason,
        "error": traj.error,
        "best_iteration": traj.records[traj.best_index].iteration if traj.records else None,
        "labels": [str(l) for l in traj.labels],
        "iterations": [],
    }
    for rec in traj.records:
        names = _artifact_names(rec.iteration)
        prompt_path = os.path.join(directory, names["prompt"])
        _write_text(prompt_path, rec.prompt_text)
        response_text = rec.diagnostic.raw or serialize_diagnostic(rec.diagnostic)
        _write_text(os.path.join(directory, names["response"]), response_text)
        emb_lines = "".join(
            f"{float(x)!r},{float(y)!r}\n" for x, y in rec.embedding)
        _write_text(os.path.join(directory, names["embedding"]), emb_lines)
        _write_text(os.path.join(directory, names["scatter"]),
                    render_scatter(rec.embedding, traj.labels, spec))
        _write_text(os.path.join(directory, names["dendro_hd"]),
                    render_dendrogram(rec.tree_hd, spec))
        _write_text(os.path.join(directory, names["dendro_2d"]),
                    render_dendrogram(rec.tree_2d, spec))
        written.extend(os.path.join(directory, v) for v in names.values())

        manifest["iterations"].append({
            "iteration": rec.iteration,
            "config": rec.config.to_dict(),
            "report": rec.report.to_dict(),
            "composite_score": rec.composite,
            "quality_score": rec.quality,
            "hd_dimension": rec.hd_dimension,
            "tree_hd": rec.tree_hd.to_dict(),
            "tree_2d": rec.tree_2d.to_dict(),
            "files": names,
        })

    csv_lines = ["iteration," + ",".join(METRIC_COLUMNS)
                 + ",composite_score,quality_score"]
    for rec in traj.records:
        row = [str(rec.iteration)]
        rd = rec.report.to_dict()
        for col in METRIC_COLUMNS:
            value = rd[col]
            row.append("" if value is None else repr(value) if isinstance(value, float)
                       else str(value))
        row.append(repr(rec.composite))
        row.append(repr(rec.quality))
        csv_lines.append(",".join(row))
    metrics_path = os.path.join(directory, "metrics.csv")
    _write_text(metrics_path, "\n".join(csv_lines) + "\n")
    written.append(metrics_path)

    manifest_path = os.path.join(directory, "manifest.json")
    _write_text(manifest_path, json.dumps(manifest, indent=2) + "\n")
    written.append(manifest_path)
    return written


def replay_trajectory(run_dir, out_dir=None, plot_spec=None):
    """Re-render prompts and SVG artifacts from a stored run directory.

    Rebuilds each iteration's master prompt from the manifest's stored
    report/config/trees and re-renders every SVG from the stored
    embeddings; outputs are byte-identical to the original export.
    """
    from .dr import DRConfig

    out_dir = run_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    labels = manifest["labels"]
    spec = plot_spec or PlotSpec()
    written = []
    for entry in manifest["iterations"]:
        iteration = entry["iteration"]
        report = MetricsReport.from_dict(entry["report"])
        config = DRConfig.from_dict(entry["config"])
        tree_hd = Dendrogram.from_dict(entry["tree_hd"])
        tree_2d = Dendrogram.from_dict(entry["tree_2d"])
        names = entry["files"]
        emb_path = os.path.join(run_dir, names["embedding"])
        emb = np.loadtxt(emb_path, delimiter=",", ndmin=2)
        prompt = build_master_prompt(report, tree_hd, tree_2d, config,
                                     iteration, entry["hd_dimension"])
        targets = {
            names["prompt"]: prompt.to_json(),
            names["scatter"]: render_scatter(emb, labels, spec),
            names["dendro_hd"]: render_dendrogram(tree_hd, spec),
            names["dendro_2d"]: render_dendrogram(tree_2d, spec),
        }
        for name, text in targets.items():
            path = os.path.join(out_dir, name)
            _write_text(path, text)
            written.append(path)
    return written
