"""Agent-driven iterative refinement of DR hyperparameters for 2D plots."""

from .agent import (AgentError, DiagnosticParseError, DiagnosticReport, LLMAgent,
                    MasterPrompt, MockAgent, Recommendation, WEIGHT_PRESETS,
                    WeightVector, apply_recommendations, build_master_prompt,
                    explicit_composite_score, normalized_objectives,
                    parse_diagnostic, serialize_diagnostic)
from .data import load_csv, save_csv
from .dr import (BackendError, DRConfig, EmbeddingResult, backends_from_env,
                 compute_embedding, default_bounds, default_config, pca,
                 run_external_backend)
from .hierarchy import (Dendrogram, NewickParseError, kmeans_labels,
                        label_centroids, parse_newick, to_newick, upgma)
from .metrics import (MetricsReport, assemble_report, average_ranks, continuity,
                      lof_scores, mean_distance_ratio, metrics_block,
                      pairwise_distances, silhouette, spearman_distance_score,
                      stress, trustworthiness)
from .pipeline import (IterationRecord, Trajectory, check_convergence,
                       export_trajectory, replay_trajectory, run_pipeline)
from .render import PlotSpec, render_dendrogram, render_scatter
from .tsne import bandwidth_search, joint_probabilities, tsne

__version__ = "0.1.0"

__all__ = [
    "AgentError", "BackendError", "Dendrogram", "DiagnosticParseError",
    "DiagnosticReport", "DRConfig", "EmbeddingResult", "IterationRecord",
    "LLMAgent", "MasterPrompt", "MetricsReport", "MockAgent",
    "NewickParseError", "PlotSpec", "Recommendation", "Trajectory",
    "WEIGHT_PRESETS", "WeightVector", "apply_recommendations",
    "assemble_report", "average_ranks", "backends_from_env",
    "bandwidth_search", "build_master_prompt", "check_convergence",
    "compute_embedding", "continuity", "default_bounds", "default_config",
    "explicit_composite_score", "export_trajectory", "joint_probabilities",
    "kmeans_labels", "label_centroids", "load_csv", "lof_scores",
    "mean_distance_ratio", "metrics_block", "normalized_objectives",
    "pairwise_distances", "parse_diagnostic", "parse_newick", "pca",
    "render_dendrogram", "render_scatter", "replay_trajectory",
    "run_external_backend", "run_pipeline", "save_csv",
    "serialize_diagnostic", "silhouette", "spearman_distance_score",
    "stress", "to_newick", "trustworthiness", "tsne", "upgma",
]
