"""Embedding reliability metrics and the per-iteration metrics report.

All scores compare a high-dimensional reference matrix against its 2D
embedding: rank correlation of pair distances, normalized stress, mean
distance ratio, trustworthiness/continuity of k-neighborhoods, plus
label-based silhouette and local-outlier-factor diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_NEIGHBOR_K = 10
DEFAULT_LOF_K = 20
LOF_THRESHOLD = 1.5
LRD_CAP = 1e12
SUBSAMPLE_CAP = 2000


# ---------------------------------------------------------------------------
# distance and rank substrate
# ---------------------------------------------------------------------------

def pairwise_distances(X):
    """Exact Euclidean distance matrix, symmetric with a zero diagonal."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need an (n, d) matrix with n >= 2")
    finite_rows = np.isfinite(X).all(axis=1)
    if not finite_rows.all():
        raise ValueError(f"non-finite value in row {int(np.argmin(finite_rows))}")
    n = X.shape[0]
    out = np.empty((n, n), dtype=float)
    # difference-based and chunked: exact, and O(chunk*n*d) memory
    chunk = max(1, int(2**22 // max(1, n * X.shape[1])))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = X[start:stop, None, :] - X[None, :, :]
        out[start:stop] = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(out, 0.0)
    return out


def _check_pair(hd, ld):
    hd = np.asarray(hd, dtype=float)
    ld = np.asarray(ld, dtype=float)
    if hd.shape != ld.shape or hd.ndim != 2 or hd.shape[0] != hd.shape[1]:
        raise ValueError(f"distance matrices must share shape, got {hd.shape} vs {ld.shape}")
    return hd, ld


def condensed(D):
    """Unique-pair (i < j) distances in row-major order."""
    D = np.asarray(D, dtype=float)
    iu, ju = np.triu_indices(D.shape[0], k=1)
    return D[iu, ju]


def average_ranks(values):
    """1-based ranks; tied values share the average of their positions."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    order = np.argsort(values, kind="stable")
    sv = values[order]
    boundaries = np.flatnonzero(sv[1:] != sv[:-1]) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    group = np.zeros(n, dtype=int)
    group[boundaries] = 1
    group = np.cumsum(group)
    avg = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(n, dtype=float)
    ranks[order] = avg[group]
    return ranks


def _mean_offdiag(D):
    n = D.shape[0]
    return (D.sum() - np.trace(D)) / (n * (n - 1))


def _normalize_by_mean(D):
    m = _mean_offdiag(D)
    if m == 0.0:
        return D.copy()
    return D / m


# ---------------------------------------------------------------------------
# global structure scores
# ---------------------------------------------------------------------------

def spearman_distance_score(hd, ld):
    """Rank correlation between HD and 2D pairwise distances, in [-1, 1]."""
    hd, ld = _check_pair(hd, ld)
    if hd.shape[0] < 3:
        raise ValueError("need at least 3 points")
    ph = condensed(hd)
    pl = condensed(ld)
    if np.all(ph == ph[0]) or np.all(pl == pl[0]):
        raise ValueError("all pair distances equal: rank correlation undefined")
    rh = average_ranks(ph)
    rl = average_ranks(pl)
    n_p = len(ph)
    tie_free = len(np.unique(ph)) == n_p and len(np.unique(pl)) == n_p
    if tie_free:
        dsq = ((rh - rl) ** 2).sum()
        rho = 1.0 - 6.0 * dsq / (n_p * (n_p * n_p - 1.0))
    else:
        rh = rh - rh.mean()
        rl = rl - rl.mean()
        rho = float((rh * rl).sum() / np.sqrt((rh * rh).sum() * (rl * rl).sum()))
    return float(min(1.0, max(-1.0, rho)))


def stress(hd, ld):
    """Normalized residual stress over unique pairs; 0 means identical."""
    hd, ld = _check_pair(hd, ld)
    if _mean_offdiag(hd) == 0.0:
        raise ValueError("hd distances are all zero")
    ph = condensed(_normalize_by_mean(hd))
    pl = condensed(_normalize_by_mean(ld))
    return float(np.sqrt(((pl - ph) ** 2).sum() / (ph * ph).sum()))


def mean_distance_ratio(hd, ld):
    """Mean 2D/HD pair-distance ratio on mean-normalized matrices."""
    hd, ld = _check_pair(hd, ld)
    ph = condensed(hd)
    if np.any(ph == 0.0):
        iu, ju = np.triu_indices(hd.shape[0], k=1)
        bad = int(np.argmax(ph == 0.0))
        raise ValueError(f"zero hd distance for pair ({iu[bad]}, {ju[bad]})")
    ph = condensed(_normalize_by_mean(hd))
    pl = condensed(_normalize_by_mean(ld))
    return float((pl / ph).mean())


# ---------------------------------------------------------------------------
# neighborhood scores
# ---------------------------------------------------------------------------

def _neighbor_ranks(D):
    """ranks[i, j]: average rank of j among i's neighbors (self excluded)."""
    n = D.shape[0]
    ranks = np.zeros((n, n), dtype=float)
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        ranks[i, others] = average_ranks(D[i, others])
    return ranks


def _knn_sets(D, k):
    """Exact k nearest neighbors per row, ties broken by lower index."""
    n = D.shape[0]
    sets = []
    for i in range(n):
        row = D[i].copy()
        row[i] = np.inf
        order = np.argsort(row, kind="stable")
        sets.append(np.sort(order[:k]))
    return sets


def _check_k(k, n):
    if not 1 <= k < n / 2:
        raise ValueError(f"k must satisfy 1 <= k < n/2, got k={k} for n={n}")


def trustworthiness(hd, ld, k):
    """Penalty score for 2D neighbors that are not HD neighbors, in [0, 1]."""
    hd, ld = _check_pair(hd, ld)
    n = hd.shape[0]
    _check_k(k, n)
    hd_ranks = _neighbor_ranks(hd)
    hd_nn = _knn_sets(hd, k)
    ld_nn = _knn_sets(ld, k)
    total = 0.0
    for i in range(n):
        intruders = np.setdiff1d(ld_nn[i], hd_nn[i], assume_unique=True)
        for j in intruders:
            total += hd_ranks[i, j] - k
    return 1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * total


def continuity(hd, ld, k):
    """Penalty score for HD neighbors missing from the 2D view, in [0, 1]."""
    hd, ld = _check_pair(hd, ld)
    n = hd.shape[0]
    _check_k(k, n)
    ld_ranks = _neighbor_ranks(ld)
    hd_nn = _knn_sets(hd, k)
    ld_nn = _knn_sets(ld, k)
    total = 0.0
    for i in range(n):
        missing = np.setdiff1d(hd_nn[i], ld_nn[i], assume_unique=True)
        for j in missing:
            total += ld_ranks[i, j] - k
    return 1.0 - 2.0 / (n * k * (2 * n - 3 * k - 1)) * total


# ---------------------------------------------------------------------------
# clustering and outlier diagnostics
# ---------------------------------------------------------------------------

def silhouette(X, labels):
    """Mean per-point (b - a) / max(a, b); None when fewer than 2 labels."""
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    if len(labels) != X.shape[0]:
        raise ValueError("labels length must match row count")
    uniq = list(dict.fromkeys(labels))
    if len(uniq) < 2:
        return None
    D = pairwise_distances(X)
    lab_arr = np.asarray([uniq.index(l) for l in labels])
    masks = [lab_arr == u for u in range(len(uniq))]
    counts = [int(m.sum()) for m in masks]
    scores = np.zeros(len(labels), dtype=float)
    for i in range(len(labels)):
        own = lab_arr[i]
        if counts[own] == 1:
            scores[i] = 0.0
            continue
        a = D[i, masks[own]].sum() / (counts[own] - 1)
        b = min(D[i, masks[u]].mean() for u in range(len(uniq)) if u != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def lof_scores(X, k=DEFAULT_LOF_K, threshold=LOF_THRESHOLD):
    """Local outlier factor per point plus (median, flagged count).

    Standard construction: k-distance, reachability distance floored at
    the neighbor's k-distance, local reachability density, then the mean
    ratio of neighbor densities to the point's own density. Duplicate
    points would make densities infinite, so lrd is capped at 1e12.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k} for n={n}")
    D = pairwise_distances(X)
    neigh = _knn_sets(D, k)
    # _knn_sets sorts by index; rebuild (distance, index) order for k-distance
    kdist = np.empty(n, dtype=float)
    for i in range(n):
        kdist[i] = max(D[i, j] for j in neigh[i])
    lrd = np.empty(n, dtype=float)
    for i in range(n):
        reach = np.maximum(kdist[neigh[i]], D[i, neigh[i]])
        mean_reach = reach.sum() / k
        lrd[i] = min(1.0 / mean_reach, LRD_CAP) if mean_reach > 0 else LRD_CAP
    scores = np.empty(n, dtype=float)
    for i in range(n):
        scores[i] = lrd[neigh[i]].sum() / k / lrd[i]
    median = float(np.median(scores))
    flagged = int((scores > threshold).sum())
    return scores, median, flagged


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    """Every score computed for one embedding, at full precision."""

    spearman: float
    stress: float
    mean_distance_ratio: float
    trustworthiness: float
    continuity: float
    neighbor_k: int
    silhouette: float | None
    lof_median: float
    lof_outlier_count: int
    lof_k: int
    lof_threshold: float
    label_summary: dict = field(default_factory=dict)
    centroids_2d: dict = field(default_factory=dict)
    n_points: int = 0
    subsample_size: int | None = None
    subsample_seed: int | None = None

    def to_dict(self):
        return {
            "spearman": self.spearman,
            "stress": self.stress,
            "mean_distance_ratio": self.mean_distance_ratio,
            "trustworthiness": self.trustworthiness,
            "continuity": self.continuity,
            "neighbor_k": self.neighbor_k,
            "silhouette": self.silhouette,
            "lof_median": self.lof_median,
            "lof_outlier_count": self.lof_outlier_count,
            "lof_k": self.lof_k,
            "lof_threshold": self.lof_threshold,
            "label_summary": dict(self.label_summary),
            "centroids_2d": {k: list(v) for k, v in self.centroids_2d.items()},
            "n_points": self.n_points,
            "subsample_size": self.subsample_size,
            "subsample_seed": self.subsample_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            spearman=d["spearman"],
            stress=d["stress"],
            mean_distance_ratio=d["mean_distance_ratio"],
            trustworthiness=d["trustworthiness"],
            continuity=d["continuity"],
            neighbor_k=d["neighbor_k"],
            silhouette=d["silhouette"],
            lof_median=d["lof_median"],
            lof_outlier_count=d["lof_outlier_count"],
            lof_k=d["lof_k"],
            lof_threshold=d["lof_threshold"],
            label_summary=dict(d["label_summary"]),
            centroids_2d={k: tuple(v) for k, v in d["centroids_2d"].items()},
            n_points=d["n_points"],
            subsample_size=d.get("subsample_size"),
            subsample_seed=d.get("subsample_seed"),
        )


def label_summary(labels):
    """Label -> member count, keys in first-appearance order."""
    out = {}
    for lab in labels:
        out[lab] = out.get(lab, 0) + 1
    return out


def centroids_2d(embedding, labels):
    """Label -> (mean x, mean y) over the 2D embedding."""
    emb = np.asarray(embedding, dtype=float)
    out = {}
    for lab in dict.fromkeys(labels):
        mask = np.asarray([l == lab for l in labels])
        c = emb[mask].mean(axis=0)
        out[lab] = (float(c[0]), float(c[1]))
    return out


def assemble_report(reference, embedding, labels=None, neighbor_k=DEFAULT_NEIGHBOR_K,
                    lof_k=DEFAULT_LOF_K, lof_threshold=LOF_THRESHOLD,
                    subsample_cap=SUBSAMPLE_CAP, subsample_seed=0):
    """Compute every metric of one embedding against its reference matrix.

    The O(n^2) scores run on a seeded uniform subsample when n exceeds
    subsample_cap; label counts and 2D centroids always use all rows.
    Deterministic for fixed inputs and seed.
    """
    reference = np.asarray(reference, dtype=float)
    embedding = np.asarray(embedding, dtype=float)
    n = reference.shape[0]
    if embedding.shape[0] != n:
        raise ValueError(f"row mismatch: reference {n}, embedding {embedding.shape[0]}")
    if labels is not None and len(labels) != n:
        raise ValueError(f"row mismatch: reference {n}, labels {len(labels)}")

    sub_size = sub_seed = None
    idx = np.arange(n)
    if n > subsample_cap:
        rng = np.random.default_rng(subsample_seed)
        idx = np.sort(rng.choice(n, size=subsample_cap, replace=False))
        sub_size, sub_seed = subsample_cap, subsample_seed
    ref_s = reference[idx]
    emb_s = embedding[idx]
    labels_s = [labels[i] for i in idx] if labels is not None else None

    hd = pairwise_distances(ref_s)
    ld = pairwise_distances(emb_s)
    sil = silhouette(emb_s, labels_s) if labels_s is not None else None
    _, lof_median, lof_count = lof_scores(emb_s, k=lof_k, threshold=lof_threshold)
    return MetricsReport(
        spearman=spearman_distance_score(hd, ld),
        stress=stress(hd, ld),
        mean_distance_ratio=mean_distance_ratio(hd, ld),
        trustworthiness=trustworthiness(hd, ld, neighbor_k),
        continuity=continuity(hd, ld, neighbor_k),
        neighbor_k=neighbor_k,
        silhouette=sil,
        lof_median=lof_median,
        lof_outlier_count=lof_count,
        lof_k=lof_k,
        lof_threshold=lof_threshold,
        label_summary=label_summary(labels) if labels is not None else {},
        centroids_2d=centroids_2d(embedding, labels) if labels is not None else {},
        n_points=n,
        subsample_size=sub_size,
        subsample_seed=sub_seed,
    )


def fmt4(value):
    """Scores are rendered with 4 decimals everywhere they are reported."""
    return f"{float(value):.4f}"


def metrics_block(report):
    """Grouped metric strings for the agent prompt."""
    block = {
        "Global Structure & HD<->2D Correlation": {
            "Spearman Correlation": fmt4(report.spearman),
            "Stress-1": fmt4(report.stress),
            "Mean Distance Ratio": fmt4(report.mean_distance_ratio),
        },
        "Neighborhood Preservation": {
            f"Trustworthiness (k={report.neighbor_k})": fmt4(report.trustworthiness),
            f"Continuity (k={report.neighbor_k})": fmt4(report.continuity),
        },
        "Clustering & Label Agreement": (
            {"Silhouette Score": fmt4(report.silhouette)}
            if report.silhouette is not None else {}
        ),
        "Outlier Detection": {
            "LOF Median": fmt4(report.lof_median),
            f"LOF Outliers (threshold={report.lof_threshold:g})": report.lof_outlier_count,
        },
        "Cluster Centroids (2D)": {
            str(lab): [fmt4(x), fmt4(y)]
            for lab, (x, y) in report.centroids_2d.items()
        },
    }
    return block
