"""Average-linkage dendrograms over label centroids, with Newick I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import pairwise_distances


@dataclass
class Dendrogram:
    """Binary merge tree. Leaves are nodes 0..n-1 in input order; merge m
    creates node n+m. Each merge records (left, right, height, size)."""

    leaves: list
    merges: list = field(default_factory=list)

    @property
    def root(self):
        return len(self.leaves) + len(self.merges) - 1

    def to_dict(self):
        return {
            "leaves": [str(l) for l in self.leaves],
            "merges": [[int(a), int(b), float(h), int(s)] for a, b, h, s in self.merges],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            leaves=list(d["leaves"]),
            merges=[(int(a), int(b), float(h), int(s)) for a, b, h, s in d["merges"]],
        )


def kmeans_labels(X, n_clusters=10, seed=0):
    """Fallback labels for unlabeled data: seeded k-means cluster ids."""
    from sklearn.cluster import KMeans

    X = np.asarray(X, dtype=float)
    k = max(2, min(n_clusters, X.shape[0]))
    km = KMeans(n_clusters=k, random_state=int(seed), n_init=10)
    assignment = km.fit_predict(X)
    return [f"cluster_{int(a)}" for a in assignment]


def label_centroids(X, labels):
    """Per-label centroid rows in first-appearance label order."""
    X = np.asarray(X, dtype=float)
    if len(labels) != X.shape[0]:
        raise ValueError("labels length must match row count")
    order = list(dict.fromkeys(labels))
    if len(order) < 2:
        raise ValueError(f"need at least 2 distinct labels, got {len(order)}")
    cents = np.empty((len(order), X.shape[1]), dtype=float)
    for i, lab in enumerate(order):
        mask = np.asarray([l == lab for l in labels])
        cents[i] = X[mask].mean(axis=0)
    return cents, order


def upgma(dist, leaf_names):
    """Average-linkage clustering of a symmetric distance matrix.

    Repeatedly merges the closest active pair (ties broken by the lowest
    position pair), at height = pair distance / 2; the merged cluster's
    distance to the rest is the size-weighted mean of its members'.
    """
    D = np.asarray(dist, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[1] != n or n < 2:
        raise ValueError("need a square distance matrix over >= 2 leaves")
    if not np.allclose(D, D.T):
        raise ValueError("distance matrix is not symmetric")
    if len(leaf_names) != n:
        raise ValueError("leaf_names length must match matrix size")

    work = D.astype(float).copy()
    nodes = list(range(n))
    sizes = [1] * n
    merges = []
    next_id = n
    while len(nodes) > 1:
        m = len(nodes)
        best = None
        for p in range(m):
            for q in range(p + 1, m):
                if best is None or work[p, q] < best[0]:
                    best = (work[p, q], p, q)
        d_pq, p, q = best
        sa, sb = sizes[p], sizes[q]
        merges.append((nodes[p], nodes[q], d_pq / 2.0, sa + sb))
        # merged cluster replaces position p; position q drops out
        newrow = (sa * work[p] + sb * work[q]) / (sa + sb)
        work[p, :] = newrow
        work[:, p] = newrow
        work[p, p] = 0.0
        keep = [r for r in range(m) if r != q]
        work = work[np.ix_(keep, keep)]
        nodes[p] = next_id
        sizes[p] = sa + sb
        del nodes[q], sizes[q]
        next_id += 1
    return Dendrogram(leaves=list(leaf_names), merges=merges)


def to_newick(tree):
    """Nested-parenthesis serialization without branch lengths."""
    n = len(tree.leaves)
    text = {i: str(tree.leaves[i]) for i in range(n)}
    for m, (a, b, _h, _s) in enumerate(tree.merges):
        text[n + m] = f"({text[a]},{text[b]})"
    return text[tree.root] + ";"


class NewickParseError(ValueError):
    pass


def parse_newick(s):
    """Parse a branch-length-free Newick string back into a Dendrogram.

    Heights are not serialized, so parsed merges carry height 0.0; the
    topology round-trips through to_newick exactly.
    """
    if not s.endswith(";"):
        raise NewickParseError(f"missing ';' terminator at position {len(s)}")
    body = s[:-1]
    leaves = []
    merges = []

    def parse(pos):
        # returns (node_id_or_pending, size, next_pos); leaves are appended
        # in encounter order and merge ids fixed up at the end
        if pos >= len(body):
            raise NewickParseError(f"unexpected end of input at position {pos}")
        if body[pos] == "(":
            left, lsize, pos = parse(pos + 1)
            if pos >= len(body) or body[pos] != ",":
                raise NewickParseError(f"expected ',' at position {pos}")
            right, rsize, pos = parse(pos + 1)
            if pos >= len(body) or body[pos] != ")":
                raise NewickParseError(f"expected ')' at position {pos}")
            merges.append([left, right, 0.0, lsize + rsize])
            return ("m", len(merges) - 1), lsize + rsize, pos + 1
        start = pos
        while pos < len(body) and body[pos] not in "(),;":
            pos += 1
        if pos == start:
            raise NewickParseError(f"empty leaf name at position {pos}")
        leaves.append(body[start:pos])
        return ("l", len(leaves) - 1), 1, pos

    node, _size, end = parse(0)
    if end != len(body):
        raise NewickParseError(f"trailing characters at position {end}")
    if not merges and node[0] == "l":
        raise NewickParseError("a tree needs at least 2 leaves")

    n = len(leaves)

    def node_id(ref):
        kind, idx = ref
        return idx if kind == "l" else n + idx

    fixed = [(node_id(a), node_id(b), h, sz) for a, b, h, sz in merges]
    return Dendrogram(leaves=leaves, merges=fixed)
