"""Exact t-SNE: full O(n^2) gradient, no tree approximation.

Per-point Gaussian bandwidths are found by binary search so each
conditional distribution hits the target perplexity; the 2D layout is
optimized by momentum gradient descent on the KL divergence, with early
exaggeration. Deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np

from .dr import pca

EXAGGERATION = 12.0
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
PERPLEXITY_TOL = 1e-5
MAX_BISECTIONS = 50
INIT_STD = 1e-4
EPS = 1e-12


def _conditional_row(d2_row, beta):
    """Unnormalized Gaussian affinities and their (perplexity, probs)."""
    p = np.exp(-d2_row * beta)
    sum_p = p.sum()
    if sum_p <= 0.0:
        return np.inf, p
    h = np.log(sum_p) + beta * (d2_row * p).sum() / sum_p
    return float(np.exp(h)), p / sum_p


def bandwidth_search(d2_row, perplexity, tol=PERPLEXITY_TOL, max_steps=MAX_BISECTIONS):
    """Binary-search the precision beta so the row perplexity hits target.

    Returns (probabilities, achieved perplexity). Tolerance applies on
    the perplexity scale.
    """
    beta = 1.0
    beta_min, beta_max = -np.inf, np.inf
    achieved, probs = _conditional_row(d2_row, beta)
    for _ in range(max_steps):
        if abs(achieved - perplexity) <= tol:
            break
        if achieved > perplexity:
            beta_min = beta
            beta = beta * 2.0 if beta_max == np.inf else (beta + beta_max) / 2.0
        else:
            beta_max = beta
            beta = beta / 2.0 if beta_min == -np.inf else (beta + beta_min) / 2.0
        achieved, probs = _conditional_row(d2_row, beta)
    return probs, achieved


def joint_probabilities(X, perplexity):
    """Symmetrized, sum-to-1 affinity matrix P from pairwise distances."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    sq = (X * X).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    P = np.zeros((n, n), dtype=float)
    worst = 0.0
    for i in range(n):
        row_d2 = np.concatenate([d2[i, :i], d2[i, i + 1:]])
        probs, achieved = bandwidth_search(row_d2, perplexity)
        P[i, :i] = probs[:i]
        P[i, i + 1:] = probs[i:]
        worst = max(worst, abs(achieved - perplexity))
    P = P + P.T
    P /= P.sum()
    return P, worst


def _kl_divergence(P, Q):
    mask = P > 0.0
    return float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], EPS))).sum())


def _student_t_weights(Y):
    """Unnormalized Student-t affinities of the 2D layout, zero diagonal."""
    sq = (Y * Y).sum(axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0))
    np.fill_diagonal(num, 0.0)
    return num


def tsne(X, config):
    """Embed rows into 2D. Returns (coordinates, diagnostics).

    The input is expected to be already reduced to n_pcs columns by the
    caller; diagnostics carry the KL trace used for convergence checks.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    perplexity = float(config.params["perplexity"])
    learning_rate = float(config.params["learning_rate"])
    n_iter = int(config.params["n_iter"])
    seed = int(config.params.get("seed", 0))
    if 3.0 * perplexity >= n:
        raise ValueError(
            f"perplexity {perplexity} infeasible for n={n}: need 3*perplexity < n")

    P, perp_err = joint_probabilities(X, perplexity)

    Y = pca(X, 2, solver="full", seed=seed)
    spread = Y.std()
    if spread > 0.0:
        Y = Y / spread * INIT_STD
    else:
        Y = np.random.default_rng(seed).normal(scale=INIT_STD, size=(n, 2))

    exag_iters = min(250, n_iter // 4)
    velocity = np.zeros_like(Y)
    kl_after_exaggeration = None
    kl_final = None
    for it in range(1, n_iter + 1):
        exaggerating = it <= exag_iters
        P_eff = P * EXAGGERATION if exaggerating else P
        num = _student_t_weights(Y)
        Q = num / num.sum()
        W = (P_eff - Q) * num
        grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)
        momentum = MOMENTUM_EARLY if exaggerating else MOMENTUM_LATE
        velocity = momentum * velocity - learning_rate * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if not np.all(np.isfinite(Y)):
            raise RuntimeError(f"t-SNE diverged to non-finite coordinates at iteration {it}")
        if it == exag_iters or it == n_iter:
            # KL of the just-updated layout against the true (unexaggerated) P
            num_now = _student_t_weights(Y)
            kl = _kl_divergence(P, num_now / num_now.sum())
            if it == exag_iters:
                kl_after_exaggeration = kl
            if it == n_iter:
                kl_final = kl

    diagnostics = {
        "kl_final": kl_final,
        "kl_after_exaggeration": kl_after_exaggeration,
        "n_iter": n_iter,
        "exaggeration_iters": exag_iters,
        "exaggeration_factor": EXAGGERATION,
        "momentum": [MOMENTUM_EARLY, MOMENTUM_LATE],
        "init": f"pca, std {INIT_STD:g}",
        "perplexity_max_error": perp_err,
    }
    return Y, diagnostics
