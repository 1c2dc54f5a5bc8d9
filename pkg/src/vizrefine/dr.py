"""Embedding computation: built-in PCA and t-SNE plus external backends.

External methods (method "external:<name>") are spawned as one process
per call and spoken to over a JSON stdin/stdout protocol, so embedders
from other ecosystems can plug in without being imported.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.utils.extmath import randomized_svd

INLINE_VALUE_LIMIT = 1_000_000
BACKEND_TIMEOUT = 600.0
BACKEND_ENV_PREFIX = "VIZREFINE_BACKEND_"

# name -> (python type, is integer)
PARAM_TYPES = {
    "perplexity": float,
    "learning_rate": float,
    "n_iter": int,
    "n_pcs": int,
    "n_neighbors": int,
    "min_dist": float,
    "seed": int,
    "solver": str,
}

TSNE_REQUIRED = ("perplexity", "learning_rate", "n_iter", "n_pcs")


def default_bounds(n_rows=None, n_cols=None):
    """Validity ranges for every tunable numeric parameter.

    The perplexity ceiling also respects the 3*perplexity < n feasibility
    rule when the row count is known, and n_pcs cannot exceed the column
    count.
    """
    perp_hi = 100.0
    if n_rows is not None:
        perp_hi = min(perp_hi, max(5.0, (n_rows - 1) / 3.0))
    pcs_hi = 100
    if n_cols is not None:
        pcs_hi = min(pcs_hi, max(2, n_cols))
    return {
        "perplexity": (5.0, perp_hi),
        "learning_rate": (10.0, 1000.0),
        "n_iter": (250, 5000),
        "n_pcs": (2, pcs_hi),
        "n_neighbors": (2, 200),
        "min_dist": (0.0, 0.99),
    }


@dataclass
class DRConfig:
    """A DR method plus its hyperparameter values and validity ranges."""

    method: str
    params: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=default_bounds)

    def validate(self):
        if self.method not in ("pca", "tsne") and not self.method.startswith("external:"):
            raise ValueError(
                f"unknown method {self.method!r}; expected pca, tsne, or external:<name>")
        if self.method == "tsne":
            missing = [p for p in TSNE_REQUIRED if p not in self.params]
            if missing:
                raise ValueError(f"tsne config missing required params: {missing}")
        for name, value in self.params.items():
            if name in self.bounds:
                lo, hi = self.bounds[name]
                if not lo <= value <= hi:
                    raise ValueError(
                        f"param {name}={value} outside bounds [{lo}, {hi}]")
        return self

    def clamp(self, name, value):
        """Clamp a value into the parameter's bounds; cast to its type."""
        caster = PARAM_TYPES.get(name, float)
        if name in self.bounds:
            lo, hi = self.bounds[name]
            value = min(max(value, lo), hi)
        return caster(round(value)) if caster is int else caster(value)

    def with_params(self, **updates):
        new = dict(self.params)
        new.update(updates)
        return replace(self, params=new, bounds=dict(self.bounds))

    def to_dict(self):
        return {"method": self.method, "params": dict(self.params),
                "bounds": {k: list(v) for k, v in self.bounds.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(method=d["method"], params=dict(d["params"]),
                   bounds={k: tuple(v) for k, v in d["bounds"].items()})


def default_config(method, n_rows=None, n_cols=None, seed=0):
    """Baseline configuration for a method, inside default bounds."""
    bounds = default_bounds(n_rows, n_cols)
    if method == "tsne":
        params = {"perplexity": 30.0, "learning_rate": 200.0,
                  "n_iter": 1000, "n_pcs": 20, "seed": seed}
        params["perplexity"] = min(params["perplexity"], bounds["perplexity"][1])
        params["n_pcs"] = min(params["n_pcs"], bounds["n_pcs"][1])
    elif method == "pca":
        params = {"solver": "full", "seed": seed}
    elif method.startswith("external:"):
        name = method.split(":", 1)[1]
        if name == "umap":
            params = {"n_neighbors": 15, "min_dist": 0.1, "seed": seed}
        elif name == "pacmap":
            params = {"n_neighbors": 10, "seed": seed}
        else:
            params = {"seed": seed}
    else:
        raise ValueError(f"unknown method {method!r}")
    return DRConfig(method=method, params=params, bounds=bounds).validate()


@dataclass
class EmbeddingResult:
    coordinates: np.ndarray
    config: DRConfig
    diagnostics: dict = field(default_factory=dict)
    elapsed: float = 0.0
    reference: np.ndarray = None  # matrix actually fed to the method


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def pca(X, n_components, solver="full", seed=0):
    """Project rows onto the top principal components.

    Components are ordered by decreasing explained variance and each has
    its largest-magnitude loading made positive, so both solvers agree
    on orientation.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    limit = min(n, d)
    if not 1 <= n_components <= limit:
        raise ValueError(f"n_components must be in [1, {limit}], got {n_components}")
    centered = X - X.mean(axis=0)
    if solver == "full":
        _u, _s, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[:n_components]
    elif solver == "randomized":
        _u, _s, vt = randomized_svd(centered, n_components=n_components,
                                    random_state=int(seed))
        components = vt
    else:
        raise ValueError(f"solver must be 'full' or 'randomized', got {solver!r}")
    for i in range(components.shape[0]):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return centered @ components.T


# ---------------------------------------------------------------------------
# external backend protocol
# ---------------------------------------------------------------------------

class BackendError(RuntimeError):
    """Structured failure from an external embedding backend."""

    def __init__(self, message, stderr=""):
        super().__init__(message)
        self.stderr = stderr


def backends_from_env(env=None):
    """Collect backend commands from VIZREFINE_BACKEND_<NAME> variables."""
    env = os.environ if env is None else env
    found = {}
    for key, value in env.items():
        if key.startswith(BACKEND_ENV_PREFIX) and value.strip():
            found[key[len(BACKEND_ENV_PREFIX):].lower()] = shlex.split(value)
    return found


def run_external_backend(X, config, backends, timeout=BACKEND_TIMEOUT,
                         inline_limit=INLINE_VALUE_LIMIT):
    """Send the data to a registered backend process and read coordinates.

    The request goes to the child's stdin as a single JSON document; data
    larger than inline_limit values is handed over as a temp CSV path.
    """
    name = config.method.split(":", 1)[1]
    if name not in backends:
        raise BackendError(
            f"no backend registered for {name!r}; registered: {sorted(backends)}")
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    params = {k: v for k, v in config.params.items() if k != "seed"}
    request = {"method": name, "params": params,
               "seed": int(config.params.get("seed", 0))}
    tmp_path = None
    try:
        if n * d > inline_limit:
            fd, tmp_path = tempfile.mkstemp(suffix=".csv", prefix="vizrefine_")
            with os.fdopen(fd, "w") as fh:
                for row in X:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
            request["data"] = {"rows": n, "cols": d, "path": tmp_path}
        else:
            request["data"] = {"rows": n, "cols": d,
                               "values": [float(v) for v in X.ravel()]}
        try:
            proc = subprocess.run(
                backends[name], input=json.dumps(request).encode(),
                capture_output=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            stderr = (exc.stderr or b"").decode(errors="replace")
            raise BackendError(
                f"backend {name!r} timed out after {timeout} s", stderr) from None
        except OSError as exc:
            raise BackendError(f"backend {name!r} failed to start: {exc}") from None
    finally:
        if tmp_path is not None:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass

    stderr = proc.stderr.decode(errors="replace")
    if proc.returncode != 0:
        detail = ""
        try:
            detail = json.loads(proc.stdout.decode())["error"]
        except Exception:
            pass
        raise BackendError(
            f"backend {name!r} exited with code {proc.returncode}"
            + (f": {detail}" if detail else ""), stderr)
    try:
        response = json.loads(proc.stdout.decode())
    except (ValueError, UnicodeDecodeError) as exc:
        raise BackendError(f"backend {name!r} wrote malformed output: {exc}", stderr) from None
    if "error" in response:
        raise BackendError(f"backend {name!r} reported: {response['error']}", stderr)
    coords = response.get("coordinates")
    if coords is None:
        raise BackendError(f"backend {name!r} response lacks 'coordinates'", stderr)
    arr = np.asarray(coords, dtype=float)
    if arr.ndim != 2 or arr.shape != (n, 2):
        raise BackendError(
            f"backend {name!r} returned shape {arr.shape}, expected ({n}, 2)", stderr)
    if not np.all(np.isfinite(arr)):
        raise BackendError(f"backend {name!r} returned non-finite coordinates", stderr)
    return arr


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def compute_embedding(X, config, backends=None, timeout=BACKEND_TIMEOUT):
    """Run one DR method under one config and return its 2D embedding.

    When the config carries n_pcs (and the data is wider than that), the
    input is PCA-reduced first; the matrix actually fed to the method is
    returned as the result's reference.
    """
    from .tsne import tsne as run_tsne

    X = np.asarray(X, dtype=float)
    config.validate()
    seed = int(config.params.get("seed", 0))
    start = time.monotonic()
    reduced = X
    if "n_pcs" in config.params:
        n_pcs = min(int(config.params["n_pcs"]), min(X.shape))
        if n_pcs < X.shape[1]:
            reduced = pca(X, n_pcs, solver="full", seed=seed)

    if config.method == "pca":
        coords = pca(X, 2, solver=config.params.get("solver", "full"), seed=seed)
        reduced = X
        diagnostics = {"solver": config.params.get("solver", "full")}
    elif config.method == "tsne":
        coords, diagnostics = run_tsne(reduced, config)
    elif config.method.startswith("external:"):
        if backends is None:
            backends = backends_from_env()
        coords = run_external_backend(reduced, config, backends, timeout=timeout)
        diagnostics = {"backend": config.method.split(":", 1)[1]}
    else:
        known = ["pca", "tsne"] + [f"external:{k}" for k in sorted(backends or {})]
        raise ValueError(f"unknown method {config.method!r}; known: {known}")

    if not np.all(np.isfinite(coords)):
        raise RuntimeError(f"{config.method} produced non-finite coordinates")
    return EmbeddingResult(
        coordinates=np.asarray(coords, dtype=float),
        config=config,
        diagnostics=diagnostics,
        elapsed=time.monotonic() - start,
        reference=reduced,
    )
