"""Command-line interface: run the loop, evaluate once, or replay a run."""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys

from .agent import LLMAgent, MockAgent, WeightVector
from .data import load_csv
from .dr import BackendError, backends_from_env, default_config
from .pipeline import replay_trajectory, run_pipeline

STOP_ERROR = "error"


def _load_config_file(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return doc


def _merged(args, file_cfg, key, default=None):
    """Explicit flags win over the config file, which wins over defaults."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in file_cfg:
        return file_cfg[key]
    return default


def _weights(spec_str):
    if spec_str is None:
        spec_str = "gpt-5.2"
    if os.path.exists(spec_str):
        return WeightVector.from_json_file(spec_str)
    return WeightVector.from_preset(spec_str)


def _backends(file_cfg):
    registry = backends_from_env()
    for name, cmd in file_cfg.get("backends", {}).items():
        registry[name.lower()] = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
    return registry


def _agent(kind, weights, file_cfg):
    if kind == "mock":
        return MockAgent(weights)
    if kind == "llm":
        url = file_cfg.get("llm_url")
        model = file_cfg.get("llm_model")
        if not url or not model:
            raise ValueError("llm agent needs llm_url and llm_model in the config file")
        return LLMAgent(
            url=url, model=model,
            credential_env=file_cfg.get("credential_env", "VIZREFINE_API_KEY"),
            temperature=file_cfg.get("llm_temperature", 0.0),
            attach_plot=bool(file_cfg.get("llm_attach_plot", False)))
    raise ValueError(f"unknown agent kind {kind!r}")


def _build_dr_config(method, X, seed, file_cfg, params_json=None):
    config = default_config(method, n_rows=X.shape[0], n_cols=X.shape[1], seed=seed)
    overrides = {}
    overrides.update(file_cfg.get("params", {}))
    if params_json:
        overrides.update(json.loads(params_json))
    if overrides:
        config = config.with_params(**overrides)
    return config.validate()


def cmd_run(args):
    file_cfg = _load_config_file(args.config)
    data_path = _merged(args, file_cfg, "data")
    if not data_path:
        raise ValueError("run needs --data (or 'data' in the config file)")
    label_col = _merged(args, file_cfg, "label_col")
    method = _merged(args, file_cfg, "method", "tsne")
    mode = _merged(args, file_cfg, "mode", "explicit")
    agent_kind = _merged(args, file_cfg, "agent", "mock")
    weights = _weights(_merged(args, file_cfg, "weights"))
    max_iter = int(_merged(args, file_cfg, "max_iter", 10))
    epsilon = _merged(args, file_cfg, "epsilon")
    seed = int(_merged(args, file_cfg, "seed", 0))
    out = _merged(args, file_cfg, "out")

    X, labels, _names = load_csv(data_path, label_col)
    config = _build_dr_config(method, X, seed, file_cfg)
    agent = _agent(agent_kind, weights, file_cfg)
    traj = run_pipeline(
        X, labels, config, agent, mode=mode, weights=weights,
        max_iterations=max_iter,
        epsilon=float(epsilon) if epsilon is not None else None,
        out_dir=out, backends=_backends(file_cfg),
        run_id=os.path.splitext(os.path.basename(data_path))[0],
        dataset_ref=data_path, seed=seed)

    for rec in traj.records:
        knobs = " ".join(f"{k}={v}" for k, v in rec.config.params.items()
                         if k != "seed")
        print(f"iter {rec.iteration}: composite {rec.composite:.4f} "
              f"quality {rec.quality:.2f} [{knobs}]")
    if traj.records:
        best = traj.best
        print(f"best iteration: {best.iteration} "
              f"(composite {best.composite:.4f}, quality {best.quality:.2f})")
    print(f"stop reason: {traj.stop_reason}")
    if traj.error:
        print(f"error: {traj.error}", file=sys.stderr)
    if out:
        print(f"artifacts written to {out}")
    return 1 if traj.stop_reason == STOP_ERROR else 0


def cmd_evaluate(args):
    from .agent import explicit_composite_score
    from .dr import compute_embedding
    from .hierarchy import label_centroids, upgma
    from .metrics import assemble_report, metrics_block, pairwise_distances

    file_cfg = _load_config_file(args.config)
    data_path = _merged(args, file_cfg, "data")
    if not data_path:
        raise ValueError("evaluate needs --data (or 'data' in the config file)")
    label_col = _merged(args, file_cfg, "label_col")
    method = _merged(args, file_cfg, "method", "tsne")
    weights = _weights(_merged(args, file_cfg, "weights"))
    seed = int(_merged(args, file_cfg, "seed", 0))

    X, labels, _names = load_csv(data_path, label_col)
    config = _build_dr_config(method, X, seed, file_cfg, params_json=args.params)
    result = compute_embedding(X, config, backends=_backends(file_cfg))
    n_metric = min(X.shape[0], 2000)
    report = assemble_report(
        result.reference, result.coordinates,
        [str(l) for l in labels] if labels is not None else None,
        neighbor_k=max(1, min(10, (n_metric - 1) // 2)),
        lof_k=max(1, min(20, n_metric - 1)), subsample_seed=seed)
    doc = {
        "config": config.to_dict(),
        "metrics": metrics_block(report),
        "composite_score": explicit_composite_score(report, weights),
    }
    print(json.dumps(doc, indent=2))

    out = _merged(args, file_cfg, "out")
    if out:
        from .render import render_dendrogram, render_scatter
        os.makedirs(out, exist_ok=True)
        labels_eff = [str(l) for l in labels] if labels is not None else None
        with open(os.path.join(out, "iter_1_scatter.svg"), "w") as fh:
            fh.write(render_scatter(result.coordinates, labels_eff))
        if labels_eff is not None:
            cents_hd, order = label_centroids(result.reference, labels_eff)
            cents_2d, _ = label_centroids(result.coordinates, labels_eff)
            with open(os.path.join(out, "iter_1_dendro_hd.svg"), "w") as fh:
                fh.write(render_dendrogram(upgma(pairwise_distances(cents_hd), order)))
            with open(os.path.join(out, "iter_1_dendro_2d.svg"), "w") as fh:
                fh.write(render_dendrogram(upgma(pairwise_distances(cents_2d), order)))
    return 0


def cmd_replay(args):
    written = replay_trajectory(args.run, args.out)
    print(f"re-rendered {len(written)} files into {args.out or args.run}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vizrefine",
        description="Agent-driven refinement of 2D embedding hyperparameters")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the iterative refinement loop")
    run.add_argument("--data", help="CSV dataset with a header row")
    run.add_argument("--label-col", dest="label_col", help="label column name")
    run.add_argument("--method", help="tsne | pca | external:NAME")
    run.add_argument("--mode", choices=["implicit", "explicit"])
    run.add_argument("--agent", choices=["mock", "llm"])
    run.add_argument("--weights",
                     help="preset (gpt-5.2 | claude-opus-4-5 | gemini-3-pro-preview)"
                          " or path to a weights JSON file")
    run.add_argument("--max-iter", dest="max_iter", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="artifact output directory")
    run.add_argument("--config", help="JSON config file; flags win over it")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("evaluate", help="one-shot metrics report for a config")
    ev.add_argument("--data")
    ev.add_argument("--label-col", dest="label_col")
    ev.add_argument("--method")
    ev.add_argument("--weights")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--params", help="JSON object of hyperparameter overrides")
    ev.add_argument("--out", help="directory for rendered artifacts")
    ev.add_argument("--config", help="JSON config file; flags win over it")
    ev.set_defaults(func=cmd_evaluate)

    rp = sub.add_parser("replay", help="re-render artifacts from a stored run")
    rp.add_argument("--run", required=True, help="stored run directory")
    rp.add_argument("--out", help="output directory (default: the run directory)")
    rp.set_defaults(func=cmd_replay)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
