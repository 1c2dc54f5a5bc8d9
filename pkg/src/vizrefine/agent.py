"""Agent plumbing: master prompt, diagnostic parsing, composite scores.

Each iteration the pipeline serializes its state into a JSON "master
prompt", hands it to a pluggable agent (deterministic mock or remote
LLM), and parses the agent's structured diagnostic JSON back into
validated hyperparameter recommendations.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

from .dr import DRConfig, PARAM_TYPES, TSNE_REQUIRED, default_bounds
from .metrics import metrics_block

log = logging.getLogger(__name__)

METRIC_NAMES = (
    "Trustworthiness",
    "Silhouette Score",
    "Spearman Correlation",
    "Stress-1",
    "LOF Median",
)

WEIGHT_PRESETS = {
    "gpt-5.2": {
        "Trustworthiness": 0.30,
        "Silhouette Score": 0.30,
        "Spearman Correlation": 0.20,
        "Stress-1": 0.15,
        "LOF Median": 0.05,
    },
    "claude-opus-4-5": {
        "Trustworthiness": 0.20,
        "Silhouette Score": 0.35,
        "Spearman Correlation": 0.15,
        "Stress-1": 0.10,
        "LOF Median": 0.20,
    },
    "gemini-3-pro-preview": {
        "Trustworthiness": 0.25,
        "Silhouette Score": 0.25,
        "Spearman Correlation": 0.20,
        "Stress-1": 0.15,
        "LOF Median": 0.15,
    },
}

PRIORITIES = ("high", "medium", "low")
AGREEMENT_LEVELS = ("low", "moderate", "high")

SYSTEM_INSTRUCTION = (
    "You are an expert in dimensionality reduction and data visualization. "
    "You receive a JSON document describing the current 2D embedding: metric "
    "scores, label counts, Newick dendrograms of the high-dimensional data "
    "and of the embedding, and the current hyperparameters. Respond with a "
    "single JSON object and nothing else, containing: quality_score (number, "
    "0 to 10), score_rationale (string), overall_assessment (object with "
    "key_strengths, key_weaknesses, metric_analysis), dendrogram_comparison "
    "(object with agreement_level of low|moderate|high, key_similarities, "
    "key_differences), visual_inspection (object with cluster_separation, "
    "cluster_compactness, notable_patterns, artifacts), recommendations "
    "(array of objects with parameter, current_value, suggested_value, "
    "rationale, expected_impact, priority of high|medium|low), and "
    "follow_up_metrics (array of strings). Recommend an empty array when no "
    "further hyperparameter changes are worthwhile."
)


# ---------------------------------------------------------------------------
# weights and composite score
# ---------------------------------------------------------------------------

@dataclass
class WeightVector:
    """Weights over the five scored metrics; must sum to 1."""

    weights: dict

    def validate(self):
        unknown = [k for k in self.weights if k not in METRIC_NAMES]
        if unknown:
            raise ValueError(f"unknown metric names in weights: {unknown}")
        for name, w in self.weights.items():
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight {name}={w} outside [0, 1]")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1.0")
        return self

    def get(self, name):
        return float(self.weights.get(name, 0.0))

    @classmethod
    def from_preset(cls, name):
        if name not in WEIGHT_PRESETS:
            raise ValueError(f"unknown preset {name!r}; known: {sorted(WEIGHT_PRESETS)}")
        return cls(dict(WEIGHT_PRESETS[name])).validate()

    @classmethod
    def from_json_file(cls, path):
        with open(path) as fh:
            return cls(json.load(fh)).validate()


def normalized_objectives(report):
    """Each metric mapped to higher-is-better [0, 1].

    Trustworthiness is used as-is; Silhouette and Spearman are shifted
    from [-1, 1]; Stress counts down from 0; LOF median by its distance
    from the homogeneous-density value 1.
    """
    sil = report.silhouette
    return {
        "Trustworthiness": float(report.trustworthiness),
        "Silhouette Score": None if sil is None else min(max((sil + 1.0) / 2.0, 0.0), 1.0),
        "Spearman Correlation": (float(report.spearman) + 1.0) / 2.0,
        "Stress-1": 1.0 - min(float(report.stress), 1.0),
        "LOF Median": 1.0 - min(abs(float(report.lof_median) - 1.0), 1.0),
    }


def explicit_composite_score(report, weights):
    """Weighted sum of normalized metrics, in [0, 1].

    When Silhouette is absent its weight is redistributed proportionally
    over the remaining metrics (logged).
    """
    weights.validate()
    objectives = normalized_objectives(report)
    active = dict(objectives)
    scale = 1.0
    if active["Silhouette Score"] is None:
        del active["Silhouette Score"]
        w_sil = weights.get("Silhouette Score")
        remaining = 1.0 - w_sil
        if remaining <= 0.0:
            raise ValueError("silhouette absent but it carries all the weight")
        scale = 1.0 / remaining
        if w_sil > 0.0:
            log.warning("silhouette absent; weight %.3f redistributed", w_sil)
    return sum(weights.get(name) * scale * value for name, value in active.items())


# ---------------------------------------------------------------------------
# master prompt
# ---------------------------------------------------------------------------

@dataclass
class MasterPrompt:
    """Per-iteration state document sent to the agent."""

    metrics: dict
    label_summary: dict
    hierarchy_hd: dict
    hierarchy_2d: dict
    parameters: dict
    iteration: int = 1
    plot_path: str | None = None
    report: object = field(default=None, repr=False, compare=False)

    def to_payload(self):
        return {
            "metrics": self.metrics,
            "label_summary": self.label_summary,
            "hierarchy_hd": self.hierarchy_hd,
            "hierarchy_2d": self.hierarchy_2d,
            "parameters": self.parameters,
        }

    def to_json(self):
        return json.dumps(self.to_payload(), indent=2)


def build_master_prompt(report, tree_hd, tree_2d, config, iteration,
                        hd_dimension, plot_path=None):
    """Assemble the agent's state document for one iteration.

    hd_dimension is the annotation for the reference space, e.g.
    "20D (PCA)"; metric values are rendered as 4-decimal strings.
    """
    from .hierarchy import to_newick

    parameters = {"method": config.method}
    parameters.update(config.params)
    return MasterPrompt(
        metrics=metrics_block(report),
        label_summary={str(k): int(v) for k, v in report.label_summary.items()},
        hierarchy_hd={"newick": to_newick(tree_hd), "dimension": hd_dimension},
        hierarchy_2d={"newick": to_newick(tree_2d), "dimension": "2D"},
        parameters=parameters,
        iteration=iteration,
        plot_path=plot_path,
        report=report,
    )


# ---------------------------------------------------------------------------
# diagnostic report
# ---------------------------------------------------------------------------

class DiagnosticParseError(ValueError):
    pass


@dataclass
class Recommendation:
    parameter: str
    current_value: str
    suggested_value: str
    rationale: str = ""
    expected_impact: str = ""
    priority: str = "medium"

    def to_dict(self):
        return {
            "parameter": self.parameter,
            "current_value": self.current_value,
            "suggested_value": self.suggested_value,
            "rationale": self.rationale,
            "expected_impact": self.expected_impact,
            "priority": self.priority,
        }


@dataclass
class DiagnosticReport:
    quality_score: float
    score_rationale: str = ""
    overall_assessment: dict = field(default_factory=dict)
    dendrogram_comparison: dict = field(default_factory=dict)
    visual_inspection: dict = field(default_factory=dict)
    recommendations: list = field(default_factory=list)
    follow_up_metrics: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    raw: str = ""

    def to_dict(self):
        out = {
            "quality_score": self.quality_score,
            "score_rationale": self.score_rationale,
            "overall_assessment": self.overall_assessment,
            "dendrogram_comparison": self.dendrogram_comparison,
            "visual_inspection": self.visual_inspection,
            "recommendations": [r.to_dict() for r in self.recommendations],
            "follow_up_metrics": self.follow_up_metrics,
        }
        out.update(self.extras)
        return out


def serialize_diagnostic(report):
    return json.dumps(report.to_dict(), indent=2)


def _resolve_param(config, dotted):
    """Map a possibly method-prefixed name to a bare config key.

    Returns None when the prefix names a different method than the
    active one.
    """
    key = dotted.split(".")[-1]
    if "." in dotted:
        prefix = dotted.rsplit(".", 1)[0]
        accepted = {config.method}
        if config.method.startswith("external:"):
            accepted.add(config.method.split(":", 1)[1])
        if prefix not in accepted:
            return None
    return key


def method_param_names(config):
    """Parameter keys the active method accepts."""
    if config.method == "tsne":
        names = set(TSNE_REQUIRED) | {"seed"}
    elif config.method == "pca":
        names = {"solver", "seed"}
    else:
        names = {"n_neighbors", "min_dist", "n_pcs", "seed"}
    return names | set(config.params)


def parse_diagnostic(raw, config=None):
    """Validate agent output JSON into a DiagnosticReport.

    Out-of-bounds suggested values are clamped (with a recorded warning)
    when a config is supplied; unknown extra fields are kept in .extras.
    """
    try:
        doc = json.loads(raw)
    except ValueError as exc:
        raise DiagnosticParseError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise DiagnosticParseError("expected a JSON object at top level")
    if "quality_score" not in doc:
        raise DiagnosticParseError("missing required field 'quality_score'")
    if "recommendations" not in doc:
        raise DiagnosticParseError("missing required field 'recommendations'")
    score = doc["quality_score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
        raise DiagnosticParseError(f"quality_score must be a finite number, got {score!r}")
    if not 0.0 <= score <= 10.0:
        raise DiagnosticParseError(f"quality_score {score} outside [0, 10]")
    recs_raw = doc["recommendations"]
    if not isinstance(recs_raw, list):
        raise DiagnosticParseError("recommendations must be an array")

    comparison = doc.get("dendrogram_comparison", {})
    if not isinstance(comparison, dict):
        raise DiagnosticParseError("dendrogram_comparison must be an object")
    level = comparison.get("agreement_level")
    if level is not None and level not in AGREEMENT_LEVELS:
        raise DiagnosticParseError(
            f"agreement_level must be one of {AGREEMENT_LEVELS}, got {level!r}")

    warnings = []
    recommendations = []
    for i, entry in enumerate(recs_raw):
        if not isinstance(entry, dict):
            raise DiagnosticParseError(f"recommendation {i} is not an object")
        try:
            parameter = str(entry["parameter"])
            suggested = str(entry["suggested_value"])
        except KeyError as exc:
            raise DiagnosticParseError(
                f"recommendation {i} missing field {exc.args[0]!r}") from None
        priority = entry.get("priority", "medium")
        if priority not in PRIORITIES:
            raise DiagnosticParseError(
                f"recommendation {i} priority must be one of {PRIORITIES}, got {priority!r}")
        rec = Recommendation(
            parameter=parameter,
            current_value=str(entry.get("current_value", "")),
            suggested_value=suggested,
            rationale=str(entry.get("rationale", "")),
            expected_impact=str(entry.get("expected_impact", "")),
            priority=priority,
        )
        if config is not None:
            key = _resolve_param(config, parameter)
            if key is not None and key in config.bounds:
                caster = PARAM_TYPES.get(key, float)
                try:
                    value = float(suggested)
                except ValueError:
                    raise DiagnosticParseError(
                        f"recommendation {i}: suggested_value {suggested!r} "
                        f"does not parse for parameter {key!r}") from None
                clamped = config.clamp(key, value)
                if float(clamped) != value:
                    warnings.append(
                        f"{parameter}: suggested {suggested} clamped to {clamped}")
                    rec.suggested_value = str(clamped)
                elif caster is int:
                    rec.suggested_value = str(int(clamped))
        recommendations.append(rec)

    known = {"quality_score", "score_rationale", "overall_assessment",
             "dendrogram_comparison", "visual_inspection", "recommendations",
             "follow_up_metrics"}
    extras = {k: v for k, v in doc.items() if k not in known}
    for w in warnings:
        log.warning("%s", w)
    return DiagnosticReport(
        quality_score=float(score),
        score_rationale=str(doc.get("score_rationale", "")),
        overall_assessment=doc.get("overall_assessment", {}),
        dendrogram_comparison=comparison,
        visual_inspection=doc.get("visual_inspection", {}),
        recommendations=recommendations,
        follow_up_metrics=doc.get("follow_up_metrics", []),
        extras=extras,
        warnings=warnings,
        raw=raw,
    )


def apply_recommendations(config, report):
    """Fold validated recommendations into a new config.

    Applied in priority order (high first, then listing order); names
    that do not belong to the active method are skipped with a warning.
    The input config is never modified.
    """
    order = sorted(range(len(report.recommendations)),
                   key=lambda i: (PRIORITIES.index(report.recommendations[i].priority), i))
    valid = method_param_names(config)
    updates = {}
    for i in order:
        rec = report.recommendations[i]
        key = _resolve_param(config, rec.parameter)
        if key is None or key not in valid:
            log.warning("skipping recommendation for unknown parameter %r", rec.parameter)
            continue
        caster = PARAM_TYPES.get(key, float)
        if caster is str:
            updates[key] = rec.suggested_value
            continue
        try:
            value = float(rec.suggested_value)
        except ValueError:
            log.warning("skipping unparseable value %r for %r", rec.suggested_value, key)
            continue
        updates[key] = config.clamp(key, value)
    return config.with_params(**updates) if updates else config.with_params()


# ---------------------------------------------------------------------------
# agents
# ---------------------------------------------------------------------------

class AgentError(RuntimeError):
    """Raised when an agent cannot produce a valid diagnostic."""

    def __init__(self, message, raw=""):
        super().__init__(message)
        self.raw = raw


PRIMARY_KNOB = {"tsne": "perplexity", "pca": None}
STATIONARY_EPSILON = 0.005
STEP_FACTOR = 1.5


class MockAgent:
    """Deterministic offline agent.

    Scores an embedding at 10x its explicit composite score and walks one
    method-specific parameter by coordinate descent: multiply or divide
    by 1.5, reversing direction when the composite drops, and stopping
    (empty recommendations) after two stationary steps.
    """

    def __init__(self, weights):
        self.weights = weights

    def step(self, prompt, history=()):
        if prompt.report is None:
            raise AgentError("mock agent needs the prompt's metrics report")
        composite = explicit_composite_score(prompt.report, self.weights)
        quality = 10.0 * composite
        config = self._config_of(prompt, history)
        knob = PRIMARY_KNOB.get(config.method, "n_neighbors")
        recommendations = []
        if knob is not None and knob in config.params:
            recommendations = self._propose(config, knob, composite, history)
        level = "high" if composite >= 0.8 else ("moderate" if composite >= 0.5 else "low")
        report = DiagnosticReport(
            quality_score=quality,
            score_rationale=(
                f"Composite of weighted normalized metrics is {composite:.4f}; "
                "the score scales it to the 0-10 range."),
            overall_assessment={
                "key_strengths": ["deterministic offline evaluation"],
                "key_weaknesses": ["no visual reasoning"],
                "metric_analysis": {
                    name: (f"{value:.4f}" if value is not None else "absent")
                    for name, value in normalized_objectives(prompt.report).items()
                },
            },
            dendrogram_comparison={
                "agreement_level": level,
                "key_similarities": [],
                "key_differences": [],
            },
            visual_inspection={
                "cluster_separation": "not inspected",
                "cluster_compactness": "not inspected",
                "notable_patterns": [],
                "artifacts": [],
            },
            recommendations=recommendations,
            follow_up_metrics=[],
        )
        report.raw = serialize_diagnostic(report)
        return report

    def _config_of(self, prompt, history):
        # bounds travel on the orchestrator's records; fall back to defaults
        params = {k: v for k, v in prompt.parameters.items() if k != "method"}
        bounds = history[-1].config.bounds if history else default_bounds()
        return DRConfig(method=prompt.parameters["method"], params=params,
                        bounds=dict(bounds))

    def _propose(self, config, knob, composite, history):
        cur = config.params[knob]
        direction = "up"
        if history:
            scores = [rec.composite for rec in history] + [composite]
            deltas = [abs(scores[i + 1] - scores[i]) for i in range(len(scores) - 1)]
            stationary = 0
            for d in reversed(deltas):
                if d < STATIONARY_EPSILON:
                    stationary += 1
                else:
                    break
            if stationary >= 2:
                return []
            prev = history[-1]
            prev_val = prev.config.params.get(knob, cur)
            last_dir = "up" if cur > prev_val else ("down" if cur < prev_val else "up")
            decreased = composite < prev.composite
            direction = self._reverse(last_dir) if decreased else last_dir
        suggested = self._stepped(config, knob, cur, direction)
        if suggested == cur:
            direction = self._reverse(direction)
            suggested = self._stepped(config, knob, cur, direction)
            if suggested == cur:
                return []
        caster = PARAM_TYPES.get(knob, float)
        fmt = (lambda v: str(int(v))) if caster is int else (lambda v: repr(float(v)))
        return [Recommendation(
            parameter=f"{config.method}.{knob}",
            current_value=fmt(cur),
            suggested_value=fmt(suggested),
            rationale=(
                f"Coordinate-descent step: move {knob} {direction} by a factor "
                f"of {STEP_FACTOR} to probe the score landscape."),
            expected_impact=f"Composite score change observable next iteration via {knob}.",
            priority="high" if not history else "medium",
        )]

    @staticmethod
    def _reverse(direction):
        return "down" if direction == "up" else "up"

    @staticmethod
    def _stepped(config, knob, cur, direction):
        raw = cur * STEP_FACTOR if direction == "up" else cur / STEP_FACTOR
        return config.clamp(knob, raw)


class LLMAgent:
    """Remote chat-completion agent speaking the diagnostic JSON schema."""

    def __init__(self, url, model, credential_env="VIZREFINE_API_KEY",
                 temperature=0.0, max_tokens=4096, timeout=120.0,
                 attach_plot=False, max_attempts=3):
        self.url = url
        self.model = model
        self.credential_env = credential_env
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.attach_plot = attach_plot
        self.max_attempts = max_attempts
        self.attempts_log = []

    def step(self, prompt, history=()):
        import requests

        messages = [
            {"role": "system", "content": SYSTEM_INSTRUCTION},
            {"role": "user", "content": self._user_content(prompt)},
        ]
        headers = {"Content-Type": "application/json"}
        credential = os.environ.get(self.credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        last_error = "no attempts made"
        last_raw = ""
        config = history[-1].config if history else None
        for attempt in range(1, self.max_attempts + 1):
            try:
                resp = requests.post(
                    self.url, timeout=self.timeout, headers=headers,
                    json={"model": self.model, "messages": messages,
                          "temperature": self.temperature,
                          "max_tokens": self.max_tokens})
                resp.raise_for_status()
                raw = resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last_error = f"transport failure: {exc}"
                self.attempts_log.append({"attempt": attempt, "error": last_error})
                continue
            last_raw = raw
            try:
                report = parse_diagnostic(raw, config=config)
            except DiagnosticParseError as exc:
                last_error = str(exc)
                self.attempts_log.append({"attempt": attempt, "error": last_error})
                messages.append({"role": "assistant", "content": raw})
                messages.append({
                    "role": "user",
                    "content": (
                        f"Your previous response failed validation: {exc}. "
                        "Reply again with only the corrected JSON document.")})
                continue
            self.attempts_log.append({"attempt": attempt, "error": None})
            return report
        raise AgentError(
            f"agent failed after {self.max_attempts} attempts: {last_error}",
            raw=last_raw)

    def _user_content(self, prompt):
        text = prompt.to_json()
        if self.attach_plot and prompt.plot_path:
            import base64

            with open(prompt.plot_path, "rb") as fh:
                b64 = base64.b64encode(fh.read()).decode()
            return [
                {"type": "text", "text": text},
                {"type": "image_url",
                 "image_url": {"url": f"data:image/svg+xml;base64,{b64}"}},
            ]
        return text
