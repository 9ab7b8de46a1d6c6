"""Report construction and deterministic JSON rendering.

Reports are plain dicts with a fixed field order and are rendered with the
standard shortest round-trip float representation, so identical inputs and
flags produce byte-identical output.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .aggregation import AggregationResult
from .beliefs import AggregationConfig, AttributeNode, GradeFrame, expected_score_interval
from .files import serialize_assessment, serialize_observations
from .inference import (
    FitResult,
    ObservationSet,
    PosteriorParams,
    PredictiveQuery,
    PredictiveTarget,
    PriorFamily,
    UnitData,
)

REPORT_FORMAT = "relfuse-report/1"


def render_report(report: dict) -> str:
    return json.dumps(report, indent=2, ensure_ascii=False) + "\n"


def write_report(report: dict, out: str | None) -> None:
    """Write to ``out``, or stdout when ``out`` is None."""
    text = render_report(report)
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def er_assessment_report(
    frame: GradeFrame,
    root: AttributeNode,
    result: AggregationResult,
    config: AggregationConfig,
) -> dict:
    """Per-node aggregates keyed by node path, in top-down walk order."""
    nodes: dict[str, dict] = {}

    def walk(node: AttributeNode, res: AggregationResult, path: str) -> None:
        nodes[path] = {
            "beliefs": list(res.combined_beliefs.beliefs),
            "unassigned": res.unassigned,
            "expected_score": list(
                expected_score_interval(frame, res.combined_beliefs)
            ),
            "combination_steps": [
                {"conflict_mass": d.conflict_mass, "normalizer": d.normalizer}
                for d in res.diagnostics
            ],
        }
        for child in node.children:
            if child.id in res.per_node:
                walk(child, res.per_node[child.id], f"{path}/{child.id}")

    walk(root, result, root.id)
    return {
        "format": REPORT_FORMAT,
        "kind": "er-assessment",
        "mode": config.mode.value,
        "tolerance": config.tolerance,
        "grades": list(frame.labels),
        "utilities": list(frame.utilities),
        "input": serialize_assessment(frame, root),
        "results": nodes,
    }


def _prior_mean(family: PriorFamily, params: tuple[float, float]) -> float:
    a, b = params
    if family is PriorFamily.BETA_BINOMIAL:
        return a / (a + b)
    return a / b


def eb_fit_report(obs: ObservationSet, fit: FitResult) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": "eb-fit",
        "family": obs.family.value,
        "input": serialize_observations(obs),
        "fit": {
            "estimate": list(fit.estimate.params),
            "log_marginal": fit.log_marginal,
            "init": list(fit.init.params),
            "init_fallback": fit.init_fallback,
            "converged": fit.converged,
            "at_bound": fit.at_bound,
            "prior_mean": _prior_mean(obs.family, fit.estimate.params),
        },
    }


def eb_predict_report(
    family: PriorFamily,
    unit: UnitData,
    estimate: tuple[float, float],
    post: PosteriorParams,
    query: PredictiveQuery,
    reliability: float,
) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": "eb-predict",
        "family": family.value,
        "unit": unit.id,
        "estimate": list(estimate),
        "posterior": list(post.params),
        "target": query.target.value,
        "mission_time": (
            query.mission_time
            if query.target is PredictiveTarget.MISSION_SURVIVAL
            else None
        ),
        "reliability": reliability,
    }


def er_validate_report(
    tolerance: float, max_deviation: float, per_node: dict[str, float], passed: bool
) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": "validate-er",
        "tolerance": tolerance,
        "max_deviation": max_deviation,
        "per_node_deviation": per_node,
        "pass": passed,
    }


def eb_validate_report(
    optimizer: dict, eb_vs_hierarchical: dict, grid_convergence: dict, passed: bool
) -> dict:
    return {
        "format": REPORT_FORMAT,
        "kind": "validate-eb",
        "optimizer": optimizer,
        "eb_vs_hierarchical": eb_vs_hierarchical,
        "grid_convergence": grid_convergence,
        "pass": passed,
    }
