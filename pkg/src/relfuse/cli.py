"""Command-line interface.

Subcommands::

    rel er assess <file> [--mode raw|proportional] [--out <file>]
    rel eb fit <file> [--out <file>]
    rel eb predict <fit> --unit <id> [--mission-time <t>] [--out <file>]
    rel validate <file> --kind er|eb [--tolerance <x>] [--out <file>]

Exit codes: 0 success; 2 validation or parse error; 3 total conflict;
4 too few units to fit; 5 oracle deviation beyond tolerance.

Reports go to stdout unless ``--out`` is given; human-readable status and
errors go to stderr. Respects ``NO_COLOR``.
"""

from __future__ import annotations

import argparse
import os
import sys

from .aggregation import AggregationResult, aggregate_tree
from .beliefs import AggregationConfig, AggregationMode, AttributeNode
from .errors import (
    InsufficientUnitsError,
    RelfuseError,
    TotalConflictError,
    ValidationError,
)
from .files import load_json, observation_set_from_data, parse_assessment, parse_observations
from .inference import (
    FitResult,
    HyperParams,
    PredictiveQuery,
    PredictiveTarget,
    PriorFamily,
    fit_hyperparams,
    posterior,
    posterior_predictive_reliability,
)
from .oracles import (
    HyperPrior,
    aggregate_tree_powerset,
    discretize_conjugate,
    grid_marginal_argmax,
    hierarchical_posterior_quadrature,
    tv_distance,
)
from .reports import (
    REPORT_FORMAT,
    eb_fit_report,
    eb_predict_report,
    eb_validate_report,
    er_assessment_report,
    er_validate_report,
    write_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFLICT = 3
EXIT_INSUFFICIENT = 4
EXIT_TOLERANCE = 5

#: Default tolerances applied by ``rel validate``.
ER_DEVIATION_TOL = 1e-12
EB_OPTIMIZER_GAP_TOL = 1e-3
EB_TV_TOL = 0.1
EB_GRID_CONVERGENCE_TOL = 1e-3


def _use_color() -> bool:
    return sys.stderr.isatty() and not os.environ.get("NO_COLOR")


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def _fail(message: str) -> None:
    prefix = "\x1b[31merror:\x1b[0m" if _use_color() else "error:"
    print(f"{prefix} {message}", file=sys.stderr)


def _code_for(exc: RelfuseError) -> int:
    if isinstance(exc, TotalConflictError):
        return EXIT_CONFLICT
    if isinstance(exc, InsufficientUnitsError):
        return EXIT_INSUFFICIENT
    return EXIT_VALIDATION


def cmd_er_assess(
    path: str, mode: str = "raw", out: str | None = None
) -> tuple[int, dict | None]:
    """Aggregate an assessment file and write the per-node report."""
    try:
        frame, root = parse_assessment(path)
        config = AggregationConfig(AggregationMode(mode))
        result = aggregate_tree(root, frame, config)
    except RelfuseError as exc:
        _fail(str(exc))
        return _code_for(exc), None
    report = er_assessment_report(frame, root, result, config)
    write_report(report, out)
    return EXIT_OK, report


def cmd_eb_fit(path: str, out: str | None = None) -> tuple[int, dict | None]:
    """Fit prior hyperparameters to an observation file and write the report."""
    try:
        obs = parse_observations(path)
        fit = fit_hyperparams(obs)
    except RelfuseError as exc:
        _fail(str(exc))
        return _code_for(exc), None
    report = eb_fit_report(obs, fit)
    write_report(report, out)
    return EXIT_OK, report


def _require(data: dict, key: str, where: str):
    if not isinstance(data, dict) or key not in data:
        raise ValidationError(f"fit report is missing field {key!r}", path=where)
    return data[key]


def cmd_eb_predict(
    fit_path: str,
    unit_id: str,
    mission_time: float | None = None,
    out: str | None = None,
) -> tuple[int, dict | None]:
    """Predict one unit's reliability from a previously written fit report."""
    try:
        data = load_json(fit_path)
        where = str(fit_path)
        if data.get("format") != REPORT_FORMAT:
            raise ValidationError(
                f"not a {REPORT_FORMAT} report", path=where
            )
        if data.get("kind") != "eb-fit":
            raise ValidationError(
                f"expected an eb-fit report, got {data.get('kind')!r}", path=where
            )
        obs = observation_set_from_data(_require(data, "input", where), source=where)
        fit_data = _require(data, "fit", where)
        estimate = HyperParams(tuple(_require(fit_data, "estimate", where)))
        fit = FitResult(
            estimate=estimate,
            log_marginal=float(_require(fit_data, "log_marginal", where)),
            init=HyperParams(tuple(_require(fit_data, "init", where))),
            init_fallback=bool(fit_data.get("init_fallback", False)),
            converged=bool(_require(fit_data, "converged", where)),
            at_bound=bool(_require(fit_data, "at_bound", where)),
        )
        unit = obs.unit(unit_id)
        if obs.family is PriorFamily.BETA_BINOMIAL:
            if mission_time is not None:
                raise ValidationError(
                    "--mission-time applies to gamma families; "
                    "beta-binomial predicts next-demand success"
                )
            query = PredictiveQuery(PredictiveTarget.NEXT_DEMAND)
        else:
            if mission_time is None:
                raise ValidationError(
                    f"--mission-time is required for the {obs.family.value} family"
                )
            query = PredictiveQuery(PredictiveTarget.MISSION_SURVIVAL, mission_time)
        reliability = posterior_predictive_reliability(obs.family, fit, unit, query)
        post = posterior(obs.family, estimate, unit)
    except RelfuseError as exc:
        _fail(str(exc))
        return _code_for(exc), None
    report = eb_predict_report(
        obs.family, unit, estimate.params, post, query, reliability
    )
    write_report(report, out)
    return EXIT_OK, report


def _result_deviation(a: AggregationResult, b: AggregationResult) -> float:
    belief_dev = max(
        abs(x - y)
        for x, y in zip(a.combined_beliefs.beliefs, b.combined_beliefs.beliefs)
    )
    return max(belief_dev, abs(a.unassigned - b.unassigned))


def _validate_er(path: str, tolerance: float | None) -> tuple[int, dict]:
    frame, root = parse_assessment(path)
    config = AggregationConfig(AggregationMode.RAW)
    implementation = aggregate_tree(root, frame, config)
    reference = aggregate_tree_powerset(root, frame, config)
    per_node: dict[str, float] = {}

    def walk(node: AttributeNode, impl: AggregationResult, ref: AggregationResult, path_: str):
        per_node[path_] = _result_deviation(impl, ref)
        for child in node.children:
            if child.id in impl.per_node:
                walk(
                    child,
                    impl.per_node[child.id],
                    ref.per_node[child.id],
                    f"{path_}/{child.id}",
                )

    walk(root, implementation, reference, root.id)
    tol = ER_DEVIATION_TOL if tolerance is None else tolerance
    max_dev = max(per_node.values())
    passed = max_dev <= tol
    return (
        EXIT_OK if passed else EXIT_TOLERANCE,
        er_validate_report(tol, max_dev, per_node, passed),
    )


def _validate_eb(path: str, tolerance: float | None) -> tuple[int, dict]:
    obs = parse_observations(path)
    fit = fit_hyperparams(obs)
    grid_best, grid_value = grid_marginal_argmax(obs, HyperPrior())
    gap = max(0.0, grid_value - fit.log_marginal)
    gap_tol = EB_OPTIMIZER_GAP_TOL if tolerance is None else tolerance

    unit = obs.units_sorted()[0]
    fine = hierarchical_posterior_quadrature(obs, unit, HyperPrior(resolution=200))
    coarse = hierarchical_posterior_quadrature(
        obs, unit, HyperPrior(resolution=100), support=fine.support
    )
    eb_posterior = discretize_conjugate(
        obs.family, posterior(obs.family, fit.estimate, unit), fine.support
    )
    tv_eb = tv_distance(eb_posterior, fine)
    tv_grid = tv_distance(coarse, fine)

    optimizer = {
        "fitted_log_marginal": fit.log_marginal,
        "grid_best_log_marginal": grid_value,
        "grid_best_params": list(grid_best.params),
        "gap": gap,
        "tolerance": gap_tol,
        "pass": gap <= gap_tol,
    }
    eb_vs_hier = {
        "unit": unit.id,
        "tv_distance": tv_eb,
        "tolerance": EB_TV_TOL,
        "pass": tv_eb <= EB_TV_TOL,
    }
    convergence = {
        "resolutions": [100, 200],
        "tv_distance": tv_grid,
        "tolerance": EB_GRID_CONVERGENCE_TOL,
        "pass": tv_grid <= EB_GRID_CONVERGENCE_TOL,
    }
    passed = optimizer["pass"] and eb_vs_hier["pass"] and convergence["pass"]
    return (
        EXIT_OK if passed else EXIT_TOLERANCE,
        eb_validate_report(optimizer, eb_vs_hier, convergence, passed),
    )


def cmd_validate(
    path: str, kind: str, tolerance: float | None = None, out: str | None = None
) -> tuple[int, dict | None]:
    """Run the oracle cross-checks for a file and report agreement metrics."""
    try:
        if kind == "er":
            code, report = _validate_er(path, tolerance)
        elif kind == "eb":
            code, report = _validate_eb(path, tolerance)
        else:
            raise ValidationError(f"unknown validation kind {kind!r}; use er or eb")
    except RelfuseError as exc:
        _fail(str(exc))
        return _code_for(exc), None
    write_report(report, out)
    if code == EXIT_OK:
        _say("validation passed")
    else:
        _fail("validation failed: deviation beyond tolerance (see report)")
    return code, report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rel",
        description="Reliability assessment from expert-elicited data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    er = sub.add_parser("er", help="evidential aggregation over attribute trees")
    er_sub = er.add_subparsers(dest="subcommand", required=True)
    assess = er_sub.add_parser("assess", help="aggregate an assessment file")
    assess.add_argument("file", help="assessment JSON file")
    assess.add_argument(
        "--mode",
        choices=[m.value for m in AggregationMode],
        default=AggregationMode.RAW.value,
        help="how leftover ignorance is reported (default: raw)",
    )
    assess.add_argument("--out", help="write the report here instead of stdout")
    assess.set_defaults(
        run=lambda args: cmd_er_assess(args.file, args.mode, args.out)[0]
    )

    eb = sub.add_parser("eb", help="empirical Bayes fitting and prediction")
    eb_sub = eb.add_subparsers(dest="subcommand", required=True)
    fit = eb_sub.add_parser("fit", help="fit prior hyperparameters to observations")
    fit.add_argument("file", help="observation JSON file")
    fit.add_argument("--out", help="write the report here instead of stdout")
    fit.set_defaults(run=lambda args: cmd_eb_fit(args.file, args.out)[0])

    predict = eb_sub.add_parser(
        "predict", help="per-unit predictive reliability from a fit report"
    )
    predict.add_argument("fit", help="fit report written by 'rel eb fit'")
    predict.add_argument("--unit", required=True, help="unit id to predict for")
    predict.add_argument(
        "--mission-time",
        type=float,
        default=None,
        help="mission duration (gamma families only)",
    )
    predict.add_argument("--out", help="write the report here instead of stdout")
    predict.set_defaults(
        run=lambda args: cmd_eb_predict(
            args.fit, args.unit, args.mission_time, args.out
        )[0]
    )

    validate = sub.add_parser("validate", help="cross-check a file against the oracles")
    validate.add_argument("file", help="assessment or observation JSON file")
    validate.add_argument("--kind", choices=["er", "eb"], required=True)
    validate.add_argument(
        "--tolerance",
        type=float,
        default=None,
        help="override the primary tolerance (er: max deviation; eb: optimizer gap)",
    )
    validate.add_argument("--out", help="write the report here instead of stdout")
    validate.set_defaults(
        run=lambda args: cmd_validate(args.file, args.kind, args.tolerance, args.out)[0]
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except RelfuseError as exc:  # guards paths outside the cmd_* handlers
        _fail(str(exc))
        return _code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
