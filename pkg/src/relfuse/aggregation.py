"""Weighted evidence aggregation over attribute hierarchies.

Each sibling's assessment is discounted by its normalized weight into a mass
function: ``m_n = w * beliefs_n`` on the grades, remainder on the whole
frame. Siblings are then combined pairwise with Dempster's rule restricted
to those focal elements (singletons plus the frame), and the combined mass
is read back as a belief distribution, either keeping the leftover frame
mass explicit (raw) or renormalizing over the grades (proportional).

All functions are pure; independent subtrees could be aggregated
concurrently, and results do not depend on any schedule because the fold
order within a node is fixed to input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .beliefs import (
    AggregationConfig,
    AggregationMode,
    AttributeNode,
    BeliefDistribution,
    GradeFrame,
    MassFunction,
    validate_tree,
)
from .errors import TotalConflictError, ValidationError


@dataclass(frozen=True)
class CombinationDiagnostics:
    """Conflict removed by one pairwise combination step."""

    conflict_mass: float
    normalizer: float


@dataclass(frozen=True)
class AggregationResult:
    """Aggregate for one node: combined beliefs plus per-child detail.

    ``per_node`` maps the id of each internal child to that subtree's own
    result; leaves are not listed (their assessments are the inputs).
    """

    combined_beliefs: BeliefDistribution
    unassigned: float
    per_node: Mapping[str, "AggregationResult"]
    diagnostics: tuple[CombinationDiagnostics, ...]


def normalize_weights(raw_weights: Sequence[float]) -> tuple[float, ...]:
    """Scale non-negative weights so they sum to one."""
    weights = [float(w) for w in raw_weights]
    if not weights:
        raise ValidationError("no weights given")
    for w in weights:
        if not (math.isfinite(w) and w >= 0.0):
            raise ValidationError(f"weight {w!r} must be non-negative")
    total = math.fsum(weights)
    if total <= 0.0:
        raise ValidationError("all weights are zero")
    return tuple(w / total for w in weights)


def assign_masses(weight: float, belief: BeliefDistribution) -> MassFunction:
    """Discount a belief distribution by an attribute weight in [0, 1].

    Whatever the weighted beliefs do not claim (both the discount and any
    incompleteness of the assessment) goes to the whole frame as ignorance.
    """
    weight = float(weight)
    if not (math.isfinite(weight) and 0.0 <= weight <= 1.0):
        raise ValidationError(f"weight {weight!r} outside [0, 1]")
    masses = tuple(weight * b for b in belief.beliefs)
    assigned = math.fsum(masses)
    # clamp shields against last-ulp overshoot when weight == 1 and the
    # beliefs sum to 1 + eps
    return MassFunction(masses, max(0.0, 1.0 - assigned))


def combine_pair(
    a: MassFunction, b: MassFunction
) -> tuple[MassFunction, CombinationDiagnostics]:
    """Combine two mass functions by Dempster's rule.

    Focal elements are the singleton grades and the whole frame, so the
    combined grade mass collects the agreeing product plus both
    grade-with-frame products, the combined frame mass is the product of the
    frame masses, and everything is renormalized by the surviving total.
    The arithmetic is arranged to be exactly symmetric in ``a`` and ``b``.
    """
    if a.size != b.size:
        raise ValidationError(f"frame size mismatch: {a.size} vs {b.size}")
    am, bm = a.singleton_masses, b.singleton_masses
    ah, bh = a.frame_mass, b.frame_mass
    n = a.size

    conflict = math.fsum(
        am[t] * bm[j] + am[j] * bm[t] for t in range(n) for j in range(t + 1, n)
    )
    raw = [am[k] * bm[k] + (am[k] * bh + ah * bm[k]) for k in range(n)]
    raw_frame = ah * bh
    survived = math.fsum((*raw, raw_frame))
    if conflict >= 1.0 or survived <= 0.0:
        raise TotalConflictError()
    combined = MassFunction(
        tuple(m / survived for m in raw), raw_frame / survived
    )
    return combined, CombinationDiagnostics(conflict, 1.0 / (1.0 - conflict))


def fold_attributes(
    masses: Sequence[MassFunction],
) -> tuple[MassFunction, list[CombinationDiagnostics]]:
    """Left-fold a sequence of mass functions with :func:`combine_pair`.

    A single mass is returned unchanged. The result is independent of input
    order up to rounding; diagnostics are reported in fold order.
    """
    if not masses:
        raise ValidationError("need at least one mass function to fold")
    combined = masses[0]
    diagnostics: list[CombinationDiagnostics] = []
    for index, mass in enumerate(masses[1:], start=1):
        try:
            combined, diag = combine_pair(combined, mass)
        except TotalConflictError as exc:
            raise TotalConflictError(fold_index=index) from exc
        diagnostics.append(diag)
    return combined, diagnostics


def finalize(
    combined: MassFunction, config: AggregationConfig = AggregationConfig()
) -> tuple[BeliefDistribution, float]:
    """Read a combined mass function back as (beliefs, unassigned mass).

    Raw mode keeps the frame mass as explicit unassigned ignorance;
    proportional mode spreads it over the grades pro rata, which requires at
    least some grade support.
    """
    if config.mode is AggregationMode.RAW:
        return BeliefDistribution(combined.singleton_masses), combined.frame_mass
    assigned = math.fsum(combined.singleton_masses)
    if assigned <= config.tolerance:
        raise ValidationError(
            "cannot renormalize a fully vacuous mass function in proportional mode"
        )
    return (
        BeliefDistribution(tuple(m / assigned for m in combined.singleton_masses)),
        0.0,
    )


def aggregate_tree(
    root: AttributeNode,
    frame: GradeFrame,
    config: AggregationConfig = AggregationConfig(),
) -> AggregationResult:
    """Aggregate a whole attribute tree bottom-up.

    Intermediate levels always finalize in raw mode so incompleteness keeps
    propagating upward as ignorance; ``config.mode`` applies only to the
    root. Validation and conflict errors name the offending node path.
    """
    validate_tree(root, frame)
    return _aggregate_node(root, config, root.id, is_root=True)


def _aggregate_node(
    node: AttributeNode, config: AggregationConfig, path: str, is_root: bool
) -> AggregationResult:
    node_config = (
        config
        if is_root
        else AggregationConfig(AggregationMode.RAW, config.tolerance)
    )
    per_node: dict[str, AggregationResult] = {}
    diagnostics: list[CombinationDiagnostics] = []
    if node.is_leaf:
        # only reachable when the whole tree is a single leaf
        combined = assign_masses(1.0, node.belief)
    else:
        child_beliefs: list[BeliefDistribution] = []
        for child in node.children:
            if child.is_leaf:
                child_beliefs.append(child.belief)
            else:
                sub = _aggregate_node(
                    child, config, f"{path}/{child.id}", is_root=False
                )
                per_node[child.id] = sub
                child_beliefs.append(sub.combined_beliefs)
        weights = normalize_weights([child.weight for child in node.children])
        masses = [assign_masses(w, b) for w, b in zip(weights, child_beliefs)]
        try:
            combined, diagnostics = fold_attributes(masses)
        except TotalConflictError as exc:
            raise TotalConflictError(path=path, fold_index=exc.fold_index) from exc
    try:
        beliefs, unassigned = finalize(combined, node_config)
    except ValidationError as exc:
        raise ValidationError(str(exc), path=path) from exc
    return AggregationResult(beliefs, unassigned, per_node, tuple(diagnostics))
