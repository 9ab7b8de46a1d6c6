"""Value types for graded reliability assessments.

A :class:`GradeFrame` fixes the ordered evaluation grades shared by every
attribute in a tree. Each attribute is assessed by a
:class:`BeliefDistribution` over those grades, possibly incomplete; weighted
aggregation works on :class:`MassFunction` values, which spread one
attribute's discounted belief over the grades plus the whole frame.

Everything here is immutable and validated on construction, so the
aggregation and reporting layers can assume well-formed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import ValidationError

#: Absolute tolerance for sums that must equal (or must not exceed) one.
SUM_TOL = 1e-12


def _float_tuple(values: Iterable, what: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what} must be a sequence of numbers") from exc


@dataclass(frozen=True)
class GradeFrame:
    """Ordered set of evaluation grades, worst to best.

    Each grade carries a utility score in [0, 1]; utilities must be
    non-decreasing so score order agrees with grade order.
    """

    labels: tuple[str, ...]
    utilities: tuple[float, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        if not all(isinstance(lbl, str) and lbl for lbl in labels):
            raise ValidationError("grade labels must be non-empty strings")
        if len(labels) < 2:
            raise ValidationError("a grade frame needs at least 2 grades")
        if len(set(labels)) != len(labels):
            raise ValidationError("grade labels must be unique")
        utilities = _float_tuple(self.utilities, "utilities")
        if len(utilities) != len(labels):
            raise ValidationError(
                f"expected {len(labels)} utilities, got {len(utilities)}"
            )
        for u in utilities:
            if not (math.isfinite(u) and 0.0 <= u <= 1.0):
                raise ValidationError(f"utility {u!r} outside [0, 1]")
        if any(b < a for a, b in zip(utilities, utilities[1:])):
            raise ValidationError("utilities must be non-decreasing with grade order")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "utilities", utilities)

    @property
    def size(self) -> int:
        return len(self.labels)


def make_frame(
    labels: Sequence[str], utilities: Sequence[float] | None = None
) -> GradeFrame:
    """Build a grade frame; utilities default to equal spacing on [0, 1]."""
    labels = tuple(labels)
    if utilities is None:
        n = len(labels)
        if n < 2:
            raise ValidationError("a grade frame needs at least 2 grades")
        utilities = tuple(i / (n - 1) for i in range(n))
    return GradeFrame(labels, tuple(utilities))


@dataclass(frozen=True)
class BeliefDistribution:
    """Degrees of belief over the grades of a frame.

    Entries may sum to less than one; the shortfall (``residual``) is the
    unassigned, "could be anything" share of an incomplete assessment.
    """

    beliefs: tuple[float, ...]
    residual: float = field(init=False)

    def __post_init__(self):
        beliefs = _float_tuple(self.beliefs, "beliefs")
        if not beliefs:
            raise ValidationError("belief vector must not be empty")
        for b in beliefs:
            if not (math.isfinite(b) and 0.0 <= b <= 1.0):
                raise ValidationError(f"belief {b!r} outside [0, 1]")
        total = math.fsum(beliefs)
        if total > 1.0 + SUM_TOL:
            raise ValidationError(f"beliefs sum to {total}, which exceeds 1")
        object.__setattr__(self, "beliefs", beliefs)
        object.__setattr__(self, "residual", min(1.0, max(0.0, 1.0 - total)))


def make_belief(frame: GradeFrame, beliefs: Sequence[float]) -> BeliefDistribution:
    """Validate a belief vector against ``frame`` and attach its residual."""
    values = _float_tuple(beliefs, "beliefs")
    if len(values) != frame.size:
        raise ValidationError(f"expected {frame.size} beliefs, got {len(values)}")
    return BeliefDistribution(values)


def expected_score_interval(
    frame: GradeFrame, belief: BeliefDistribution
) -> tuple[float, float]:
    """Pessimistic and optimistic expected utility of an assessment.

    The residual is scored at the worst grade for the lower bound and at the
    best grade for the upper bound, so the interval width is exactly
    ``residual * (u_max - u_min)``.
    """
    if len(belief.beliefs) != frame.size:
        raise ValidationError(
            f"belief has {len(belief.beliefs)} entries, frame has {frame.size} grades"
        )
    low = math.fsum(
        [b * u for b, u in zip(belief.beliefs, frame.utilities)]
        + [belief.residual * frame.utilities[0]]
    )
    width = belief.residual * (frame.utilities[-1] - frame.utilities[0])
    return low, min(1.0, low + width)


@dataclass(frozen=True)
class MassFunction:
    """Probability masses on each singleton grade plus the whole frame."""

    singleton_masses: tuple[float, ...]
    frame_mass: float

    def __post_init__(self):
        masses = _float_tuple(self.singleton_masses, "singleton masses")
        frame_mass = float(self.frame_mass)
        if not masses:
            raise ValidationError("mass vector must not be empty")
        for m in (*masses, frame_mass):
            if not (math.isfinite(m) and m >= 0.0):
                raise ValidationError(f"mass {m!r} must be a non-negative number")
        total = math.fsum((*masses, frame_mass))
        if abs(total - 1.0) > SUM_TOL:
            raise ValidationError(f"masses sum to {total}, expected 1")
        object.__setattr__(self, "singleton_masses", masses)
        object.__setattr__(self, "frame_mass", frame_mass)

    @property
    def size(self) -> int:
        return len(self.singleton_masses)


@dataclass(frozen=True)
class AttributeNode:
    """Node of a weighted attribute hierarchy.

    Leaves carry a belief assessment; internal nodes carry children. Weights
    are relative among siblings and get normalized during aggregation.
    """

    id: str
    weight: float
    belief: BeliefDistribution | None = None
    children: tuple[AttributeNode, ...] = ()

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("attribute id must be a non-empty string")
        weight = float(self.weight)
        if not (math.isfinite(weight) and weight >= 0.0):
            raise ValidationError(f"weight {self.weight!r} must be non-negative")
        children = tuple(self.children)
        if (self.belief is None) == (not children):
            raise ValidationError(
                "a node carries either a belief (leaf) or children (internal), "
                f"node {self.id!r} has "
                + ("both" if self.belief is not None else "neither")
            )
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "children", children)

    @property
    def is_leaf(self) -> bool:
        return self.belief is not None


def validate_tree(root: AttributeNode, frame: GradeFrame) -> None:
    """Check id uniqueness, frame compatibility and sibling weights.

    Raises :class:`ValidationError` naming the offending node path.
    """
    seen: dict[str, str] = {}

    def walk(node: AttributeNode, path: str) -> None:
        if node.id in seen:
            raise ValidationError(
                f"duplicate attribute id {node.id!r} (also at {seen[node.id]})",
                path=path,
            )
        seen[node.id] = path
        if node.is_leaf:
            if len(node.belief.beliefs) != frame.size:
                raise ValidationError(
                    f"assessment has {len(node.belief.beliefs)} entries, "
                    f"frame has {frame.size} grades",
                    path=path,
                )
        else:
            if not any(child.weight > 0.0 for child in node.children):
                raise ValidationError("all sibling weights are zero", path=path)
            for child in node.children:
                walk(child, f"{path}/{child.id}")

    walk(root, root.id)


class AggregationMode(Enum):
    """How the combined mass function is read back as a belief distribution."""

    RAW = "raw"  # keep leftover ignorance explicit as unassigned mass
    PROPORTIONAL = "proportional"  # renormalize over the grades


@dataclass(frozen=True)
class AggregationConfig:
    mode: AggregationMode = AggregationMode.RAW
    tolerance: float = SUM_TOL

    def __post_init__(self):
        mode = self.mode
        if not isinstance(mode, AggregationMode):
            try:
                mode = AggregationMode(mode)
            except ValueError as exc:
                valid = ", ".join(m.value for m in AggregationMode)
                raise ValidationError(
                    f"unknown aggregation mode {self.mode!r}; valid modes: {valid}"
                ) from exc
        tolerance = float(self.tolerance)
        if not (math.isfinite(tolerance) and tolerance > 0.0):
            raise ValidationError(f"tolerance must be positive, got {self.tolerance!r}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "tolerance", tolerance)
