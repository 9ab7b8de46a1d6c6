"""JSON file formats for assessments and observation sets.

An assessment file carries the grade frame (labels plus optional utilities)
and the weighted attribute tree; an observation file carries a family tag
and one record per unit with family-specific field names. Parsing is
strict: unknown fields and structural problems are reported with the node
path or unit id that caused them.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .beliefs import (
    AttributeNode,
    BeliefDistribution,
    GradeFrame,
    make_frame,
    validate_tree,
)
from .errors import ValidationError
from .inference import ObservationSet, PriorFamily, Provenance, UnitData

#: Per-family JSON field names, as (exposure-like, events-like).
UNIT_FIELDS = {
    PriorFamily.BETA_BINOMIAL: ("trials", "successes"),
    PriorFamily.GAMMA_POISSON: ("exposure", "events"),
    PriorFamily.GAMMA_EXPONENTIAL: ("total_time", "failures"),
}


def load_json(path) -> dict:
    """Read a UTF-8 JSON object, turning I/O and syntax problems into
    :class:`ValidationError` with file/line context."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be a JSON object")
    return data


def _check_keys(obj: dict, allowed: set, required: set, where: str) -> None:
    missing = sorted(required - obj.keys())
    if missing:
        raise ValidationError(f"missing required field(s): {', '.join(missing)}", path=where)
    unknown = sorted(obj.keys() - allowed)
    if unknown:
        raise ValidationError(f"unknown field(s): {', '.join(unknown)}", path=where)


def _number(value: Any, field: str, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"field {field!r} must be a number", path=where)
    return float(value)


def parse_assessment(path) -> tuple[GradeFrame, AttributeNode]:
    """Load and fully validate an assessment file."""
    data = load_json(path)
    where = str(path)
    _check_keys(data, {"grades", "utilities", "root"}, {"grades", "root"}, where)
    grades = data["grades"]
    if not isinstance(grades, list) or not all(isinstance(g, str) for g in grades):
        raise ValidationError("'grades' must be a list of strings", path=where)
    utilities = data.get("utilities")
    if utilities is not None and not isinstance(utilities, list):
        raise ValidationError("'utilities' must be a list of numbers", path=where)
    frame = make_frame(grades, utilities)
    if not isinstance(data["root"], dict):
        raise ValidationError("'root' must be an object", path=where)
    root = _parse_node(data["root"], parent_path="")
    validate_tree(root, frame)
    return frame, root


def _parse_node(obj: dict, parent_path: str) -> AttributeNode:
    if not isinstance(obj, dict):
        raise ValidationError(
            "tree nodes must be objects", path=parent_path or "root"
        )
    node_id = obj.get("id")
    if not isinstance(node_id, str) or not node_id:
        raise ValidationError(
            "node is missing a non-empty string 'id'", path=parent_path or "root"
        )
    path = f"{parent_path}/{node_id}" if parent_path else node_id
    _check_keys(obj, {"id", "weight", "beliefs", "children"}, {"id", "weight"}, path)
    weight = _number(obj["weight"], "weight", path)
    has_beliefs = "beliefs" in obj
    has_children = "children" in obj
    if has_beliefs == has_children:
        raise ValidationError(
            "node needs exactly one of 'beliefs' or 'children'", path=path
        )
    try:
        if has_beliefs:
            beliefs = obj["beliefs"]
            if not isinstance(beliefs, list):
                raise ValidationError("'beliefs' must be a list of numbers", path=path)
            values = tuple(_number(b, "beliefs", path) for b in beliefs)
            return AttributeNode(node_id, weight, belief=BeliefDistribution(values))
        children = obj["children"]
        if not isinstance(children, list) or not children:
            raise ValidationError("'children' must be a non-empty list", path=path)
        kids = tuple(_parse_node(child, path) for child in children)
        return AttributeNode(node_id, weight, children=kids)
    except ValidationError as exc:
        if exc.path is None:
            raise ValidationError(str(exc), path=path) from exc
        raise


def serialize_assessment(frame: GradeFrame, root: AttributeNode) -> dict:
    """Assessment as a JSON-ready dict; parsing it back round-trips."""

    def node_dict(node: AttributeNode) -> dict:
        entry: dict[str, Any] = {"id": node.id, "weight": node.weight}
        if node.is_leaf:
            entry["beliefs"] = list(node.belief.beliefs)
        else:
            entry["children"] = [node_dict(child) for child in node.children]
        return entry

    return {
        "grades": list(frame.labels),
        "utilities": list(frame.utilities),
        "root": node_dict(root),
    }


def parse_observations(path) -> ObservationSet:
    """Load and fully validate an observation file."""
    return observation_set_from_data(load_json(path), source=str(path))


def observation_set_from_data(data: dict, source: str = "observations") -> ObservationSet:
    """Build an :class:`ObservationSet` from already-loaded JSON data."""
    _check_keys(data, {"family", "units"}, {"family", "units"}, source)
    try:
        family = PriorFamily(data["family"])
    except ValueError as exc:
        valid = ", ".join(f.value for f in PriorFamily)
        raise ValidationError(
            f"unknown family {data['family']!r}; valid families: {valid}", path=source
        ) from exc
    entries = data["units"]
    if not isinstance(entries, list) or not entries:
        raise ValidationError("'units' must be a non-empty list", path=source)
    exposure_key, events_key = UNIT_FIELDS[family]
    units = []
    for index, entry in enumerate(entries):
        where = f"{source}: units[{index}]"
        if not isinstance(entry, dict):
            raise ValidationError("unit entries must be objects", path=where)
        uid = entry.get("id")
        if not isinstance(uid, str) or not uid:
            raise ValidationError("unit is missing a non-empty string 'id'", path=where)
        where = f"{source}: unit {uid!r}"
        _check_keys(
            entry, {"id", exposure_key, events_key, "provenance"},
            {"id", exposure_key, events_key}, where,
        )
        provenance = entry.get("provenance", Provenance.OBSERVED.value)
        try:
            provenance = Provenance(provenance)
        except ValueError as exc:
            valid = ", ".join(p.value for p in Provenance)
            raise ValidationError(
                f"unknown provenance {provenance!r}; valid: {valid}", path=where
            ) from exc
        events = entry[events_key]
        if isinstance(events, bool) or not isinstance(events, (int, float)):
            raise ValidationError(f"field {events_key!r} must be a number", path=where)
        exposure = _number(entry[exposure_key], exposure_key, where)
        units.append(UnitData(uid, family, events, exposure, provenance))
    return ObservationSet(family, tuple(units))


def serialize_observations(obs: ObservationSet) -> dict:
    """Observation set as a JSON-ready dict; parsing it back round-trips."""
    exposure_key, events_key = UNIT_FIELDS[obs.family]
    units = []
    for unit in obs.units:
        exposure = unit.exposure
        if obs.family is PriorFamily.BETA_BINOMIAL:
            exposure = int(exposure)
        units.append(
            {
                "id": unit.id,
                exposure_key: exposure,
                events_key: unit.events,
                "provenance": unit.provenance.value,
            }
        )
    return {"family": obs.family.value, "units": units}
