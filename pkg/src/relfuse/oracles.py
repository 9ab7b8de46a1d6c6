"""Independent reference implementations used by tests and ``rel validate``.

Nothing here shares arithmetic with the production paths it checks: evidence
combination is done over the full subset powerset, hyperparameter estimation
by exhaustive grid search, and per-unit posteriors by mixing conjugate
posteriors over a gridded hyperprior (the full hierarchical treatment that
the point-estimate shortcut approximates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import betaln, gammaln, logsumexp
from scipy.stats import gamma as gamma_dist

from .aggregation import AggregationResult, CombinationDiagnostics
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
from .inference import (
    WORKING_BOX,
    HyperParams,
    ObservationSet,
    PosteriorParams,
    PriorFamily,
    UnitData,
    log_marginal_terms,
)

_MAX_GRADES = 16


@dataclass(frozen=True)
class PowersetMass:
    """Mass assignment over the non-empty subsets of an N-grade frame.

    Subsets are bitmasks over grade indices. Only focal (positive-mass)
    subsets are stored; the empty set must carry no mass.
    """

    n_grades: int
    masses: Mapping[int, float]

    def __post_init__(self):
        n = int(self.n_grades)
        if not 1 <= n <= _MAX_GRADES:
            raise ValidationError(f"powerset frames support 1..{_MAX_GRADES} grades")
        full = (1 << n) - 1
        cleaned: dict[int, float] = {}
        for subset, mass in self.masses.items():
            subset = int(subset)
            mass = float(mass)
            if not (math.isfinite(mass) and mass >= 0.0):
                raise ValidationError(f"mass {mass!r} must be non-negative")
            if subset == 0:
                if mass != 0.0:
                    raise ValidationError("the empty set cannot carry mass")
                continue
            if not 0 < subset <= full:
                raise ValidationError(f"subset {subset:#x} outside the frame")
            if mass > 0.0:
                cleaned[subset] = cleaned.get(subset, 0.0) + mass
        total = math.fsum(cleaned[k] for k in sorted(cleaned))
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"masses sum to {total}, expected 1")
        object.__setattr__(self, "n_grades", n)
        object.__setattr__(self, "masses", dict(cleaned))

    @property
    def frame_subset(self) -> int:
        return (1 << self.n_grades) - 1


def from_mass_function(mass: MassFunction) -> PowersetMass:
    """Embed a singletons-plus-frame mass function into the powerset."""
    entries: dict[int, float] = {}
    for index, value in enumerate(mass.singleton_masses):
        if value > 0.0:
            entries[1 << index] = value
    frame = (1 << mass.size) - 1
    if mass.frame_mass > 0.0:
        entries[frame] = entries.get(frame, 0.0) + mass.frame_mass
    if not entries:  # all-zero corner: park a zero on the frame for validity
        entries[frame] = 0.0
    return PowersetMass(mass.size, entries)


def to_mass_function(mass: PowersetMass) -> MassFunction:
    """Project back to singletons plus frame; errors on any other focal set."""
    singletons = [0.0] * mass.n_grades
    frame_mass = 0.0
    for subset in sorted(mass.masses):
        value = mass.masses[subset]
        if subset == mass.frame_subset and mass.n_grades > 1:
            frame_mass = value
        elif subset.bit_count() == 1:
            singletons[subset.bit_length() - 1] = value
        else:
            raise ValidationError(
                f"focal subset {subset:#x} is neither a singleton nor the frame"
            )
    return MassFunction(tuple(singletons), frame_mass)


def dempster_combine_powerset(a: PowersetMass, b: PowersetMass) -> PowersetMass:
    """Classical Dempster combination by brute force over focal subsets.

    Intersection products are accumulated per subset, conflict (mass on the
    empty set) is discarded, and the remainder is renormalized. Arguments
    are ordered canonically first so combination commutes bitwise.
    """
    if a.n_grades != b.n_grades:
        raise ValidationError(
            f"frame size mismatch: {a.n_grades} vs {b.n_grades}"
        )
    first = tuple(sorted(a.masses.items()))
    second = tuple(sorted(b.masses.items()))
    if second < first:
        first, second = second, first
    accumulated: dict[int, float] = {}
    for subset_a, mass_a in first:
        for subset_b, mass_b in second:
            meet = subset_a & subset_b
            if meet:
                accumulated[meet] = accumulated.get(meet, 0.0) + mass_a * mass_b
    survived = math.fsum(accumulated[k] for k in sorted(accumulated))
    if survived <= 0.0:
        raise TotalConflictError()
    return PowersetMass(
        a.n_grades, {k: v / survived for k, v in accumulated.items()}
    )


def aggregate_tree_powerset(
    root: AttributeNode,
    frame: GradeFrame,
    config: AggregationConfig = AggregationConfig(),
) -> AggregationResult:
    """Reference tree aggregation driven by the powerset combination rule.

    Mirrors the production walk (normalized weights, raw read-out at
    intermediate levels) but performs every combination over the full
    powerset, independently of the singleton-plus-frame shortcut.
    """
    if frame.size > _MAX_GRADES:
        raise ValidationError(f"powerset oracle supports up to {_MAX_GRADES} grades")
    validate_tree(root, frame)
    return _oracle_node(root, frame, config, is_root=True)


def _discount(weight: float, belief: BeliefDistribution, n: int) -> PowersetMass:
    entries = {
        1 << i: weight * value
        for i, value in enumerate(belief.beliefs)
        if weight * value > 0.0
    }
    frame = (1 << n) - 1
    leftover = 1.0 - math.fsum(sorted(entries.values()))
    entries[frame] = entries.get(frame, 0.0) + max(0.0, leftover)
    return PowersetMass(n, entries)


def _oracle_node(
    node: AttributeNode, frame: GradeFrame, config: AggregationConfig, is_root: bool
) -> AggregationResult:
    n = frame.size
    per_node: dict[str, AggregationResult] = {}
    diagnostics: list[CombinationDiagnostics] = []
    if node.is_leaf:
        combined = _discount(1.0, node.belief, n)
    else:
        child_beliefs: list[BeliefDistribution] = []
        for child in node.children:
            if child.is_leaf:
                child_beliefs.append(child.belief)
            else:
                sub = _oracle_node(child, frame, config, is_root=False)
                per_node[child.id] = sub
                child_beliefs.append(sub.combined_beliefs)
        total = math.fsum(child.weight for child in node.children)
        masses = [
            _discount(child.weight / total, belief, n)
            for child, belief in zip(node.children, child_beliefs)
        ]
        combined = masses[0]
        for mass in masses[1:]:
            before = math.fsum(
                ma * mb
                for sa, ma in sorted(combined.masses.items())
                for sb, mb in sorted(mass.masses.items())
                if sa & sb == 0
            )
            combined = dempster_combine_powerset(combined, mass)
            diagnostics.append(
                CombinationDiagnostics(before, 1.0 / (1.0 - before))
            )
    singletons = [combined.masses.get(1 << i, 0.0) for i in range(n)]
    unassigned = combined.masses.get(combined.frame_subset, 0.0)
    mode = config.mode if is_root else AggregationMode.RAW
    if mode is AggregationMode.RAW:
        beliefs = BeliefDistribution(tuple(singletons))
    else:
        assigned = math.fsum(singletons)
        if assigned <= config.tolerance:
            raise ValidationError("cannot renormalize a fully vacuous mass function")
        beliefs = BeliefDistribution(tuple(m / assigned for m in singletons))
        unassigned = 0.0
    return AggregationResult(beliefs, unassigned, per_node, tuple(diagnostics))


@dataclass(frozen=True)
class HyperPrior:
    """Gridded hyperprior over a 2-D parameter box, flat in log-parameters.

    A degenerate box (``low == high`` in both dimensions) acts as a point
    mass regardless of resolution.
    """

    low: tuple[float, float] = (WORKING_BOX[0], WORKING_BOX[0])
    high: tuple[float, float] = (WORKING_BOX[1], WORKING_BOX[1])
    resolution: int = 200
    density: str = "flat-in-log"

    def __post_init__(self):
        low = tuple(float(x) for x in self.low)
        high = tuple(float(x) for x in self.high)
        if len(low) != 2 or len(high) != 2:
            raise ValidationError("hyperprior box must be two-dimensional")
        for lo, hi in zip(low, high):
            if not (WORKING_BOX[0] <= lo <= hi <= WORKING_BOX[1]):
                raise ValidationError(
                    f"box [{lo}, {hi}] must lie within the working box "
                    f"[{WORKING_BOX[0]}, {WORKING_BOX[1]}] with low <= high"
                )
        resolution = int(self.resolution)
        if resolution < 1:
            raise ValidationError("grid resolution must be at least 1")
        if self.density != "flat-in-log":
            raise ValidationError(f"unsupported hyperprior density {self.density!r}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        object.__setattr__(self, "resolution", resolution)

    def axis(self, dim: int) -> np.ndarray:
        lo, hi = self.low[dim], self.high[dim]
        if lo == hi:
            return np.array([lo])
        return np.geomspace(lo, hi, self.resolution)


def grid_marginal_argmax(
    obs: ObservationSet, box: HyperPrior
) -> tuple[HyperParams, float]:
    """Brute-force maximizer of the log marginal over the box grid.

    Deterministic: ties resolve to the first grid point in row-major order.
    """
    a_axis, b_axis = box.axis(0), box.axis(1)
    events, exposures = _obs_arrays(obs)
    values = np.empty((a_axis.size, b_axis.size))
    for i, a in enumerate(a_axis):  # chunked by row to bound memory
        terms = log_marginal_terms(
            obs.family, events, exposures, a, b_axis[:, None]
        )
        values[i] = np.sum(terms, axis=1)
    flat_index = int(np.argmax(values))
    ia, ib = divmod(flat_index, b_axis.size)
    return (
        HyperParams((float(a_axis[ia]), float(b_axis[ib]))),
        float(values[ia, ib]),
    )


def _obs_arrays(obs: ObservationSet) -> tuple[np.ndarray, np.ndarray]:
    units = obs.units_sorted()
    events = np.array([u.events for u in units], dtype=float)
    exposures = np.array([u.exposure for u in units], dtype=float)
    return events, exposures


@dataclass(frozen=True)
class DiscretizedPosterior:
    """A posterior over the unit parameter on a fixed grid of cell centers."""

    support: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        support = np.array(self.support, dtype=float)
        masses = np.array(self.masses, dtype=float)
        if support.shape != masses.shape or support.ndim != 1:
            raise ValidationError("support and masses must be 1-D and congruent")
        support.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "masses", masses)

    def mean(self) -> float:
        return float(np.sum(self.support * self.masses))


def tv_distance(p: DiscretizedPosterior, q: DiscretizedPosterior) -> float:
    """Total-variation distance between two posteriors on the same grid."""
    if p.support.shape != q.support.shape or not np.array_equal(
        p.support, q.support
    ):
        raise ValidationError("posteriors live on different grids")
    return 0.5 * float(np.sum(np.abs(p.masses - q.masses)))


def _log_posterior_density(
    family: PriorFamily,
    a: np.ndarray,
    b: np.ndarray,
    grid: np.ndarray,
) -> np.ndarray:
    """Conjugate posterior log-density, broadcasting (params x grid)."""
    if family is PriorFamily.BETA_BINOMIAL:
        return (
            (a - 1.0) * np.log(grid)
            + (b - 1.0) * np.log1p(-grid)
            - betaln(a, b)
        )
    return a * np.log(b) + (a - 1.0) * np.log(grid) - b * grid - gammaln(a)


def discretize_conjugate(
    family: PriorFamily, params: PosteriorParams | HyperParams, support: np.ndarray
) -> DiscretizedPosterior:
    """Put a conjugate posterior (or prior) on a grid of cell centers."""
    a, b = params.params
    log_density = _log_posterior_density(
        family, np.asarray(a), np.asarray(b), np.asarray(support, dtype=float)
    )
    masses = np.exp(log_density)
    total = masses.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ValidationError("density underflowed on the whole grid")
    return DiscretizedPosterior(np.asarray(support, float), masses / total)


def default_theta_support(
    family: PriorFamily,
    posterior_shapes: np.ndarray,
    posterior_rates: np.ndarray,
    weights: np.ndarray,
    n_points: int,
) -> np.ndarray:
    """Cell centers covering the support of a weighted posterior mixture."""
    if family is PriorFamily.BETA_BINOMIAL:
        high = 1.0
    else:
        keep = weights > weights.max() * 1e-12
        high = float(
            np.max(
                gamma_dist.ppf(
                    1.0 - 1e-9,
                    posterior_shapes[keep],
                    scale=1.0 / posterior_rates[keep],
                )
            )
        )
    return (np.arange(n_points) + 0.5) * (high / n_points)


def _log_weights(
    obs: ObservationSet, grid_a: np.ndarray, grid_b: np.ndarray
) -> np.ndarray:
    events, exposures = _obs_arrays(obs)
    out = np.empty(grid_a.size)
    chunk = 512
    for start in range(0, grid_a.size, chunk):
        stop = min(start + chunk, grid_a.size)
        terms = log_marginal_terms(
            obs.family,
            events,
            exposures,
            grid_a[start:stop, None],
            grid_b[start:stop, None],
        )
        out[start:stop] = np.sum(terms, axis=1)
    return out


def _subsample_offsets(axis: np.ndarray, subsample: int) -> np.ndarray:
    """Midpoint offsets (in log-space) tiling one grid cell of the axis."""
    if axis.size < 2 or subsample < 2:
        return np.array([0.0])
    spacing = (math.log(axis[-1]) - math.log(axis[0])) / (axis.size - 1)
    return ((np.arange(subsample) + 0.5) / subsample - 0.5) * spacing


def hierarchical_posterior_quadrature(
    obs: ObservationSet,
    unit: UnitData,
    hyperprior: HyperPrior,
    n_points: int = 1000,
    support: np.ndarray | None = None,
    subsample: int = 3,
) -> DiscretizedPosterior:
    """Full hierarchical posterior for one unit by quadrature.

    The posterior is the mixture of the unit's conjugate posteriors across
    the hyperprior grid, weighted by (whole-data marginal likelihood x
    hyperprior density), normalized over the parameter grid. The rule is a
    composite midpoint rule: every cell is tiled by a fixed
    ``subsample x subsample`` subgrid, so the grid resolution does not have
    to resolve a marginal-likelihood peak that is narrower than one cell.
    Cells whose center weight is provably negligible (300 nats below the
    peak) are skipped. Weights are handled in log space; an error is raised
    if every grid weight underflows.
    """
    if unit.family is not obs.family:
        raise ValidationError(
            f"unit {unit.id!r} carries {unit.family.value} data, "
            f"not {obs.family.value}"
        )
    a_axis, b_axis = hyperprior.axis(0), hyperprior.axis(1)
    center_a = np.repeat(a_axis, b_axis.size)
    center_b = np.tile(b_axis, a_axis.size)
    center_logw = _log_weights(obs, center_a, center_b)
    if not np.isfinite(center_logw.max()):
        raise ValidationError(
            "all hyperprior grid weights underflowed; shrink the box"
        )
    kept = np.flatnonzero(center_logw > center_logw.max() - 300.0)

    offsets_a = _subsample_offsets(a_axis, subsample)
    offsets_b = _subsample_offsets(b_axis, subsample)
    if offsets_a.size * offsets_b.size == 1:
        grid_a, grid_b = center_a[kept], center_b[kept]
        log_weights = center_logw[kept]
    else:
        pair_a = np.repeat(offsets_a, offsets_b.size)
        pair_b = np.tile(offsets_b, offsets_a.size)
        grid_a = np.exp(np.add.outer(np.log(center_a[kept]), pair_a)).ravel()
        grid_b = np.exp(np.add.outer(np.log(center_b[kept]), pair_b)).ravel()
        log_weights = _log_weights(obs, grid_a, grid_b)
    # flat-in-log hyperprior on an equal log-spacing grid: constant density
    # and equal subcell shares, both absorbed by normalization
    norm = logsumexp(log_weights)
    if not np.isfinite(norm):
        raise ValidationError(
            "all hyperprior grid weights underflowed; shrink the box"
        )
    weights = np.exp(log_weights - norm)

    if obs.family is PriorFamily.BETA_BINOMIAL:
        post_shapes = grid_a + unit.events
        post_rates = grid_b + (unit.exposure - unit.events)
    else:
        post_shapes = grid_a + unit.events
        post_rates = grid_b + unit.exposure
    if support is None:
        support = default_theta_support(
            obs.family, post_shapes, post_rates, weights, n_points
        )
    support = np.asarray(support, dtype=float)

    keep = np.flatnonzero(weights > weights.max() * 1e-16)
    mixture = np.zeros(support.size)
    chunk = 512
    for start in range(0, keep.size, chunk):
        idx = keep[start : start + chunk]
        log_density = _log_posterior_density(
            obs.family,
            post_shapes[idx, None],
            post_rates[idx, None],
            support[None, :],
        )
        mixture += weights[idx] @ np.exp(log_density)
    total = mixture.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise ValidationError("posterior mixture underflowed on the whole grid")
    return DiscretizedPosterior(support, mixture / total)
