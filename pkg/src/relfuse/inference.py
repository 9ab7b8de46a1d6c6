"""Empirical Bayes inference for multi-unit reliability data.

Three conjugate data families are supported:

* ``beta-binomial`` -- demand data (trials and successes per unit); unit
  reliability is a success probability with a Beta(a, b) prior.
* ``gamma-poisson`` -- event counts over an exposure time; the failure rate
  has a Gamma(shape, rate) prior and counts are negative-binomial
  marginally.
* ``gamma-exponential`` -- failure counts with total time on test; the
  failure rate has a Gamma(shape, rate) prior.

Hyperparameters are estimated by maximizing the marginal likelihood of the
observed units (type-II maximum likelihood) in log-parameter coordinates
over a fixed working box, starting from method-of-moments values. Per-unit
inference then proceeds as an ordinary conjugate Bayes update at the fitted
prior, and predictive reliabilities come out in closed form.

Expert-elicited data enters as pseudo-observations tagged by provenance;
the tag never changes the arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import betaln, digamma, gammaln, polygamma

from .errors import InsufficientUnitsError, ValidationError

#: Both hyperparameters are constrained to this interval. Type-II maximum
#: likelihood diverges on degenerate data (e.g. zero between-unit
#: variability); clamping with an ``at_bound`` flag keeps fitting total.
WORKING_BOX = (1e-3, 1e3)

_GRAD_TOL = 1e-8


class PriorFamily(Enum):
    BETA_BINOMIAL = "beta-binomial"
    GAMMA_POISSON = "gamma-poisson"
    GAMMA_EXPONENTIAL = "gamma-exponential"


class Provenance(Enum):
    OBSERVED = "observed"
    EXPERT = "expert-elicited"


class PredictiveTarget(Enum):
    NEXT_DEMAND = "next-demand"
    MISSION_SURVIVAL = "mission-survival"


@dataclass(frozen=True)
class HyperParams:
    """Prior parameter pair: Beta(a, b) or Gamma(shape, rate)."""

    params: tuple[float, float]

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        if len(params) != 2:
            raise ValidationError(f"expected 2 hyperparameters, got {len(params)}")
        lo, hi = WORKING_BOX
        for p in params:
            if not (math.isfinite(p) and lo <= p <= hi):
                raise ValidationError(
                    f"hyperparameter {p!r} outside the working box [{lo}, {hi}]"
                )
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class UnitData:
    """One unit's data: an event count and the exposure it accrued over.

    Field meaning by family: beta-binomial reads (events, exposure) as
    (successes, trials); gamma-poisson as (event count, exposure time);
    gamma-exponential as (failure count, total time on test).
    """

    id: str
    family: PriorFamily
    events: int
    exposure: float
    provenance: Provenance = Provenance.OBSERVED

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("unit id must be a non-empty string")
        if not isinstance(self.family, PriorFamily):
            raise ValidationError(f"unknown family {self.family!r}")
        if not isinstance(self.provenance, Provenance):
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        events = self.events
        if isinstance(events, float) and events.is_integer():
            events = int(events)
        if not isinstance(events, int) or events < 0:
            raise ValidationError(
                f"event count must be a non-negative integer, got {self.events!r}",
                path=f"unit {self.id!r}",
            )
        exposure = float(self.exposure)
        if self.family is PriorFamily.BETA_BINOMIAL:
            if not (exposure >= 0 and exposure.is_integer()):
                raise ValidationError(
                    f"trials must be a non-negative integer, got {self.exposure!r}",
                    path=f"unit {self.id!r}",
                )
            if events > exposure:
                raise ValidationError(
                    f"successes ({events}) exceed trials ({int(exposure)})",
                    path=f"unit {self.id!r}",
                )
        elif not (math.isfinite(exposure) and exposure > 0):
            raise ValidationError(
                f"exposure must be strictly positive, got {self.exposure!r}",
                path=f"unit {self.id!r}",
            )
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "exposure", exposure)


def binomial_unit(
    uid: str,
    trials: int,
    successes: int,
    provenance: Provenance = Provenance.OBSERVED,
) -> UnitData:
    return UnitData(uid, PriorFamily.BETA_BINOMIAL, successes, trials, provenance)


def poisson_unit(
    uid: str,
    exposure: float,
    events: int,
    provenance: Provenance = Provenance.OBSERVED,
) -> UnitData:
    return UnitData(uid, PriorFamily.GAMMA_POISSON, events, exposure, provenance)


def exponential_unit(
    uid: str,
    failures: int,
    total_time: float,
    provenance: Provenance = Provenance.OBSERVED,
) -> UnitData:
    return UnitData(uid, PriorFamily.GAMMA_EXPONENTIAL, failures, total_time, provenance)


@dataclass(frozen=True)
class ObservationSet:
    """A family tag plus one record per unit; ids must be unique."""

    family: PriorFamily
    units: tuple[UnitData, ...]

    def __post_init__(self):
        units = tuple(self.units)
        if not units:
            raise ValidationError("observation set needs at least one unit")
        ids = [u.id for u in units]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate unit ids: {', '.join(dupes)}")
        for u in units:
            if u.family is not self.family:
                raise ValidationError(
                    f"unit {u.id!r} is {u.family.value} data in a "
                    f"{self.family.value} observation set"
                )
        object.__setattr__(self, "units", units)

    def units_sorted(self) -> tuple[UnitData, ...]:
        """Units in id order; all reductions run in this fixed order."""
        return tuple(sorted(self.units, key=lambda u: u.id))

    def unit(self, uid: str) -> UnitData:
        for u in self.units:
            if u.id == uid:
                return u
        raise ValidationError(f"no unit with id {uid!r}")


@dataclass(frozen=True)
class PosteriorParams:
    """Conjugate posterior parameter pair for one unit."""

    family: PriorFamily
    unit_id: str
    params: tuple[float, float]

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        for p in params:
            if not (math.isfinite(p) and p > 0):
                raise ValidationError(f"posterior parameter {p!r} must be positive")
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class MomentsInit:
    """Method-of-moments starting point; ``fallback`` marks the (1, 1) default."""

    params: HyperParams
    fallback: bool


@dataclass(frozen=True)
class FitResult:
    estimate: HyperParams
    log_marginal: float
    init: HyperParams
    init_fallback: bool
    converged: bool
    at_bound: bool


@dataclass(frozen=True)
class PredictiveQuery:
    """What to predict: next-demand success, or survival to ``mission_time``."""

    target: PredictiveTarget
    mission_time: float = 0.0

    def __post_init__(self):
        target = self.target
        if not isinstance(target, PredictiveTarget):
            try:
                target = PredictiveTarget(target)
            except ValueError as exc:
                valid = ", ".join(t.value for t in PredictiveTarget)
                raise ValidationError(
                    f"unknown predictive target {self.target!r}; valid: {valid}"
                ) from exc
        mission_time = float(self.mission_time)
        if not (math.isfinite(mission_time) and mission_time >= 0):
            raise ValidationError(
                f"mission time must be finite and non-negative, got {self.mission_time!r}"
            )
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "mission_time", mission_time)


def _data_arrays(obs: ObservationSet) -> tuple[np.ndarray, np.ndarray]:
    units = obs.units_sorted()
    events = np.array([u.events for u in units], dtype=float)
    exposures = np.array([u.exposure for u in units], dtype=float)
    return events, exposures


def log_marginal_terms(
    family: PriorFamily,
    events: np.ndarray,
    exposures: np.ndarray,
    a,
    b,
) -> np.ndarray:
    """Per-unit log marginal likelihood; broadcasts over parameter arrays.

    Closed forms: beta-binomial pmf, negative-binomial pmf, and the
    gamma-exponential marginal ``b^a Gamma(a+n) / (Gamma(a) (b+T)^(a+n))``,
    all evaluated through log-gamma.
    """
    if family is PriorFamily.BETA_BINOMIAL:
        n, s = exposures, events
        return (
            gammaln(n + 1)
            - gammaln(s + 1)
            - gammaln(n - s + 1)
            + betaln(a + s, b + (n - s))
            - betaln(a, b)
        )
    if family is PriorFamily.GAMMA_POISSON:
        k, t = events, exposures
        return (
            gammaln(a + k)
            - gammaln(a)
            - gammaln(k + 1)
            + a * (np.log(b) - np.log(b + t))
            + k * (np.log(t) - np.log(b + t))
        )
    n, total = events, exposures
    return (
        a * np.log(b) + gammaln(a + n) - gammaln(a) - (a + n) * np.log(b + total)
    )


def _log_marginal_value(obs: ObservationSet, a: float, b: float) -> float:
    events, exposures = _data_arrays(obs)
    return float(np.sum(log_marginal_terms(obs.family, events, exposures, a, b)))


def log_marginal(obs: ObservationSet, phi: HyperParams) -> float:
    """Log marginal likelihood of all units with the unit parameter
    integrated out against the prior indexed by ``phi``.

    Units are summed in id order, so the value is bitwise invariant under
    permutations of the input.
    """
    a, b = phi.params
    return _log_marginal_value(obs, a, b)


def _grad_terms(
    family: PriorFamily, events: np.ndarray, exposures: np.ndarray, a: float, b: float
) -> tuple[np.ndarray, np.ndarray]:
    if family is PriorFamily.BETA_BINOMIAL:
        n, s = exposures, events
        da = digamma(a + s) - digamma(a + b + n) - digamma(a) + digamma(a + b)
        db = digamma(b + (n - s)) - digamma(a + b + n) - digamma(b) + digamma(a + b)
        return da, db
    if family is PriorFamily.GAMMA_POISSON:
        k, t = events, exposures
        da = digamma(a + k) - digamma(a) + np.log(b) - np.log(b + t)
        db = a / b - (a + k) / (b + t)
        return da, db
    n, total = events, exposures
    da = np.log(b) + digamma(a + n) - digamma(a) - np.log(b + total)
    db = a / b - (a + n) / (b + total)
    return da, db


def _log_marginal_grad_value(
    obs: ObservationSet, a: float, b: float
) -> tuple[float, float]:
    events, exposures = _data_arrays(obs)
    da, db = _grad_terms(obs.family, events, exposures, a, b)
    # chain rule into log-parameter coordinates
    return a * float(np.sum(da)), b * float(np.sum(db))


def log_marginal_grad(obs: ObservationSet, phi: HyperParams) -> tuple[float, float]:
    """Gradient of :func:`log_marginal` with respect to the log-parameters."""
    a, b = phi.params
    return _log_marginal_grad_value(obs, a, b)


def _hessian(obs: ObservationSet, a: float, b: float) -> np.ndarray:
    """Hessian of the log marginal in the raw (a, b) coordinates."""
    events, exposures = _data_arrays(obs)
    family = obs.family
    trigamma = lambda x: polygamma(1, x)  # noqa: E731
    if family is PriorFamily.BETA_BINOMIAL:
        n, s = exposures, events
        haa = trigamma(a + s) - trigamma(a + b + n) - trigamma(a) + trigamma(a + b)
        hab = trigamma(a + b) - trigamma(a + b + n)
        hbb = (
            trigamma(b + (n - s))
            - trigamma(a + b + n)
            - trigamma(b)
            + trigamma(a + b)
        )
    else:
        k, t = events, exposures
        haa = trigamma(a + k) - trigamma(a)
        hab = 1.0 / b - 1.0 / (b + t)
        hbb = -a / b**2 + (a + k) / (b + t) ** 2
    return np.array(
        [
            [float(np.sum(haa)), float(np.sum(hab))],
            [float(np.sum(hab)), float(np.sum(hbb))],
        ]
    )


def moments_init(obs: ObservationSet) -> MomentsInit:
    """Method-of-moments starting values from the per-unit empirical rates.

    Falls back to (1, 1) with ``fallback=True`` when the rates have no
    spread or the moment equations are infeasible; otherwise the solution is
    clamped into the working box.
    """
    if len(obs.units) < 2:
        raise InsufficientUnitsError(len(obs.units))
    units = obs.units_sorted()
    if obs.family is PriorFamily.BETA_BINOMIAL:
        rates = [u.events / u.exposure for u in units if u.exposure > 0]
    else:
        rates = [u.events / u.exposure for u in units]
    fallback = MomentsInit(HyperParams((1.0, 1.0)), True)
    if len(rates) < 2:
        return fallback
    mean = float(np.mean(rates))
    var = float(np.var(rates, ddof=1))
    if var <= 0.0 or mean <= 0.0:
        return fallback
    if obs.family is PriorFamily.BETA_BINOMIAL:
        if mean >= 1.0:
            return fallback
        concentration = mean * (1.0 - mean) / var - 1.0
        if concentration <= 0.0:
            return fallback
        a, b = mean * concentration, (1.0 - mean) * concentration
    else:
        a, b = mean * mean / var, mean / var
    lo, hi = WORKING_BOX
    return MomentsInit(
        HyperParams((min(hi, max(lo, a)), min(hi, max(lo, b)))), False
    )


def _newton_polish(
    obs: ObservationSet, a: float, b: float, value: float
) -> tuple[float, float, float]:
    """Sharpen an interior optimum by Newton steps on the analytic gradient."""
    lo, hi = WORKING_BOX
    ga, gb = _log_marginal_grad_value(obs, a, b)
    grad_norm = math.hypot(ga, gb)
    for _ in range(25):
        if grad_norm < 1e-12:
            break
        hessian = _hessian(obs, a, b)
        try:
            step = np.linalg.solve(hessian, [ga / a, gb / b])
        except np.linalg.LinAlgError:
            break
        cand_a, cand_b = a - step[0], b - step[1]
        if not (lo < cand_a < hi and lo < cand_b < hi):
            break
        cand_value = _log_marginal_value(obs, cand_a, cand_b)
        cga, cgb = _log_marginal_grad_value(obs, cand_a, cand_b)
        cand_norm = math.hypot(cga, cgb)
        if not math.isfinite(cand_value) or cand_norm >= grad_norm:
            break
        a, b, value = cand_a, cand_b, cand_value
        ga, gb, grad_norm = cga, cgb, cand_norm
    return a, b, value


def fit_hyperparams(obs: ObservationSet) -> FitResult:
    """Type-II maximum likelihood estimate of the prior hyperparameters.

    The log marginal is maximized in log-parameter coordinates over the
    working box with L-BFGS-B (analytic gradient), started from the moments
    estimate and from (1, 1), then polished with Newton steps when the
    optimum is interior. ``at_bound`` flags estimates clamped by the box,
    the expected outcome for data with no between-unit variability.
    """
    if len(obs.units) < 2:
        raise InsufficientUnitsError(len(obs.units))
    init = moments_init(obs)
    lo, hi = math.log(WORKING_BOX[0]), math.log(WORKING_BOX[1])

    def objective(u: np.ndarray) -> tuple[float, np.ndarray]:
        a, b = math.exp(u[0]), math.exp(u[1])
        value = _log_marginal_value(obs, a, b)
        if not math.isfinite(value):
            raise ValidationError(
                f"marginal likelihood is not finite at ({a}, {b}); corrupt data?"
            )
        ga, gb = _log_marginal_grad_value(obs, a, b)
        return -value, np.array([-ga, -gb])

    starts = [init.params.params]
    if (1.0, 1.0) not in starts:
        starts.append((1.0, 1.0))
    best = None
    for start in starts:
        res = minimize(
            objective,
            x0=np.log(start),
            jac=True,
            method="L-BFGS-B",
            bounds=[(lo, hi), (lo, hi)],
            options={"ftol": 1e-14, "gtol": 1e-10, "maxiter": 500},
        )
        if best is None or res.fun < best.fun:
            best = res

    a, b = math.exp(best.x[0]), math.exp(best.x[1])
    value = -float(best.fun)
    edge = 1e-9
    at_bound = any(
        min(x - lo, hi - x) < edge for x in (math.log(a), math.log(b))
    )
    if not at_bound:
        a, b, value = _newton_polish(obs, a, b, value)
    ga, gb = _log_marginal_grad_value(obs, a, b)
    projected = []
    for x, g in ((math.log(a), ga), (math.log(b), gb)):
        if (x - lo < edge and g < 0) or (hi - x < edge and g > 0):
            projected.append(0.0)
        else:
            projected.append(g)
    converged = math.hypot(*projected) < _GRAD_TOL or bool(best.success)
    return FitResult(
        estimate=HyperParams((a, b)),
        log_marginal=value,
        init=init.params,
        init_fallback=init.fallback,
        converged=converged,
        at_bound=at_bound,
    )


def posterior(
    family: PriorFamily, phi: HyperParams, unit: UnitData
) -> PosteriorParams:
    """Conjugate posterior for one unit under the prior indexed by ``phi``."""
    if unit.family is not family:
        raise ValidationError(
            f"unit {unit.id!r} carries {unit.family.value} data, not {family.value}"
        )
    a, b = phi.params
    if family is PriorFamily.BETA_BINOMIAL:
        return PosteriorParams(
            family, unit.id, (a + unit.events, b + (unit.exposure - unit.events))
        )
    return PosteriorParams(family, unit.id, (a + unit.events, b + unit.exposure))


def _predictive(
    family: PriorFamily, a: float, b: float, query: PredictiveQuery
) -> float:
    if family is PriorFamily.BETA_BINOMIAL:
        if query.target is not PredictiveTarget.NEXT_DEMAND:
            raise ValidationError(
                "mission-survival queries need a gamma family; "
                "beta-binomial predicts next-demand success"
            )
        return a / (a + b)
    if query.target is not PredictiveTarget.MISSION_SURVIVAL:
        raise ValidationError(
            "next-demand queries apply to the beta-binomial family; "
            "gamma families predict mission survival"
        )
    return (b / (b + query.mission_time)) ** a


def prior_predictive_reliability(
    family: PriorFamily, phi: HyperParams, query: PredictiveQuery
) -> float:
    """Design reliability before unit data: the prior expectation of a
    next-demand success, or of surviving the mission time."""
    a, b = phi.params
    return _predictive(family, a, b, query)


def posterior_predictive_reliability(
    family: PriorFamily, fit: FitResult, unit: UnitData, query: PredictiveQuery
) -> float:
    """Design reliability for one unit after its conjugate update at the
    fitted prior."""
    post = posterior(family, fit.estimate, unit)
    a, b = post.params
    return _predictive(family, a, b, query)
