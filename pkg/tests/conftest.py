"""Shared fixtures and random-instance generators for the test suite."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from relfuse.beliefs import BeliefDistribution, MassFunction

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
MOTORCYCLE = DATA_DIR / "motorcycle.json"
PUMPSETS = DATA_DIR / "pumpsets.json"


@pytest.fixture(scope="session")
def motorcycle_path() -> str:
    return str(MOTORCYCLE)


@pytest.fixture(scope="session")
def pumpsets_path() -> str:
    return str(PUMPSETS)


def random_belief(rng: np.random.Generator, n: int, complete: bool = False) -> BeliefDistribution:
    """Random belief vector; incomplete by a random residual unless told not to."""
    raw = rng.random(n)
    total = raw.sum()
    if total == 0.0:
        raw[0] = 1.0
        total = 1.0
    scale = 1.0 if complete else rng.random()
    values = tuple(float(v) for v in raw / total * scale)
    return BeliefDistribution(values)


def random_mass(rng: np.random.Generator, n: int, vacuous_share: bool = True) -> MassFunction:
    """Random valid mass function over n grades plus the frame."""
    raw = rng.random(n + (1 if vacuous_share else 0))
    raw = raw / raw.sum()
    if vacuous_share:
        return MassFunction(tuple(float(v) for v in raw[:n]), float(raw[n]))
    return MassFunction(tuple(float(v) for v in raw), 0.0)


def max_mass_deviation(a: MassFunction, b: MassFunction) -> float:
    return max(
        max(abs(x - y) for x, y in zip(a.singleton_masses, b.singleton_masses)),
        abs(a.frame_mass - b.frame_mass),
    )


def quadrature_posterior_moments(family, prior, unit, n_nodes=1000):
    """Posterior mean and variance by Gauss-Legendre quadrature of
    likelihood(theta) * prior_density(theta).

    Independent of the conjugate closed forms: the integrand is the literal
    product of the two kernels, the integration window for rate families is
    found by scanning the integrand itself, and the moments come out of the
    numeric integral.
    """
    from scipy.special import roots_legendre

    from relfuse.inference import PriorFamily

    a, b = prior
    if family is PriorFamily.BETA_BINOMIAL:
        n, s = unit.exposure, unit.events

        def log_f(theta):
            log_likelihood = s * np.log(theta) + (n - s) * np.log1p(-theta)
            log_prior = (a - 1.0) * np.log(theta) + (b - 1.0) * np.log1p(-theta)
            return log_likelihood + log_prior

        lo, hi = 0.0, 1.0
    else:
        count, exposure = unit.events, unit.exposure

        def log_f(theta):
            log_likelihood = count * np.log(theta) - theta * exposure
            log_prior = (a - 1.0) * np.log(theta) - b * theta
            return log_likelihood + log_prior

        scan = np.logspace(-9, 6, 4000)
        values = log_f(scan)
        peak = values.max()
        lo, hi = 0.0, 2.0 * float(scan[values > peak - 80.0].max())

    nodes, weights = roots_legendre(n_nodes)
    theta = 0.5 * (hi - lo) * (nodes + 1.0) + lo
    density = np.exp(log_f(theta) - log_f(theta).max())
    total = np.sum(weights * density)
    mean = np.sum(weights * density * theta) / total
    second = np.sum(weights * density * theta * theta) / total
    return float(mean), float(second - mean * mean)
