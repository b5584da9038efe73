"""Non-equilibrium baseline meta-solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class SeededSampler:
    """A seed plus the deterministic numpy stream derived from it."""

    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)


def _as_rng(sampler) -> np.random.Generator:
    if isinstance(sampler, SeededSampler):
        return sampler.rng
    if isinstance(sampler, np.random.Generator):
        return sampler
    return np.random.default_rng(sampler)


def _check(n_joint):
    if int(n_joint) < 1:
        raise ConfigError("need at least one joint action")
    return int(n_joint)


def uniform_joint(n_joint: int) -> np.ndarray:
    n = _check(n_joint)
    return np.full(n, 1.0 / n)


def random_dirichlet(n_joint: int, sampler=None) -> np.ndarray:
    """Uniform draw from the simplex (Dirichlet with all concentrations 1)."""
    n = _check(n_joint)
    return _as_rng(sampler).dirichlet(np.ones(n))


def random_joint(n_joint: int, sampler=None) -> np.ndarray:
    """Point mass on a uniformly drawn joint action."""
    n = _check(n_joint)
    out = np.zeros(n)
    out[_as_rng(sampler).integers(n)] = 1.0
    return out
