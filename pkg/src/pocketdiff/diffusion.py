"""Hybrid forward process and closed-form posteriors.

Positions follow the Gaussian corruption chain; atom types follow a
uniform-mixing categorical chain sampled with the Gumbel-max trick. Both
posteriors are exact closed forms and are cross-checked in the tests
against brute-force Bayes oracles (grid quadrature for positions,
transition-matrix enumeration for types).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DiffusionError
from .schedules import NoiseSchedule

_GUMBEL_HI = 1.0 - 1e-16  # keep uniform draws inside the open interval


@dataclass(frozen=True)
class Molecule:
    """Ligand: positions in Angstrom plus one-hot types over K categories."""

    positions: np.ndarray  # (m, 3)
    types: np.ndarray      # (m, K) one-hot rows

    def __post_init__(self):
        _validate_atoms(self.positions, self.types, "molecule")

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def n_categories(self) -> int:
        return self.types.shape[1]


@dataclass(frozen=True)
class ProteinContext:
    """Pocket atoms conditioning the generation; same layout as Molecule."""

    positions: np.ndarray  # (n, 3)
    types: np.ndarray      # (n, K_P) one-hot rows

    def __post_init__(self):
        _validate_atoms(self.positions, self.types, "protein")

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class Complex:
    protein: ProteinContext
    ligand: Molecule


@dataclass(frozen=True)
class NoisyState:
    x_t: np.ndarray  # (m, 3)
    v_t: np.ndarray  # (m, K) one-hot rows
    t: int


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray  # (m, 3)
    variance: float


@dataclass(frozen=True)
class CategoricalPosterior:
    probs: np.ndarray  # (m, K), rows sum to 1


def _validate_atoms(positions: np.ndarray, types: np.ndarray, what: str) -> None:
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise DiffusionError(f"{what} positions must be (m, 3), got {positions.shape}")
    if positions.shape[0] < 1:
        raise DiffusionError(f"{what} needs at least one atom")
    if not np.all(np.isfinite(positions)):
        raise DiffusionError(f"{what} positions contain non-finite values")
    if types.ndim != 2 or types.shape[0] != positions.shape[0]:
        raise DiffusionError(
            f"{what} types shape {types.shape} does not match {positions.shape[0]} atoms")
    one_hot = (types >= 0).all() and np.allclose(types.sum(axis=1), 1.0) \
        and np.all((types == 1.0).sum(axis=1) == 1)
    if not one_hot:
        raise DiffusionError(f"{what} types must be one-hot rows")


def one_hot(indices: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((len(indices), K))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def perturb_positions(x_0: np.ndarray, t: int, schedule: NoiseSchedule,
                      rng: np.random.Generator) -> np.ndarray:
    """x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps, eps standard normal."""
    abar = schedule.alpha_bar(_check_step(t, schedule))
    eps = rng.standard_normal(x_0.shape)
    return np.sqrt(abar) * x_0 + np.sqrt(1.0 - abar) * eps


def perturb_types(v_0: np.ndarray, t: int, schedule: NoiseSchedule,
                  rng: np.random.Generator) -> np.ndarray:
    """Gumbel-max sample from the categorical marginal at step t."""
    K = v_0.shape[1]
    probs = type_marginal(v_0, t, schedule)
    u = np.clip(rng.random(probs.shape), np.finfo(np.float64).tiny, _GUMBEL_HI)
    gumbel = -np.log(-np.log(u))
    winners = np.argmax(np.log(probs) + gumbel, axis=1)
    return one_hot(winners, K)


def type_marginal(v_0: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Exact categorical marginal abar_t v_0 + (1 - abar_t)/K per row."""
    abar = schedule.alpha_bar(_check_step(t, schedule))
    K = v_0.shape[1]
    return abar * v_0 + (1.0 - abar) / K


def gaussian_posterior(x_t: np.ndarray, x_0: np.ndarray, t: int,
                       schedule: NoiseSchedule) -> GaussianPosterior:
    """Closed-form Gaussian posterior over x_{t-1} given (x_t, x_0).

    mean = [sqrt(abar_{t-1}) beta_t / (1 - abar_t)] x_0
         + [sqrt(alpha_t) (1 - abar_{t-1}) / (1 - abar_t)] x_t
    var  = beta_t (1 - abar_{t-1}) / (1 - abar_t)

    At t = 1 (abar_0 = 1) this degenerates to mean x_0, variance 0.
    """
    _check_step(t, schedule)
    beta_t = schedule.beta(t)
    alpha_t = schedule.alpha(t)
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t - 1)
    denom = 1.0 - abar_t
    coef_x0 = np.sqrt(abar_prev) * beta_t / denom
    coef_xt = np.sqrt(alpha_t) * (1.0 - abar_prev) / denom
    variance = beta_t * (1.0 - abar_prev) / denom
    return GaussianPosterior(mean=coef_x0 * x_0 + coef_xt * x_t, variance=variance)


def categorical_posterior(v_t: np.ndarray, v_0: np.ndarray, t: int,
                          schedule: NoiseSchedule) -> CategoricalPosterior:
    """Closed-form categorical posterior over v_{t-1}.

    c* = [alpha_t v_t + (1 - alpha_t)/K] * [abar_{t-1} v_0 + (1 - abar_{t-1})/K],
    normalized per row. v_0 may be a soft probability row (the predicted
    clean types); v_t must be a valid probability row as well.
    """
    _check_step(t, schedule)
    K = v_t.shape[1]
    alpha_t = schedule.alpha(t)
    abar_prev = schedule.alpha_bar(t - 1)
    c_star = (alpha_t * v_t + (1.0 - alpha_t) / K) \
        * (abar_prev * v_0 + (1.0 - abar_prev) / K)
    norms = c_star.sum(axis=1, keepdims=True)
    if np.any(norms <= 0.0):
        raise DiffusionError(f"zero-mass categorical posterior row at t={t}")
    return CategoricalPosterior(probs=c_star / norms)


def kl_categorical(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over rows of sum_k p log(p/q), natural log; 0 log(0/q) = 0."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    if p.shape != q.shape:
        raise DiffusionError(f"KL shapes differ: {p.shape} vs {q.shape}")
    support = p > 0.0
    if np.any(q[support] <= 0.0):
        raise DiffusionError("KL is infinite: p > 0 where q = 0")
    terms = np.zeros_like(p)
    terms[support] = p[support] * (np.log(p[support]) - np.log(q[support]))
    return float(terms.sum(axis=1).mean())


def _check_step(t: int, schedule: NoiseSchedule) -> int:
    if not 1 <= t <= schedule.T:
        raise DiffusionError(f"timestep {t} outside [1, {schedule.T}]")
    return t
