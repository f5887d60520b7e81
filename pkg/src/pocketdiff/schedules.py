"""Noise-schedule bookkeeping and probability temperature annealing.

The noise schedule is the diffusion clock: betas in (0,1), alphas
1 - beta, and their running product alpha_bar (with alpha_bar_0 = 1).
The annealing curves decide how often training conditions on the true
noisy state versus the model's own estimate; all three curve families
are monotone non-increasing in the pseudo-epoch and are clamped from
below by ``lower_bound``. The curve value is finally clipped to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ScheduleError

ANNEAL_KINDS = ("original", "linear", "arc")


@dataclass(frozen=True)
class NoiseSchedule:
    """beta/alpha/alpha_bar tables over T steps; alpha_bars has length T+1
    with alpha_bars[0] == 1 so that t-1 lookups need no special case."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_t(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise ScheduleError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alpha_bars[t])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ScheduleError(f"timestep {t} outside [1, {self.T}]")


def build_noise_schedule(T: int, beta_start: float = 1e-4,
                         beta_end: float = 0.02) -> NoiseSchedule:
    """Linear-in-beta schedule from beta_start to beta_end over T steps."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, "
            f"got ({beta_start}, {beta_end})")
    if T == 1:
        betas = np.array([beta_start])
    else:
        betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


@dataclass(frozen=True)
class AnnealSpec:
    """Annealing curve family plus its hyperparameters.

    ``disabled`` stands in for the r = infinity arm: the probability of
    conditioning on the true noisy state stays at ``p_init`` forever.
    """

    kind: str = "arc"
    mu: float = 12.0
    slope: float = -0.005
    r: float = 2.0
    lower_bound: float = 0.5
    epoch_divisor: int = 1000
    p_init: float = 1.0
    disabled: bool = False

    def __post_init__(self):
        if self.kind not in ANNEAL_KINDS:
            raise ScheduleError(
                f"unknown anneal kind '{self.kind}', expected one of {ANNEAL_KINDS}")
        if not 0.0 <= self.lower_bound <= 1.0:
            raise ScheduleError(f"lower_bound must be in [0, 1], got {self.lower_bound}")
        if self.epoch_divisor < 1:
            raise ScheduleError(f"epoch_divisor must be >= 1, got {self.epoch_divisor}")


def anneal_probability(spec: AnnealSpec, epoch: int) -> float:
    """Probability of keeping the true noisy state at pseudo-epoch ``epoch``.

    Raw curve values: original mu/(mu + exp(e/mu)); linear 1 + slope*e;
    arc sqrt(max(r^2 - (e/100)^2, 0))/r. The result is clamped from below
    by lower_bound, then clipped to [0, 1]. Clamping from below (not the
    other direction) is what keeps late-stage training from conditioning
    exclusively on model estimates.
    """
    if epoch < 0:
        raise ScheduleError(f"epoch must be >= 0, got {epoch}")
    if spec.disabled:
        return min(max(spec.p_init, 0.0), 1.0)
    if spec.kind == "original":
        raw = spec.mu / (spec.mu + math.exp(epoch / spec.mu))
    elif spec.kind == "linear":
        raw = 1.0 + spec.slope * epoch
    else:
        raw = math.sqrt(max(spec.r * spec.r - (epoch / 100.0) ** 2, 0.0)) / spec.r
    return min(max(raw, spec.lower_bound, 0.0), 1.0)


def epoch_from_step(step: int, epoch_divisor: int) -> int:
    if epoch_divisor < 1:
        raise ScheduleError(f"epoch_divisor must be >= 1, got {epoch_divisor}")
    if step < 0:
        raise ScheduleError(f"step must be >= 0, got {step}")
    return step // epoch_divisor


def dump_curves(specs: list[tuple[str, AnnealSpec]], max_epoch: int,
                ) -> tuple[list[str], list[list[float]]]:
    """Tabulate curves over epochs 0..max_epoch-1 for the ablation figures.

    Returns (header, rows) where header is ['epoch', <name>...] and each
    row is [epoch, p per spec].
    """
    if max_epoch < 1:
        raise ScheduleError(f"max_epoch must be >= 1, got {max_epoch}")
    header = ["epoch"] + [name for name, _ in specs]
    rows = []
    for e in range(max_epoch):
        rows.append([float(e)] + [anneal_probability(spec, e) for _, spec in specs])
    return header, rows
