"""Training loop: forward perturbation, pseudo-molecule estimation,
probabilistic condition selection, and the MSE + weighted-KL loss.

Each sample in a batch gets its own rng stream derived from
(seed, step, item index), so results are independent of processing
order and two runs from the same seed produce bit-identical metrics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import dataio, denoiser
from .diffusion import (Complex, Molecule, NoisyState, ProteinContext,
                        categorical_posterior, one_hot, perturb_positions,
                        perturb_types)
from .errors import ConfigError, NumericsError, TrainerError
from .optim import AdamState, adam_step, init_adam_state
from .schedules import (AnnealSpec, NoiseSchedule, anneal_probability,
                        build_noise_schedule, epoch_from_step)
from .tensor import Tensor

METRICS_HEADER = ["step", "epoch", "p_T", "mse", "kl", "loss",
                  "chose_gt_fraction"]

# rng stream tags, so batch selection / timestep / noise draws never collide
_TAG_BATCH = 101
_TAG_SAMPLE = 202


@dataclass(frozen=True)
class PseudoMolecule:
    """The selected training condition; positions and types always switch
    between ground truth and estimate together, as one pair."""

    y_xt: np.ndarray
    y_vt: np.ndarray
    chose_ground_truth: bool


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 3000
    batch_size: int = 4
    lr: float = 1e-4
    beta1: float = 0.95
    beta2: float = 0.999
    kl_weight: float = 100.0
    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    anneal: str = "arc"           # original | linear | arc | disabled
    mu: float = 12.0
    slope: float = -0.005
    r: float = 2.0                # arc radius; inf disables the estimate branch
    lower_bound: float = 0.5
    epoch_divisor: int = 1000
    p_init: float = 1.0
    seed: int = 2021
    hidden_dim: int = 64
    n_layers: int = 3
    t_embed_dim: int = 16
    cutoff: float = 6.0
    fc_threshold: int = 24
    checkpoint_interval: int = 1000
    classic_mode: bool = False    # skip pseudo-molecule estimation entirely

    def __post_init__(self):
        if self.kl_weight < 0:
            raise ConfigError(f"kl_weight must be >= 0, got {self.kl_weight}")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ConfigError("batch_size must be >= 1 and total_steps >= 0")

    def noise_schedule(self) -> NoiseSchedule:
        return build_noise_schedule(self.T, self.beta_start, self.beta_end)

    def anneal_spec(self) -> AnnealSpec:
        disabled = self.anneal == "disabled" or np.isinf(self.r)
        kind = self.anneal if self.anneal != "disabled" else "arc"
        return AnnealSpec(kind=kind, mu=self.mu, slope=self.slope,
                          r=self.r if not np.isinf(self.r) else 2.0,
                          lower_bound=self.lower_bound,
                          epoch_divisor=self.epoch_divisor,
                          p_init=self.p_init, disabled=disabled)

    def denoiser_config(self) -> denoiser.DenoiserConfig:
        return denoiser.DenoiserConfig(
            k_ligand=len(dataio.LIGAND_TYPES),
            k_protein=len(dataio.PROTEIN_TYPES),
            hidden_dim=self.hidden_dim, n_layers=self.n_layers,
            t_embed_dim=self.t_embed_dim, t_max=self.T,
            cutoff=self.cutoff, fc_threshold=self.fc_threshold)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def train_config_from_kv(text: str) -> TrainConfig:
    kv = dataio.parse_kv(text)
    kwargs = {}
    for key, value in kv.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(
                f"unknown config key '{key}'; valid keys: "
                + ", ".join(sorted(_FIELD_TYPES)))
        ftype = _FIELD_TYPES[key]
        if ftype == "int":
            kwargs[key] = int(value)
        elif ftype == "float":
            kwargs[key] = float(value)
        elif ftype == "bool":
            kwargs[key] = value.lower() in ("1", "true", "yes")
        else:
            kwargs[key] = value
    return TrainConfig(**kwargs)


def train_config_to_kv(config: TrainConfig) -> str:
    return dataio.format_kv(
        {f.name: getattr(config, f.name) for f in fields(TrainConfig)})


def center_complex(cplx: Complex) -> tuple[Complex, np.ndarray]:
    """Translate so the protein center of mass is at the origin; returns
    the centered complex and the offset that undoes the translation."""
    if cplx.protein.n_atoms == 0:
        raise TrainerError("cannot center a complex with an empty protein")
    offset = cplx.protein.positions.mean(axis=0)
    protein = ProteinContext(cplx.protein.positions - offset, cplx.protein.types)
    ligand = Molecule(cplx.ligand.positions - offset, cplx.ligand.types)
    return Complex(protein=protein, ligand=ligand), offset


def pseudo_molecule_estimation(cplx: Complex, noisy: NoisyState, t: int,
                               p: float, params: dict[str, Tensor],
                               dconfig: denoiser.DenoiserConfig,
                               schedule: NoiseSchedule,
                               rng: np.random.Generator,
                               predict_fn=None) -> PseudoMolecule:
    """Select the training condition per the probabilistic pick.

    With probability p (or always, when t = T and no t+1 state exists)
    the true noisy state is kept. Otherwise the clean molecule is
    perturbed to t+1, the network predicts a clean molecule from there,
    and that prediction is re-perturbed to t. No gradients flow through
    this branch. When p is exactly 1 or 0, no selection draw is consumed,
    which keeps the disabled arm's rng stream aligned with classic runs.
    """
    if not 1 <= t <= schedule.T:
        raise TrainerError(f"timestep {t} outside [1, {schedule.T}]")
    if t >= schedule.T or p >= 1.0:
        return PseudoMolecule(noisy.x_t, noisy.v_t, True)
    if p > 0.0:
        if rng.random() < p:
            return PseudoMolecule(noisy.x_t, noisy.v_t, True)

    ligand = cplx.ligand
    x_next = perturb_positions(ligand.positions, t + 1, schedule, rng)
    v_next = perturb_types(ligand.types, t + 1, schedule, rng)
    if predict_fn is None:
        pred = denoiser.predict(x_next, v_next, t + 1, cplx.protein,
                                params, dconfig)
        x0_hat, v0_hat = pred.x0, pred.v0
    else:
        x0_hat, v0_hat = predict_fn(x_next, v_next, t + 1)
    v0_hard = one_hot(np.argmax(v0_hat, axis=1), v0_hat.shape[1])
    # re-perturb the predicted clean molecule back to step t
    x_est = np.sqrt(schedule.alpha_bar(t)) * x0_hat \
        + np.sqrt(1.0 - schedule.alpha_bar(t)) * rng.standard_normal(x0_hat.shape)
    v_est = perturb_types(v0_hard, t, schedule, rng)
    return PseudoMolecule(x_est, v_est, False)


@dataclass(frozen=True)
class StepRecord:
    step: int
    epoch: int
    p: float
    mse: float
    kl: float
    loss: float
    chose_gt_fraction: float

    def row(self) -> list:
        return [self.step, self.epoch, repr(self.p), repr(self.mse),
                repr(self.kl), repr(self.loss), repr(self.chose_gt_fraction)]


def sample_loss(cplx: Complex, t: int, pseudo: PseudoMolecule,
                config: TrainConfig, schedule: NoiseSchedule,
                params: dict[str, Tensor], forward_fn=None,
                ) -> tuple[Tensor, float, float]:
    """Loss for one centered sample: squared position error plus the
    weighted KL between the type posteriors conditioned on y_vt under the
    true and the predicted clean types. Returns (loss, mse, kl)."""
    dconfig = config.denoiser_config()
    if forward_fn is None:
        x0_hat, v0_hat = denoiser.forward(pseudo.y_xt, pseudo.y_vt, t,
                                          cplx.protein, params, dconfig)
    else:
        x0_hat, v0_hat = forward_fn(pseudo.y_xt, pseudo.y_vt, t)

    mse = (x0_hat - Tensor(cplx.ligand.positions)).squared_norm()

    K = cplx.ligand.n_categories
    alpha_t = schedule.alpha(t)
    abar_prev = schedule.alpha_bar(t - 1)
    lik = alpha_t * pseudo.y_vt + (1.0 - alpha_t) / K  # constant factor

    c_true = categorical_posterior(pseudo.y_vt, cplx.ligand.types, t,
                                   schedule).probs
    c_star = Tensor(lik) * (v0_hat * abar_prev + (1.0 - abar_prev) / K)
    c_pred = c_star / c_star.sum(axis=1, keepdims=True)

    support = c_true > 0.0
    const = float((c_true[support] * np.log(c_true[support])).sum())
    cross = (Tensor(c_true) * c_pred.log()).sum()
    kl = (const - cross) / c_true.shape[0]

    loss = mse + config.kl_weight * kl
    return loss, mse.item(), kl.item()


def training_step(batch: list[Complex], step: int, config: TrainConfig,
                  schedule: NoiseSchedule, anneal: AnnealSpec,
                  params: dict[str, Tensor], opt_state: AdamState,
                  forward_fn=None, predict_fn=None,
                  ) -> tuple[StepRecord, AdamState]:
    """One optimization step over a batch; updates params in place."""
    epoch = epoch_from_step(step, anneal.epoch_divisor)
    p = 1.0 if config.classic_mode else anneal_probability(anneal, epoch)

    for tensor in params.values():
        tensor.zero_grad()

    total: Tensor | None = None
    mse_sum = kl_sum = 0.0
    chose = 0
    dconfig = config.denoiser_config()
    for idx, raw in enumerate(batch):
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, step, _TAG_SAMPLE, idx]))
        t = int(rng.integers(1, schedule.T + 1))
        cplx, _ = center_complex(raw)
        x_t = perturb_positions(cplx.ligand.positions, t, schedule, rng)
        v_t = perturb_types(cplx.ligand.types, t, schedule, rng)
        noisy = NoisyState(x_t=x_t, v_t=v_t, t=t)
        pseudo = pseudo_molecule_estimation(cplx, noisy, t, p, params,
                                            dconfig, schedule, rng,
                                            predict_fn=predict_fn)
        try:
            loss, mse, kl = sample_loss(cplx, t, pseudo, config, schedule,
                                        params, forward_fn=forward_fn)
        except NumericsError as exc:
            raise TrainerError(
                f"non-finite loss at step={step} t={t} "
                f"(mse so far={mse_sum}, kl so far={kl_sum}): {exc}") from exc
        total = loss if total is None else total + loss
        mse_sum += mse
        kl_sum += kl
        chose += pseudo.chose_ground_truth

    n = len(batch)
    mean_loss = total * (1.0 / n)
    if mean_loss.requires_grad:
        mean_loss.backward()

    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.data))
             for k, v in params.items()}
    new_values, opt_state = adam_step(
        {k: v.data for k, v in params.items()}, grads, opt_state,
        lr=config.lr, beta1=config.beta1, beta2=config.beta2)
    for key, tensor in params.items():
        tensor.data = new_values[key]

    record = StepRecord(step=step, epoch=epoch, p=p, mse=mse_sum / n,
                        kl=kl_sum / n, loss=mean_loss.item(),
                        chose_gt_fraction=chose / n)
    return record, opt_state


def train(config: TrainConfig, dataset: list[Complex], out_dir,
          ) -> tuple[dict[str, Tensor], list[StepRecord]]:
    """Run the full loop; writes metrics.csv, a resolved-config echo, and
    checkpoints under out_dir. Fully reproducible from config.seed."""
    if not dataset:
        raise TrainerError("dataset is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_resolved.txt").write_text(train_config_to_kv(config))

    schedule = config.noise_schedule()
    anneal = config.anneal_spec()
    dconfig = config.denoiser_config()
    params = denoiser.init_params(
        dconfig, np.random.default_rng(np.random.SeedSequence([config.seed])))
    opt_state = init_adam_state({k: v.data for k, v in params.items()})

    extra = {"train_config": dataio.parse_kv(train_config_to_kv(config))}
    records: list[StepRecord] = []
    metrics_path = out_dir / "metrics.csv"
    try:
        with open(metrics_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_HEADER)
            for step in range(config.total_steps):
                batch_rng = np.random.default_rng(
                    np.random.SeedSequence([config.seed, step, _TAG_BATCH]))
                batch = [dataset[i] for i in
                         batch_rng.integers(0, len(dataset), config.batch_size)]
                record, opt_state = training_step(
                    batch, step, config, schedule, anneal, params, opt_state)
                records.append(record)
                writer.writerow(record.row())
                if (config.checkpoint_interval > 0
                        and (step + 1) % config.checkpoint_interval == 0):
                    denoiser.save_checkpoint(
                        out_dir / f"checkpoint_{step + 1:07d}.npz",
                        params, dconfig, extra)
        denoiser.save_checkpoint(out_dir / "checkpoint_final.npz",
                                 params, dconfig, extra)
    except OSError as exc:
        raise TrainerError(f"I/O failure under {out_dir}: {exc}") from exc
    return params, records
