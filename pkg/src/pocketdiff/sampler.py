"""Reverse-process inference: generate a ligand in a pocket from noise."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import dataio, denoiser
from .diffusion import (Complex, Molecule, ProteinContext,
                        categorical_posterior, gaussian_posterior, one_hot)
from .errors import SamplerError
from .schedules import NoiseSchedule
from .tensor import Tensor


def sample_molecule(protein: ProteinContext, m: int,
                    params: dict[str, Tensor],
                    config: denoiser.DenoiserConfig,
                    schedule: NoiseSchedule,
                    rng: np.random.Generator,
                    predict_fn=None,
                    position_noise=None) -> Molecule:
    """Denoise from pure noise down to a clean ligand of m atoms.

    The protein is centered internally and the output de-centered. At
    t = 1 the posterior is deterministic, so the final step emits the
    posterior mean and the argmax type. `predict_fn` and
    `position_noise` exist for test harnesses (stub predictors and
    noise streams coupled across runs).
    """
    if m < 1:
        raise SamplerError(f"atom count must be >= 1, got {m}")
    offset = protein.positions.mean(axis=0)
    centered = ProteinContext(protein.positions - offset, protein.types)
    if predict_fn is None:
        def predict_fn(x, v, t):
            pred = denoiser.predict(x, v, t, centered, params, config)
            return pred.x0, pred.v0
    if position_noise is None:
        def position_noise(shape):
            return rng.standard_normal(shape)

    K = config.k_ligand
    x = np.asarray(position_noise((m, 3)), dtype=np.float64)
    v = one_hot(rng.integers(0, K, m), K)

    for t in range(schedule.T, 0, -1):
        x0_hat, v0_hat = predict_fn(x, v, t)
        if not (np.all(np.isfinite(x0_hat)) and np.all(np.isfinite(v0_hat))):
            raise SamplerError(f"non-finite prediction at reverse step t={t}")
        gauss = gaussian_posterior(x, x0_hat, t, schedule)
        cat = categorical_posterior(v, v0_hat, t, schedule)
        if t > 1:
            x = gauss.mean + np.sqrt(gauss.variance) * position_noise((m, 3))
            cdf = np.cumsum(cat.probs, axis=1)
            u = rng.random((m, 1))
            hits = u < cdf
            idx = hits.argmax(axis=1)
            idx[~hits.any(axis=1)] = K - 1  # guard against rounding in the cdf
            v = one_hot(idx, K)
        else:
            # deterministic endpoint: posterior mean (beta_tilde_1 = 0)
            # and the predictor's own type argmax
            x = gauss.mean
            v = one_hot(np.argmax(v0_hat, axis=1), K)
        if not np.all(np.isfinite(x)):
            raise SamplerError(f"non-finite positions at reverse step t={t}")

    return Molecule(x + offset, v)


def choose_atom_count(sizes, rng: np.random.Generator,
                      fixed: int | None = None) -> int:
    """Draw a ligand size from the empirical corpus histogram, or take
    the explicit override."""
    if fixed is not None:
        if fixed < 1:
            raise SamplerError(f"atom count override must be >= 1, got {fixed}")
        return fixed
    sizes = list(sizes)
    if not sizes:
        raise SamplerError("empty ligand size statistics")
    return int(sizes[rng.integers(len(sizes))])


def write_samples(out_dir, molecules: list[Molecule], pocket_id: str,
                  seed: int) -> None:
    """One XYZ file per sample plus a manifest CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "seed", "m", "pocket"])
        for i, mol in enumerate(molecules):
            name = f"sample_{i:05d}.xyz"
            dataio.write_xyz(out_dir / name, mol.positions,
                             dataio.molecule_type_names(mol), "ligand",
                             len(dataio.LIGAND_TYPES))
            writer.writerow([name, seed, mol.n_atoms, pocket_id])


def ligand_sizes_from_manifest(corpus_dir) -> list[int]:
    manifest = Path(corpus_dir) / "manifest.csv"
    if not manifest.exists():
        raise SamplerError(f"no manifest.csv in {corpus_dir}")
    with open(manifest, newline="") as fh:
        return [int(row["m"]) for row in csv.DictReader(fh)]
