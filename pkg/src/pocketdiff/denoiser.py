"""E(n)-equivariant denoising network predicting the clean molecule.

Ligand and pocket atoms share one graph; messages depend only on node
features and squared distances, coordinate updates move along pairwise
difference vectors (normalized by distance + 1 for stability near
coincident atoms), and protein coordinates are frozen. The type head is
a softmax over ligand atom categories, so the predicted types are
rotation/translation invariant while the predicted positions are
equivariant by construction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .diffusion import ProteinContext
from .errors import CheckpointError, DenoiserError
from .tensor import Tensor

CHECKPOINT_FORMAT = "pocketdiff-checkpoint-v1"


@dataclass(frozen=True)
class DenoiserConfig:
    k_ligand: int = 4
    k_protein: int = 2
    hidden_dim: int = 64
    n_layers: int = 3
    t_embed_dim: int = 16
    t_max: int = 1000
    cutoff: float = 6.0          # radius-graph cutoff in Angstrom
    fc_threshold: int = 24       # fully connected at or below this node count

    @property
    def feature_dim(self) -> int:
        return self.k_ligand + self.k_protein + 1 + self.t_embed_dim


@dataclass(frozen=True)
class Prediction:
    x0: np.ndarray       # (m, 3)
    v0: np.ndarray       # (m, K) probability rows


def param_shapes(config: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    H = config.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embed.w": (config.feature_dim, H),
        "embed.b": (H,),
        "type_head.w": (H, config.k_ligand),
        "type_head.b": (config.k_ligand,),
    }
    for i in range(config.n_layers):
        shapes.update({
            f"layer{i}.edge.w1": (2 * H + 1, H),
            f"layer{i}.edge.b1": (H,),
            f"layer{i}.edge.w2": (H, H),
            f"layer{i}.edge.b2": (H,),
            f"layer{i}.coord.w1": (H, H),
            f"layer{i}.coord.b1": (H,),
            f"layer{i}.coord.w2": (H, 1),
            f"layer{i}.coord.b2": (1,),
            f"layer{i}.node.w1": (2 * H, H),
            f"layer{i}.node.b1": (H,),
            f"layer{i}.node.w2": (H, H),
            f"layer{i}.node.b2": (H,),
        })
    return shapes


def init_params(config: DenoiserConfig, rng: np.random.Generator,
                ) -> dict[str, Tensor]:
    """Fan-in scaled Gaussian init; coordinate output heads start at zero
    so the untrained network is the identity on positions."""
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b1") or name.endswith(".b2") or name.endswith(".b"):
            data = np.zeros(shape)
        elif ".coord.w2" in name:
            data = np.zeros(shape)
        else:
            fan_in = shape[0]
            data = rng.standard_normal(shape) / np.sqrt(fan_in)
        params[name] = Tensor(data, requires_grad=True)
    return params


def timestep_embedding(t: int, dim: int, t_max: int = 1000) -> np.ndarray:
    """Sinusoidal embedding of t/t_max at dim//2 geometric frequencies."""
    if not 0 <= t <= t_max:
        raise DenoiserError(f"timestep {t} outside [0, {t_max}]")
    half = dim // 2
    freqs = np.array([float(t_max) ** (i / max(half - 1, 1)) for i in range(half)])
    angles = (t / t_max) * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def build_edges(positions: np.ndarray, cutoff: float, fc_threshold: int,
                ) -> tuple[np.ndarray, np.ndarray]:
    """Directed edge lists (src, dst). Fully connected for small graphs,
    radius graph beyond fc_threshold nodes."""
    n = len(positions)
    if n <= fc_threshold:
        src, dst = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = src != dst
        return src[mask], dst[mask]
    diffs = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=-1))
    src, dst = np.nonzero((dist <= cutoff) & ~np.eye(n, dtype=bool))
    return src, dst


def forward(y_x: np.ndarray, y_v: np.ndarray, t: int, protein: ProteinContext,
            params: dict[str, Tensor], config: DenoiserConfig,
            ) -> tuple[Tensor, Tensor]:
    """Differentiable prediction of (x0_hat, v0_hat) for the ligand atoms.

    Inputs are assumed centered on the protein center of mass.
    """
    m = y_x.shape[0]
    if y_v.shape[1] != config.k_ligand:
        raise DenoiserError(
            f"ligand type dim {y_v.shape[1]} != configured K {config.k_ligand}")
    if protein.types.shape[1] != config.k_protein:
        raise DenoiserError(
            f"protein type dim {protein.types.shape[1]} != configured "
            f"K_P {config.k_protein}")

    n_total = m + protein.n_atoms
    positions = np.vstack([y_x, protein.positions])

    feat = np.zeros((n_total, config.feature_dim))
    feat[:m, :config.k_ligand] = y_v
    feat[m:, config.k_ligand:config.k_ligand + config.k_protein] = protein.types
    feat[m:, config.k_ligand + config.k_protein] = 1.0  # is-protein flag
    feat[:, config.k_ligand + config.k_protein + 1:] = timestep_embedding(
        t, config.t_embed_dim, config.t_max)

    src, dst = build_edges(positions, config.cutoff, config.fc_threshold)
    if len(src) == 0:
        raise DenoiserError("graph has no edges")
    n_edges = len(src)
    gather_src = np.zeros((n_edges, n_total))
    gather_src[np.arange(n_edges), src] = 1.0
    gather_dst = np.zeros((n_edges, n_total))
    gather_dst[np.arange(n_edges), dst] = 1.0
    g_src = Tensor(gather_src)
    g_dst = Tensor(gather_dst)
    scatter_src = Tensor(gather_src.T)

    lig_mask = Tensor(np.concatenate([np.ones((m, 1)),
                                      np.zeros((protein.n_atoms, 1))]))

    h = Tensor(feat) @ params["embed.w"] + params["embed.b"]
    x = Tensor(positions)

    for i in range(config.n_layers):
        p = lambda name: params[f"layer{i}.{name}"]
        h_src = g_src @ h
        h_dst = g_dst @ h
        diff = g_src @ x - g_dst @ x
        d2 = (diff * diff).sum(axis=1, keepdims=True)

        msg = Tensor.concat([h_src, h_dst, d2], axis=1)
        msg = (msg @ p("edge.w1") + p("edge.b1")).silu()
        msg = (msg @ p("edge.w2") + p("edge.b2")).silu()

        weight = ((msg @ p("coord.w1") + p("coord.b1")).silu()
                  @ p("coord.w2") + p("coord.b2"))
        disp = diff * (weight / (d2.sqrt() + 1.0))
        x = x + (scatter_src @ disp) * lig_mask

        agg = scatter_src @ msg
        upd = (Tensor.concat([h, agg], axis=1) @ p("node.w1") + p("node.b1")).silu()
        h = h + upd @ p("node.w2") + p("node.b2")

    x0_hat = x[:m, :]
    logits = h[:m, :] @ params["type_head.w"] + params["type_head.b"]
    v0_hat = logits.softmax(axis=1)
    return x0_hat, v0_hat


def predict(y_xt: np.ndarray, y_vt: np.ndarray, t: int,
            protein: ProteinContext, params: dict[str, Tensor],
            config: DenoiserConfig) -> Prediction:
    """Inference-mode prediction: no gradient graph is built."""
    frozen = {k: v.detach() for k, v in params.items()}
    x0, v0 = forward(y_xt, y_vt, t, protein, frozen, config)
    return Prediction(x0=x0.data, v0=v0.data)


def save_checkpoint(path, params: dict[str, Tensor], config: DenoiserConfig,
                    extra: dict | None = None) -> None:
    meta = {"format": CHECKPOINT_FORMAT,
            "config": asdict(config),
            "extra": extra or {}}
    arrays = {f"param/{k}": v.data for k, v in params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(
            json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[dict[str, Tensor], DenoiserConfig, dict]:
    try:
        archive = np.load(path)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if "__meta__" not in archive:
        raise CheckpointError(f"{path}: missing checkpoint metadata")
    meta = json.loads(bytes(archive["__meta__"].tobytes()).decode())
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"{path}: unsupported format {meta.get('format')!r}")
    config = DenoiserConfig(**meta["config"])
    expected = param_shapes(config)
    params = {}
    for name, shape in expected.items():
        key = f"param/{name}"
        if key not in archive:
            raise CheckpointError(f"{path}: missing weight '{name}'")
        arr = archive[key]
        if arr.shape != shape:
            raise CheckpointError(
                f"{path}: weight '{name}' has shape {arr.shape}, "
                f"config implies {shape}")
        params[name] = Tensor(arr, requires_grad=True)
    return params, config, meta["extra"]
