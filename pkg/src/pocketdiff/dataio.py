"""Synthetic pocket/ligand corpus generation and XYZ-style file I/O.

Ligands are instantiated from a small template library (chains, a ring,
and a branched fragment) whose edge lengths double as the ground-truth
bond windows used by the evaluator; pockets are shells of protein atoms
placed around the ligand. Generation is a pure function of (spec, seed).

Directory layout: ``corpus/<id>_ligand.xyz``, ``corpus/<id>_pocket.xyz``,
``corpus/manifest.csv``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .diffusion import Complex, Molecule, ProteinContext, one_hot
from .errors import DataError

LIGAND_TYPES = ("C", "N", "O", "F")
PROTEIN_TYPES = ("PA", "PB")

# (unordered element pair, order class) -> target length in Angstrom
BOND_LENGTHS = {
    ("C", "C", "single"): 1.54,
    ("C", "C", "double"): 1.34,
    ("C", "C", "aromatic"): 1.40,
    ("C", "N", "single"): 1.47,
    ("C", "N", "double"): 1.28,
    ("C", "O", "single"): 1.43,
    ("C", "O", "double"): 1.23,
    ("C", "F", "single"): 1.35,
}

_ORDER_SYMBOL = {"single": "-", "double": "=", "aromatic": ":"}


def bond_class_name(a: str, b: str, order: str) -> str:
    lo, hi = sorted((a, b))
    return f"{lo}{_ORDER_SYMBOL[order]}{hi}"


def bond_length(a: str, b: str, order: str) -> float:
    lo, hi = sorted((a, b))
    return BOND_LENGTHS[(lo, hi, order)]


@dataclass(frozen=True)
class Template:
    name: str
    types: tuple[str, ...]
    coords: np.ndarray                       # (m, 3), exact edge lengths
    edges: tuple[tuple[int, int, str], ...]  # (i, j, order class)

    @property
    def size(self) -> int:
        return len(self.types)


def _chain(name, types, orders):
    """Planar zig-zag chain with exact bond lengths."""
    coords = [np.zeros(3)]
    for k, order in enumerate(orders):
        length = bond_length(types[k], types[k + 1], order)
        angle = 0.45 if k % 2 == 0 else -0.45
        step = np.array([math.cos(angle), math.sin(angle), 0.0]) * length
        coords.append(coords[-1] + step)
    edges = tuple((k, k + 1, orders[k]) for k in range(len(orders)))
    return Template(name, tuple(types), np.array(coords), edges)


def _ring(name, n, elem, order):
    length = bond_length(elem, elem, order)
    radius = length / (2.0 * math.sin(math.pi / n))
    coords = np.array([[radius * math.cos(2 * math.pi * k / n),
                        radius * math.sin(2 * math.pi * k / n), 0.0]
                       for k in range(n)])
    edges = tuple((k, (k + 1) % n, order) for k in range(n))
    return Template(name, (elem,) * n, coords, edges)


def _branched():
    # central carbon with four exact-length substituents along
    # tetrahedral directions
    dirs = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
                    dtype=float) / math.sqrt(3.0)
    subs = ("N", "O", "F", "C")
    coords = [np.zeros(3)]
    edges = []
    for k, elem in enumerate(subs):
        coords.append(dirs[k] * bond_length("C", elem, "single"))
        edges.append((0, k + 1, "single"))
    return Template("branched", ("C",) + subs, np.array(coords), tuple(edges))


TEMPLATES = (
    _chain("amine_chain", ["C", "C", "N", "C"], ["single", "single", "single"]),
    _chain("ester_like", ["O", "C", "C", "O"], ["double", "single", "single"]),
    _chain("ene_imine", ["C", "C", "C", "N"], ["double", "single", "double"]),
    _ring("aromatic6", 6, "C", "aromatic"),
    _branched(),
)


@dataclass(frozen=True)
class CorpusSpec:
    n_complexes: int = 500
    ligand_size_min: int = 4
    ligand_size_max: int = 6
    pocket_size_min: int = 8
    pocket_size_max: int = 12
    shell_radius: float = 4.0
    jitter: float = 0.02
    seed: int = 2021

    def __post_init__(self):
        if self.ligand_size_min > self.ligand_size_max:
            raise DataError("empty ligand size range")
        if self.pocket_size_min > self.pocket_size_max:
            raise DataError("empty pocket size range")
        if not any(self.ligand_size_min <= t.size <= self.ligand_size_max
                   for t in TEMPLATES):
            raise DataError("no template fits the ligand size range")


_SPEC_KEYS = {f.name: f.type for f in fields(CorpusSpec)}


def corpus_spec_from_kv(text: str) -> CorpusSpec:
    kv = parse_kv(text)
    kwargs = {}
    for key, value in kv.items():
        if key not in _SPEC_KEYS:
            raise DataError(
                f"unknown corpus spec key '{key}'; valid keys: "
                + ", ".join(sorted(_SPEC_KEYS)))
        caster = int if _SPEC_KEYS[key] == "int" else float
        kwargs[key] = caster(value)
    return CorpusSpec(**kwargs)


def parse_kv(text: str) -> dict[str, str]:
    """Flat key=value config text; '#' starts a comment line."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def format_kv(kv: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in kv.items())


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR decomposition of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _onehot_types(names, vocab):
    index = {name: i for i, name in enumerate(vocab)}
    try:
        idx = np.array([index[n] for n in names])
    except KeyError as exc:
        raise DataError(f"unknown atom type {exc.args[0]!r}") from None
    return one_hot(idx, len(vocab))


def generate_complex(spec: CorpusSpec, rng: np.random.Generator,
                     ) -> tuple[Complex, str]:
    """One ligand/pocket pair; returns the complex and its template name."""
    eligible = [t for t in TEMPLATES
                if spec.ligand_size_min <= t.size <= spec.ligand_size_max]
    template = eligible[rng.integers(len(eligible))]

    rot = random_rotation(rng)
    shift = rng.uniform(-2.0, 2.0, 3)
    lig_pos = template.coords @ rot.T + shift
    lig_pos = lig_pos + spec.jitter * rng.standard_normal(lig_pos.shape)
    ligand = Molecule(lig_pos, _onehot_types(template.types, LIGAND_TYPES))

    n_pocket = int(rng.integers(spec.pocket_size_min, spec.pocket_size_max + 1))
    pocket_pos = np.empty((n_pocket, 3))
    r = spec.shell_radius
    for i in range(n_pocket):
        while True:
            anchor = lig_pos[rng.integers(len(lig_pos))]
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            candidate = anchor + r * direction
            nearest = np.min(np.linalg.norm(lig_pos - candidate, axis=1))
            if r - 0.5 <= nearest <= r + 0.5:
                pocket_pos[i] = candidate
                break
    pocket_types = _onehot_types(
        [PROTEIN_TYPES[k] for k in rng.integers(0, len(PROTEIN_TYPES), n_pocket)],
        PROTEIN_TYPES)
    protein = ProteinContext(pocket_pos, pocket_types)
    return Complex(protein=protein, ligand=ligand), template.name


def generate_corpus(spec: CorpusSpec) -> list[tuple[Complex, str]]:
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.n_complexes)
    return [generate_complex(spec, np.random.default_rng(child))
            for child in children]


def write_xyz(path, positions: np.ndarray, type_names: list[str],
              role: str, vocab_size: int) -> None:
    path = Path(path)
    lines = [str(len(type_names)),
             f"role={role} k={vocab_size} source=pocketdiff"]
    for name, pos in zip(type_names, positions):
        lines.append(f"{name} {pos[0]:.6f} {pos[1]:.6f} {pos[2]:.6f}")
    path.write_text("\n".join(lines) + "\n")


def read_xyz(path) -> tuple[np.ndarray, list[str], dict[str, str]]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(lines) < 2:
        raise DataError(f"{path}: truncated file ({len(lines)} lines)")
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise DataError(f"{path}: line 1: expected atom count, got {lines[0]!r}") \
            from None
    meta = dict(pair.split("=", 1) for pair in lines[1].split() if "=" in pair)
    rows = [line for line in lines[2:] if line.strip()]
    if len(rows) != count:
        raise DataError(
            f"{path}: count line says {count} atoms but found {len(rows)} rows")
    positions = np.empty((count, 3))
    names = []
    for i, row in enumerate(rows):
        parts = row.split()
        if len(parts) != 4:
            raise DataError(f"{path}: line {i + 3}: expected 'TYPE x y z', got {row!r}")
        names.append(parts[0])
        try:
            positions[i] = [float(p) for p in parts[1:]]
        except ValueError:
            raise DataError(f"{path}: line {i + 3}: bad coordinate in {row!r}") \
                from None
    return positions, names, meta


def molecule_type_names(mol: Molecule) -> list[str]:
    return [LIGAND_TYPES[k] for k in np.argmax(mol.types, axis=1)]


def molecule_from_xyz(path) -> Molecule:
    positions, names, meta = read_xyz(path)
    if meta.get("role") not in (None, "ligand"):
        raise DataError(f"{path}: expected role=ligand, got {meta.get('role')}")
    return Molecule(positions, _onehot_types(names, LIGAND_TYPES))


def protein_from_xyz(path) -> ProteinContext:
    positions, names, meta = read_xyz(path)
    if meta.get("role") not in (None, "protein"):
        raise DataError(f"{path}: expected role=protein, got {meta.get('role')}")
    return ProteinContext(positions, _onehot_types(names, PROTEIN_TYPES))


def write_corpus(spec: CorpusSpec, out_dir) -> int:
    """Materialize the corpus under out_dir; returns the complex count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = generate_corpus(spec)
    manifest_rows = []
    for i, (cplx, template_name) in enumerate(entries):
        cid = f"{i:05d}"
        write_xyz(out_dir / f"{cid}_ligand.xyz", cplx.ligand.positions,
                  molecule_type_names(cplx.ligand), "ligand", len(LIGAND_TYPES))
        pocket_names = [PROTEIN_TYPES[k]
                        for k in np.argmax(cplx.protein.types, axis=1)]
        write_xyz(out_dir / f"{cid}_pocket.xyz", cplx.protein.positions,
                  pocket_names, "protein", len(PROTEIN_TYPES))
        manifest_rows.append([cid, f"{cid}_ligand.xyz", f"{cid}_pocket.xyz",
                              template_name, cplx.ligand.n_atoms,
                              cplx.protein.n_atoms])
    with open(out_dir / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "ligand", "pocket", "template", "m", "n"])
        writer.writerows(manifest_rows)
    (out_dir / "corpus_spec.txt").write_text(
        format_kv({f.name: getattr(spec, f.name) for f in fields(CorpusSpec)}))
    return len(entries)


def filter_by_pose_quality(complexes: list[Complex],
                           max_rmsd: float = 1.0) -> list[Complex]:
    """Pose-quality filter hook.

    Real docking corpora drop complexes whose ligand pose deviates too
    far (RMSD above max_rmsd) from a reference pose. Synthetic complexes
    are generated directly in their reference pose, so there is nothing
    to measure against and this hook keeps every complex. It exists so a
    real-data loader can slot a filter in without touching callers.
    """
    if max_rmsd <= 0:
        raise DataError(f"max_rmsd must be positive, got {max_rmsd}")
    return list(complexes)


def load_corpus(corpus_dir) -> list[Complex]:
    corpus_dir = Path(corpus_dir)
    manifest = corpus_dir / "manifest.csv"
    if not manifest.exists():
        raise DataError(f"no manifest.csv in {corpus_dir}")
    complexes = []
    with open(manifest, newline="") as fh:
        for row in csv.DictReader(fh):
            ligand = molecule_from_xyz(corpus_dir / row["ligand"])
            protein = protein_from_xyz(corpus_dir / row["pocket"])
            complexes.append(Complex(protein=protein, ligand=ligand))
    if not complexes:
        raise DataError(f"empty corpus in {corpus_dir}")
    return filter_by_pose_quality(complexes)
