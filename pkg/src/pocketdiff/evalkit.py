"""Distributional evaluation: bond-length and all-atom-distance histograms
compared with the Jensen-Shannon divergence (base 2, so JSD is in [0, 1]).

Bond detection is purely geometric: an atom pair is a bond of a given
class when its distance falls inside that class's length window for the
pair's element types; overlapping windows are resolved by the nearest
window midpoint. The default windows come from the corpus templates'
ground-truth lengths +/- 0.1 A, so the generator and the evaluator share
one table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import BOND_LENGTHS, bond_class_name, molecule_type_names
from .diffusion import Molecule
from .errors import EvalError

BOND_BIN_EDGES = np.linspace(0.8, 2.2, 65)     # 64 bins
ALL_ATOM_BIN_EDGES = np.linspace(0.0, 12.0, 101)  # 100 bins


@dataclass(frozen=True)
class BondSpec:
    """One bond class: element pair + order class + length window in A."""

    elem_a: str
    elem_b: str
    order: str
    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 < self.lo < self.hi:
            raise EvalError(f"bad window [{self.lo}, {self.hi}] for {self.name}")

    @property
    def name(self) -> str:
        return bond_class_name(self.elem_a, self.elem_b, self.order)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def pair(self) -> tuple[str, str]:
        return tuple(sorted((self.elem_a, self.elem_b)))


def default_bond_table(width: float = 0.1) -> list[BondSpec]:
    return [BondSpec(a, b, order, length - width, length + width)
            for (a, b, order), length in BOND_LENGTHS.items()]


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise EvalError(
                f"histogram needs len(edges)-1 counts, got {len(self.counts)} "
                f"for {len(self.edges)} edges")

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def probs(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise EvalError("cannot normalize an empty histogram")
        return self.counts / total


def build_histogram(values, edges) -> Histogram:
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=edges)
    return Histogram(edges=np.asarray(edges), counts=counts.astype(np.float64))


def detect_bonds(molecule: Molecule, table: list[BondSpec],
                 ) -> list[tuple[int, int, BondSpec]]:
    """All atom pairs (i < j) whose distance falls inside a window for
    their element pair; ties across overlapping windows go to the nearest
    window midpoint (first table entry on an exact tie)."""
    names = molecule_type_names(molecule)
    pos = molecule.positions
    bonds = []
    m = len(names)
    for i in range(m):
        for j in range(i + 1, m):
            pair = tuple(sorted((names[i], names[j])))
            d = float(np.linalg.norm(pos[i] - pos[j]))
            candidates = [s for s in table
                          if s.pair == pair and s.lo <= d <= s.hi]
            if candidates:
                best = min(candidates, key=lambda s: abs(d - s.midpoint))
                bonds.append((i, j, best))
    return bonds


def jsd(p: Histogram, q: Histogram) -> float:
    """Jensen-Shannon divergence, log base 2."""
    if not np.array_equal(p.edges, q.edges):
        raise EvalError("histograms must share identical binning")
    pp, qq = p.probs(), q.probs()
    m = 0.5 * (pp + qq)
    return 0.5 * _kl2(pp, m) + 0.5 * _kl2(qq, m)


def _kl2(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log2(p[mask] / q[mask])).sum())


def pairwise_distances(molecules: list[Molecule]) -> np.ndarray:
    """All intra-molecule pairwise atom distances, pooled."""
    out = []
    for mol in molecules:
        pos = mol.positions
        diffs = pos[:, None, :] - pos[None, :, :]
        d = np.sqrt((diffs ** 2).sum(axis=-1))
        iu = np.triu_indices(len(pos), k=1)
        out.append(d[iu])
    return np.concatenate(out) if out else np.array([])


def all_atom_distance_jsd(generated: list[Molecule], reference: list[Molecule],
                          edges=ALL_ATOM_BIN_EDGES) -> float:
    if not generated or not reference:
        raise EvalError("both molecule sets must be nonempty")
    return jsd(build_histogram(pairwise_distances(generated), edges),
               build_histogram(pairwise_distances(reference), edges))


def bond_lengths_by_class(molecules: list[Molecule], table: list[BondSpec],
                          ) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for mol in molecules:
        pos = mol.positions
        for i, j, spec in detect_bonds(mol, table):
            out.setdefault(spec.name, []).append(
                float(np.linalg.norm(pos[i] - pos[j])))
    return out


def bond_report(generated: list[Molecule], reference: list[Molecule],
                table: list[BondSpec], edges=BOND_BIN_EDGES,
                ) -> list[dict]:
    """One JSD row per bond class present in the reference set.

    Classes with no bonds in the generated set report JSD 1 with a
    'missing' flag.
    """
    ref_lengths = bond_lengths_by_class(reference, table)
    gen_lengths = bond_lengths_by_class(generated, table)
    rows = []
    for name in sorted(ref_lengths):
        ref_hist = build_histogram(ref_lengths[name], edges)
        if name in gen_lengths:
            value = jsd(build_histogram(gen_lengths[name], edges), ref_hist)
            flag = ""
        else:
            value = 1.0
            flag = "missing"
        rows.append({"metric": "bond", "class": name, "jsd": value, "flag": flag})
    return rows
