"""Corpus generation and XYZ round-trip tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pocketdiff import dataio, evalkit
from pocketdiff.diffusion import Molecule, one_hot
from pocketdiff.errors import DataError


class TestTemplates:
    def test_library_size_and_vocab(self):
        assert len(dataio.TEMPLATES) >= 4
        for template in dataio.TEMPLATES:
            assert set(template.types) <= set(dataio.LIGAND_TYPES)

    def test_edge_lengths_exact(self):
        for template in dataio.TEMPLATES:
            for i, j, order in template.edges:
                d = np.linalg.norm(template.coords[i] - template.coords[j])
                expected = dataio.bond_length(template.types[i],
                                              template.types[j], order)
                assert d == pytest.approx(expected, abs=1e-9)

    def test_bond_class_name_sorted(self):
        assert dataio.bond_class_name("N", "C", "single") == "C-N"
        assert dataio.bond_class_name("C", "C", "double") == "C=C"
        assert dataio.bond_class_name("C", "C", "aromatic") == "C:C"


class TestGenerateComplex:
    def test_zero_jitter_preserves_edge_lengths(self):
        spec = dataio.CorpusSpec(n_complexes=1, jitter=0.0, seed=7)
        rng = np.random.default_rng(7)
        cplx, name = dataio.generate_complex(spec, rng)
        template = {t.name: t for t in dataio.TEMPLATES}[name]
        for i, j, order in template.edges:
            d = np.linalg.norm(cplx.ligand.positions[i]
                               - cplx.ligand.positions[j])
            expected = dataio.bond_length(template.types[i],
                                          template.types[j], order)
            assert d == pytest.approx(expected, abs=1e-9)

    def test_shell_radius_window(self):
        spec = dataio.CorpusSpec(n_complexes=1, shell_radius=4.0, seed=3)
        for trial in range(10):
            cplx, _ = dataio.generate_complex(spec, np.random.default_rng(trial))
            for p in cplx.protein.positions:
                nearest = np.min(np.linalg.norm(
                    cplx.ligand.positions - p, axis=1))
                assert 3.5 <= nearest <= 4.5

    def test_same_seed_identical(self):
        spec = dataio.CorpusSpec(n_complexes=5, seed=11)
        a = dataio.generate_corpus(spec)
        b = dataio.generate_corpus(spec)
        for (ca, na), (cb, nb) in zip(a, b):
            assert na == nb
            np.testing.assert_array_equal(ca.ligand.positions,
                                          cb.ligand.positions)
            np.testing.assert_array_equal(ca.protein.positions,
                                          cb.protein.positions)

    def test_detect_bonds_recovers_template_edges(self):
        # connectivity contract: small jitter keeps every template edge
        # inside its evaluation window
        spec = dataio.CorpusSpec(n_complexes=20, jitter=0.02, seed=5)
        table = evalkit.default_bond_table()
        template_by_name = {t.name: t for t in dataio.TEMPLATES}
        for cplx, name in dataio.generate_corpus(spec):
            template = template_by_name[name]
            found = {(min(i, j), max(i, j))
                     for i, j, _ in evalkit.detect_bonds(cplx.ligand, table)}
            expected = {(min(i, j), max(i, j)) for i, j, _ in template.edges}
            assert expected <= found

    def test_size_range_errors(self):
        with pytest.raises(DataError):
            dataio.CorpusSpec(ligand_size_min=6, ligand_size_max=4)
        with pytest.raises(DataError):
            dataio.CorpusSpec(pocket_size_min=12, pocket_size_max=8)
        with pytest.raises(DataError):
            dataio.CorpusSpec(ligand_size_min=100, ligand_size_max=200)


class TestKvConfig:
    def test_parse_and_comments(self):
        kv = dataio.parse_kv("# comment\na = 1\n\nb=two\n")
        assert kv == {"a": "1", "b": "two"}

    def test_parse_error_names_line(self):
        with pytest.raises(DataError, match="line 2"):
            dataio.parse_kv("a=1\nnot a pair\n")

    def test_round_trip(self):
        kv = {"x": "1", "y": "2.5"}
        assert dataio.parse_kv(dataio.format_kv(kv)) == kv

    def test_spec_from_kv_unknown_key(self):
        with pytest.raises(DataError, match="unknown corpus spec key"):
            dataio.corpus_spec_from_kv("bogus=1\n")

    def test_spec_from_kv_values(self):
        spec = dataio.corpus_spec_from_kv("n_complexes=7\nshell_radius=5.5\n")
        assert spec.n_complexes == 7
        assert spec.shell_radius == 5.5


class TestXyz:
    def test_single_atom_round_trip(self, tmp_path):
        path = tmp_path / "one.xyz"
        dataio.write_xyz(path, np.zeros((1, 3)), ["C"], "ligand", 4)
        positions, names, meta = dataio.read_xyz(path)
        np.testing.assert_array_equal(positions, np.zeros((1, 3)))
        assert names == ["C"]
        assert meta["role"] == "ligand"
        assert meta["k"] == "4"

    @settings(max_examples=50, deadline=None)
    @given(atoms=st.lists(st.tuples(
        st.sampled_from(dataio.LIGAND_TYPES),
        st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100)),
        min_size=1, max_size=12))
    def test_round_trip_property(self, atoms, tmp_path_factory):
        path = tmp_path_factory.mktemp("xyz") / "mol.xyz"
        names = [a[0] for a in atoms]
        positions = np.array([a[1:] for a in atoms])
        dataio.write_xyz(path, positions, names, "ligand", 4)
        got_pos, got_names, _ = dataio.read_xyz(path)
        assert got_names == names
        assert np.max(np.abs(got_pos - positions)) <= 1e-6

    def test_count_mismatch_names_both_numbers(self, tmp_path):
        path = tmp_path / "bad.xyz"
        path.write_text("3\nrole=ligand\nC 0 0 0\nC 1 0 0\n")
        with pytest.raises(DataError, match="says 3 atoms but found 2"):
            dataio.read_xyz(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.xyz"
        path.write_text("1\nrole=ligand\nC 0 0\n")
        with pytest.raises(DataError, match="line 3"):
            dataio.read_xyz(path)

    def test_bad_coordinate_names_line(self, tmp_path):
        path = tmp_path / "bad.xyz"
        path.write_text("1\nrole=ligand\nC 0 zero 0\n")
        with pytest.raises(DataError, match="line 3"):
            dataio.read_xyz(path)

    def test_role_check(self, tmp_path):
        path = tmp_path / "p.xyz"
        dataio.write_xyz(path, np.zeros((1, 3)), ["PA"], "protein", 2)
        with pytest.raises(DataError, match="expected role=ligand"):
            dataio.molecule_from_xyz(path)
        protein = dataio.protein_from_xyz(path)
        assert protein.n_atoms == 1


class TestCorpusIo:
    def test_write_and_load(self, tmp_path):
        spec = dataio.CorpusSpec(n_complexes=4, seed=9)
        count = dataio.write_corpus(spec, tmp_path)
        assert count == 4
        assert (tmp_path / "manifest.csv").exists()
        assert (tmp_path / "corpus_spec.txt").exists()
        loaded = dataio.load_corpus(tmp_path)
        generated = dataio.generate_corpus(spec)
        assert len(loaded) == 4
        for got, (want, _) in zip(loaded, generated):
            # 6-decimal text format bounds the round-trip error
            assert np.max(np.abs(got.ligand.positions
                                 - want.ligand.positions)) <= 1e-6
            np.testing.assert_array_equal(got.ligand.types, want.ligand.types)

    def test_spec_echo_parses_back(self, tmp_path):
        spec = dataio.CorpusSpec(n_complexes=2, seed=13, shell_radius=3.0)
        dataio.write_corpus(spec, tmp_path)
        echoed = dataio.corpus_spec_from_kv(
            (tmp_path / "corpus_spec.txt").read_text())
        assert echoed == spec

    def test_load_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="manifest"):
            dataio.load_corpus(tmp_path)

    def test_pose_filter_is_identity(self):
        spec = dataio.CorpusSpec(n_complexes=3, seed=1)
        complexes = [c for c, _ in dataio.generate_corpus(spec)]
        assert dataio.filter_by_pose_quality(complexes) == complexes
        with pytest.raises(DataError):
            dataio.filter_by_pose_quality(complexes, max_rmsd=0.0)


def test_random_rotation_is_proper():
    for seed in range(5):
        rot = dataio.random_rotation(np.random.default_rng(seed))
        np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)


def test_molecule_type_names():
    mol = Molecule(np.zeros((3, 3)), one_hot(np.array([0, 2, 3]), 4))
    assert dataio.molecule_type_names(mol) == ["C", "O", "F"]
