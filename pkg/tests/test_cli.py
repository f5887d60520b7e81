"""CLI surface tests, run in-process through main()."""

import csv

import numpy as np
import pytest

from pocketdiff import cli, dataio

TRAIN_KV = """\
total_steps=3
batch_size=2
hidden_dim=8
n_layers=1
t_embed_dim=8
T=10
checkpoint_interval=0
anneal=arc
r=2
lower_bound=0.5
"""


def _run(argv):
    return cli.main(argv)


def _gen(tmp_path, n=3, seed=2021):
    tmp_path.mkdir(parents=True, exist_ok=True)
    out = tmp_path / "corpus"
    spec = tmp_path / "spec.txt"
    spec.write_text(f"n_complexes={n}\nseed={seed}\n")
    assert _run(["gen-data", "--spec", str(spec), "--out", str(out)]) == 0
    return out


class TestGenData:
    def test_manifest_row_count(self, tmp_path):
        out = _gen(tmp_path, n=4)
        with open(out / "manifest.csv", newline="") as fh:
            assert len(list(csv.DictReader(fh))) == 4

    def test_same_seed_identical(self, tmp_path):
        a = _gen(tmp_path / "a", n=3)
        b = _gen(tmp_path / "b", n=3)
        assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()
        assert (a / "00000_ligand.xyz").read_bytes() \
            == (b / "00000_ligand.xyz").read_bytes()

    def test_nonempty_out_requires_force(self, tmp_path, capsys):
        out = _gen(tmp_path)
        assert _run(["gen-data", "--out", str(out)]) == 1
        assert capsys.readouterr().err.startswith("ERROR:cli:")
        spec = tmp_path / "spec.txt"
        assert _run(["gen-data", "--spec", str(spec), "--out", str(out),
                     "--force"]) == 0

    def test_missing_spec_file(self, tmp_path, capsys):
        missing = tmp_path / "nope.txt"
        assert _run(["gen-data", "--spec", str(missing),
                     "--out", str(tmp_path / "o")]) == 1
        assert str(missing) in capsys.readouterr().err

    def test_seed_flag_overrides_spec(self, tmp_path):
        a = _gen(tmp_path / "a", n=2, seed=1)
        out = tmp_path / "b"
        spec = tmp_path / "spec2.txt"
        spec.write_text("n_complexes=2\nseed=999\n")
        assert _run(["gen-data", "--spec", str(spec), "--out", str(out),
                     "--seed", "1"]) == 0
        assert (a / "00000_ligand.xyz").read_bytes() \
            == (out / "00000_ligand.xyz").read_bytes()


class TestTrain:
    def _train(self, tmp_path, extra=""):
        corpus = _gen(tmp_path)
        config = tmp_path / "train.txt"
        config.write_text(TRAIN_KV + extra)
        run = tmp_path / "run"
        assert _run(["train", "--config", str(config), "--data", str(corpus),
                     "--out", str(run)]) == 0
        return run

    def test_outputs_and_p_column(self, tmp_path):
        run = self._train(tmp_path)
        assert (run / "checkpoint_final.npz").exists()
        assert (run / "config_resolved.txt").exists()
        with open(run / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        assert float(rows[0]["p_T"]) == 1.0

    def test_disabled_anneal_always_ground_truth(self, tmp_path):
        run = self._train(tmp_path, extra="anneal=disabled\n")
        with open(run / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["chose_gt_fraction"]) == 1.0 for r in rows)

    def test_unknown_config_key(self, tmp_path, capsys):
        corpus = _gen(tmp_path)
        config = tmp_path / "bad.txt"
        config.write_text("bogus_key=1\n")
        assert _run(["train", "--config", str(config), "--data", str(corpus),
                     "--out", str(tmp_path / "run")]) == 1
        err = capsys.readouterr().err
        assert err.startswith("ERROR:trainer:config:")
        assert "valid keys" in err

    def test_zero_steps(self, tmp_path):
        run = self._train(tmp_path, extra="total_steps=0\n")
        assert (run / "checkpoint_final.npz").exists()
        with open(run / "metrics.csv", newline="") as fh:
            assert list(csv.DictReader(fh)) == []


class TestSample:
    def _checkpoint(self, tmp_path):
        corpus = _gen(tmp_path)
        config = tmp_path / "train.txt"
        config.write_text(TRAIN_KV)
        run = tmp_path / "run"
        _run(["train", "--config", str(config), "--data", str(corpus),
              "--out", str(run)])
        return run / "checkpoint_final.npz", corpus

    def test_fixed_m_and_determinism(self, tmp_path):
        ckpt, corpus = self._checkpoint(tmp_path)
        pocket = corpus / "00000_pocket.xyz"
        for name in ("s1", "s2"):
            assert _run(["sample", "--checkpoint", str(ckpt),
                         "--pocket", str(pocket), "--n", "2", "--m", "8",
                         "--seed", "7", "--out", str(tmp_path / name)]) == 0
        with open(tmp_path / "s1" / "manifest.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["m"]) for r in rows] == [8, 8]
        assert (tmp_path / "s1" / "sample_00000.xyz").read_bytes() \
            == (tmp_path / "s2" / "sample_00000.xyz").read_bytes()

    def test_n_zero_empty_manifest(self, tmp_path):
        ckpt, corpus = self._checkpoint(tmp_path)
        out = tmp_path / "empty"
        assert _run(["sample", "--checkpoint", str(ckpt),
                     "--pocket", str(corpus / "00000_pocket.xyz"),
                     "--n", "0", "--out", str(out)]) == 0
        with open(out / "manifest.csv", newline="") as fh:
            assert list(csv.DictReader(fh)) == []

    def test_sizes_from_corpus(self, tmp_path):
        ckpt, corpus = self._checkpoint(tmp_path)
        out = tmp_path / "sz"
        assert _run(["sample", "--checkpoint", str(ckpt),
                     "--pocket", str(corpus / "00001_pocket.xyz"),
                     "--n", "3", "--sizes", str(corpus),
                     "--out", str(out)]) == 0
        with open(out / "manifest.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(4 <= int(r["m"]) <= 6 for r in rows)

    def test_needs_m_or_sizes(self, tmp_path, capsys):
        ckpt, corpus = self._checkpoint(tmp_path)
        assert _run(["sample", "--checkpoint", str(ckpt),
                     "--pocket", str(corpus / "00000_pocket.xyz"),
                     "--n", "1", "--out", str(tmp_path / "x")]) == 1
        assert "ERROR:cli:" in capsys.readouterr().err


class TestEval:
    def test_generated_equals_reference_zero(self, tmp_path, capsys):
        corpus = _gen(tmp_path, n=5)
        out = tmp_path / "report.csv"
        assert _run(["eval", "--generated", str(corpus),
                     "--reference", str(corpus), "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows, "report must have at least the all_atom row"
        for row in rows:
            assert float(row["jsd"]) == pytest.approx(0.0, abs=1e-12)
        assert out.with_suffix(".png").exists()

    def test_empty_dir_error(self, tmp_path, capsys):
        corpus = _gen(tmp_path)
        empty = tmp_path / "none"
        empty.mkdir()
        assert _run(["eval", "--generated", str(empty),
                     "--reference", str(corpus),
                     "--out", str(tmp_path / "r.csv")]) == 1
        assert "ERROR:cli:" in capsys.readouterr().err


class TestSchedule:
    def test_curve_values(self, tmp_path):
        out = tmp_path / "curves.csv"
        assert _run(["schedule", "--anneal", "arc,r=2", "original,mu=12",
                     "linear,slope=-0.005", "--epochs", "201",
                     "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        first, last = rows[0], rows[200]
        assert float(first["arc,r=2"]) == pytest.approx(1.0)
        assert float(first["original,mu=12"]) == pytest.approx(0.9231, abs=1e-4)
        assert float(last["linear,slope=-0.005"]) == pytest.approx(0.0)
        assert float(rows[100]["arc,r=2"]) == pytest.approx(
            np.sqrt(3.0) / 2.0, abs=1e-9)
        assert out.with_suffix(".png").exists()

    def test_r_inf_constant(self, tmp_path):
        out = tmp_path / "flat.csv"
        assert _run(["schedule", "--anneal", "arc,r=inf", "--epochs", "50",
                     "--out", str(out)]) == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(float(r["arc,r=inf"]) == 1.0 for r in rows)

    def test_bad_anneal_option(self, tmp_path, capsys):
        assert _run(["schedule", "--anneal", "arc,warp=9", "--epochs", "5",
                     "--out", str(tmp_path / "x.csv")]) == 1
        assert "ERROR:cli:" in capsys.readouterr().err
