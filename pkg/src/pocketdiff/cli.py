"""Command-line surface: gen-data, train, sample, eval, schedule.

Every subcommand is deterministic given its flags and seed. Failures
exit nonzero with a one-line ``ERROR:<module>:<kind>:`` prefix.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import dataio, denoiser, evalkit, plots, sampler, trainer
from .errors import CliError, PocketDiffError
from .schedules import AnnealSpec, dump_curves


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except PocketDiffError as exc:
        print(f"ERROR:{exc.module}:{exc.kind}: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pocketdiff",
        description="Pocket-conditioned molecular diffusion: synthetic corpus "
                    "generation, training, sampling, and evaluation.")
    sub = parser.add_subparsers(required=True, metavar="command")

    p = sub.add_parser("gen-data", help="materialize a synthetic corpus")
    p.add_argument("--spec", help="corpus spec file (flat key=value)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true",
                   help="allow writing into a non-empty directory")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", help="run the training loop")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="generate ligands for a pocket")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pocket", required=True, help="pocket XYZ file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=2021)
    p.add_argument("--m", type=int, help="fixed atom count override")
    p.add_argument("--sizes", help="corpus dir supplying the ligand size histogram")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("eval", help="bond and distance JSD report")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("schedule", help="tabulate annealing curves")
    p.add_argument("--anneal", nargs="+", required=True,
                   help="curve specs like 'arc,r=2,lower_bound=0.5' or "
                        "'original,mu=12' or 'arc,r=inf'")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(handler=cmd_schedule)
    return parser


def _require_file(path_str: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise CliError(f"file not found: {path}")
    return path


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(f"output directory {out} is not empty (use --force)")
    if args.spec is not None:
        spec = dataio.corpus_spec_from_kv(_require_file(args.spec).read_text())
    else:
        spec = dataio.CorpusSpec()
    if args.seed is not None:
        spec = dataio.CorpusSpec(**{**_spec_dict(spec), "seed": args.seed})
    count = dataio.write_corpus(spec, out)
    print(f"wrote {count} complexes to {out}")
    return 0


def _spec_dict(spec: dataio.CorpusSpec) -> dict:
    from dataclasses import asdict
    return asdict(spec)


def cmd_train(args) -> int:
    config = trainer.train_config_from_kv(_require_file(args.config).read_text())
    dataset = dataio.load_corpus(args.data)
    _, records = trainer.train(config, dataset, args.out)
    final = records[-1].loss if records else float("nan")
    print(f"trained {config.total_steps} steps; final loss {final}; "
          f"outputs in {args.out}")
    return 0


def cmd_sample(args) -> int:
    params, dconfig, extra = denoiser.load_checkpoint(_require_file(args.checkpoint))
    kv = extra.get("train_config", {})
    schedule_cfg = trainer.train_config_from_kv(dataio.format_kv(kv)) if kv \
        else trainer.TrainConfig()
    schedule = schedule_cfg.noise_schedule()
    protein = dataio.protein_from_xyz(_require_file(args.pocket))

    if args.m is None and args.sizes is None and args.n > 0:
        raise CliError("need --m or --sizes to choose ligand atom counts")
    sizes = sampler.ligand_sizes_from_manifest(args.sizes) if args.sizes else []

    rng = np.random.default_rng(np.random.SeedSequence([args.seed]))
    molecules = []
    for _ in range(args.n):
        m = sampler.choose_atom_count(sizes, rng, fixed=args.m)
        molecules.append(sampler.sample_molecule(
            protein, m, params, dconfig, schedule, rng))
    sampler.write_samples(args.out, molecules, Path(args.pocket).stem, args.seed)
    print(f"wrote {len(molecules)} samples to {args.out}")
    return 0


def _ligands_from_dir(dir_path: str):
    root = Path(dir_path)
    if not root.is_dir():
        raise CliError(f"not a directory: {root}")
    molecules = []
    for path in sorted(root.glob("*.xyz")):
        _, _, meta = dataio.read_xyz(path)
        if meta.get("role") == "ligand":
            molecules.append(dataio.molecule_from_xyz(path))
    if not molecules:
        raise CliError(f"no ligand XYZ files in {root}")
    return molecules


def cmd_eval(args) -> int:
    generated = _ligands_from_dir(args.generated)
    reference = _ligands_from_dir(args.reference)
    table = evalkit.default_bond_table()

    rows = evalkit.bond_report(generated, reference, table)
    all_atom = evalkit.all_atom_distance_jsd(generated, reference)
    rows.append({"metric": "all_atom", "class": "all", "jsd": all_atom,
                 "flag": ""})

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "class", "jsd", "flag"])
        for row in rows:
            writer.writerow([row["metric"], row["class"], repr(row["jsd"]),
                             row["flag"]])

    plots.save_eval_plot(evalkit.pairwise_distances(generated),
                         evalkit.pairwise_distances(reference),
                         evalkit.ALL_ATOM_BIN_EDGES,
                         [r for r in rows if r["metric"] == "bond"],
                         out.with_suffix(".png"))
    print(f"wrote report to {out} (figure: {out.with_suffix('.png')})")
    return 0


def parse_anneal_spec(text: str) -> tuple[str, AnnealSpec]:
    """'arc,r=2,lower_bound=0.5' -> (name, AnnealSpec)."""
    parts = text.split(",")
    kind = parts[0].strip()
    kwargs: dict = {"lower_bound": 0.0}
    disabled = False
    for part in parts[1:]:
        if "=" not in part:
            raise CliError(f"bad anneal option {part!r} in {text!r}")
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in ("mu", "slope", "r", "lower_bound", "epoch_divisor",
                       "p_init"):
            raise CliError(f"unknown anneal option {key!r} in {text!r}")
        if key == "r" and value.strip() in ("inf", "infinity"):
            disabled = True
            continue
        caster = int if key == "epoch_divisor" else float
        kwargs[key] = caster(value)
    try:
        spec = AnnealSpec(kind=kind, disabled=disabled, **kwargs)
    except TypeError as exc:
        raise CliError(f"bad anneal spec {text!r}: {exc}") from None
    return text, spec


def cmd_schedule(args) -> int:
    specs = [parse_anneal_spec(text) for text in args.anneal]
    header, rows = dump_curves(specs, args.epochs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([int(row[0])] + [repr(v) for v in row[1:]])
    plots.save_schedule_plot(header, rows, out.with_suffix(".png"))
    print(f"wrote curves to {out} (figure: {out.with_suffix('.png')})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
