"""Command line front end.

Subcommands: canonicalize, train, sample, verify-theory, metrics. Every run
writes a manifest.json (command, arguments, effective config, seed, library
versions) into the output directory, which defaults to $GAUGEFLOW_OUTDIR and
then the working directory. Exit codes: 0 success, 1 a verification or
validation check failed, 2 usage error, 3 unreadable or unparseable input.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, molecule, sampler, theorylab
from .canonicalizer import CanonicalizationError, canonicalize
from .flowcore import toydata, training
from .flowcore.training import TrainConfig, trace_to_csv

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

PALETTE = ["#1f6feb", "#d1242f", "#1a7f37", "#9a6700", "#8250df", "#bf3989"]

# user-facing group names are hyphenated; internal ones use underscores
GROUP_FLAGS = {"perm": "perm", "perm-so3": "perm_so3"}
HAAR_FLAGS = {"off": "none", "perm": "perm", "perm-so3": "perm_so3"}


class UsageError(Exception):
    pass


def _outdir(args) -> Path:
    out = getattr(args, "outdir", None) or os.environ.get("GAUGEFLOW_OUTDIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(outdir: Path, command: str, args, seed, config: dict | None = None) -> None:
    skip = {"func", "outdir"}
    arg_doc = {}
    for key, value in vars(args).items():
        if key in skip:
            continue
        if isinstance(value, Path):
            value = str(value)
        arg_doc[key] = value
    doc = {
        "command": command,
        "args": arg_doc,
        "seed": seed,
        "versions": {
            "gaugeflow": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if config is not None:
        doc["config"] = config
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        doc = json.load(fh)
    allowed = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return TrainConfig(**doc)


def _read_molecule(path: Path) -> molecule.MoleculeState:
    text = path.read_text()
    if path.suffix.lower() == ".sdf":
        return molecule.parse_sdf(text)
    if path.suffix.lower() == ".xyz":
        return molecule.parse_xyz(text)
    raise UsageError(f"unsupported molecule format: {path.name}")


def svg_line_plot(xs, series: dict, path, width: int = 640, height: int = 360,
                  title: str = "") -> None:
    """Minimal self-contained SVG: one polyline per series plus a legend."""
    margin = 48
    xs = np.asarray(xs, dtype=np.float64)
    all_y = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    finite = all_y[np.isfinite(all_y)]
    y_lo = float(finite.min()) if finite.size else 0.0
    y_hi = float(finite.max()) if finite.size else 1.0
    if y_hi - y_lo < 1e-12:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(xs.min()), float(xs.max())
    if x_hi - x_lo < 1e-12:
        x_hi = x_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
        f'<text x="{margin}" y="{height - margin + 16}" font-size="10">{x_lo:.3g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 16}" text-anchor="end" '
        f'font-size="10">{x_hi:.3g}</text>',
        f'<text x="{margin - 4}" y="{height - margin}" text-anchor="end" '
        f'font-size="10">{y_lo:.3g}</text>',
        f'<text x="{margin - 4}" y="{margin + 4}" text-anchor="end" '
        f'font-size="10">{y_hi:.3g}</text>',
    ]
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=np.float64)
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys)
                       if np.isfinite(y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin + 4}" y="{margin + 14 * i}" '
                     f'font-size="10" fill="{color}">{name}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_canonicalize(args) -> int:
    outdir = _outdir(args)
    group = GROUP_FLAGS[args.group]
    for name in args.inputs:
        path = Path(name)
        mol = _read_molecule(path)
        if group == "perm_so3" and mol.n_atoms < 3:
            print(f"warning: {path.name} has fewer than three atoms; "
                  "the rotation stage is degenerate", file=sys.stderr)
        result = canonicalize(mol, group=group, ordering=args.ordering)
        rep = result.representative
        if path.suffix.lower() == ".sdf":
            out_path = outdir / f"{path.stem}.canonical.sdf"
            out_path.write_text(molecule.write_sdf(rep))
        else:
            out_path = outdir / f"{path.stem}.canonical.xyz"
            out_path.write_text(molecule.write_xyz(rep))
        with open(outdir / f"{path.stem}.ranks.csv", "w") as fh:
            fh.write("index,rank,atomic_number,degenerate\n")
            for i in range(rep.n_atoms):
                fh.write(f"{i},{result.ranks[i]:.8f},{rep.atom_types[i]},"
                         f"{int(result.degenerate)}\n")
        flag = " degenerate" if result.degenerate else ""
        print(f"{path.name}: {mol.n_atoms} atoms -> {out_path.name}{flag}")
    _write_manifest(outdir, "canonicalize", args, seed=None)
    return EXIT_OK


def _load_training_data(data_arg: str, seed: int):
    if data_arg in ("c4", "c4-canonical"):
        rng = np.random.default_rng([seed, 9])
        blobs = toydata.c4_blobs(2000, rng)
        if data_arg == "c4-canonical":
            blobs = toydata.sector_canonicalize(blobs)[0]
        return blobs
    path = Path(data_arg)
    if path.suffix == ".npz":
        with np.load(path) as doc:
            if "data" not in doc:
                raise UsageError("npz input must contain a 'data' array")
            return np.asarray(doc["data"], dtype=np.float64)
    if path.is_dir():
        files = sorted(list(path.glob("*.sdf")) + list(path.glob("*.xyz")))
        if not files:
            raise UsageError(f"no .sdf or .xyz files under {path}")
        mols = [_read_molecule(f) for f in files]
        return [canonicalize(m, group="perm_so3").representative for m in mols]
    raise UsageError("data must be c4, c4-canonical, an .npz file, "
                     "or a directory of molecules")


def cmd_train(args) -> int:
    outdir = _outdir(args)
    cfg = _load_train_config(args.config) if args.config else TrainConfig()
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.seed is not None:
        cfg.seed = args.seed
    if args.ot is not None:
        if args.ot == "anneal":
            cfg.ot_mode = "exact"
            cfg.ot_anneal = True
        else:
            cfg.ot_mode = args.ot
            cfg.ot_anneal = False
    data = _load_training_data(args.data, cfg.seed)
    model, trace = training.train(data, cfg)
    model.save(outdir / "checkpoint.json")
    if trace:
        trace_to_csv(trace, outdir / "trace.csv")
        xs = [row["epoch"] for row in trace]
        series = {key: [row.get(key, np.nan) for row in trace]
                  for key in trace[0] if key != "epoch"}
        svg_line_plot(xs, series, outdir / "trace.svg", title="training trace")
        print(f"trained {model.kind} model for {cfg.epochs} epochs; "
              f"final loss {trace[-1]['loss']:.6g}")
    else:
        print(f"trained {model.kind} model for 0 epochs; checkpoint holds "
              "the initialization")
    _write_manifest(outdir, "train", args, seed=cfg.seed, config=cfg.to_dict())
    return EXIT_OK


def cmd_sample(args) -> int:
    outdir = _outdir(args)
    try:
        model = training.FlowModel.load(args.model)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: cannot load checkpoint {args.model}: {exc}", file=sys.stderr)
        return EXIT_IO
    model.load_ema()
    cfg = sampler.SampleConfig(
        steps=args.steps, regime=args.regime, cfg_scale=args.cfg_scale,
        prior=args.prior, group=HAAR_FLAGS[args.haar], seed=args.seed,
        canonicalize_mode=args.canonicalize_mode,
    )
    if args.n == 0:
        _write_manifest(outdir, "sample", args, seed=args.seed,
                        config=dataclasses.asdict(cfg))
        print("n=0: wrote manifest only")
        return EXIT_OK
    if model.kind == "vector_field":
        samples = sampler.sample_vectors(model, args.n, cfg)
        np.savez(outdir / "samples.npz", samples=samples)
        with open(outdir / "sample_metrics.csv", "w") as fh:
            dim = samples.shape[1]
            cols = ",".join(f"z{j}" for j in range(dim))
            fh.write(f"index,{cols},norm\n")
            for i, z in enumerate(samples):
                vals = ",".join(f"{v:.8f}" for v in z)
                fh.write(f"{i},{vals},{np.linalg.norm(z):.8f}\n")
        print(f"wrote {len(samples)} vectors to samples.npz")
    else:
        if args.n_atoms is None:
            raise UsageError("--n-atoms is required for molecular checkpoints")
        mols, info = sampler.sample(model, args.n_atoms, args.n, cfg)
        table = molecule.ValenceTable()
        write_one = molecule.write_sdf if args.format == "sdf" else molecule.write_xyz
        for i, m in enumerate(mols):
            (outdir / f"sample_{i:05d}.{args.format}").write_text(write_one(m))
        with open(outdir / "sample_metrics.csv", "w") as fh:
            fh.write("index,n_atoms,atom_stability,mol_stable\n")
            for i, m in enumerate(mols):
                flags, stable = molecule.stability(m, table)
                fh.write(f"{i},{m.n_atoms},{flags.mean():.6f},{int(stable)}\n")
        report = molecule.compute_metrics(mols, table)
        with open(outdir / "metrics.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        print(f"wrote {len(mols)} molecules; canonicalizer calls during "
              f"sampling: {info['canonicalize_calls']}")
    _write_manifest(outdir, "sample", args, seed=args.seed,
                    config=dataclasses.asdict(cfg))
    return EXIT_OK


def cmd_verify(args) -> int:
    outdir = _outdir(args)
    systems = None if args.system == "all" else (args.system,)
    n_mc = int(float(args.n)) if args.n is not None else None
    report = theorylab.run_default_suite(
        seed=args.seed, fast=args.fast, inject_failure=args.inject_failure,
        systems=systems, n_mc=n_mc)
    for line in report.summary_lines():
        print(line)
    report_path = Path(args.out) if args.out else outdir / "theory_report.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(report_path)
    _write_manifest(outdir, "verify-theory", args, seed=args.seed)
    return EXIT_OK if report.all_passed else EXIT_CHECK_FAILED


def _collect_metric_inputs(inputs) -> tuple[list, list]:
    mol_paths, trace_paths = [], []
    for name in inputs:
        path = Path(name)
        if path.is_dir():
            found = sorted(list(path.glob("*.sdf")) + list(path.glob("*.xyz")))
            if not found:
                raise OSError(f"no .sdf or .xyz files under {path}")
            mol_paths.extend(found)
        elif path.suffix.lower() == ".csv":
            trace_paths.append(path)
        else:
            mol_paths.append(path)
    return mol_paths, trace_paths


def cmd_metrics(args) -> int:
    outdir = _outdir(args)
    mol_paths, trace_paths = _collect_metric_inputs(args.inputs)

    for trace_path in trace_paths:
        with open(trace_path) as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise OSError(f"{trace_path} holds no rows")
        xs = [float(r.get("epoch", i)) for i, r in enumerate(rows)]
        series = {}
        for key in rows[0]:
            if key == "epoch":
                continue
            series[key] = [float(r[key]) if r[key] not in ("", None) else np.nan
                           for r in rows]
        svg_path = outdir / f"{trace_path.stem}.svg"
        svg_line_plot(xs, series, svg_path, title=trace_path.stem)
        print(f"{trace_path.name} -> {svg_path.name}")

    if mol_paths:
        mols = [_read_molecule(p) for p in mol_paths]
        report = molecule.compute_metrics(mols, molecule.ValenceTable())
        doc = report.to_dict()
        print(json.dumps(doc, indent=2, sort_keys=True))
        with open(outdir / "metrics.json", "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        with open(outdir / "metrics.csv", "w") as fh:
            keys = sorted(doc)
            fh.write(",".join(keys) + "\n")
            fh.write(",".join(str(doc[k]) for k in keys) + "\n")
    _write_manifest(outdir, "metrics", args, seed=None)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaugeflow",
        description="canonicalization, canonical flow training, and theory checks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("canonicalize", help="map molecules to canonical form")
    p.add_argument("inputs", nargs="+", help=".xyz or .sdf files")
    p.add_argument("--group", default="perm-so3", choices=sorted(GROUP_FLAGS))
    p.add_argument("--ordering", default="spectral",
                   choices=["spectral", "multihop", "atomic"])
    p.add_argument("-o", "--outdir", default=None)
    p.set_defaults(func=cmd_canonicalize)

    p = sub.add_parser("train", help="train a flow model on canonical data")
    p.add_argument("--data", required=True,
                   help="c4 | c4-canonical | .npz with a 'data' array | "
                        "directory of molecules")
    p.add_argument("--config", default=None, help="TrainConfig JSON")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ot", default=None, choices=["none", "exact", "sinkhorn", "anneal"],
                   help="slice coupling; anneal ramps the OT probability")
    p.add_argument("-o", "--outdir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample from a trained checkpoint")
    p.add_argument("--model", required=True, help="checkpoint JSON path")
    p.add_argument("--n", type=int, default=64, help="number of samples")
    p.add_argument("--n-atoms", type=int, default=None)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--regime", default="a", choices=["a", "b"])
    p.add_argument("--prior", default="aligned", choices=["isotropic", "aligned"])
    p.add_argument("--haar", default="off", choices=sorted(HAAR_FLAGS),
                   help="post-hoc group randomization of the samples")
    p.add_argument("--canonicalize-mode", action="store_true",
                   help="regime b re-canonicalizes the partial sample each step")
    p.add_argument("--format", default="xyz", choices=["xyz", "sdf"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", "--outdir", dest="outdir", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify-theory", help="run the Monte Carlo check battery")
    p.add_argument("--system", default="all",
                   choices=["signflip", "c4", "s3", "all"])
    p.add_argument("--n", default=None,
                   help="Monte Carlo sample count, e.g. 1e6")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fast", action="store_true",
                   help="smaller sample sizes, looser but quick")
    p.add_argument("--out", default=None, help="report JSON path")
    p.add_argument("--inject-failure", action="store_true",
                   help=argparse.SUPPRESS)
    p.add_argument("-o", "--outdir", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("metrics", help="stability/uniqueness of molecule files "
                                       "or directories; trace CSV -> SVG")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--outdir", default=None)
    p.set_defaults(func=cmd_metrics)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CanonicalizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (OSError, molecule.ParseError, molecule.UnsupportedElementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
