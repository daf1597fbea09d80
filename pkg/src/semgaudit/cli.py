"""Command-line entry point: ``semgaudit <command> [options]``."""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, load_config, with_overrides
from .errors import ConfigError, SemgAuditError

PIPELINE_COMMANDS = {
    "ingest": "ingest",
    "impute": "impute",
    "extract": "extract",
    "fit": "fit",
    "audit": "audit",
    "pls": "pls",
    "report": "report",
    "run": "report",
}
BUNDLED = Path(__file__).parent / "configs"


def _common():
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="TOML or JSON config file, or the name of a bundled config (smoke)")
    p.add_argument("--seed", type=int, default=S, help="seed for imputation, sPLS folds and synthetic data")
    p.add_argument("--jobs", type=int, default=S, help="worker processes")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--data", default=S, help="dataset manifest or directory (sets data.source = path)")
    p.add_argument("--window-fraction", type=float, default=S)
    p.add_argument("--keep-x", type=int, default=S)
    p.add_argument("--fdr-family", choices=["joint", "per-demographic"], default=S)
    p.add_argument("--df-method", choices=["residual", "between"], default=S)
    p.add_argument("--no-noise", action="store_true", default=S, help="deterministic imputation without noise")
    p.add_argument("--set", action="append", default=S, metavar="SECTION.KEY=VALUE", help="override any config field")
    p.add_argument("-v", "--verbose", action="store_true", default=S)
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="semgaudit", parents=[common], description="sEMG feature demographic-sensitivity audit"
    )
    parser.add_argument("--version", action="version", version=f"semgaudit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "validate the dataset and apply the exclusion rule",
        "impute": "fill missing demographics (chained equations)",
        "extract": "compute the 147-feature matrix",
        "fit": "fit one mixed model per feature",
        "audit": "FDR correction, dual threshold and ranking",
        "pls": "sparse PLS, Q2 and clustered image map",
        "report": "render figures and their CSVs",
        "run": "every stage (same as report)",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--force", action="store_true", help="ignore cached stage outputs")
    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("directory", nargs="?", help="target directory (default: --out)")
    p.add_argument("--subjects", type=int, help="number of subjects")
    return parser


def resolve_config(args):
    name = getattr(args, "config", None)
    if name is None:
        cfg = PipelineConfig()
    else:
        path = Path(name)
        if not path.exists() and (BUNDLED / f"{name}.toml").exists():
            path = BUNDLED / f"{name}.toml"
        cfg = load_config(path)
    sets = list(getattr(args, "set", []))
    if hasattr(args, "data"):
        sets += ["data.source=path", f"data.path={Path(args.data).resolve()}"]
    if hasattr(args, "window_fraction"):
        sets.append(f"data.window_fraction={args.window_fraction}")
    if hasattr(args, "keep_x"):
        sets.append(f"spls.keep_x={args.keep_x}")
    if hasattr(args, "fdr_family"):
        sets.append(f"audit.fdr_family={args.fdr_family}")
    if hasattr(args, "df_method"):
        sets.append(f"lmm.df_method={args.df_method}")
    if getattr(args, "no_noise", False):
        sets.append("mice.noise=false")
    if hasattr(args, "seed"):
        sets += [f"mice.seed={args.seed}", f"spls.seed={args.seed}"]
        if cfg.synth:
            sets.append(f"synth.seed={args.seed}")
    if hasattr(args, "out"):
        sets.append(f"out_dir={args.out}")
    if hasattr(args, "jobs"):
        sets.append(f"jobs={args.jobs}")
    if sets:
        cfg = with_overrides(cfg, sets)
    return cfg


def _check_runnable(cfg):
    if cfg.data.source == "path" and not cfg.data.path:
        raise ConfigError("no dataset: pass --data or a config with [data] path (or source = 'synth')")


def cmd_synth(args):
    from .dataset import write_dataset
    from .synth.generator import SynthSpec, generate_population, write_ground_truth

    spec, cfg = SynthSpec(), None
    if hasattr(args, "config"):
        cfg = resolve_config(args)
        if cfg.synth:
            spec = cfg.synth_spec()
    changes = {}
    if args.subjects:
        changes["n_subjects"] = args.subjects
    if hasattr(args, "seed"):
        changes["seed"] = args.seed
    if changes:
        spec = SynthSpec.from_dict({**spec.to_dict(), **changes})
    target = Path(args.directory or getattr(args, "out", None) or (cfg.out_dir if cfg else "synthetic_data"))
    tensors, table, truth = generate_population(spec, jobs=getattr(args, "jobs", 1))
    manifest = write_dataset(target, tensors, table)
    write_ground_truth(truth, target / "ground_truth.json")
    print(f"wrote {len(tensors)} subjects to {manifest}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = resolve_config(args)
        _check_runnable(cfg)
        from .pipeline import run_pipeline

        run_pipeline(cfg, until=PIPELINE_COMMANDS[args.command], force=args.force)
        print(f"outputs in {cfg.out_dir} ({cfg.stamp()})")
        return 0
    except SemgAuditError as exc:
        print(f"semgaudit: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
