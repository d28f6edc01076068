"""Command-line entry point: ``embedauth {genref,authenticate,simulate}``.

Precedence for settings is flag > config file > built-in default. Every
failure prints one ``error: <Kind>: <message>`` line on stderr and exits
nonzero.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .auth import AuthenticationServer, FlagPolicy, format_verdicts
from .config import ExperimentConfig, load_config, with_overrides
from .errors import ConfigError, EmbedAuthError, FingerprintMismatch
from .experiment import run_experiment
from .metrics import ClientSubmission, MetricWeights
from .reference import (build_reference_model, check_dim, fingerprint, load_reference_model,
                        read_embeddings, save_reference_model)


def parse_weights(text: str) -> MetricWeights:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected wF,wM,wC,p")
    try:
        return MetricWeights(*(float(p) for p in parts))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def parse_policy(text: str) -> str:
    try:
        return str(FlagPolicy.parse(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: UsageError: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config (JSON, version 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--policy", type=parse_policy, help="largest_gap | topk:K | threshold:THETA")
    p.add_argument("--weights", type=parse_weights, metavar="wF,wM,wC,p")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="embedauth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("genref", help="build a reference model from trusted embeddings")
    p.add_argument("embeddings", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--percentile", type=float)
    p.add_argument("--shrinkage", type=float)
    _common(p)

    p = sub.add_parser("authenticate", help="score and rank client submissions")
    p.add_argument("model", type=Path)
    p.add_argument("submissions", type=Path)
    p.add_argument("--reference", type=Path,
                   help="reference embeddings the model was built from (enables micro-cluster scoring)")
    p.add_argument("--round", type=int, default=0)
    _common(p)

    p = sub.add_parser("simulate", help="run the full clean / auth-off / auth-on experiment grid")
    p.add_argument("--rule", choices=("fedavg", "trimmed_mean", "krum"))
    p.add_argument("--poison-fraction", type=float)
    p.add_argument("--workers", type=int)
    _common(p)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return with_overrides(
        cfg,
        seed=args.seed,
        out_dir=str(args.out_dir) if args.out_dir else None,
        policy=args.policy,
        weights=args.weights,
        rule=getattr(args, "rule", None),
        poison_fraction=getattr(args, "poison_fraction", None),
        workers=getattr(args, "workers", None),
    )


def _same_file(a: Path, b: Path) -> bool:
    return a.resolve() == b.resolve()


def cmd_genref(args) -> int:
    cfg = _config(args)
    if _same_file(args.embeddings, args.out):
        raise ConfigError("output path would overwrite the input embeddings")
    table = read_embeddings(args.embeddings)
    q = args.percentile if args.percentile is not None else cfg.reference.percentile
    lam = args.shrinkage if args.shrinkage is not None else cfg.reference.shrinkage
    classes = cfg.world.classes if args.config else None
    model = build_reference_model(table.vectors, table.labels, classes, q, lam)
    save_reference_model(model, args.out)
    print(f"wrote {args.out}: {len(model.classes)} classes, d={model.dim}, fingerprint {model.created_from[:16]}")
    return 0


def cmd_authenticate(args) -> int:
    cfg = _config(args)
    model = load_reference_model(args.model)
    table = read_embeddings(args.submissions)
    check_dim(model, table.dim, "submissions")
    ref_data = None
    if args.reference is not None:
        ref = read_embeddings(args.reference)
        check_dim(model, ref.dim, "reference embeddings")
        if fingerprint(ref.vectors, ref.labels) != model.created_from:
            raise FingerprintMismatch(f"{args.reference} is not the dataset the model was built from")
        ref_data = {c: ref.vectors[ref.labels == c] for c in model.class_ids}
    subs = [ClientSubmission(cid, X, y) for cid, (X, y) in table.by_client().items()]
    server = AuthenticationServer(model, ref_data, cfg.weights, cfg.micro_cluster, cfg.flag_policy(),
                                  cfg.seed, cfg.workers)
    result = server.authenticate(subs, args.round)
    text = format_verdicts(args.round, result.reports, result.verdicts)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"verdicts_round_{args.round:03d}.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg)
    out = result.write()
    sys.stdout.write(result.summary_text())
    print(f"outputs in {out}")
    return 0


COMMANDS = {"genref": cmd_genref, "authenticate": cmd_authenticate, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except EmbedAuthError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {exc.kind}: {msg}", file=sys.stderr)
    except OSError as exc:
        print(f"error: IOError: {exc}".replace("\n", " "), file=sys.stderr)
    except ValueError as exc:
        print(f"error: ValueError: {exc}".replace("\n", " "), file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
