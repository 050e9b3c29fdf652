"""``pacs`` command line: phantom, simulate, train, reconstruct, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import PRESETS, RunConfig

log = logging.getLogger("pacs")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(_error_line("usage", message, None), file=sys.stderr)
        sys.exit(2)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config; keys override the preset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--seed", type=int, help="base seed for phantoms, noise and training")
    p.add_argument("--out", help="output directory")
    p.add_argument("--scheme", choices=("sparse", "bernoulli"), help="sampling scheme")
    p.add_argument("--noise", type=float, help="relative noise level, e.g. 0.07")
    p.add_argument("--n-train", type=int, help="number of training phantoms")
    p.add_argument("--n-eval", type=int, help="number of evaluation phantoms")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pacs", description="Compressed-sensing photoacoustic reconstruction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="render training and evaluation phantoms")
    _common(p)

    p = sub.add_parser("simulate", help="simulate full data, CS measurements and initial images")
    _common(p)

    p = sub.add_parser("train", help="train the regularizer or the residual U-net")
    _common(p)
    p.add_argument("--model", choices=pipeline.MODELS, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("reconstruct", help="reconstruct the evaluation measurements")
    _common(p)
    p.add_argument("--method", choices=pipeline.METHODS + ("all",), required=True)
    p.add_argument("--mu", type=float, help="step size")
    p.add_argument("--alpha", type=float, help="l1: coupling weight")
    p.add_argument("--beta", type=float, help="l1: sparsity weight")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--weights", help="NETW file for the learned methods")
    p.add_argument("--clamp", action="store_true", help="clamp NETT iterates to be non-negative")

    p = sub.add_parser("evaluate", help="tabulate metrics for every method")
    _common(p)
    p.add_argument("--methods", nargs="+", choices=pipeline.METHODS, default=list(pipeline.METHODS))
    return parser


def load_config(args) -> RunConfig:
    cfg = PRESETS[args.preset]()
    if args.config:
        cfg = RunConfig.load(args.config, base=cfg)
    patch: dict = {}
    if args.seed is not None:
        patch["seed"] = args.seed
    if args.out is not None:
        patch["out"] = args.out
    if args.scheme is not None:
        patch["sampling"] = {"kind": args.scheme}
    if args.noise is not None:
        patch["noise_level"] = args.noise
    if args.n_train is not None or args.n_eval is not None:
        patch["phantom"] = {k: v for k, v in (("n_train", args.n_train), ("n_eval", args.n_eval)) if v is not None}
    return RunConfig.from_dict(patch, base=cfg)


def run(args) -> dict:
    cfg = load_config(args)
    if args.command == "phantom":
        return pipeline.cmd_phantom(cfg)
    if args.command == "simulate":
        return pipeline.cmd_simulate(cfg)
    if args.command == "train":
        return pipeline.cmd_train(cfg, args.model, args.epochs, args.lr)
    if args.command == "reconstruct":
        methods = pipeline.METHODS if args.method == "all" else (args.method,)
        out = {}
        for m in methods:
            out[m] = pipeline.cmd_reconstruct(cfg, m, args.weights, mu=args.mu, lam=args.lam, iters=args.iters,
                                              clamp=args.clamp, alpha=args.alpha, beta=args.beta)
        return out
    if args.command == "evaluate":
        report = pipeline.cmd_evaluate(cfg, args.methods)
        print((Path(cfg.out) / "report" / cfg.data_tag / "report.txt").read_text(), end="")
        return report
    raise AssertionError(args.command)


def _error_line(code: str, message: str, command: str | None) -> str:
    return "pacs-error " + json.dumps({"code": code, "command": command, "message": message}, sort_keys=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        run(args)
    except pipeline.PipelineError as exc:
        print(_error_line(exc.code, str(exc), args.command), file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        code = "io-error" if isinstance(exc, OSError) else "invalid-input"
        print(_error_line(code, str(exc), args.command), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
