"""Command-line interface: ``formula-embed <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks
from .dag import build_dag, to_dot, to_json
from .nets import ConfigError, ModelConfig
from .syntax import FormulaParseError, FormulaSyntaxError, alpha_normalize, parse_sexpr, parse_tptp_fof, to_sexpr
from .trainer import (
    CheckpointError,
    DatasetError,
    compile_formula,
    evaluate,
    load_checkpoint,
    load_dataset,
    rank_premises,
    save_checkpoint,
    top_k,
    train,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_CHECKPOINT = 5

log = logging.getLogger("formula_embed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_FAILURE)


def _read(path) -> str:
    return sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")


def _parse_inputs(args):
    """All formulae in the input file (TPTP files may hold several)."""
    text = _read(args.input)
    if getattr(args, "tptp", False):
        stmts = parse_tptp_fof(text)
        if not stmts:
            raise FormulaSyntaxError("no fof statements found", 0, text)
        return [ast for _, _, ast in stmts]
    return [parse_sexpr(text)]


def _emit(text: str, output=None):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_parse(args) -> int:
    _emit("".join(to_sexpr(alpha_normalize(ast)) + "\n" for ast in _parse_inputs(args)))
    return EXIT_OK


def cmd_dagify(args) -> int:
    asts = _parse_inputs(args)
    if len(asts) != 1:
        raise FormulaSyntaxError(f"dagify expects one formula, found {len(asts)}", 0, "")
    dag = build_dag(alpha_normalize(asts[0]))
    _emit(to_dot(dag) if args.format == "dot" else to_json(dag), args.output)
    return EXIT_OK


def _load_config(path) -> ModelConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ModelConfig.from_dict(data)


def cmd_train(args) -> int:
    config = _load_config(args.config)
    train_set = load_dataset(args.train)
    dev_set = load_dataset(args.dev)
    metrics_path = args.metrics or str(Path(args.out).with_suffix(".metrics.jsonl"))
    ckpt, metrics = train(
        config,
        train_set,
        dev_set,
        epochs=args.epochs,
        seed=args.seed,
        batch_size=args.batch_size,
        lr=args.lr,
        metrics_path=metrics_path,
    )
    save_checkpoint(ckpt, args.out)
    best = max((m["dev_accuracy"] for m in metrics), default=None)
    print(f"wrote {args.out} and {metrics_path}; best dev accuracy {best}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    data = load_dataset(args.data)
    res = evaluate(ckpt, data)
    out = {"accuracy": res["accuracy"], "loss": res["loss"], "n": res["n"]}
    sys.stdout.write(json.dumps(out, sort_keys=True, separators=(",", ":")) + "\n")
    return EXIT_OK


def _read_premises(path):
    premises, problems, seen = [], [], set()
    for n, line in enumerate(_read(path).splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            problems.append((n, "expected premise_id<TAB>formula"))
            continue
        pid, text = parts
        if pid in seen:
            problems.append((n, f"duplicate premise id {pid!r}"))
            continue
        seen.add(pid)
        try:
            premises.append((pid, compile_formula(text)))
        except FormulaParseError as e:
            problems.append((n, str(e)))
    if problems:
        raise DatasetError(problems, path)
    if not premises:
        raise DatasetError([(0, "premise pool is empty")], path)
    return premises


def _parse_k(value: str):
    if value == "all":
        return None
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"k must be a positive integer or 'all', got {value!r}") from None
    if k <= 0:
        raise argparse.ArgumentTypeError("k must be positive")
    return k


def cmd_rank(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    try:
        conjecture = compile_formula(_read(args.conjecture))
    except FormulaParseError as e:
        raise DatasetError([(e.line or 0, str(e))], args.conjecture) from None
    ranking = rank_premises(ckpt, conjecture, _read_premises(args.premises))
    sys.stdout.write("".join(f"{pid}\t{score!r}\n" for pid, score in top_k(ranking, args.k)))
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    def progress(o):
        print(f"{'PASS' if o.ok else 'FAIL'} {o.name}: {o.detail} ({o.seconds:.1f}s)", file=sys.stderr)

    report = checks.run_selfcheck(args.level, fault=args.inject_fault, progress=progress)
    summary = {"level": args.level, "ok": report.ok, "failed": report.failures, "checked": len(report.outcomes)}
    sys.stdout.write(json.dumps(summary, sort_keys=True, separators=(",", ":")) + "\n")
    if not report.ok:
        print("selfcheck failed: " + ", ".join(report.failures), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="formula-embed", description="Graph embeddings of first-order formulae.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("parse", help="print the normalized canonical s-expression")
    sp.add_argument("--input", required=True, help="formula file, or - for stdin")
    sp.add_argument("--tptp", action="store_true", help="input is a TPTP fof(...) statement")
    sp.set_defaults(func=cmd_parse)

    sp = sub.add_parser("dagify", help="export the formula DAG")
    sp.add_argument("--input", required=True)
    sp.add_argument("--tptp", action="store_true")
    sp.add_argument("--format", choices=("dot", "json"), default="dot")
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_dagify)

    sp = sub.add_parser("train", help="train a model and write a checkpoint")
    sp.add_argument("--config", required=True, help="JSON file with ModelConfig fields")
    sp.add_argument("--train", required=True)
    sp.add_argument("--dev", required=True)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, default=5)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--metrics", help="metrics log path (default: <out>.metrics.jsonl)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="accuracy and loss of a checkpoint on a dataset")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("rank", help="rank a premise pool against a conjecture")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--conjecture", required=True)
    sp.add_argument("--premises", required=True, help="lines of premise_id<TAB>formula")
    sp.add_argument("--k", type=_parse_k, default=None, help="keep the top N, or 'all' (default)")
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("selfcheck", help="run gradient and oracle property checks")
    sp.add_argument("--level", choices=("fast", "full"), default="fast")
    sp.add_argument("--inject-fault", choices=("gradient",), default=None, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except FormulaParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except DatasetError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA if args.command in ("train", "eval", "rank") else EXIT_PARSE


if __name__ == "__main__":
    raise SystemExit(main())
