"""Command-line entry point: ``preflabel <subcommand> ...``.

Every subcommand accepts the run-configuration flags below plus
``--config FILE``; flags given on the command line override the file.
Failures exit nonzero with the failing stage in brackets.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import logging
import sys
from dataclasses import fields
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import experiments as ex
from .config import RunConfig
from .graphs import read_edge_list
from .inference import MODES, predict
from .nn import load_checkpoint, normalized_adjacency, save_checkpoint
from .sat import cnf_to_graph, parse_dimacs
from .seeding import stage_rng

log = logging.getLogger("preflabel")

# RunConfig field -> flag spelling where it differs from the field name
FLAG_NAMES = {"K": "--k", "inference_mode": "--mode"}
BOOL_FIELDS = {"complement_edges"}
INT_FIELDS = {"threads"}
CHOICES = {"task": ("mis", "sat"), "inference_mode": MODES}


class CliError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _flag(name: str) -> str:
    return FLAG_NAMES.get(name, "--" + name.replace("_", "-"))


def _add_config_flags(p: argparse.ArgumentParser, skip: tuple[str, ...] = ()) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override it")
    g = p.add_argument_group("run configuration")
    for f in fields(RunConfig):
        if f.name in skip:
            continue
        if f.name in BOOL_FIELDS:
            g.add_argument(_flag(f.name), dest=f.name, action=argparse.BooleanOptionalAction, default=None)
            continue
        kind = int if f.name in INT_FIELDS else {int: int, float: float}.get(type(f.default), str)
        choices = CHOICES.get(f.name)
        g.add_argument(_flag(f.name), dest=f.name, type=kind, choices=choices, default=None)


def resolve_config(args: argparse.Namespace, base: RunConfig | None = None) -> RunConfig:
    """Defaults < ``base`` (e.g. from a checkpoint) < ``--config`` < flags."""
    cfg = base or RunConfig()
    if getattr(args, "config", None):
        cfg = RunConfig.load(args.config)
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    return cfg.replace(**overrides)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except CliError:
        raise
    except ex.StageError as exc:
        raise CliError(exc.stage, str(exc.__cause__ or exc)) from exc
    except Exception as exc:
        raise CliError(name, str(exc) or type(exc).__name__) from exc


def _load_model(path: str):
    with stage("load-checkpoint"):
        if not Path(path).exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        model, meta = load_checkpoint(path)
    return model, ex.config_from_checkpoint(meta)


# -- subcommands --------------------------------------------------------------


def cmd_generate(args) -> None:
    with stage("config"):
        cfg = resolve_config(args, RunConfig(task=args.task))
    with stage("generate"):
        instances = ex.generate(cfg, args.split, args.count)
        ex.save_dataset(cfg.task, instances, args.out)
    with stage("write"):
        cfg.save(_config_beside(args.out))
    log.info("wrote %d %s instances to %s", len(instances), cfg.task, args.out)


def _config_beside(path: str) -> Path:
    p = Path(path)
    return (p / "config.json") if p.is_dir() else p.with_name(p.name + ".config.json")


def cmd_train(args) -> None:
    with stage("config"):
        cfg = resolve_config(args)
        out = args.out or cfg.checkpoint
        if not out:
            raise ValueError("no output checkpoint given (--out)")
    with stage("generate"):
        instances = ex.dataset_for(cfg, "train")
    with stage("train"):
        model, report = ex.train_model(cfg, instances)
    with stage("write"):
        save_checkpoint(model, out, ex.checkpoint_meta(cfg))
        cfg.replace(checkpoint=str(out)).save(_config_beside(out))
        _emit(report.to_csv(), args.report)


def cmd_predict(args) -> None:
    model, saved = _load_model(args.ckpt)
    with stage("config"):
        cfg = resolve_config(args, saved)
    with stage("read-input"):
        path = Path(args.graph)
        node_mask = None
        if path.suffix == ".cnf":
            g, nm = cnf_to_graph(parse_dimacs(path.read_text(encoding="utf-8")), cfg.complement_edges)
            node_mask = nm.literal_mask()
        else:
            g = read_edge_list(path)
    with stage("predict"):
        rng = stage_rng(cfg.seed, "predict")
        pred = predict(
            model, g, cfg.inference_mode, cfg.m, rng, cfg.strategy_enum,
            exhaustive=args.exhaustive, node_mask=node_mask, a_hat=normalized_adjacency(g),
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "class", "probability"])
    for v, cls in enumerate(pred.hard_labels):
        w.writerow([v, int(cls), repr(float(pred.matrix[v, cls]))])
    _emit(buf.getvalue(), args.out)


def cmd_evaluate(args) -> None:
    model, saved = _load_model(args.ckpt)
    with stage("config"):
        cfg = resolve_config(args, saved).replace(task=args.task)
    with stage("generate"):
        instances = ex.dataset_for(cfg, "test")
    with stage("evaluate"):
        value = ex.evaluate_model(cfg, model, instances)
    row = ex.MetricRow(cfg.task, cfg.strategy, cfg.K, cfg.m, cfg.inference_mode, cfg.seed, ex.METRIC[cfg.task], value)
    _emit(ex.metrics_csv([row]), args.out)


def cmd_sweep(args) -> None:
    with stage("config"):
        cfg = resolve_config(args)
        strategies = args.strategies.split(",") if args.strategies else None
    with stage("sweep"):
        rows = ex.cmd_sweep(cfg, args.m_values, args.k_values, strategies, args.ckpt_dir, args.train_missing)
    with stage("write"):
        _emit(ex.sweep_csv(rows, ex.METRIC[cfg.task]), args.out)
        if args.out:
            cfg.save(_config_beside(args.out))


def cmd_equivariance(args) -> None:
    model, saved = _load_model(args.ckpt)
    with stage("config"):
        cfg = resolve_config(args, saved)
    with stage("read-input"):
        if args.graphs:
            graphs = [read_edge_list(p) for p in args.graphs]
        else:
            graphs = ex.random_small_graphs(args.count, seed=cfg.seed)
    with stage("equivariance"):
        report = ex.cmd_equivariance(model, graphs, cfg.strategy_enum, args.sampled_m or None, cfg.seed)
    _emit(report.to_csv(), args.out)
    print(f"exhaustive: {report.passed}/{report.total} pass, strict {report.strict}/{report.total}", file=sys.stderr)
    if report.sampled_passed is not None:
        print(f"sampled m={args.sampled_m}: {report.sampled_passed}/{report.total} pass", file=sys.stderr)


def cmd_run(args) -> None:
    with stage("config"):
        cfg = resolve_config(args)
    with stage("run"):
        rows = ex.cmd_end_to_end(cfg, args.out or cfg.out_dir)
    sys.stdout.write(ex.metrics_csv(rows))


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="preflabel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a labelled MIS or SAT dataset")
    p.add_argument("task", choices=("mis", "sat"))
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out", required=True, help="file (mis) or directory (sat)")
    _add_config_flags(p, skip=("task",))
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--report", help="training report CSV (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-node classes for one graph or CNF file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", required=True, help="edge-list file, or DIMACS when ending in .cnf")
    p.add_argument("--exhaustive", action="store_true", help="score all n! labelings")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy (mis) or formula error rate (sat)")
    p.add_argument("task", choices=("mis", "sat"))
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out")
    _add_config_flags(p, skip=("task",))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="metric over inference labelings m and training labelings K")
    p.add_argument("--m-values", type=_int_list, default=[1, 2, 5, 10])
    p.add_argument("--k-values", type=_int_list, default=None)
    p.add_argument("--strategies", help="comma-separated, default: the configured strategy")
    p.add_argument("--ckpt-dir")
    p.add_argument("--train-missing", action="store_true", help="train models whose checkpoint is absent")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("equivariance", help="audit generalized equivariance on small graphs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graphs", nargs="*", help="edge-list files (default: random corpus)")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--sampled-m", type=int, default=2, help="0 disables the sampled pass")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_equivariance)

    p = sub.add_parser("run", help="generate, train and evaluate in one go")
    p.add_argument("--out", help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = getattr(args, "threads", None)
    limits = threadpool_limits(limits=threads) if threads else contextlib.nullcontext()
    try:
        with limits:
            args.func(args)
    except CliError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
