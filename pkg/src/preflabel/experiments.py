"""Generate -> train -> evaluate pipelines, labeling-count sweeps and the
generalized-equivariance audit, all driven by a :class:`RunConfig`."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import mis, sat
from .config import RunConfig
from .graphs import Graph, all_permutations, automorphisms, generate_random_graph
from .inference import check_generalized_equivariance, preferential_predict
from .nn import NodeClassifier, load_checkpoint, save_checkpoint
from .seeding import derive_seed, stage_rng
from .trainer import TrainReport, train

log = logging.getLogger(__name__)

METRIC = {"mis": "accuracy", "sat": "error_rate"}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


def data_seed(cfg: RunConfig, split: str) -> int:
    return derive_seed(cfg.seed, "data", cfg.task, split)


def generate(cfg: RunConfig, split: str, count: int | None = None):
    if count is None:
        count = cfg.train_count if split == "train" else cfg.test_count
    if cfg.task == "mis":
        return mis.generate_mis_dataset(count, (cfg.n_min, cfg.n_max), cfg.edge_prob, data_seed(cfg, split))
    return sat.generate_sat_dataset(
        count, (cfg.var_min, cfg.var_max), cfg.clause_ratio, cfg.clause_len, data_seed(cfg, split)
    )


def load_dataset(task: str, path: str | Path):
    return mis.load_mis_dataset(path) if task == "mis" else sat.load_sat_dataset(path)


def save_dataset(task: str, instances, path: str | Path) -> None:
    if task == "mis":
        mis.save_mis_dataset(instances, path)
    else:
        sat.save_sat_dataset(instances, path)


def dataset_for(cfg: RunConfig, split: str):
    path = cfg.train_data if split == "train" else cfg.test_data
    return load_dataset(cfg.task, path) if path else generate(cfg, split)


def samples_for(cfg: RunConfig, instances):
    if cfg.task == "mis":
        return [inst.sample() for inst in instances]
    return [inst.sample(cfg.complement_edges) for inst in instances]


def train_model(cfg: RunConfig, instances=None) -> tuple[NodeClassifier, TrainReport]:
    instances = dataset_for(cfg, "train") if instances is None else instances
    return train(samples_for(cfg, instances), cfg.train_config())


def evaluate_model(
    cfg: RunConfig,
    model: NodeClassifier,
    instances,
    mode: str | None = None,
    m: int | None = None,
) -> float:
    mode = cfg.inference_mode if mode is None else mode
    m = cfg.m if m is None else m
    seed = derive_seed(cfg.seed, "eval", mode, m)
    if cfg.task == "mis":
        return mis.evaluate_mis(model, instances, mode, m, seed, cfg.strategy_enum).accuracy
    return sat.evaluate_sat(
        model, instances, mode, m, seed, cfg.strategy_enum, cfg.complement_edges
    ).error_rate


def checkpoint_meta(cfg: RunConfig) -> dict:
    """Resolved config minus file locations, so the checkpoint bytes depend
    only on what was trained, not on where things were written."""
    return {"config": cfg.replace(train_data=None, test_data=None, checkpoint=None, out_dir=None, threads=None).to_dict()}


def config_from_checkpoint(meta: dict) -> RunConfig | None:
    data = meta.get("config")
    return RunConfig.from_dict(data) if data else None


# -- metrics ------------------------------------------------------------------


@dataclass
class MetricRow:
    task: str
    strategy: str
    K: int
    m: int
    mode: str
    seed: int
    metric: str
    value: float


def metrics_csv(rows: list[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "strategy", "K", "m", "mode", "seed", "metric", "value"])
    for r in rows:
        w.writerow([r.task, r.strategy, r.K, r.m, r.mode, r.seed, r.metric, repr(float(r.value))])
    return buf.getvalue()


# -- sweeps -------------------------------------------------------------------


@dataclass
class SweepRow:
    strategy: str
    K: int
    m: int
    metric: float


def sweep_csv(rows: list[SweepRow], metric: str = "metric") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "K", "m", metric])
    for r in rows:
        w.writerow([r.strategy, r.K, r.m, repr(float(r.metric))])
    return buf.getvalue()


def checkpoint_name(task: str, strategy: str, K: int, seed: int) -> str:
    return f"{task}_{strategy}_K{K}_seed{seed}.ckpt"


def cmd_sweep(
    cfg: RunConfig,
    m_values: list[int],
    K_values: list[int] | None = None,
    strategies: list[str] | None = None,
    ckpt_dir: str | Path | None = None,
    train_missing: bool = False,
    models: dict[tuple[str, int], NodeClassifier] | None = None,
    test_instances=None,
) -> list[SweepRow]:
    """Error rate (or accuracy) for every (strategy, K, m).

    Models come from ``models`` first, then from ``ckpt_dir`` (named by
    :func:`checkpoint_name`), and are trained on demand only when
    ``train_missing`` is set.  Inference uses the configured mode.
    """
    strategies = [cfg.strategy] if strategies is None else strategies
    K_values = [cfg.K] if K_values is None else K_values
    models = {} if models is None else models
    test_instances = dataset_for(cfg, "test") if test_instances is None else test_instances
    train_instances = None
    rows = []
    for strategy in strategies:
        for K in K_values:
            run = cfg.replace(strategy=strategy, K=K)
            model = models.get((strategy, K))
            if model is None:
                path = Path(ckpt_dir) / checkpoint_name(cfg.task, strategy, K, cfg.seed) if ckpt_dir else None
                if path is not None and path.exists():
                    model, _ = load_checkpoint(path)
                elif train_missing:
                    if train_instances is None:
                        train_instances = dataset_for(cfg, "train")
                    model, _ = train_model(run, train_instances)
                    if path is not None:
                        path.parent.mkdir(parents=True, exist_ok=True)
                        save_checkpoint(model, path, checkpoint_meta(run))
                else:
                    where = path if path is not None else "(no checkpoint directory given)"
                    raise FileNotFoundError(f"missing checkpoint for strategy={strategy} K={K}: {where}")
                models[(strategy, K)] = model
            for m in m_values:
                rows.append(SweepRow(strategy, K, m, evaluate_model(run, model, test_instances, m=m)))
    return rows


# -- generalized equivariance audit -------------------------------------------


@dataclass
class GraphAudit:
    n: int
    edges: int
    automorphisms: int
    total: int
    passed: int
    strict: int
    sampled_passed: int | None = None


@dataclass
class EquivarianceReport:
    graphs: list[GraphAudit] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(a.total for a in self.graphs)

    @property
    def passed(self) -> int:
        return sum(a.passed for a in self.graphs)

    @property
    def strict(self) -> int:
        return sum(a.strict for a in self.graphs)

    @property
    def sampled_passed(self) -> int | None:
        vals = [a.sampled_passed for a in self.graphs]
        return None if any(v is None for v in vals) else sum(vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["graph", "n", "edges", "automorphisms", "permutations", "passed", "strict", "sampled_passed"])
        for i, a in enumerate(self.graphs):
            w.writerow([i, a.n, a.edges, a.automorphisms, a.total, a.passed, a.strict,
                        "" if a.sampled_passed is None else a.sampled_passed])
        return buf.getvalue()


def random_small_graphs(count: int, n_values=(4, 5, 6), edge_prob: float = 0.4, seed: int = 0) -> list[Graph]:
    rng = stage_rng(seed, "equivariance-corpus")
    return [generate_random_graph(int(rng.choice(n_values)), edge_prob, rng) for _ in range(count)]


def cmd_equivariance(
    model: NodeClassifier,
    graphs: list[Graph],
    strategy=None,
    sampled_m: int | None = 2,
    seed: int = 0,
    tol: float = 1e-6,
) -> EquivarianceReport:
    """Check generalized equivariance for every graph and every permutation.

    Exhaustive inference gives the hard check; ``sampled_m`` additionally
    measures how often it survives with only that many sampled labelings.
    """
    report = EquivarianceReport()
    rng = stage_rng(seed, "equivariance-sampled")
    for g in graphs:
        autos = automorphisms(g)
        reference = preferential_predict(model, g, exhaustive=True, strategy=strategy).matrix
        audit = GraphAudit(g.n, g.num_edges, len(autos), 0, 0, 0, 0 if sampled_m else None)
        for pi in all_permutations(g.n):
            res = check_generalized_equivariance(model, g, pi, strategy, tol, reference, autos)
            audit.total += 1
            audit.passed += res.holds
            audit.strict += res.strict
            if sampled_m:
                sres = check_generalized_equivariance(model, g, pi, strategy, tol, autos=autos, m=sampled_m, rng=rng)
                audit.sampled_passed += sres.holds
        report.graphs.append(audit)
    return report


# -- end to end ---------------------------------------------------------------


def cmd_end_to_end(cfg: RunConfig, out_dir: str | Path | None = None) -> list[MetricRow]:
    """generate -> train -> evaluate; writes config, checkpoint, report and metrics."""
    out = Path(out_dir or cfg.out_dir or ".")
    stage = "generate"
    try:
        out.mkdir(parents=True, exist_ok=True)
        train_instances = dataset_for(cfg, "train")
        test_instances = dataset_for(cfg, "test")
        stage = "train"
        model, report = train_model(cfg, train_instances)
        stage = "evaluate"
        value = evaluate_model(cfg, model, test_instances)
        rows = [MetricRow(cfg.task, cfg.strategy, cfg.K, cfg.m, cfg.inference_mode, cfg.seed, METRIC[cfg.task], value)]
        stage = "write"
        cfg.save(out / "config.json")
        save_checkpoint(model, out / "model.ckpt", checkpoint_meta(cfg))
        (out / "train_report.csv").write_text(report.to_csv(), encoding="utf-8")
        (out / "metrics.csv").write_text(metrics_csv(rows), encoding="utf-8")
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return rows
