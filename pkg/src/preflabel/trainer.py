"""Training loop: per graph, evaluate K labelings and learn only from the
one with the lowest loss.

Baselines run through the same loop with a single candidate: the identity
labeling for the fixed strategies, one random labeling for ``random``.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphs import Graph, Permutation
from .labeling import Strategy, candidate_inputs_batch, parse_strategy, sample_labeling
from .nn import (
    AdamState,
    Arch,
    NodeClassifier,
    NonFiniteError,
    adam_step,
    backward_batch,
    forward_batch,
    gather_candidates,
    init_model,
    node_kl,
    normalized_adjacency,
)
from .seeding import stage_rng

log = logging.getLogger(__name__)


@dataclass
class Sample:
    """One supervised graph: one-hot targets per node, optional loss mask."""

    graph: Graph
    target: np.ndarray
    mask: np.ndarray | None = None
    _a_hat: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.target.shape[0] != self.graph.n:
            raise ValueError("target rows must match the node count")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)

    @property
    def a_hat(self) -> sp.csr_matrix:
        if self._a_hat is None:
            self._a_hat = normalized_adjacency(self.graph)
        return self._a_hat

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.graph.n) if self.mask is None else self.mask


@dataclass
class TrainConfig:
    arch: Arch = field(default_factory=Arch)
    strategy: Strategy = Strategy.PREFERENTIAL
    K: int = 10
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        self.strategy = parse_strategy(self.strategy)
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.arch.input_mode != self.strategy.input_mode:
            raise ValueError(
                f"strategy {self.strategy.value} needs input_mode={self.strategy.input_mode!r}"
            )

    @property
    def candidates(self) -> int:
        """Labelings per graph per step; only sampled-labeling strategies use K."""
        return self.K if self.strategy.uses_labelings else 1


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    min_loss_gap: float
    seconds: float
    skipped_steps: int = 0


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoint: str | None = None

    def losses(self) -> list[float]:
        return [e.mean_loss for e in self.epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "mean_loss", "min_loss_gap", "seconds"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.mean_loss), repr(e.min_loss_gap), f"{e.seconds:.3f}"])
        return buf.getvalue()


@dataclass
class Batch:
    samples: list[Sample]
    a_hat: sp.csr_matrix
    node_type: np.ndarray
    starts: np.ndarray
    graph_id: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    @classmethod
    def of(cls, samples: list[Sample]) -> Batch:
        sizes = np.array([s.graph.n for s in samples])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        return cls(
            samples=samples,
            a_hat=sp.block_diag([s.a_hat for s in samples], format="csr"),
            node_type=np.concatenate([s.graph.node_type for s in samples]),
            starts=starts,
            graph_id=np.repeat(np.arange(len(samples)), sizes),
            target=np.concatenate([s.target for s in samples]),
            weights=np.concatenate([s.weights for s in samples]),
        )


@dataclass
class StepResult:
    losses: np.ndarray            # selected loss per graph, (B,)
    candidate_losses: np.ndarray  # (B, K)
    winners: np.ndarray           # (B,)
    labelings: list[list[Permutation]]
    grads: dict[str, np.ndarray]

    @property
    def loss(self) -> float:
        return float(self.losses.sum())


def draw_labelings(samples: list[Sample], strategy: Strategy, K: int, rng) -> list[list[Permutation]]:
    if not strategy.uses_labelings:
        return [[Permutation.identity(s.graph.n)] for s in samples]
    return [[sample_labeling(s.graph, rng) for _ in range(K)] for s in samples]


def batch_step(
    model: NodeClassifier,
    batch: Batch,
    labelings: list[list[Permutation]],
    strategy: Strategy,
    training: bool,
    rng: np.random.Generator | None,
) -> StepResult:
    """Score every candidate labeling of every graph, keep each graph's
    lowest-loss candidate and return the summed gradient of the winners.

    Ties go to the lowest candidate index.  The winners' gradients reuse the
    activations (and dropout masks) of their own forward pass.
    """
    table_sizes = model.arch.table_sizes
    inputs = np.concatenate(
        [
            candidate_inputs_batch(strategy, s.graph, cands, table_sizes)
            for s, cands in zip(batch.samples, labelings)
        ]
    )
    probs, cache = forward_batch(model, batch.a_hat, inputs, batch.node_type, training, rng)
    per_node = node_kl(cache.logits, batch.target[:, None, :]) * batch.weights[:, None]
    cand_losses = np.add.reduceat(per_node, batch.starts, axis=0)
    winners = np.argmin(cand_losses, axis=1)
    choice = winners[batch.graph_id]
    chosen = gather_candidates(cache, choice)
    rows = np.arange(batch.graph_id.size)
    dlogits = (probs[rows, choice] - batch.target) * batch.weights[:, None]
    grads = backward_batch(model, chosen, dlogits[:, None, :])
    selected = cand_losses[np.arange(len(batch.samples)), winners]
    return StepResult(selected, cand_losses, winners, labelings, grads)


def preferential_step(
    model: NodeClassifier,
    g: Graph,
    y: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    mask: np.ndarray | None = None,
    training: bool = True,
    labelings: list[Permutation] | None = None,
) -> StepResult:
    """One graph's selection step.  ``labelings`` overrides the K random draws."""
    sample = Sample(g, y, mask)
    if labelings is None:
        cands = draw_labelings([sample], cfg.strategy, cfg.candidates, rng)
    else:
        cands = [list(labelings)]
    return batch_step(model, Batch.of([sample]), cands, cfg.strategy, training, rng)


def train(
    dataset: list[Sample],
    cfg: TrainConfig,
    model: NodeClassifier | None = None,
) -> tuple[NodeClassifier, TrainReport]:
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    if model is None:
        model = init_model(cfg.arch, stage_rng(cfg.seed, "init"))
    state = AdamState()
    report = TrainReport()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        rng = stage_rng(cfg.seed, "train", epoch)
        order = rng.permutation(len(dataset))
        total, gap, skipped = 0.0, 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            samples = [dataset[i] for i in order[start : start + cfg.batch_size]]
            labelings = draw_labelings(samples, cfg.strategy, cfg.candidates, rng)
            try:
                step = batch_step(model, Batch.of(samples), labelings, cfg.strategy, True, rng)
            except NonFiniteError as exc:
                log.warning("epoch %d: skipping batch at %d (%s)", epoch, start, exc)
                skipped += 1
                continue
            if not adam_step(model, step.grads, state, cfg.lr):
                skipped += 1
                continue
            total += float(step.losses.sum())
            gap += float((step.candidate_losses.mean(axis=1) - step.losses).sum())
        n = len(dataset)
        stats = EpochStats(epoch, total / n, gap / n, time.perf_counter() - t0, skipped)
        report.epochs.append(stats)
        log.info("epoch %d loss %.4f gap %.4f (%.1fs)", epoch, stats.mean_loss, stats.min_loss_gap, stats.seconds)
    return model, report
