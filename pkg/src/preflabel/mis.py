"""Maximum independent set: exact labels, greedy decoding, accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import Graph, GraphError, _parse_edge_block, format_edge_list, generate_random_graph
from .inference import Prediction, predict
from .nn import NodeClassifier, normalized_adjacency
from .seeding import stage_rng
from .trainer import Sample

MIS_NODE_LIMIT = 30
DATASET_HEADER = "mis-dataset 1"


class OracleBudgetError(RuntimeError):
    pass


@dataclass
class MisInstance:
    graph: Graph
    optimal_size: int
    label_set: tuple[int, ...]

    def __post_init__(self):
        members = list(self.label_set)
        if len(members) != self.optimal_size:
            raise ValueError("label set size differs from optimal size")
        if any(self.graph.adj[u, v] for u in members for v in members):
            raise ValueError("label set is not independent")

    def target(self) -> np.ndarray:
        y = np.zeros((self.graph.n, 2))
        y[:, 0] = 1.0
        y[list(self.label_set), 0] = 0.0
        y[list(self.label_set), 1] = 1.0
        return y

    def sample(self) -> Sample:
        return Sample(self.graph, self.target())


def _neighbour_masks(g: Graph) -> list[int]:
    return [sum(1 << int(j) for j in np.flatnonzero(row)) for row in g.adj]


def brute_force_mis(g: Graph, limit: int = MIS_NODE_LIMIT) -> tuple[int, tuple[int, ...]]:
    """Exact MIS by bitmask branch and bound.

    Always branches on the lowest remaining node, taking it first, so leaves
    are met in lexicographic order and the first optimum kept is the
    lexicographically smallest one.
    """
    if g.n > limit:
        raise OracleBudgetError(f"MIS oracle budget exceeded: n={g.n} > {limit}")
    nbrs = _neighbour_masks(g)
    best_size = -1
    best_set = 0

    def search(cand: int, chosen: int, size: int) -> None:
        nonlocal best_size, best_set
        if cand == 0:
            if size > best_size:
                best_size, best_set = size, chosen
            return
        if size + cand.bit_count() <= best_size:
            return
        v = (cand & -cand).bit_length() - 1
        search(cand & ~nbrs[v] & ~(1 << v), chosen | (1 << v), size + 1)
        # leaving v out only pays off if some neighbour of v can come in
        if nbrs[v] & cand:
            search(cand & ~(1 << v), chosen, size)

    search((1 << g.n) - 1, 0, 0)
    witness = tuple(i for i in range(g.n) if best_set >> i & 1)
    return best_size, witness


def is_independent(g: Graph, nodes) -> bool:
    nodes = list(nodes)
    return not g.adj[np.ix_(nodes, nodes)].any() if nodes else True


def greedy_decode(pred: Prediction | np.ndarray, g: Graph) -> list[int]:
    """Take nodes by descending in-set probability, dropping neighbours of
    every node taken.  Equal probabilities go in node order."""
    probs = pred.matrix if isinstance(pred, Prediction) else np.asarray(pred)
    if probs.ndim == 2:
        probs = probs[:, 1]
    if probs.shape != (g.n,):
        raise ValueError(f"expected {g.n} in-set probabilities, got shape {probs.shape}")
    order = np.argsort(-probs, kind="stable")
    removed = np.zeros(g.n, dtype=bool)
    chosen = []
    for v in order:
        if removed[v]:
            continue
        chosen.append(int(v))
        removed[v] = True
        removed |= g.adj[v].astype(bool)
    return sorted(chosen)


def generate_mis_dataset(
    count: int,
    n_range: tuple[int, int] = (10, 16),
    edge_prob: float = 0.25,
    seed: int = 0,
) -> list[MisInstance]:
    lo, hi = n_range
    if lo < 2 or hi < lo:
        raise ValueError(f"bad node range {n_range}")
    if hi > MIS_NODE_LIMIT:
        raise OracleBudgetError(f"node range {n_range} exceeds the MIS oracle budget {MIS_NODE_LIMIT}")
    rng = stage_rng(seed, "generate-mis")
    out = []
    for _ in range(count):
        g = generate_random_graph(int(rng.integers(lo, hi + 1)), edge_prob, rng)
        size, witness = brute_force_mis(g)
        out.append(MisInstance(g, size, witness))
    return out


@dataclass
class MisEvaluation:
    accuracy: float
    decoded_sizes: list[int]
    optimal_sizes: list[int]

    @property
    def correct(self) -> int:
        return sum(d == o for d, o in zip(self.decoded_sizes, self.optimal_sizes))


def evaluate_mis(
    model: NodeClassifier,
    instances: list[MisInstance],
    mode: str = "preferential",
    m: int = 10,
    seed: int = 0,
    strategy=None,
) -> MisEvaluation:
    """Fraction of graphs where the decoded set reaches the optimal size."""
    rng = stage_rng(seed, "infer-mis")
    decoded, optimal = [], []
    for inst in instances:
        pred = predict(model, inst.graph, mode, m, rng, strategy, a_hat=normalized_adjacency(inst.graph))
        chosen = greedy_decode(pred, inst.graph)
        decoded.append(len(chosen))
        optimal.append(inst.optimal_size)
    acc = sum(d == o for d, o in zip(decoded, optimal)) / len(instances) if instances else float("nan")
    return MisEvaluation(acc, decoded, optimal)


# -- dataset file -------------------------------------------------------------
#
#   mis-dataset 1
#   <n> <m>            edge-list block: header then m lines "u v", u < v
#   <u> <v>
#   optimal <size>
#   witness <v1> <v2> ...
#   (next record)


def format_mis_dataset(instances: list[MisInstance]) -> str:
    parts = [DATASET_HEADER + "\n"]
    for inst in instances:
        parts.append(format_edge_list(inst.graph))
        parts.append(f"optimal {inst.optimal_size}\n")
        parts.append("witness" + "".join(f" {v}" for v in inst.label_set) + "\n")
    return "".join(parts)


def parse_mis_dataset(text: str) -> list[MisInstance]:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines or lines[0].strip() != DATASET_HEADER:
        raise GraphError(f"line 1: expected {DATASET_HEADER!r}")
    out = []
    i = 1
    while i < len(lines):
        g, i = _parse_edge_block(lines, i)
        if i + 1 >= len(lines):
            raise GraphError(f"line {i + 1}: record truncated")
        opt = lines[i].split()
        wit = lines[i + 1].split()
        if len(opt) != 2 or opt[0] != "optimal" or not wit or wit[0] != "witness":
            raise GraphError(f"line {i + 1}: expected 'optimal <k>' then 'witness ...'")
        try:
            out.append(MisInstance(g, int(opt[1]), tuple(int(v) for v in wit[1:])))
        except ValueError as exc:
            raise GraphError(f"line {i + 1}: {exc}") from None
        i += 2
    return out


def save_mis_dataset(instances: list[MisInstance], path: str | Path) -> None:
    Path(path).write_text(format_mis_dataset(instances), encoding="utf-8", newline="\n")


def load_mis_dataset(path: str | Path) -> list[MisInstance]:
    return parse_mis_dataset(Path(path).read_text(encoding="utf-8"))
