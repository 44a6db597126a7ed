"""Inference under sampled labelings.

Every candidate labeling ``tau`` is evaluated as ``f(tau(X))`` and mapped
back with ``tau^-1`` so that row ``i`` always describes node ``i`` of the
input graph.  Three ways to use the candidates:

* ``plain``        - identity labeling only;
* ``averaging``    - mean of the aligned outputs;
* ``preferential`` - the candidate with the highest joint max-probability.

Candidates are evaluated side by side on the original graph with the
pulled-back inputs, which equals the permuted-graph evaluation because the
network itself is equivariant once the per-node inputs are fixed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import (
    EXHAUSTIVE_LIMIT,
    ExhaustiveLimitError,
    Graph,
    Permutation,
    automorphisms,
    permute_graph,
    permute_output,
)
from .labeling import Strategy, candidate_inputs, candidate_inputs_batch, parse_strategy, sample_labeling
from .nn import NodeClassifier, forward_batch, normalized_adjacency

MODES = ("plain", "averaging", "preferential")
CHUNK = 2048


@dataclass
class ScoredLabeling:
    perm: Permutation
    score: float  # sum of per-node log max-probabilities


@dataclass
class Prediction:
    matrix: np.ndarray
    labeling: Permutation | None = None
    score: float | None = None
    candidates: list[ScoredLabeling] | None = None

    @property
    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.matrix, axis=1)


def default_strategy(model: NodeClassifier) -> Strategy:
    return Strategy.DEGREE_FEATURE if model.arch.input_mode == "degree" else Strategy.PREFERENTIAL


def log_score(probs: np.ndarray, node_mask: np.ndarray | None = None) -> np.ndarray:
    """Joint max-probability in log space; reduces over nodes (axis 0)."""
    logs = np.log(probs.max(axis=-1))
    if node_mask is not None:
        logs = logs * np.asarray(node_mask, dtype=np.float64).reshape((-1,) + (1,) * (logs.ndim - 1))
    return logs.sum(axis=0)


def score(
    model: NodeClassifier,
    g: Graph,
    tau: Permutation,
    strategy: Strategy | str | None = None,
    node_mask: np.ndarray | None = None,
) -> ScoredLabeling:
    """Score of labeling ``tau``, computed directly on the permuted graph."""
    strategy = default_strategy(model) if strategy is None else parse_strategy(strategy)
    gp = permute_graph(g, tau)
    inputs = candidate_inputs(strategy, gp, Permutation.identity(g.n), model.arch.table_sizes)
    probs, _ = forward_batch(model, normalized_adjacency(gp), inputs[:, None], gp.node_type)
    mask = None if node_mask is None else permute_output(np.asarray(node_mask), tau)
    return ScoredLabeling(tau, float(log_score(probs[:, 0], mask)))


def all_labelings(g: Graph, limit: int = EXHAUSTIVE_LIMIT):
    """Every role-preserving permutation of ``g``'s nodes, lexicographic for plain graphs."""
    if g.n > limit:
        raise ExhaustiveLimitError(f"exhaustive limit exceeded: n={g.n} > {limit}")
    groups = [np.flatnonzero(g.node_type == t) for t in np.unique(g.node_type)]
    if len(groups) == 1:
        for image in itertools.permutations(range(g.n)):
            yield Permutation._trusted(np.array(image, dtype=np.int64))
        return
    for parts in itertools.product(*(itertools.permutations(grp) for grp in groups)):
        image = np.empty(g.n, dtype=np.int64)
        for grp, part in zip(groups, parts):
            image[grp] = part
        yield Permutation._trusted(image)


def candidate_labelings(g: Graph, m: int, rng: np.random.Generator | None, exhaustive: bool = False) -> list[Permutation]:
    """Identity first, then ``m - 1`` random labelings (or all of them)."""
    if exhaustive:
        return list(all_labelings(g))
    if m < 1:
        raise ValueError(f"need at least one labeling, got m={m}")
    cands = [Permutation.identity(g.n)]
    if m > 1:
        if rng is None:
            raise ValueError("sampling labelings needs an rng")
        cands += [sample_labeling(g, rng) for _ in range(m - 1)]
    return cands


def aligned_outputs(
    model: NodeClassifier,
    g: Graph,
    labelings: list[Permutation],
    strategy: Strategy,
    a_hat: sp.csr_matrix | None = None,
) -> np.ndarray:
    """``tau^-1(f(tau(X)))`` for each candidate; shape ``(n, M, k)``."""
    a_hat = normalized_adjacency(g) if a_hat is None else a_hat
    out = []
    for start in range(0, len(labelings), CHUNK):
        chunk = labelings[start : start + CHUNK]
        inputs = candidate_inputs_batch(strategy, g, chunk, model.arch.table_sizes)
        probs, _ = forward_batch(model, a_hat, inputs, g.node_type)
        out.append(probs)
    return np.concatenate(out, axis=1)


def select_best(scores: np.ndarray, labelings: list[Permutation]) -> int:
    """Index of the max score; exact ties go to the lexicographically smallest map."""
    best = scores.max()
    tied = np.flatnonzero(scores == best)
    if tied.size == 1:
        return int(tied[0])
    maps = np.stack([labelings[i].map for i in tied])
    return int(tied[np.lexsort(maps.T[::-1])[0]])


def preferential_predict(
    model: NodeClassifier,
    g: Graph,
    m: int = 10,
    rng: np.random.Generator | None = None,
    exhaustive: bool = False,
    strategy: Strategy | str | None = None,
    node_mask: np.ndarray | None = None,
    a_hat: sp.csr_matrix | None = None,
) -> Prediction:
    strategy = default_strategy(model) if strategy is None else parse_strategy(strategy)
    labelings = candidate_labelings(g, m, rng, exhaustive)
    probs = aligned_outputs(model, g, labelings, strategy, a_hat)
    scores = log_score(probs, node_mask)
    best = select_best(scores, labelings)
    scored = [ScoredLabeling(t, float(s)) for t, s in zip(labelings, scores)]
    return Prediction(probs[:, best].copy(), labelings[best], float(scores[best]), scored)


def averaging_predict(
    model: NodeClassifier,
    g: Graph,
    m: int = 10,
    rng: np.random.Generator | None = None,
    strategy: Strategy | str | None = None,
    a_hat: sp.csr_matrix | None = None,
) -> Prediction:
    strategy = default_strategy(model) if strategy is None else parse_strategy(strategy)
    labelings = candidate_labelings(g, m, rng)
    mean = aligned_outputs(model, g, labelings, strategy, a_hat).mean(axis=1)
    return Prediction(mean / mean.sum(axis=1, keepdims=True))


def plain_predict(model: NodeClassifier, g: Graph, strategy=None, a_hat=None) -> Prediction:
    strategy = default_strategy(model) if strategy is None else parse_strategy(strategy)
    ident = Permutation.identity(g.n)
    probs = aligned_outputs(model, g, [ident], strategy, a_hat)
    return Prediction(probs[:, 0].copy(), ident)


def predict(
    model: NodeClassifier,
    g: Graph,
    mode: str = "preferential",
    m: int = 10,
    rng: np.random.Generator | None = None,
    strategy: Strategy | str | None = None,
    exhaustive: bool = False,
    node_mask: np.ndarray | None = None,
    a_hat: sp.csr_matrix | None = None,
) -> Prediction:
    if mode == "plain":
        return plain_predict(model, g, strategy, a_hat)
    if mode == "averaging":
        return averaging_predict(model, g, m, rng, strategy, a_hat)
    if mode == "preferential":
        return preferential_predict(model, g, m, rng, exhaustive, strategy, node_mask, a_hat)
    raise ValueError(f"unknown inference mode {mode!r}, expected one of {MODES}")


@dataclass
class EquivarianceResult:
    holds: bool
    witness: Permutation | None
    strict: bool  # holds with the identity as witness
    min_deviation: float  # smallest max-abs gap over the automorphisms tried


def check_generalized_equivariance(
    model: NodeClassifier,
    g: Graph,
    pi: Permutation,
    strategy: Strategy | str | None = None,
    tol: float = 1e-6,
    reference: np.ndarray | None = None,
    autos: list[Permutation] | None = None,
    m: int | None = None,
    rng: np.random.Generator | None = None,
) -> EquivarianceResult:
    """Look for an automorphism ``gamma`` with ``Y(pi(X)) == pi(gamma(Y(X)))``.

    Predictions are exhaustive preferential ones unless ``m`` is given, in
    which case both sides use ``m`` sampled labelings from ``rng``.
    ``reference`` (the prediction on ``g``) and ``autos`` may be passed in
    when checking many ``pi`` against one graph.
    """

    def yhat(graph):
        if m is None:
            return preferential_predict(model, graph, exhaustive=True, strategy=strategy).matrix
        return preferential_predict(model, graph, m=m, rng=rng, strategy=strategy).matrix

    base = yhat(g) if reference is None else reference
    moved = yhat(permute_graph(g, pi))
    autos = automorphisms(g) if autos is None else autos
    autos = sorted(autos, key=lambda p: not p.is_identity())
    best_dev, witness, strict = np.inf, None, False
    for gamma in autos:
        expected = permute_output(permute_output(base, gamma), pi)
        dev = float(np.abs(moved - expected).max())
        best_dev = min(best_dev, dev)
        if dev <= tol and witness is None:
            witness, strict = gamma, gamma.is_identity()
    return EquivarianceResult(witness is not None, witness, strict, best_dev)
