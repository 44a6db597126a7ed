"""Node-embedding assignment strategies.

Index-based strategies map node ``i`` to a row of the embedding table.  When
a graph has several node roles, each role owns a contiguous block of rows
(``table_sizes`` gives the block lengths) and indices are allotted per role.
"""

from __future__ import annotations

import enum

import numpy as np

from .graphs import Graph, GraphError, Permutation, permute_graph
from .nn import EmbeddingAssignment


class Strategy(str, enum.Enum):
    SAME = "same"
    STATIC = "static"
    RANDOM = "random"
    DEGREE_FEATURE = "degree_feature"
    DEGREE_RANK = "degree_rank"
    PREFERENTIAL = "preferential"

    @property
    def input_mode(self) -> str:
        return "degree" if self is Strategy.DEGREE_FEATURE else "index"

    @property
    def uses_labelings(self) -> bool:
        """True when the node labeling is a sampled permutation."""
        return self in (Strategy.RANDOM, Strategy.PREFERENTIAL)


def parse_strategy(name: str | Strategy) -> Strategy:
    try:
        return Strategy(name)
    except ValueError:
        choices = "|".join(s.value for s in Strategy)
        raise ValueError(f"unknown strategy {name!r}, expected one of {choices}") from None


def role_local_index(g: Graph) -> np.ndarray:
    """Position of each node among the nodes sharing its role."""
    local = np.empty(g.n, dtype=np.int64)
    for t in np.unique(g.node_type):
        members = np.flatnonzero(g.node_type == t)
        local[members] = np.arange(members.size)
    return local


def _offsets(g: Graph, table_sizes) -> np.ndarray:
    roles = int(g.node_type.max()) + 1
    counts = np.bincount(g.node_type, minlength=roles)
    if table_sizes is None:
        table_sizes = counts
    table_sizes = np.asarray(table_sizes, dtype=np.int64)
    if table_sizes.size < roles:
        raise GraphError(f"graph has {roles} node roles but only {table_sizes.size} embedding tables")
    too_big = np.flatnonzero(counts > table_sizes[:roles])
    if too_big.size:
        t = int(too_big[0])
        raise GraphError(
            f"role {t} has {counts[t]} nodes but its embedding table holds {table_sizes[t]}"
        )
    return np.concatenate([[0], np.cumsum(table_sizes)[:-1]]).astype(np.int64)


def sample_permutation(n: int, rng: np.random.Generator) -> Permutation:
    """Uniform element of S_n (numpy's shuffle is Fisher-Yates)."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return Permutation(rng.permutation(n))


def sample_labeling(g: Graph, rng: np.random.Generator) -> Permutation:
    """Uniform role-preserving permutation; plain graphs get a uniform S_n draw."""
    if not g.node_type.any():
        return sample_permutation(g.n, rng)
    image = np.empty(g.n, dtype=np.int64)
    for t in np.unique(g.node_type):
        members = np.flatnonzero(g.node_type == t)
        image[members] = members[rng.permutation(members.size)]
    return Permutation(image)


def labels_from_permutation(g: Graph, tau: Permutation, table_sizes=None) -> np.ndarray:
    """Static labels of ``tau(g)`` pulled back to the nodes of ``g``.

    Node ``j`` sits at position ``tau(j)`` of the permuted graph and there
    receives the label of that position.
    """
    if tau.n != g.n:
        raise GraphError(f"labeling of size {tau.n} for graph with {g.n} nodes")
    if not np.array_equal(g.node_type[tau.map], g.node_type):
        raise GraphError("labeling permutation mixes node roles")
    offsets = _offsets(g, table_sizes)
    return offsets[g.node_type] + role_local_index(g)[tau.map]


def degree_features(g: Graph) -> np.ndarray:
    return 1.0 / (g.degrees() + 1.0)


def degree_rank_indices(g: Graph, table_sizes=None) -> np.ndarray:
    """Descending degree within each role; ties go to the lower node index."""
    offsets = _offsets(g, table_sizes)
    deg = g.degrees()
    out = np.empty(g.n, dtype=np.int64)
    for t in np.unique(g.node_type):
        members = np.flatnonzero(g.node_type == t)
        order = members[np.lexsort((members, -deg[members]))]
        out[order] = offsets[t] + np.arange(members.size)
    return out


def assign(
    strategy: Strategy | str,
    g: Graph,
    rng: np.random.Generator | None = None,
    table_sizes=None,
) -> EmbeddingAssignment:
    strategy = parse_strategy(strategy)
    if strategy is Strategy.DEGREE_FEATURE:
        return EmbeddingAssignment(scalar_features=degree_features(g))
    offsets = _offsets(g, table_sizes)
    if strategy is Strategy.SAME:
        return EmbeddingAssignment(indices=offsets[g.node_type])
    if strategy is Strategy.STATIC:
        return EmbeddingAssignment(indices=offsets[g.node_type] + role_local_index(g))
    if strategy is Strategy.DEGREE_RANK:
        return EmbeddingAssignment(indices=degree_rank_indices(g, table_sizes))
    if rng is None:
        raise ValueError(f"strategy {strategy.value} needs an rng")
    tau = sample_labeling(g, rng)
    return EmbeddingAssignment(indices=labels_from_permutation(g, tau, table_sizes))


def candidate_inputs(strategy: Strategy | str, g: Graph, tau: Permutation, table_sizes=None) -> np.ndarray:
    """Per-node inputs for evaluating the network on ``tau(g)``, expressed in
    the node order of ``g``.

    For labeling strategies ``tau`` *is* the labeling.  For the fixed
    strategies the strategy is applied to the permuted graph and pulled back,
    which only matters where its tie-breaks depend on node order.
    """
    return candidate_inputs_batch(strategy, g, [tau], table_sizes)[:, 0]


def candidate_inputs_batch(strategy: Strategy | str, g: Graph, taus, table_sizes=None) -> np.ndarray:
    """:func:`candidate_inputs` for many labelings at once, shape ``(n, M)``."""
    strategy = parse_strategy(strategy)
    maps = np.stack([t.map for t in taus], axis=1) if taus else np.zeros((g.n, 0), dtype=np.int64)
    if maps.shape[0] != g.n:
        raise GraphError(f"labeling of size {maps.shape[0]} for graph with {g.n} nodes")
    if strategy is Strategy.DEGREE_FEATURE:
        return np.repeat(degree_features(g)[:, None], maps.shape[1], axis=1)
    offsets = _offsets(g, table_sizes)[g.node_type]
    if strategy is Strategy.SAME:
        return np.repeat(offsets[:, None], maps.shape[1], axis=1)
    if strategy is Strategy.DEGREE_RANK:
        cols = [degree_rank_indices(permute_graph(g, t), table_sizes)[t.map] for t in taus]
        return np.stack(cols, axis=1) if cols else maps
    if not (g.node_type[maps] == g.node_type[:, None]).all():
        raise GraphError("labeling permutation mixes node roles")
    return offsets[:, None] + role_local_index(g)[maps]
