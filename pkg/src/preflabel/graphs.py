"""Dense unattributed graphs and the permutation actions on them.

A permutation ``p`` is stored as its map array, ``p[i]`` being the image of
node ``i``.  Acting on a graph relabels node ``i`` as ``p[i]``, so that
``permute_graph(g, p).adj[i, j] == g.adj[p^-1(i), p^-1(j)]``; acting on an
``n x k`` output matrix moves row ``i`` to row ``p[i]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EXHAUSTIVE_LIMIT = 8


class GraphError(ValueError):
    pass


class ExhaustiveLimitError(GraphError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric 0/1 adjacency with optional per-node role tags.

    ``node_type`` is all zeros for plain graphs; bipartite SAT graphs use it
    to keep literals and clauses apart (permutations used as labelings never
    mix roles).
    """

    adj: np.ndarray
    node_type: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        adj = np.array(self.adj, dtype=np.int8)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise GraphError(f"adjacency must be a non-empty square matrix, got {adj.shape}")
        if not np.isin(adj, (0, 1)).all():
            raise GraphError("adjacency entries must be 0 or 1")
        if not (adj == adj.T).all():
            raise GraphError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise GraphError("self-loops are not allowed")
        adj.setflags(write=False)
        object.__setattr__(self, "adj", adj)
        if self.node_type is None:
            types = np.zeros(adj.shape[0], dtype=np.int64)
        else:
            types = np.array(self.node_type, dtype=np.int64)
            if types.shape != (adj.shape[0],) or (types < 0).any():
                raise GraphError("node_type must be a non-negative vector of length n")
        types.setflags(write=False)
        object.__setattr__(self, "node_type", types)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adj.sum()) // 2

    def edges(self) -> list[tuple[int, int]]:
        us, vs = np.nonzero(np.triu(self.adj, 1))
        return [(int(u), int(v)) for u, v in zip(us, vs)]

    def degrees(self) -> np.ndarray:
        return self.adj.sum(axis=1).astype(np.int64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.adj, other.adj)
            and np.array_equal(self.node_type, other.node_type)
        )

    def __hash__(self) -> int:
        return hash((self.adj.tobytes(), self.node_type.tobytes()))

    @classmethod
    def from_edges(cls, n: int, edges, node_type=None) -> Graph:
        adj = np.zeros((n, n), dtype=np.int8)
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            adj[u, v] = adj[v, u] = 1
        return cls(adj, node_type)


@dataclass(frozen=True, eq=False)
class Permutation:
    """Bijection on ``range(n)``; ``map[i]`` is the image of ``i``."""

    map: np.ndarray

    def __post_init__(self):
        m = np.array(self.map, dtype=np.int64).reshape(-1)
        if m.size == 0 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise GraphError(f"not a permutation: {m.tolist()}")
        m.setflags(write=False)
        object.__setattr__(self, "map", m)

    @property
    def n(self) -> int:
        return self.map.size

    def __len__(self) -> int:
        return self.map.size

    def __call__(self, i: int) -> int:
        return int(self.map[i])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Permutation):
            return NotImplemented
        return np.array_equal(self.map, other.map)

    def __hash__(self) -> int:
        return hash(self.map.tobytes())

    def __repr__(self) -> str:
        return f"Permutation({self.map.tolist()})"

    @classmethod
    def _trusted(cls, image: np.ndarray) -> Permutation:
        """Skip validation for maps built by enumeration."""
        p = object.__new__(cls)
        image.setflags(write=False)
        object.__setattr__(p, "map", image)
        return p

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(np.arange(n))

    def inverse(self) -> Permutation:
        return Permutation(np.argsort(self.map))

    def is_identity(self) -> bool:
        return bool((self.map == np.arange(self.n)).all())


def compose(q: Permutation, p: Permutation) -> Permutation:
    """Return ``q o p``, i.e. apply ``p`` first."""
    if q.n != p.n:
        raise GraphError(f"cannot compose permutations of size {q.n} and {p.n}")
    return Permutation(q.map[p.map])


def inverse(p: Permutation) -> Permutation:
    return p.inverse()


def permute_graph(g: Graph, p: Permutation) -> Graph:
    if p.n != g.n:
        raise GraphError(f"permutation of size {p.n} applied to graph with {g.n} nodes")
    inv = np.argsort(p.map)
    return Graph(g.adj[np.ix_(inv, inv)], g.node_type[inv])


def permute_output(y: np.ndarray, p: Permutation) -> np.ndarray:
    y = np.asarray(y)
    if p.n != y.shape[0]:
        raise GraphError(f"permutation of size {p.n} applied to {y.shape[0]} rows")
    out = np.empty_like(y)
    out[p.map] = y
    return out


def all_permutations(n: int):
    for m in itertools.permutations(range(n)):
        yield Permutation(np.array(m))


def automorphisms(g: Graph, limit: int = EXHAUSTIVE_LIMIT) -> list[Permutation]:
    """Every permutation fixing ``g`` (roles included), by brute force over S_n.

    Candidates are pruned per node by degree and role, then checked row by row
    while the partial map is extended, so the full n! sweep is rarely paid.
    """
    n = g.n
    if n > limit:
        raise ExhaustiveLimitError(f"exhaustive limit exceeded: n={n} > {limit}")
    adj = g.adj.astype(bool)
    deg = g.degrees()
    types = g.node_type
    found: list[Permutation] = []
    image = [-1] * n
    used = [False] * n

    def extend(i: int) -> None:
        if i == n:
            found.append(Permutation(np.array(image)))
            return
        for c in range(n):
            if used[c] or deg[c] != deg[i] or types[c] != types[i]:
                continue
            if any(adj[i, j] != adj[c, image[j]] for j in range(i)):
                continue
            image[i] = c
            used[c] = True
            extend(i + 1)
            used[c] = False
        image[i] = -1

    extend(0)
    return found


def degree(g: Graph, v: int) -> int:
    if not 0 <= v < g.n:
        raise GraphError(f"node {v} out of range for graph with {g.n} nodes")
    return int(g.adj[v].sum())


def generate_random_graph(n: int, edge_prob: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi G(n, p): each unordered pair is an edge independently."""
    if n < 2:
        raise GraphError(f"need at least 2 nodes, got {n}")
    if not 0.0 < edge_prob < 1.0:
        raise GraphError(f"edge_prob must lie in (0, 1), got {edge_prob}")
    iu = np.triu_indices(n, 1)
    coins = rng.random(iu[0].size) < edge_prob
    adj = np.zeros((n, n), dtype=np.int8)
    adj[iu[0][coins], iu[1][coins]] = 1
    return Graph(adj | adj.T)


def cycle_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def star_graph(leaves: int) -> Graph:
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def complete_graph(n: int) -> Graph:
    return Graph(np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8))


def empty_graph(n: int) -> Graph:
    return Graph(np.zeros((n, n), dtype=np.int8))


# -- edge-list text format ----------------------------------------------------


def format_edge_list(g: Graph) -> str:
    edges = g.edges()
    lines = [f"{g.n} {len(edges)}"] + [f"{u} {v}" for u, v in edges]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Graph:
    """Parse ``n m`` followed by ``m`` lines ``u v`` (0-indexed, u < v)."""
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise GraphError("line 1: empty edge list")
    g, rest = _parse_edge_block(lines, 0)
    if rest != len(lines):
        raise GraphError(f"line {rest + 1}: trailing content after {rest} lines")
    return g


def _parse_edge_block(lines: list[str], start: int) -> tuple[Graph, int]:
    head = lines[start].split()
    try:
        n, m = int(head[0]), int(head[1])
        if len(head) != 2:
            raise ValueError
    except (ValueError, IndexError):
        raise GraphError(f"line {start + 1}: expected header 'n m', got {lines[start]!r}") from None
    if n < 1 or m < 0:
        raise GraphError(f"line {start + 1}: invalid sizes n={n} m={m}")
    if start + 1 + m > len(lines):
        raise GraphError(f"line {len(lines)}: expected {m} edges, file ends early")
    seen: set[tuple[int, int]] = set()
    for k in range(start + 1, start + 1 + m):
        parts = lines[k].split()
        try:
            u, v = int(parts[0]), int(parts[1])
            if len(parts) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise GraphError(f"line {k + 1}: expected 'u v', got {lines[k]!r}") from None
        if u == v:
            raise GraphError(f"line {k + 1}: self-loop at node {u}")
        if not (0 <= u < v < n):
            raise GraphError(f"line {k + 1}: edge ({u}, {v}) must satisfy 0 <= u < v < {n}")
        if (u, v) in seen:
            raise GraphError(f"line {k + 1}: duplicate edge ({u}, {v})")
        seen.add((u, v))
    return Graph.from_edges(n, seen), start + 1 + m


def read_edge_list(path: str | Path) -> Graph:
    return parse_edge_list(Path(path).read_text(encoding="utf-8"))


def write_edge_list(g: Graph, path: str | Path) -> None:
    Path(path).write_text(format_edge_list(g), encoding="utf-8", newline="\n")
