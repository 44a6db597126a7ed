"""SAT certificate prediction: DIMACS I/O, DPLL oracle, literal-clause graphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import Graph
from .inference import predict
from .nn import NodeClassifier, normalized_adjacency
from .seeding import stage_rng
from .trainer import Sample

DPLL_VAR_LIMIT = 64
LITERAL, CLAUSE = 0, 1
MANIFEST_HEADER = "sat-dataset 1"

Certificate = tuple[bool, ...]


class DimacsError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class SolverBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        clauses = tuple(tuple(int(x) for x in c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        if self.num_vars < 0:
            raise ValueError("num_vars must be non-negative")
        for j, c in enumerate(clauses):
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"clause {j}: literal {lit} out of range 1..{self.num_vars}")
            if any(-lit in c for lit in c):
                raise ValueError(f"clause {j} is a tautology")

    @classmethod
    def normalized(cls, num_vars: int, clauses) -> CnfFormula:
        """Drop repeated literals and tautological clauses."""
        kept = []
        for c in clauses:
            c = tuple(dict.fromkeys(int(x) for x in c))
            if not any(-lit in c for lit in c):
                kept.append(c)
        return cls(num_vars, tuple(kept))


# -- DIMACS -------------------------------------------------------------------


def parse_dimacs(text: str) -> CnfFormula:
    header = None
    header_line = 1
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    current_line = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            if header is not None:
                raise DimacsError(lineno, "duplicate problem line")
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(lineno, f"malformed header {line!r}, expected 'p cnf V C'")
            try:
                header = (int(parts[2]), int(parts[3]))
                header_line = lineno
            except ValueError:
                raise DimacsError(lineno, f"malformed header {line!r}") from None
            if min(header) < 0:
                raise DimacsError(lineno, "negative sizes in header")
            continue
        if header is None:
            raise DimacsError(lineno, "clause before 'p cnf' header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(lineno, f"bad literal {tok!r}") from None
            if lit == 0:
                clauses.append(tuple(current))
                current = []
                continue
            if abs(lit) > header[0]:
                raise DimacsError(lineno, f"literal {lit} out of range 1..{header[0]}")
            if not current:
                current_line = lineno
            current.append(lit)
    if header is None:
        raise DimacsError(1, "missing 'p cnf' header")
    if current:
        raise DimacsError(current_line, "clause missing terminating 0")
    if len(clauses) != header[1]:
        raise DimacsError(header_line, f"header declares {header[1]} clauses, found {len(clauses)}")
    return CnfFormula.normalized(header[0], clauses)


def emit_dimacs(f: CnfFormula) -> str:
    lines = [f"p cnf {f.num_vars} {len(f.clauses)}"]
    lines += [" ".join(str(x) for x in c) + (" 0" if c else "0") for c in f.clauses]
    return "\n".join(lines) + "\n"


# -- graph encoding -----------------------------------------------------------


def literal_node(lit: int) -> int:
    """x_v sits at 2(v-1), its negation right after it."""
    return 2 * (abs(lit) - 1) + (lit < 0)


@dataclass(frozen=True)
class NodeMap:
    num_vars: int
    num_clauses: int

    @property
    def num_literals(self) -> int:
        return 2 * self.num_vars

    def clause_node(self, j: int) -> int:
        return self.num_literals + j

    def positive_literals(self) -> np.ndarray:
        return np.arange(0, self.num_literals, 2)

    def literal_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_literals + self.num_clauses)
        mask[: self.num_literals] = 1.0
        return mask

    def roles(self) -> np.ndarray:
        return np.array([LITERAL] * self.num_literals + [CLAUSE] * self.num_clauses)


def cnf_to_graph(f: CnfFormula, complement_edges: bool = True) -> tuple[Graph, NodeMap]:
    """Bipartite literal-clause graph, plus x_v -- not x_v edges unless disabled."""
    nm = NodeMap(f.num_vars, len(f.clauses))
    n = nm.num_literals + nm.num_clauses
    adj = np.zeros((n, n), dtype=np.int8)
    for j, c in enumerate(f.clauses):
        for lit in c:
            adj[literal_node(lit), nm.clause_node(j)] = 1
    if complement_edges:
        pos = nm.positive_literals()
        adj[pos, pos + 1] = 1
    return Graph(adj | adj.T, nm.roles()), nm


# -- solving ------------------------------------------------------------------


def verify_certificate(f: CnfFormula, cert) -> bool:
    cert = tuple(bool(x) for x in cert)
    if len(cert) != f.num_vars:
        raise ValueError(f"certificate has {len(cert)} values for {f.num_vars} variables")
    return all(any(cert[abs(lit) - 1] == (lit > 0) for lit in c) for c in f.clauses)


def dpll_solve(f: CnfFormula, var_limit: int = DPLL_VAR_LIMIT) -> Certificate | None:
    """DPLL with unit propagation; branches on the lowest free variable, True
    first.  Variables left free once every clause holds are set True.
    Returns None for UNSAT."""
    if f.num_vars > var_limit:
        raise SolverBudgetError(f"DPLL budget exceeded: {f.num_vars} > {var_limit} variables")
    result = _dpll(f.clauses, [None] * (f.num_vars + 1))
    if result is None:
        return None
    return tuple(True if v is None else v for v in result[1:])


def _dpll(clauses, assign):
    assign = list(assign)
    while True:
        unit = None
        open_clauses = 0
        for c in clauses:
            free = []
            for lit in c:
                val = assign[abs(lit)]
                if val is None:
                    free.append(lit)
                elif val == (lit > 0):
                    break
            else:
                if not free:
                    return None
                open_clauses += 1
                if unit is None and len(free) == 1:
                    unit = free[0]
        if unit is None:
            break
        assign[abs(unit)] = unit > 0
    if open_clauses == 0:
        return assign
    v = assign.index(None, 1)
    for value in (True, False):
        assign[v] = value
        out = _dpll(clauses, assign)
        if out is not None:
            return out
    return None


# -- datasets -----------------------------------------------------------------


@dataclass
class SatInstance:
    formula: CnfFormula
    certificate: Certificate
    _graph: tuple | None = field(default=None, repr=False, compare=False)

    def encode(self, complement_edges: bool = True) -> tuple[Graph, NodeMap]:
        if self._graph is None or self._graph[0] != complement_edges:
            self._graph = (complement_edges, *cnf_to_graph(self.formula, complement_edges))
        return self._graph[1], self._graph[2]

    def target(self) -> np.ndarray:
        g, nm = self.encode()
        y = np.full((g.n, 2), 0.5)
        truth = np.array(self.certificate, dtype=np.int64)
        pos = nm.positive_literals()
        y[pos] = np.eye(2)[truth]
        y[pos + 1] = np.eye(2)[1 - truth]
        return y

    def sample(self, complement_edges: bool = True) -> Sample:
        g, nm = self.encode(complement_edges)
        return Sample(g, self.target(), nm.literal_mask())


@dataclass
class SatGenerationStats:
    attempts: int = 0
    accepted: int = 0

    @property
    def satisfiable_fraction(self) -> float:
        return self.accepted / self.attempts if self.attempts else float("nan")


def random_formula(num_vars: int, num_clauses: int, clause_len: int, rng) -> CnfFormula:
    width = min(clause_len, num_vars)
    clauses = []
    for _ in range(num_clauses):
        vs = rng.choice(num_vars, size=width, replace=False) + 1
        signs = np.where(rng.random(width) < 0.5, -1, 1)
        clauses.append(tuple(int(x) for x in vs * signs))
    return CnfFormula(num_vars, tuple(clauses))


def generate_sat_dataset(
    count: int,
    var_range: tuple[int, int] = (4, 8),
    ratio: float = 4.0,
    clause_len: int = 3,
    seed: int = 0,
    stats: SatGenerationStats | None = None,
) -> list[SatInstance]:
    """Random ``clause_len``-CNF with ``round(ratio * vars)`` clauses, kept only
    when DPLL finds a certificate."""
    lo, hi = var_range
    if lo < 1 or hi < lo:
        raise ValueError(f"bad variable range {var_range}")
    if hi > DPLL_VAR_LIMIT:
        raise SolverBudgetError(f"variable range {var_range} exceeds the DPLL budget")
    stats = SatGenerationStats() if stats is None else stats
    rng = stage_rng(seed, "generate-sat")
    out: list[SatInstance] = []
    while len(out) < count:
        nv = int(rng.integers(lo, hi + 1))
        f = random_formula(nv, max(1, round(ratio * nv)), clause_len, rng)
        stats.attempts += 1
        cert = dpll_solve(f)
        if cert is not None:
            stats.accepted += 1
            out.append(SatInstance(f, cert))
        elif stats.attempts >= 200 and stats.accepted < 0.01 * stats.attempts:
            raise RuntimeError(
                f"rejection rate above 99% ({stats.accepted}/{stats.attempts} satisfiable) "
                f"for vars {var_range}, ratio {ratio}, clause length {clause_len}; lower the ratio"
            )
    return out


@dataclass
class SatEvaluation:
    error_rate: float
    failures: list[int]


def decode_assignment(probs: np.ndarray, nm: NodeMap) -> Certificate:
    return tuple(bool(x) for x in np.argmax(probs[nm.positive_literals()], axis=1) == 1)


def evaluate_sat(
    model: NodeClassifier,
    instances: list[SatInstance],
    mode: str = "preferential",
    m: int = 10,
    seed: int = 0,
    strategy=None,
    complement_edges: bool = True,
) -> SatEvaluation:
    """Formula-level error rate of the decoded assignments."""
    rng = stage_rng(seed, "infer-sat")
    failures = []
    for idx, inst in enumerate(instances):
        g, nm = inst.encode(complement_edges)
        pred = predict(
            model, g, mode, m, rng, strategy,
            node_mask=nm.literal_mask(), a_hat=normalized_adjacency(g),
        )
        if not verify_certificate(inst.formula, decode_assignment(pred.matrix, nm)):
            failures.append(idx)
    rate = len(failures) / len(instances) if instances else float("nan")
    return SatEvaluation(rate, failures)


def random_assignment_error(instances: list[SatInstance], seed: int = 0, trials: int = 1) -> float:
    """Error rate of uniformly random assignments, a floor for any model."""
    rng = stage_rng(seed, "random-assignment")
    errors = 0
    for _ in range(trials):
        for inst in instances:
            cert = rng.random(inst.formula.num_vars) < 0.5
            errors += not verify_certificate(inst.formula, cert)
    return errors / (trials * len(instances))


def save_sat_dataset(instances: list[SatInstance], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [MANIFEST_HEADER]
    for i, inst in enumerate(instances):
        name = f"formula_{i:06d}.cnf"
        (directory / name).write_text(emit_dimacs(inst.formula), encoding="utf-8", newline="\n")
        lines.append(f"{name} {''.join('1' if b else '0' for b in inst.certificate)}")
    manifest = directory / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return manifest


def load_sat_dataset(path: str | Path) -> list[SatInstance]:
    """Read a manifest (or the directory holding ``manifest.txt``)."""
    path = Path(path)
    manifest = path / "manifest.txt" if path.is_dir() else path
    lines = manifest.read_text(encoding="utf-8").split("\n")
    if lines[0].strip() != MANIFEST_HEADER:
        raise DimacsError(1, f"expected manifest header {MANIFEST_HEADER!r}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2 or set(parts[1]) - {"0", "1"}:
            raise DimacsError(lineno, f"expected '<file> <bits>', got {line!r}")
        f = parse_dimacs((manifest.parent / parts[0]).read_text(encoding="utf-8"))
        cert = tuple(b == "1" for b in parts[1])
        if len(cert) != f.num_vars or not verify_certificate(f, cert):
            raise DimacsError(lineno, f"certificate does not satisfy {parts[0]}")
        out.append(SatInstance(f, cert))
    return out
