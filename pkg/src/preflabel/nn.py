"""Dense residual GCN node classifier with an exact hand-written backward pass.

Layer rule::

    H_{l+1} = H_l + dropout(relu(A_hat @ H_l @ W_l + b_l))
    A_hat   = D^-1/2 (A + I) D^-1/2

followed by a linear head and a row softmax.  Node inputs are rows of a
learnable embedding table (one block of rows per node role) or, for the
degree-feature baseline, a fixed scalar per node times a learnable width
adapter.

Everything below works on a *candidate axis*: activations have shape
``(N, K, d)`` where ``N`` counts nodes (possibly several graphs stacked
block-diagonally) and ``K`` counts labelings evaluated side by side.  The
single-graph helpers (:func:`forward`, :func:`backward`) are thin wrappers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graphs import Graph

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
PROB_FLOOR = 1e-12
INPUT_MODES = ("index", "degree")


class NonFiniteError(FloatingPointError):
    def __init__(self, where: str):
        super().__init__(f"non-finite values in {where}")
        self.where = where


@dataclass(frozen=True)
class Arch:
    layers: int = 4
    hidden: int = 32
    classes: int = 2
    table_sizes: tuple[int, ...] = (16,)
    dropout: float = 0.1
    input_mode: str = "index"

    def __post_init__(self):
        object.__setattr__(self, "table_sizes", tuple(int(t) for t in self.table_sizes))
        if self.layers < 0 or self.hidden < 1 or self.classes < 2:
            raise ValueError(f"bad architecture {self}")
        if not self.table_sizes or min(self.table_sizes) < 1:
            raise ValueError("every node role needs a non-empty embedding table")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {self.dropout}")
        if self.input_mode not in INPUT_MODES:
            raise ValueError(f"input_mode must be one of {INPUT_MODES}")

    @property
    def table_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.table_sizes)[:-1]]).astype(np.int64)

    @property
    def num_embeddings(self) -> int:
        return int(sum(self.table_sizes))

    @property
    def num_roles(self) -> int:
        return len(self.table_sizes)


@dataclass
class NodeClassifier:
    arch: Arch
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> NodeClassifier:
        return NodeClassifier(self.arch, {k: v.copy() for k, v in self.params.items()})

    def param_names(self) -> list[str]:
        return list(self.params)


@dataclass
class EmbeddingAssignment:
    """Per-node input: embedding-table rows, or scalar features.

    Either array may carry a trailing candidate axis ``(n, K)``.
    """

    indices: np.ndarray | None = None
    scalar_features: np.ndarray | None = None

    def __post_init__(self):
        if (self.indices is None) == (self.scalar_features is None):
            raise ValueError("exactly one of indices / scalar_features must be given")
        if self.indices is not None:
            self.indices = np.asarray(self.indices, dtype=np.int64)
        else:
            self.scalar_features = np.asarray(self.scalar_features, dtype=np.float64)

    @property
    def n(self) -> int:
        arr = self.indices if self.indices is not None else self.scalar_features
        return arr.shape[0]

    def batched(self) -> np.ndarray:
        arr = self.indices if self.indices is not None else self.scalar_features
        return arr[:, None] if arr.ndim == 1 else arr


def init_model(arch: Arch, rng: np.random.Generator) -> NodeClassifier:
    d = arch.hidden
    bound = 1.0 / np.sqrt(d)
    params: dict[str, np.ndarray] = {}
    if arch.input_mode == "index":
        params["embed"] = rng.uniform(-bound, bound, (arch.num_embeddings, d))
    else:
        params["degree_proj"] = rng.uniform(-bound, bound, (arch.num_roles, d))
    for layer in range(arch.layers):
        params[f"W{layer}"] = rng.uniform(-bound, bound, (d, d))
        params[f"b{layer}"] = np.zeros(d)
    params["W_out"] = rng.uniform(-bound, bound, (d, arch.classes))
    params["b_out"] = np.zeros(arch.classes)
    return NodeClassifier(arch, params)


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    a = sp.csr_matrix(g.adj.astype(np.float64)) + sp.identity(g.n, format="csr")
    inv_sqrt = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
    return sp.csr_matrix(sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt))


# -- batched core -------------------------------------------------------------


@dataclass
class ForwardCache:
    inputs: np.ndarray           # (N, K) int rows or float features
    node_type: np.ndarray        # (N,)
    a_hat: sp.csr_matrix
    hidden: list[np.ndarray]     # H_0 .. H_L, each (N, K, d)
    propagated: list[np.ndarray]  # A_hat @ H_l
    pre_act: list[np.ndarray]    # Z_l
    masks: list[np.ndarray | None]
    logits: np.ndarray           # (N, K, k)


def _propagate(a_hat: sp.csr_matrix, h: np.ndarray) -> np.ndarray:
    n, k, d = h.shape
    return np.asarray(a_hat @ h.reshape(n, k * d)).reshape(n, k, d)


def _check(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(where)


def embed_inputs(model: NodeClassifier, inputs: np.ndarray, node_type: np.ndarray) -> np.ndarray:
    p = model.params
    if model.arch.input_mode == "index":
        if inputs.min(initial=0) < 0 or inputs.max(initial=0) >= model.arch.num_embeddings:
            raise IndexError(
                f"embedding index out of range [0, {model.arch.num_embeddings})"
            )
        return p["embed"][inputs]
    return inputs[:, :, None] * p["degree_proj"][node_type][:, None, :]


def forward_batch(
    model: NodeClassifier,
    a_hat: sp.csr_matrix,
    inputs: np.ndarray,
    node_type: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on ``K`` input assignments at once.

    Returns row-softmax probabilities of shape ``(N, K, k)``.
    """
    arch, p = model.arch, model.params
    n = a_hat.shape[0]
    if inputs.shape[0] != n:
        raise ValueError(f"input assignment covers {inputs.shape[0]} nodes, graph has {n}")
    if training and arch.dropout > 0 and rng is None:
        raise ValueError("training mode with dropout needs an rng")
    h = embed_inputs(model, inputs, node_type)
    cache = ForwardCache(inputs, node_type, a_hat, [h], [], [], [], None)  # type: ignore[arg-type]
    keep = 1.0 - arch.dropout
    for layer in range(arch.layers):
        ah = _propagate(a_hat, h)
        z = ah @ p[f"W{layer}"] + p[f"b{layer}"]
        _check(z, f"layer {layer}")
        act = np.maximum(z, 0.0)
        mask = None
        if training and arch.dropout > 0:
            mask = (rng.random(act.shape) < keep) / keep
            act = act * mask
        h = h + act
        cache.propagated.append(ah)
        cache.pre_act.append(z)
        cache.masks.append(mask)
        cache.hidden.append(h)
    logits = h @ p["W_out"] + p["b_out"]
    _check(logits, "output head")
    cache.logits = logits
    return softmax(logits), cache


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def node_kl(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-node KL(target || softmax(logits)), reduced over the class axis."""
    logp = np.maximum(log_softmax(logits), np.log(PROB_FLOOR))
    t = np.broadcast_to(target, logp.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(t > 0, t * (np.log(np.where(t > 0, t, 1.0)) - logp), 0.0)
    return terms.sum(axis=-1)


def backward_batch(model: NodeClassifier, cache: ForwardCache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of ``sum(dlogits * logits)`` w.r.t. every parameter."""
    arch, p = model.arch, model.params
    d = arch.hidden
    grads: dict[str, np.ndarray] = {}
    h_last = cache.hidden[-1]
    grads["W_out"] = h_last.reshape(-1, d).T @ dlogits.reshape(-1, arch.classes)
    grads["b_out"] = dlogits.reshape(-1, arch.classes).sum(axis=0)
    dh = dlogits @ p["W_out"].T
    for layer in reversed(range(arch.layers)):
        z = cache.pre_act[layer]
        dact = dh if cache.masks[layer] is None else dh * cache.masks[layer]
        dz = dact * (z > 0)
        grads[f"W{layer}"] = cache.propagated[layer].reshape(-1, d).T @ dz.reshape(-1, d)
        grads[f"b{layer}"] = dz.reshape(-1, d).sum(axis=0)
        # A_hat is symmetric, so its transpose is itself
        dh = dh + _propagate(cache.a_hat, dz @ p[f"W{layer}"].T)
    if arch.input_mode == "index":
        g_embed = np.zeros_like(p["embed"])
        np.add.at(g_embed, cache.inputs.reshape(-1), dh.reshape(-1, d))
        grads["embed"] = g_embed
    else:
        g_proj = np.zeros_like(p["degree_proj"])
        per_node = (cache.inputs[:, :, None] * dh).sum(axis=1)
        np.add.at(g_proj, cache.node_type, per_node)
        grads["degree_proj"] = g_proj
    for name, g in grads.items():
        _check(g, f"gradient of {name}")
    return {name: grads[name] for name in p}


def gather_candidates(cache: ForwardCache, choice: np.ndarray) -> ForwardCache:
    """Keep one candidate per node, ``choice[i]`` being the candidate index."""
    rows = np.arange(cache.inputs.shape[0])

    def pick(a):
        return None if a is None else a[rows, choice][:, None]

    return ForwardCache(
        inputs=pick(cache.inputs),
        node_type=cache.node_type,
        a_hat=cache.a_hat,
        hidden=[pick(h) for h in cache.hidden],
        propagated=[pick(h) for h in cache.propagated],
        pre_act=[pick(h) for h in cache.pre_act],
        masks=[pick(m) for m in cache.masks],
        logits=pick(cache.logits),
    )


# -- single-graph API ---------------------------------------------------------


def forward(
    model: NodeClassifier,
    g: Graph,
    a: EmbeddingAssignment,
    training: bool = False,
    rng: np.random.Generator | None = None,
    a_hat: sp.csr_matrix | None = None,
) -> np.ndarray:
    """Class distribution per node, shape ``(n, k)`` (or ``(n, K, k)`` for batched ``a``)."""
    if a.n != g.n:
        raise ValueError(f"assignment covers {a.n} nodes, graph has {g.n}")
    _check_input_kind(model, a)
    a_hat = normalized_adjacency(g) if a_hat is None else a_hat
    probs, _ = forward_batch(model, a_hat, a.batched(), g.node_type, training, rng)
    return probs[:, 0] if _single(a) else probs


def kl_node_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Sum over nodes of KL(target_i || pred_i); pred is floored at 1e-12."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    logp = np.log(np.maximum(pred, PROB_FLOOR))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(target > 0, target * (np.log(np.where(target > 0, target, 1.0)) - logp), 0.0)
    per_node = terms.sum(axis=-1)
    if mask is not None:
        per_node = per_node * mask
    value = float(per_node.sum())
    if not np.isfinite(value):
        raise NonFiniteError("loss")
    return value


def loss_and_grads(
    model: NodeClassifier,
    g: Graph,
    a: EmbeddingAssignment,
    target: np.ndarray,
    mask: np.ndarray | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    if not _single(a):
        raise ValueError("loss_and_grads takes a single assignment")
    _check_input_kind(model, a)
    probs, cache = forward_batch(model, normalized_adjacency(g), a.batched(), g.node_type, training, rng)
    weight = np.ones(g.n) if mask is None else np.asarray(mask, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    loss = float((node_kl(cache.logits[:, 0], target) * weight).sum())
    dlogits = ((probs[:, 0] - target) * weight[:, None])[:, None, :]
    return loss, backward_batch(model, cache, dlogits)


def backward(model, g, a, target, mask=None) -> dict[str, np.ndarray]:
    return loss_and_grads(model, g, a, target, mask)[1]


def _single(a: EmbeddingAssignment) -> bool:
    arr = a.indices if a.indices is not None else a.scalar_features
    return arr.ndim == 1


def _check_input_kind(model: NodeClassifier, a: EmbeddingAssignment) -> None:
    want_index = model.arch.input_mode == "index"
    if want_index != (a.indices is not None):
        raise ValueError(f"model expects {model.arch.input_mode} inputs")


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = 0


def adam_step(model: NodeClassifier, grads: dict[str, np.ndarray], state: AdamState, lr: float) -> bool:
    """In-place Adam update.  Returns False (and leaves everything untouched)
    when any gradient is non-finite."""
    if not all(np.isfinite(g).all() for g in grads.values()):
        state.skipped += 1
        log.warning("skipping Adam step %d: non-finite gradient", state.t + 1)
        return False
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, param in model.params.items():
        g = grads[name]
        if g.shape != param.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {param.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return True


# -- checkpoints --------------------------------------------------------------


def checkpoint_text(model: NodeClassifier, extra: dict | None = None) -> str:
    arch = asdict(model.arch)
    arch["table_sizes"] = list(model.arch.table_sizes)
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": arch,
        "meta": extra or {},
        "params": {
            name: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
            for name, v in model.params.items()
        },
    }
    return json.dumps(doc, indent=1) + "\n"


def parse_checkpoint(text: str) -> tuple[NodeClassifier, dict]:
    doc = json.loads(text)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    arch = Arch(**doc["arch"])
    params = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    expected = init_model(arch, np.random.default_rng(0)).params
    if set(params) != set(expected) or any(params[k].shape != expected[k].shape for k in expected):
        raise ValueError("checkpoint tensors do not match the declared architecture")
    return NodeClassifier(arch, {k: params[k] for k in expected}), doc.get("meta", {})


def save_checkpoint(model: NodeClassifier, path: str | Path, extra: dict | None = None) -> None:
    Path(path).write_text(checkpoint_text(model, extra), encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[NodeClassifier, dict]:
    return parse_checkpoint(Path(path).read_text(encoding="utf-8"))
