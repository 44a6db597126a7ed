"""Run configuration shared by every CLI subcommand."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .labeling import Strategy, parse_strategy
from .nn import Arch
from .trainer import TrainConfig

TASKS = ("mis", "sat")


@dataclass
class RunConfig:
    task: str = "mis"
    strategy: str = "preferential"
    K: int = 10
    m: int = 10
    inference_mode: str = "preferential"
    seed: int = 0
    # training
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 32
    # architecture
    layers: int = 4
    hidden: int = 32
    dropout: float = 0.1
    # data, MIS
    train_count: int = 2000
    test_count: int = 500
    n_min: int = 10
    n_max: int = 16
    edge_prob: float = 0.25
    # data, SAT
    var_min: int = 4
    var_max: int = 8
    clause_ratio: float = 4.0
    clause_len: int = 3
    complement_edges: bool = True
    # paths (None: generate / do not write)
    train_data: str | None = None
    test_data: str | None = None
    checkpoint: str | None = None
    out_dir: str | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        self.strategy = parse_strategy(self.strategy).value
        if self.inference_mode not in ("plain", "averaging", "preferential"):
            raise ValueError(f"unknown inference mode {self.inference_mode!r}")
        if self.K < 1 or self.m < 1:
            raise ValueError("K and m must be at least 1")

    @property
    def strategy_enum(self) -> Strategy:
        return Strategy(self.strategy)

    def table_sizes(self) -> tuple[int, ...]:
        if self.task == "mis":
            return (self.n_max,)
        return (2 * self.var_max, max(1, round(self.clause_ratio * self.var_max)))

    def arch(self) -> Arch:
        return Arch(
            layers=self.layers,
            hidden=self.hidden,
            classes=2,
            table_sizes=self.table_sizes(),
            dropout=self.dropout,
            input_mode=self.strategy_enum.input_mode,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            arch=self.arch(),
            strategy=self.strategy_enum,
            K=self.K,
            epochs=self.epochs,
            lr=self.lr,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def replace(self, **changes) -> RunConfig:
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")
