"""Hyperparameters, ablation switches and the flat ``key=value`` config format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class MgbrConfig:
    # model sizes
    embed_dim: int = 128
    gcn_layers: int = 2
    n_experts: int = 6
    mtl_layers: int = 2
    aux_neg_size: int = 99
    # gate adjustment and loss weights
    adjust_coef_a: float = 0.1
    adjust_coef_b: float = 0.1
    weight_b: float = 1.0
    aux_weight_a: float = 0.3
    aux_weight_b: float = 0.3
    # optimisation
    lr: float = 2e-4
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    train_neg: int = 9
    eval_neg: int = 9
    # seeds
    init_seed: int = 0
    neg_seed: int = 1
    eval_seed: int = 2
    # ablation / interpretation switches
    shared_experts: bool = True
    adjusted_gates: bool = True
    aux_losses: bool = True
    softmax_listnet: bool = True
    softmax_gates: bool = False
    exclude_self_from_mean: bool = False
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("embed_dim", "gcn_layers", "n_experts", "mtl_layers", "aux_neg_size",
                     "batch_size", "max_epochs", "patience", "train_neg", "eval_neg", "threads"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("adjust_coef_a", "adjust_coef_b", "weight_b", "aux_weight_a", "aux_weight_b"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.adjusted_gates:
            for name in ("adjust_coef_a", "adjust_coef_b"):
                if not 0 < getattr(self, name) < 1:
                    raise ConfigError(f"{name} must lie in (0, 1) with adjusted gates on")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.embed_dim % 2:
            raise ConfigError("embed_dim must be even (the heads narrow to embed_dim/2)")

    def replace(self, **changes) -> "MgbrConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "MgbrConfig":
        valid = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - valid)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}; valid keys: {', '.join(sorted(valid))}")
        return cls(**values)

    @classmethod
    def parse(cls, text: str, base: "MgbrConfig | None" = None) -> "MgbrConfig":
        """Parse ``key=value`` lines (``#`` comments) over ``base`` or the defaults."""
        types = {f.name: f.type for f in fields(cls)}
        values = (base or cls()).to_dict()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(
                    f"config line {lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(types))}")
            values[key] = _coerce(key, val, types[key])
        return cls.from_dict(values)

    @classmethod
    def load(cls, path: str | Path, base: "MgbrConfig | None" = None) -> "MgbrConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"), base)

    def dumps(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.to_dict().items())


def _coerce(key: str, val: str, typ) -> object:
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            low = val.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(val)
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {val!r} as {typ}") from None
    return val


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)
