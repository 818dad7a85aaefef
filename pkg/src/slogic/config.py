"""Pipeline configuration: dataset-keyed defaults, key=value files, overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

# Defaults reported for the three benchmarks; anything not listed falls
# back to the dataclass defaults.
DATASET_DEFAULTS: dict[str, dict] = {
    "wn18rr": {"L": 5, "k": 4, "gnn_layers": 2, "N": 50},
    "fb15k-237": {"L": 3, "k": 1, "gnn_layers": 1, "N": 50},
    "yago3-10": {"L": 3, "k": 1, "gnn_layers": 1, "N": 10, "sample_fraction": 0.1},
    "mini": {"L": 3, "k": 2, "gnn_layers": 1, "N": 50, "dim": 32, "batch_size": 8},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = "custom"
    train: str = ""
    valid: str = ""
    test: str = ""
    out_dir: str = "runs/default"
    # rule mining
    L: int = 3
    z: float = 1.96
    min_body_count: int = 1
    sample_fraction: float = 1.0
    # subgraphs
    k: int = 1
    alpha: int = 100
    # instances; K = 0 means 2 * N
    k_pos: int = 5
    k_neg: int = 20
    K: int = 0
    # model and training
    dim: int = 128
    gnn_layers: int = 1
    dropout: float = 0.5
    epsilon: float = 1.0
    lr: float = 0.001
    epochs: int = 5
    batch_size: int = 32
    # inference
    N: int = 50
    T: float = 0.5
    tau: float = 2.0
    fallback_on_empty: bool = False
    seed: int = 0
    threads: int = 1

    @property
    def pool_size(self) -> int:
        return self.K if self.K > 0 else 2 * self.N

    def validate(self) -> "PipelineConfig":
        positive = ["L", "k", "alpha", "k_pos", "k_neg", "dim", "gnn_layers", "lr", "epochs", "batch_size", "N", "T", "tau", "z", "threads"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.K < 0 or self.epsilon < 0 or self.min_body_count < 0:
            raise ConfigError("K, epsilon and min_body_count must be non-negative")
        if not 0 < self.sample_fraction <= 1:
            raise ConfigError("sample_fraction must be in (0, 1]")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if self.pool_size < self.k_neg:
            raise ConfigError(f"negative pool K={self.pool_size} smaller than k_neg={self.k_neg}")
        return self

    def as_dict(self) -> dict:
        return asdict(self)

    def subset(self, keys) -> dict:
        d = asdict(self)
        return {k: d[k] for k in keys}


FIELD_TYPES = {f.name: f.type if isinstance(f.type, str) else f.type.__name__ for f in fields(PipelineConfig)}


def parse_value(key: str, raw: str):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELD_TYPES[key]
    try:
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = parse_value(key.strip(), raw.strip())
    return values


def make_config(dataset: str | None = None, file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Dataclass defaults < dataset defaults < config file < explicit overrides."""
    file_values = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    name = overrides.get("dataset") or file_values.get("dataset") or dataset or "custom"
    values = dict(DATASET_DEFAULTS.get(name.lower(), {}))
    values.update(file_values)
    values.update(overrides)
    values["dataset"] = name
    return replace(PipelineConfig(), **values).validate()


def write_config_file(path, cfg: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in cfg.as_dict().items():
            fh.write(f"{key}={value}\n")
