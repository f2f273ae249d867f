"""Training/model configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

SWITCHES = ("soft", "gumbel", "vq")
ABLATIONS = (None, "no-self-attn", "lstm-enc", "no-pointer", "delex")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config: " + "; ".join(self.problems))


@dataclass
class TrainingConfig:
    # architecture
    embed_dim: int = 256
    hidden_dim: int = 512
    attn_layers: int = 3
    attn_heads: int = 4
    attn_residual: bool = True
    switch: str = "vq"
    ablation: str | None = None
    gumbel_hard: bool = False
    # regularization
    dropout: float = 0.4
    l2: float = 1e-6
    mask_values: bool = True
    min_freq: int = 1
    # losses
    rho: float = 0.25
    kl_weight: float = 1.0
    vq_weight: float = 1.0
    prob_floor: float = 1e-8
    # temperature schedule (gumbel)
    tau0: float = 1.0
    tau_decay: float = 1e-4
    tau_min: float = 0.5
    tau_interval: int = 1000
    # optimization
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    grad_clip: float = 5.0
    patience: int | None = 10
    eval_every: int = 1
    eval_beam: int = 1
    max_len: int = 80
    seed: int = 0
    dtype: str = "float64"

    def validate(self):
        problems = []
        for name in ("embed_dim", "hidden_dim", "attn_layers", "attn_heads", "batch_size",
                     "max_epochs", "eval_every", "eval_beam", "max_len", "tau_interval", "min_freq"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                problems.append(f"{name} must be a positive integer")
        if isinstance(self.hidden_dim, int) and isinstance(self.attn_heads, int) and self.attn_heads > 0:
            if self.hidden_dim % self.attn_heads:
                problems.append("hidden_dim must be divisible by attn_heads")
            if self.hidden_dim % 2:
                problems.append("hidden_dim must be even")
        if self.switch not in SWITCHES:
            problems.append(f"switch must be one of {SWITCHES}")
        if self.ablation not in ABLATIONS:
            problems.append(f"ablation must be one of {ABLATIONS[1:]} or null")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must be in [0, 1)")
        if self.l2 < 0:
            problems.append("l2 must be non-negative")
        if self.rho != 0.25:
            problems.append("rho is fixed at 0.25")
        if self.tau_min <= 0:
            problems.append("tau_min must be positive")
        if self.tau0 < self.tau_min:
            problems.append("tau0 must be >= tau_min")
        if self.lr < 0:
            problems.append("lr must be non-negative")
        if not 0 < self.prob_floor < 1e-3:
            problems.append("prob_floor must be in (0, 1e-3)")
        if self.patience is not None and self.patience < 1:
            problems.append("patience must be positive or null")
        if self.dtype not in ("float32", "float64"):
            problems.append("dtype must be float32 or float64")
        if problems:
            raise ConfigError(problems)
        return self

    @property
    def renderers(self):
        return ("c", "l") if self.ablation in ("no-pointer", "delex") else ("p", "c", "l")

    @property
    def encoder_mode(self):
        return {"no-self-attn": "identity", "lstm-enc": "lstm"}.get(self.ablation, "attention")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown key {k!r}" for k in unknown])
        return cls(**data)

    @classmethod
    def load(cls, path):
        """Read a JSON object or ``key = value`` lines (values parsed as JSON when possible)."""
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        stripped = text.strip()
        if stripped.startswith("{"):
            return cls.from_dict(json.loads(stripped))
        data = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([f"line {lineno}: expected key = value"])
            key, raw = (s.strip() for s in line.split("=", 1))
            data[key] = parse_value(raw)
        return cls.from_dict(data)

    def override(self, **changes):
        data = self.to_dict()
        data.update({k: v for k, v in changes.items() if v is not None})
        return TrainingConfig.from_dict(data)


def parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw
