"""Run configuration and the key=value config file format.

CLI flags override file values; file values override the defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import PreconditionError


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one generalization run."""

    query_size: int = 16
    final_size: int = 512
    upsample_ratio: int = 2
    finetune_lr: float = 1e-6
    finetune_batch: int = 4
    finetune_epochs: int = 2
    rng_seed: int = 42
    excluded_tasks: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for name in ("query_size", "final_size", "upsample_ratio", "finetune_batch", "finetune_epochs"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"{name} must be a positive integer")
        if self.finetune_lr <= 0:
            raise PreconditionError("finetune_lr must be positive")
        object.__setattr__(self, "excluded_tasks", frozenset(self.excluded_tasks))

    @property
    def candidate_size(self) -> int:
        """Dense-retrieval size handed to the reranker."""
        return self.final_size * self.upsample_ratio

    def override(self, **updates: Any) -> "RunConfig":
        """Return a copy with the non-None entries of ``updates`` applied."""
        live = {k: v for k, v in updates.items() if v is not None}
        return replace(self, **live) if live else self

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_size": self.query_size,
            "final_size": self.final_size,
            "upsample_ratio": self.upsample_ratio,
            "finetune_lr": self.finetune_lr,
            "finetune_batch": self.finetune_batch,
            "finetune_epochs": self.finetune_epochs,
            "rng_seed": self.rng_seed,
            "excluded_tasks": sorted(self.excluded_tasks),
        }


_INT_FIELDS = {"query_size", "final_size", "upsample_ratio", "finetune_batch", "finetune_epochs", "rng_seed"}
_FLOAT_FIELDS = {"finetune_lr"}


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PreconditionError(f"config line {line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_config_text(text: str) -> dict[str, Any]:
    """Type the key=value pairs of a RunConfig file."""
    known = {f.name for f in fields(RunConfig)}
    values: dict[str, Any] = {}
    for key, value in parse_key_values(text).items():
        if key not in known:
            raise PreconditionError(f"unknown config key {key!r}")
        if key in _INT_FIELDS:
            values[key] = int(value)
        elif key in _FLOAT_FIELDS:
            values[key] = float(value)
        elif key == "excluded_tasks":
            values[key] = frozenset(t.strip() for t in value.split(",") if t.strip())
        else:
            values[key] = value
    return values


def load_run_config(path: str | Path | None) -> RunConfig:
    """Load a RunConfig from a key=value file, or the defaults when None."""
    if path is None:
        return RunConfig()
    text = Path(path).read_text(encoding="utf-8")
    return RunConfig(**parse_config_text(text))
