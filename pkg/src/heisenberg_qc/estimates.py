"""Self-describing numeric results shared by every estimator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

# Which side of the true value an estimate sits on.
BOUNDS = ("exact", "two-sided", "lower", "upper")


@dataclass
class Estimate:
    value: float
    error: float | None = None
    samples: int = 0
    seed: int | None = None
    bound: str = "two-sided"
    estimator: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.bound not in BOUNDS:
            raise ValueError(f"bound must be one of {BOUNDS}, got {self.bound!r}")
        self.value = float(self.value)
        if self.error is not None:
            self.error = float(self.error)

    def __float__(self):
        return self.value

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
