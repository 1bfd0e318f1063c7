"""Model parameters and their validation."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum


class ConflictRule(str, Enum):
    """How the single winner of a contested cell is picked."""

    MAX_PROBABILITY = "max"
    PROPORTIONAL = "proportional"


@dataclass(frozen=True)
class Params:
    """Model parameters.

    ``r`` is the sight distance in cells, ``k_s``/``k_d``/``k_i`` the
    sensitivities to the static field, the dynamic field and inertia, ``mu``
    the friction (conflict denial) probability, and ``delta``/``alpha`` the
    per-unit decay and diffusion probabilities of the dynamic trace.
    The maximal speed is one cell per step and is not a parameter.
    """

    r: int = 1
    k_s: float = 1.0
    k_d: float = 0.0
    k_i: float = 0.0
    mu: float = 0.0
    delta: float = 0.3
    alpha: float = 0.3
    conflict_rule: ConflictRule = ConflictRule.MAX_PROBABILITY

    def __post_init__(self) -> None:
        if isinstance(self.r, bool) or not isinstance(self.r, int) or self.r < 1:
            raise ValueError(f"r: must be an integer >= 1, got {self.r!r}")
        for name in ("k_s", "k_d", "k_i"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name}: must be finite and >= 0, got {value!r}")
        for name in ("mu", "delta", "alpha"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}: must lie in [0, 1], got {value!r}")
        if not isinstance(self.conflict_rule, ConflictRule):
            object.__setattr__(self, "conflict_rule", ConflictRule(self.conflict_rule))

    def replace(self, **changes) -> Params:
        return dataclasses.replace(self, **changes)

    # scenario files use the short names kS, kD, kI
    _FILE_NAMES = {"r": "r", "kS": "k_s", "kD": "k_d", "kI": "k_i", "mu": "mu",
                   "delta": "delta", "alpha": "alpha", "conflict_rule": "conflict_rule"}

    @classmethod
    def from_dict(cls, data: dict) -> Params:
        unknown = set(data) - set(cls._FILE_NAMES)
        if unknown:
            raise ValueError(f"params: unknown field(s) {sorted(unknown)}")
        kwargs = {cls._FILE_NAMES[k]: v for k, v in data.items()}
        if "r" in kwargs and isinstance(kwargs["r"], float) and kwargs["r"].is_integer():
            kwargs["r"] = int(kwargs["r"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {short: getattr(self, long) for short, long in self._FILE_NAMES.items()}
        out["conflict_rule"] = self.conflict_rule.value
        return out
