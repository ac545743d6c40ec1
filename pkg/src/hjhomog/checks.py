from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


def _plain(value):
    """Convert numpy scalars/arrays so reports serialize with :mod:`json`."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


@dataclass
class CheckReport:
    """Outcome of a sampled property check.

    ``violations`` holds one dict per failing sample with the witness values;
    it is truncated to ``max_witnesses`` entries but ``n_violations`` counts all.
    """

    name: str
    passed: bool
    n_checked: int = 0
    n_violations: int = 0
    violations: list = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    max_witnesses = 10

    def add_violation(self, **witness) -> None:
        self.n_violations += 1
        self.passed = False
        if len(self.violations) < self.max_witnesses:
            self.violations.append(_plain(witness))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "n_checked": int(self.n_checked),
            "n_violations": int(self.n_violations),
            "violations": _plain(self.violations),
            "details": _plain(self.details),
        }

    def __bool__(self) -> bool:
        return bool(self.passed)
