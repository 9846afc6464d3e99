"""Class-balanced loss weights from the effective number of samples.

For a class with n annotated pixels the effective number is
E_n = (1 - beta^n) / (1 - beta), the saturating sum of the geometric series
beta^0 + ... + beta^(n-1).  Raw weights are 1 / E_n, then normalized to mean 1
over the classes that actually appear.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .imgio import load_gray8
from .primitives import IGNORE_VALUE


@dataclass(frozen=True)
class ClassWeights:
    beta: float
    weights: dict[str, float]

    def validate(self) -> None:
        included = [w for w in self.weights.values() if w > 0]
        if not included:
            raise DomainError("no positive class weights")
        if abs(sum(included) / len(included) - 1.0) > 1e-9:
            raise DomainError("included weights must average to 1")


def effective_number(n: int, beta: float) -> float:
    """E_n = (1 - beta^n) / (1 - beta); E_0 = 0, and E_n = 1 for beta = 0."""
    if n < 0:
        raise DomainError("count must be >= 0")
    if not 0.0 <= beta < 1.0:
        raise DomainError("beta must be in [0, 1)")
    if n == 0:
        return 0.0
    if beta == 0.0:
        return 1.0
    return (1.0 - beta ** n) / (1.0 - beta)


def class_weights(counts: dict[str, int], beta: float) -> ClassWeights:
    """Mean-1 normalized inverse effective numbers.

    Classes with a zero pixel count get weight 0 and stay out of the
    normalization, since collections differ in their class rosters.
    """
    if not counts:
        raise DomainError("empty class counts")
    present = {c: n for c, n in counts.items() if n > 0}
    if not present:
        raise DomainError("all class counts are zero")
    raw = {c: 1.0 / effective_number(n, beta) for c, n in present.items()}
    mean = sum(raw.values()) / len(raw)
    weights = {c: (raw[c] / mean if c in raw else 0.0) for c in counts}
    return ClassWeights(beta=beta, weights=weights)


def counts_from_masks(mask_paths, class_table: dict[int, str]) -> dict[str, int]:
    """Per-class annotated-pixel counts over a set of label masks."""
    totals = np.zeros(256, dtype=np.int64)
    for path in mask_paths:
        totals += np.bincount(load_gray8(path).reshape(-1), minlength=256)
    counts = {}
    for value, name in sorted(class_table.items()):
        if value == IGNORE_VALUE:
            continue
        counts[name] = int(totals[value])
    return counts


def weights_payload(counts: dict[str, int], beta: float) -> dict:
    """The weights.json payload: beta, per-class pixel counts and weights."""
    cw = class_weights(counts, beta)
    cw.validate()
    return {
        "beta": beta,
        "counts": {c: counts[c] for c in sorted(counts)},
        "weights": {c: round(cw.weights[c], 9) for c in sorted(cw.weights)},
    }
