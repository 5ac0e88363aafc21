"""Differential privacy for client updates: clip, then Gaussian noise.

Noise scale follows the classical mechanism, sigma = C*sqrt(2*ln(1.25/delta))
/ epsilon, applied client-side before encryption so neither eavesdroppers nor
the semi-trusted aggregator see raw deltas.  Budget accounting is basic
(additive) composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fl import GradientUpdate


@dataclass(frozen=True)
class NoiseMechanism:
    epsilon: float = 1.0
    delta: float = 1e-5
    clip_c: float = 1.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if not self.clip_c > 0:
            raise ValueError(f"clip_c must be positive, got {self.clip_c}")

    @property
    def sigma(self) -> float:
        return self.clip_c * math.sqrt(2.0 * math.log(1.25 / self.delta)) / self.epsilon


@dataclass(frozen=True)
class PrivacyLedger:
    per_round: tuple[tuple[float, float], ...] = ()

    @property
    def total_epsilon(self) -> float:
        return sum(e for e, _ in self.per_round)

    @property
    def total_delta(self) -> float:
        return sum(d for _, d in self.per_round)


def compose_budget(ledger: PrivacyLedger, spend: tuple[float, float]) -> PrivacyLedger:
    epsilon, delta = spend
    if epsilon <= 0 or delta <= 0:
        raise ValueError("spend must be positive")
    return PrivacyLedger(ledger.per_round + ((float(epsilon), float(delta)),))


def clip_to_norm(delta: np.ndarray, clip_c: float) -> np.ndarray:
    norm = float(np.linalg.norm(delta))
    if norm > clip_c:
        return delta * (clip_c / norm)
    return delta


def dp_sanitize(update: GradientUpdate, mech: NoiseMechanism, rng_seed: int) -> GradientUpdate:
    """Clip the delta to norm <= clip_c, then add iid N(0, sigma^2) noise."""
    if not mech.enabled:
        return update
    clipped = clip_to_norm(update.delta, mech.clip_c)
    noise = np.random.default_rng(rng_seed).normal(0.0, mech.sigma, clipped.shape)
    return GradientUpdate.from_delta(update.client_id, update.round, clipped + noise)
