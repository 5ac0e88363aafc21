"""Signature-gated robust aggregation.

The secure pipeline verifies each submission's signature over its wire
bytes, decapsulates the KEM ciphertext, decrypts and dequantizes the
gradient, then applies percentile clipping and the configured robust rule.
A submission that fails verification contributes nothing (its gate factor
is zero) and is reported in the excluded list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fl import GradientUpdate
from .kem import KemCiphertext, KemKeyPair, kem_decapsulate
from .sig import Signature, SigPublicKey, sig_verify
from .wire import DEFAULT_QUANT_SCALE, SignedCipherUpdate, decode_gradient, keystream, xor_bytes


class AggregationError(ValueError):
    """Raised when a round cannot produce a global update."""


@dataclass(frozen=True)
class ClipPolicy:
    """Norm clipping: a fixed threshold, or the nearest-rank percentile of
    the cohort's norms.  momentum_beta rides along as the server smoothing
    knob for the scenario that owns this policy."""

    mode: str  # "static" | "adaptive_percentile"
    threshold: float = 0.0
    percentile: float = 95.0
    momentum_beta: float = 0.0

    def __post_init__(self) -> None:
        if self.mode == "static":
            if not self.threshold > 0:
                raise ValueError("static clipping requires threshold > 0")
        elif self.mode == "adaptive_percentile":
            if not 0 < self.percentile <= 100:
                raise ValueError(f"percentile must be in (0, 100], got {self.percentile}")
        else:
            raise ValueError(f"unknown clip mode {self.mode!r}")
        if not 0 <= self.momentum_beta < 1:
            raise ValueError(f"momentum_beta must be in [0, 1), got {self.momentum_beta}")

    @classmethod
    def static(cls, threshold: float, momentum_beta: float = 0.0) -> "ClipPolicy":
        return cls("static", threshold=threshold, momentum_beta=momentum_beta)

    @classmethod
    def adaptive(cls, percentile: float = 95.0, momentum_beta: float = 0.0) -> "ClipPolicy":
        return cls("adaptive_percentile", percentile=percentile, momentum_beta=momentum_beta)


@dataclass(frozen=True)
class AggRule:
    kind: str  # "mean" | "sum" | "trimmed_mean" | "krum"
    fraction: float = 0.0  # trimmed_mean
    f: int = 0  # krum

    def __post_init__(self) -> None:
        if self.kind not in ("mean", "sum", "trimmed_mean", "krum"):
            raise ValueError(f"unknown aggregation rule {self.kind!r}")
        if self.kind == "trimmed_mean" and not 0 <= self.fraction < 0.5:
            raise ValueError(f"trim fraction must be in [0, 0.5), got {self.fraction}")
        if self.kind == "krum" and self.f < 0:
            raise ValueError("krum f must be >= 0")

    @classmethod
    def mean(cls) -> "AggRule":
        return cls("mean")

    @classmethod
    def trimmed(cls, fraction: float) -> "AggRule":
        return cls("trimmed_mean", fraction=fraction)

    @classmethod
    def krum_rule(cls, f: int) -> "AggRule":
        return cls("krum", f=f)


@dataclass(eq=False)
class GlobalUpdate:
    vector: np.ndarray
    contributors: list[int]
    excluded: list[int]


def clip_threshold(norms: list[float], policy: ClipPolicy) -> float:
    """Static threshold, or the nearest-rank percentile: the ceil(p/100*n)-th
    smallest norm."""
    if policy.mode == "static":
        return policy.threshold
    if not norms:
        raise ValueError("cannot take a percentile of an empty list")
    ordered = sorted(norms)
    rank = math.ceil(policy.percentile / 100.0 * len(ordered))
    return ordered[rank - 1]


def adaptive_clip(updates: list[GradientUpdate], policy: ClipPolicy) -> list[GradientUpdate]:
    """Rescale every update with norm > tau down to norm tau; others pass
    through unchanged.  Idempotent."""
    if not updates:
        raise ValueError("cannot clip an empty update list")
    tau = clip_threshold([u.norm for u in updates], policy)
    out = []
    for u in updates:
        if u.norm > tau:
            # Cache the norm as exactly tau (the rescale is within 1 ulp of
            # it) so a second clip is a no-op.
            out.append(GradientUpdate(u.client_id, u.round, u.delta * (tau / u.norm), tau))
        else:
            out.append(u)
    return out


def momentum_normalize(
    server_momentum: np.ndarray, aggregate: np.ndarray, beta: float
) -> tuple[np.ndarray, np.ndarray]:
    """m' = beta*m + (1-beta)*aggregate; the emitted update is m'."""
    m = np.asarray(server_momentum, dtype=np.float64)
    g = np.asarray(aggregate, dtype=np.float64)
    if m.shape != g.shape:
        raise ValueError(f"shape mismatch: momentum {m.shape} vs aggregate {g.shape}")
    if not 0 <= beta < 1:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    new_momentum = beta * m + (1.0 - beta) * g
    return new_momentum, new_momentum


def trimmed_mean(updates: list[GradientUpdate], fraction: float) -> np.ndarray:
    """Coordinate-wise: drop the floor(fraction*n) smallest and largest
    values, average the rest."""
    if not 0 <= fraction < 0.5:
        raise ValueError(f"trim fraction must be in [0, 0.5), got {fraction}")
    matrix = np.stack([u.delta for u in updates])
    n = matrix.shape[0]
    g = int(fraction * n)
    if n - 2 * g < 1:
        raise ValueError(f"trimming {g} from each side of {n} updates leaves nothing")
    ordered = np.sort(matrix, axis=0)
    return ordered[g : n - g].mean(axis=0)


def krum(updates: list[GradientUpdate], f: int) -> GradientUpdate:
    """Select the update with the smallest summed squared distance to its
    n-f-2 nearest neighbours; ties break toward the lowest client_id."""
    n = len(updates)
    if n < 2 * f + 3:
        raise ValueError(f"krum needs n >= 2f+3 = {2 * f + 3}, got n = {n}")
    matrix = np.stack([u.delta for u in updates])
    diffs = matrix[:, None, :] - matrix[None, :, :]
    sq = (diffs * diffs).sum(axis=2)
    scores = []
    for i in range(n):
        others = np.sort(np.delete(sq[i], i))
        scores.append(float(others[: n - f - 2].sum()))
    best = min(range(n), key=lambda i: (scores[i], updates[i].client_id))
    return updates[best]


def apply_rule(updates: list[GradientUpdate], rule: AggRule) -> np.ndarray:
    ordered = sorted(updates, key=lambda u: u.client_id)
    matrix = np.stack([u.delta for u in ordered])
    if rule.kind == "mean":
        return matrix.mean(axis=0)
    if rule.kind == "sum":
        return matrix.sum(axis=0)
    if rule.kind == "trimmed_mean":
        return trimmed_mean(ordered, rule.fraction)
    return krum(ordered, rule.f).delta


def verified_secure_aggregate(
    submissions: list[SignedCipherUpdate],
    verify_keys: dict[int, SigPublicKey],
    kem_keypair: KemKeyPair,
    rule: AggRule,
    policy: ClipPolicy | None = None,
    quant_scale: int = DEFAULT_QUANT_SCALE,
) -> GlobalUpdate:
    """Verify, decapsulate, decrypt, dequantize, clip, aggregate."""
    if not submissions:
        raise ValueError("no submissions to aggregate")
    contributors: list[int] = []
    excluded: list[int] = []
    updates: list[GradientUpdate] = []
    for sub in sorted(submissions, key=lambda s: s.client_id):
        vk = verify_keys.get(sub.client_id)
        if vk is None:
            raise ValueError(f"no verification key for client {sub.client_id}")
        try:
            signature = Signature.from_bytes(vk.params, sub.signature)
            verified = sig_verify(vk, sub.signed_span(), signature)
        except ValueError:
            verified = False
        if not verified:
            excluded.append(sub.client_id)
            continue
        try:
            ct = KemCiphertext.from_bytes(kem_keypair.params, sub.kem_ct)
            secret = kem_decapsulate(kem_keypair, ct)
            plain = xor_bytes(
                sub.payload, keystream(secret.bytes, sub.round, sub.client_id, len(sub.payload))
            )
            delta = decode_gradient(plain, quant_scale)
        except ValueError:
            # Authenticated but structurally unusable; treat as Byzantine.
            excluded.append(sub.client_id)
            continue
        updates.append(GradientUpdate.from_delta(sub.client_id, sub.round, delta))
        contributors.append(sub.client_id)
    if not updates:
        raise AggregationError("no verified contributors")
    if policy is not None:
        updates = adaptive_clip(updates, policy)
    return GlobalUpdate(apply_rule(updates, rule), contributors, excluded)
