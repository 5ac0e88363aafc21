"""Declarative experiment configuration.

A scenario is a single JSON document; unknown keys are rejected so a typo
cannot silently fall back to a default.  The canonical serialized form is
hashed into transcript files, tying recorded wire bytes to the exact
configuration that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from .adversary import AttackSpec
from .aggregation import AggRule, ClipPolicy
from .fl import TrainingConfig
from .kem import KemParams
from .privacy import NoiseMechanism
from .wire import DEFAULT_QUANT_SCALE

CRYPTO_SUITES = ("plaintext", "rsa_toy", "pqc")


class ScenarioConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataParams:
    samples_per_client: int = 100
    d: int = 8
    separation: float = 6.0

    def __post_init__(self) -> None:
        if self.samples_per_client < 1:
            raise ScenarioConfigError("data.samples_per_client must be >= 1")
        if self.d < 2:
            raise ScenarioConfigError("data.d must be >= 2")
        if self.separation < 0:
            raise ScenarioConfigError("data.separation must be >= 0")


@dataclass(frozen=True)
class ScenarioConfig:
    n_clients: int
    rounds: int
    crypto_suite: str
    seed: int = 0
    agg_rule: AggRule = AggRule.mean()
    clip: ClipPolicy | None = None
    dp: NoiseMechanism = NoiseMechanism(enabled=False)
    attack: AttackSpec = AttackSpec("none")
    data: DataParams = DataParams()
    training: TrainingConfig = TrainingConfig(learning_rate=0.5)
    kem: KemParams = KemParams()
    rsa_bits: int = 24
    quant_scale: int = DEFAULT_QUANT_SCALE

    def __post_init__(self) -> None:
        if self.n_clients < 1:
            raise ScenarioConfigError("n_clients must be >= 1")
        if self.rounds < 1:
            raise ScenarioConfigError("rounds must be >= 1")
        if self.crypto_suite not in CRYPTO_SUITES:
            raise ScenarioConfigError(
                f"crypto_suite must be one of {', '.join(CRYPTO_SUITES)}; "
                f"got {self.crypto_suite!r}"
            )
        if not 17 <= self.rsa_bits <= 32:
            # 16-bit payload blocks need a modulus above 2^16.
            raise ScenarioConfigError("rsa_bits must be in [17, 32]")
        if self.quant_scale < 1:
            raise ScenarioConfigError("quant_scale must be >= 1")
        bad = [i for i in self.attack.attacker_ids if not 0 <= i < self.n_clients]
        if bad:
            raise ScenarioConfigError(
                f"attack.attacker_ids {sorted(bad)} outside client range [0, {self.n_clients})"
            )

    @property
    def momentum_beta(self) -> float:
        return self.clip.momentum_beta if self.clip is not None else 0.0

    def to_dict(self) -> dict[str, Any]:
        if self.clip is None:
            clip: Any = None
        elif self.clip.mode == "static":
            clip = {
                "mode": "static",
                "threshold": self.clip.threshold,
                "momentum_beta": self.clip.momentum_beta,
            }
        else:
            clip = {
                "mode": "adaptive_percentile",
                "percentile": self.clip.percentile,
                "momentum_beta": self.clip.momentum_beta,
            }
        rule: dict[str, Any] = {"kind": self.agg_rule.kind}
        if self.agg_rule.kind == "trimmed_mean":
            rule["fraction"] = self.agg_rule.fraction
        elif self.agg_rule.kind == "krum":
            rule["f"] = self.agg_rule.f
        attack: dict[str, Any] = {"kind": self.attack.kind}
        if self.attack.kind != "none":
            attack["attacker_ids"] = sorted(self.attack.attacker_ids)
        if self.attack.kind == "scale":
            attack["lambda"] = self.attack.lam
        if self.attack.kind == "gaussian":
            attack["sigma"] = self.attack.sigma
        return {
            "n_clients": self.n_clients,
            "rounds": self.rounds,
            "crypto_suite": self.crypto_suite,
            "seed": self.seed,
            "agg_rule": rule,
            "clip": clip,
            "dp": {
                "enabled": self.dp.enabled,
                "epsilon": self.dp.epsilon,
                "delta": self.dp.delta,
                "clip_c": self.dp.clip_c,
            },
            "attack": attack,
            "data": {
                "samples_per_client": self.data.samples_per_client,
                "d": self.data.d,
                "separation": self.data.separation,
            },
            "training": {
                "learning_rate": self.training.learning_rate,
                "local_epochs": self.training.local_epochs,
                "batch_size": self.training.batch_size,
            },
            "kem": {
                "k": self.kem.k,
                "eta1": self.kem.eta1,
                "eta2": self.kem.eta2,
                "du": self.kem.du,
                "dv": self.kem.dv,
            },
            "rsa_bits": self.rsa_bits,
            "quant_scale": self.quant_scale,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> bytes:
        return hashlib.sha3_256(self.canonical_json().encode()).digest()


def _take(section: str, raw: Any, allowed: dict[str, Any]) -> dict[str, Any]:
    """Copy known keys, rejecting unknowns; `allowed` maps key -> default
    (REQUIRED sentinel for mandatory keys)."""
    if not isinstance(raw, dict):
        raise ScenarioConfigError(f"{section} must be a JSON object, got {type(raw).__name__}")
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ScenarioConfigError(
            f"unknown key {sorted(unknown)[0]!r} in {section} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )
    out = {}
    for key, default in allowed.items():
        if key in raw:
            out[key] = raw[key]
        elif default is _REQUIRED:
            raise ScenarioConfigError(f"{section} is missing required key {key!r}")
        else:
            out[key] = default
    return out


_REQUIRED = object()


def _parse_rule(raw: Any) -> AggRule:
    fields = _take("agg_rule", raw, {"kind": _REQUIRED, "fraction": 0.0, "f": 0})
    try:
        return AggRule(fields["kind"], fraction=float(fields["fraction"]), f=int(fields["f"]))
    except ValueError as exc:
        raise ScenarioConfigError(f"agg_rule: {exc}") from exc


def _parse_clip(raw: Any) -> ClipPolicy | None:
    if raw is None:
        return None
    fields = _take(
        "clip",
        raw,
        {"mode": _REQUIRED, "threshold": 0.0, "percentile": 95.0, "momentum_beta": 0.0},
    )
    try:
        return ClipPolicy(
            fields["mode"],
            threshold=float(fields["threshold"]),
            percentile=float(fields["percentile"]),
            momentum_beta=float(fields["momentum_beta"]),
        )
    except ValueError as exc:
        raise ScenarioConfigError(f"clip: {exc}") from exc


def _parse_attack(raw: Any) -> AttackSpec:
    fields = _take(
        "attack",
        raw,
        {"kind": _REQUIRED, "attacker_ids": [], "lambda": 1.0, "sigma": 0.0},
    )
    try:
        return AttackSpec(
            fields["kind"],
            attacker_ids=frozenset(int(i) for i in fields["attacker_ids"]),
            lam=float(fields["lambda"]),
            sigma=float(fields["sigma"]),
        )
    except ValueError as exc:
        raise ScenarioConfigError(f"attack: {exc}") from exc


def config_from_dict(raw: Any) -> ScenarioConfig:
    top = _take(
        "scenario",
        raw,
        {
            "n_clients": _REQUIRED,
            "rounds": _REQUIRED,
            "crypto_suite": _REQUIRED,
            "seed": 0,
            "agg_rule": {"kind": "mean"},
            "clip": None,
            "dp": {},
            "attack": {"kind": "none"},
            "data": {},
            "training": {},
            "kem": {},
            "rsa_bits": 24,
            "quant_scale": DEFAULT_QUANT_SCALE,
        },
    )
    dp_fields = _take(
        "dp", top["dp"], {"enabled": False, "epsilon": 1.0, "delta": 1e-5, "clip_c": 1.0}
    )
    data_fields = _take(
        "data", top["data"], {"samples_per_client": 100, "d": 8, "separation": 6.0}
    )
    training_fields = _take(
        "training",
        top["training"],
        {"learning_rate": 0.5, "local_epochs": 1, "batch_size": 32},
    )
    kem_fields = _take(
        "kem", top["kem"], {"k": 2, "eta1": 3, "eta2": 2, "du": 10, "dv": 4}
    )
    try:
        dp = NoiseMechanism(
            epsilon=float(dp_fields["epsilon"]),
            delta=float(dp_fields["delta"]),
            clip_c=float(dp_fields["clip_c"]),
            enabled=bool(dp_fields["enabled"]),
        )
    except ValueError as exc:
        raise ScenarioConfigError(f"dp: {exc}") from exc
    try:
        training = TrainingConfig(
            learning_rate=float(training_fields["learning_rate"]),
            local_epochs=int(training_fields["local_epochs"]),
            batch_size=int(training_fields["batch_size"]),
        )
    except ValueError as exc:
        raise ScenarioConfigError(f"training: {exc}") from exc
    try:
        kem = KemParams(
            k=int(kem_fields["k"]),
            eta1=int(kem_fields["eta1"]),
            eta2=int(kem_fields["eta2"]),
            du=int(kem_fields["du"]),
            dv=int(kem_fields["dv"]),
        )
    except ValueError as exc:
        raise ScenarioConfigError(f"kem: {exc}") from exc
    return ScenarioConfig(
        n_clients=int(top["n_clients"]),
        rounds=int(top["rounds"]),
        crypto_suite=top["crypto_suite"],
        seed=int(top["seed"]),
        agg_rule=_parse_rule(top["agg_rule"]),
        clip=_parse_clip(top["clip"]),
        dp=dp,
        attack=_parse_attack(top["attack"]),
        data=DataParams(
            samples_per_client=int(data_fields["samples_per_client"]),
            d=int(data_fields["d"]),
            separation=float(data_fields["separation"]),
        ),
        training=training,
        kem=kem,
        rsa_bits=int(top["rsa_bits"]),
        quant_scale=int(top["quant_scale"]),
    )


def parse_scenario_config(text: str) -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw)
