"""Deterministic round engine over an in-memory message bus.

Each round runs three phases: (A) every client trains locally, attackers
corrupt their updates, DP noise is added; (B) clients quantize, encrypt per
the active crypto suite, sign when the suite supports it, and post to the
bus; (C) the aggregator gates on signatures, decrypts, clips, aggregates,
smooths, applies the global update, and broadcasts the new model.  Every
wire byte is recorded.

Per-round phase timings come from a deterministic virtual cost model so a
rerun with the same config is byte-identical; `measure_overhead` is the one
place the real monotonic clock is used.
"""

from __future__ import annotations

import hashlib
import statistics
import struct
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .adversary import (
    byzantine_transform,
    flip_labels,
    rsa_decrypt_payload,
    rsa_encrypt_payload,
    rsa_toy_keygen,
    RsaToyKey,
)
from .aggregation import (
    GlobalUpdate,
    adaptive_clip,
    apply_rule,
    momentum_normalize,
    verified_secure_aggregate,
)
from .fl import (
    Dataset,
    GradientUpdate,
    ModelParams,
    apply_global_update,
    evaluate,
    generate_synthetic_threat_data,
    local_train_step,
)
from .kem import KemKeyPair, kem_encapsulate, kem_keygen
from .privacy import PrivacyLedger, compose_budget, dp_sanitize
from .scenario import ScenarioConfig
from .sig import SigKeyPair, SigParams, SigPublicKey, sig_keygen, sig_sign
from .transcript import (
    AGGREGATOR_ID,
    PHASE_GLOBAL,
    PHASE_SETUP,
    PHASE_SUBMIT,
    RoundTranscript,
    SUITE_PLAINTEXT,
    SUITE_PQC,
    SUITE_RSA,
    TranscriptMessage,
    encode_setup_payload,
)
from .wire import SignedCipherUpdate, decode_gradient, encode_gradient, keystream, xor_bytes

_SUITE_TAGS = {"plaintext": SUITE_PLAINTEXT, "rsa_toy": SUITE_RSA, "pqc": SUITE_PQC}

# Nominal per-operation costs (seconds) for the deterministic virtual clock.
_COST_TRAIN_SAMPLE = 2e-6
_COST_EVAL_SAMPLE = 2e-7
_COST_WIRE_BYTE = 1e-8
_COST_KEM_ENCAPS = 1.0e-3
_COST_KEM_DECAPS = 1.6e-3
_COST_SIG_SIGN = 2.0e-3
_COST_SIG_VERIFY = 1.2e-3
_COST_RSA_BLOCK = 5e-6


def _derive(seed: int, tag: str, *indices: int) -> bytes:
    material = (
        b"pqfl/scn:"
        + (seed % (1 << 64)).to_bytes(8, "little")
        + tag.encode()
        + b"".join(i.to_bytes(8, "little") for i in indices)
    )
    return hashlib.shake_256(material).digest(32)


def train_seed(seed: int, round: int, client_id: int) -> int:
    return int.from_bytes(_derive(seed, "train", round, client_id)[:8], "little")


def byzantine_seed(seed: int, round: int, client_id: int) -> int:
    return int.from_bytes(_derive(seed, "byz", round, client_id)[:8], "little")


def dp_seed(seed: int, round: int, client_id: int) -> int:
    return int.from_bytes(_derive(seed, "dp", round, client_id)[:8], "little")


def encaps_seed(seed: int, round: int, client_id: int) -> bytes:
    return _derive(seed, "encaps", round, client_id)


def sign_seed(seed: int, round: int, client_id: int) -> bytes:
    return _derive(seed, "sign", round, client_id)


@dataclass(eq=False)
class SuiteKeys:
    suite: int
    kem_keypair: KemKeyPair | None = None
    sig_keypairs: dict[int, SigKeyPair] = field(default_factory=dict)
    rsa_key: RsaToyKey | None = None

    def verify_keys(self) -> dict[int, SigPublicKey]:
        return {cid: kp.public for cid, kp in self.sig_keypairs.items()}


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    loss: float
    accuracy: float
    contributors: int
    excluded: int
    bytes_on_wire: int
    phase_a_s: float
    phase_b_s: float
    phase_c_s: float


@dataclass(eq=False)
class Metrics:
    per_round: list[RoundMetrics]
    final_accuracy: float
    overhead_ratio: float | None = None
    dp_total_epsilon: float = 0.0
    dp_total_delta: float = 0.0
    # Real wall time of phases B+C, for measure_overhead only; never written
    # to metrics files (they must be byte-identical across reruns).
    wall_bc_seconds: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "rounds": [
                {
                    "round": r.round,
                    "loss": r.loss,
                    "accuracy": r.accuracy,
                    "contributors": r.contributors,
                    "excluded": r.excluded,
                    "bytes": r.bytes_on_wire,
                    "phaseA_s": r.phase_a_s,
                    "phaseB_s": r.phase_b_s,
                    "phaseC_s": r.phase_c_s,
                }
                for r in self.per_round
            ],
            "final": {
                "accuracy": self.final_accuracy,
                "overhead_ratio": self.overhead_ratio,
                "dp_total_epsilon": self.dp_total_epsilon,
                "dp_total_delta": self.dp_total_delta,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "Metrics":
        rounds = [
            RoundMetrics(
                round=r["round"],
                loss=r["loss"],
                accuracy=r["accuracy"],
                contributors=r["contributors"],
                excluded=r["excluded"],
                bytes_on_wire=r["bytes"],
                phase_a_s=r["phaseA_s"],
                phase_b_s=r["phaseB_s"],
                phase_c_s=r["phaseC_s"],
            )
            for r in raw["rounds"]
        ]
        final = raw["final"]
        return cls(
            per_round=rounds,
            final_accuracy=final["accuracy"],
            overhead_ratio=final["overhead_ratio"],
            dp_total_epsilon=final.get("dp_total_epsilon", 0.0),
            dp_total_delta=final.get("dp_total_delta", 0.0),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Metrics):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(eq=False)
class ScenarioState:
    """Everything that persists across rounds."""

    config: ScenarioConfig
    shards: list[Dataset]
    pool: Dataset
    keys: SuiteKeys
    setup_transcript: RoundTranscript
    model: ModelParams
    momentum: np.ndarray
    ledger: PrivacyLedger = PrivacyLedger()
    next_round: int = 1
    rows: list[RoundMetrics] = field(default_factory=list)
    transcripts: list[RoundTranscript] = field(default_factory=list)
    # Private ground truth of sent deltas, for test assertions only; nothing
    # in the aggregation path reads it.
    ground_truth: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    wall_bc_seconds: float = 0.0


@dataclass(eq=False)
class RoundState:
    """One round in flight; run_phase moves it through A -> B -> C."""

    scenario: ScenarioState
    round: int
    transcript: RoundTranscript
    next_phase: str = "A"
    updates: list[GradientUpdate] = field(default_factory=list)
    global_update: GlobalUpdate | None = None
    accuracy: float = 0.0
    loss: float = 0.0
    wall_seconds: dict[str, float] = field(default_factory=dict)


def setup_scenario(config: ScenarioConfig) -> ScenarioState:
    """Generate shards and keys, and record the round-0 key-distribution
    messages that an eavesdropper would also see."""
    shards = generate_synthetic_threat_data(
        int.from_bytes(_derive(config.seed, "data")[:8], "little"),
        config.n_clients,
        config.data.samples_per_client,
        config.data.d,
        config.data.separation,
    )
    if config.attack.kind == "label_flip":
        shards = [
            flip_labels(s) if cid in config.attack.attacker_ids else s
            for cid, s in enumerate(shards)
        ]
    pool = Dataset(
        np.concatenate([s.features for s in shards]),
        np.concatenate([s.labels for s in shards]),
    )

    suite = _SUITE_TAGS[config.crypto_suite]
    keys = SuiteKeys(suite=suite)
    setup = RoundTranscript(round=0)
    if suite == SUITE_PQC:
        keys.kem_keypair = kem_keygen(config.kem, _derive(config.seed, "kem-agg"))
        key_bytes = keys.kem_keypair.public.to_bytes()
        sig_params = SigParams()
        for cid in range(config.n_clients):
            keys.sig_keypairs[cid] = sig_keygen(sig_params, _derive(config.seed, "sig", cid))
    elif suite == SUITE_RSA:
        keys.rsa_key = rsa_toy_keygen(
            config.rsa_bits, int.from_bytes(_derive(config.seed, "rsa")[:8], "little")
        )
        key_bytes = struct.pack("<QQ", keys.rsa_key.n_modulus, keys.rsa_key.e_pub)
    else:
        key_bytes = b""
    setup.messages.append(
        TranscriptMessage(
            AGGREGATOR_ID,
            PHASE_SETUP,
            encode_setup_payload(suite, config.quant_scale, key_bytes),
        )
    )
    for cid, kp in sorted(keys.sig_keypairs.items()):
        setup.messages.append(TranscriptMessage(cid, PHASE_SETUP, kp.public.to_bytes()))

    d = config.data.d
    return ScenarioState(
        config=config,
        shards=shards,
        pool=pool,
        keys=keys,
        setup_transcript=setup,
        model=ModelParams.zeros(d),
        momentum=np.zeros(d + 1),
    )


def begin_round(scenario: ScenarioState) -> RoundState:
    return RoundState(
        scenario=scenario,
        round=scenario.next_round,
        transcript=RoundTranscript(round=scenario.next_round),
    )


def _phase_a(state: RoundState) -> float:
    scn = state.scenario
    config = scn.config
    attack = config.attack
    for cid in range(config.n_clients):
        update = local_train_step(
            scn.model,
            scn.shards[cid],
            config.training,
            train_seed(config.seed, state.round, cid),
            client_id=cid,
            round=state.round,
        )
        if cid in attack.attacker_ids and attack.kind in ("sign_flip", "scale", "gaussian"):
            update = byzantine_transform(
                update, attack, byzantine_seed(config.seed, state.round, cid)
            )
        if config.dp.enabled:
            update = dp_sanitize(update, config.dp, dp_seed(config.seed, state.round, cid))
        state.updates.append(update)
    samples = config.n_clients * config.data.samples_per_client
    return samples * config.training.local_epochs * _COST_TRAIN_SAMPLE


def _phase_b(state: RoundState) -> float:
    scn = state.scenario
    config = scn.config
    keys = scn.keys
    crypto_cost = 0.0
    for update in state.updates:
        cid = update.client_id
        plain = encode_gradient(update.delta, config.quant_scale)
        scn.ground_truth[(state.round, cid)] = update.delta.copy()
        if keys.suite == SUITE_PQC:
            ct, secret = kem_encapsulate(
                keys.kem_keypair.public, encaps_seed(config.seed, state.round, cid)
            )
            enc = xor_bytes(plain, keystream(secret.bytes, state.round, cid, len(plain)))
            draft = SignedCipherUpdate(state.round, cid, ct.to_bytes(), enc, b"")
            kp = keys.sig_keypairs[cid]
            signature = sig_sign(kp, draft.signed_span(), sign_seed(config.seed, state.round, cid))
            sub = SignedCipherUpdate(
                state.round, cid, ct.to_bytes(), enc, signature.to_bytes(kp.params)
            )
            crypto_cost += _COST_KEM_ENCAPS + _COST_SIG_SIGN
        elif keys.suite == SUITE_RSA:
            enc = rsa_encrypt_payload(keys.rsa_key.n_modulus, keys.rsa_key.e_pub, plain)
            sub = SignedCipherUpdate(state.round, cid, b"", enc, b"")
            crypto_cost += (len(plain) // 2) * _COST_RSA_BLOCK
        else:
            sub = SignedCipherUpdate(state.round, cid, b"", plain, b"")
        state.transcript.messages.append(
            TranscriptMessage(cid, PHASE_SUBMIT, sub.to_bytes())
        )
    wire_bytes = sum(
        len(m.payload) for m in state.transcript.messages if m.phase == PHASE_SUBMIT
    )
    return crypto_cost + wire_bytes * _COST_WIRE_BYTE


def _phase_c(state: RoundState) -> float:
    scn = state.scenario
    config = scn.config
    keys = scn.keys
    submissions = [
        SignedCipherUpdate.from_bytes(m.payload)
        for m in state.transcript.messages
        if m.phase == PHASE_SUBMIT
    ]
    crypto_cost = 0.0
    if keys.suite == SUITE_PQC:
        state.global_update = verified_secure_aggregate(
            submissions,
            keys.verify_keys(),
            keys.kem_keypair,
            config.agg_rule,
            config.clip,
            config.quant_scale,
        )
        crypto_cost += len(submissions) * (_COST_SIG_VERIFY + _COST_KEM_DECAPS)
    else:
        updates = []
        for sub in sorted(submissions, key=lambda s: s.client_id):
            if keys.suite == SUITE_RSA:
                plain = rsa_decrypt_payload(
                    keys.rsa_key.n_modulus, keys.rsa_key.d_priv, sub.payload
                )
                crypto_cost += (len(plain) // 2) * _COST_RSA_BLOCK
            else:
                plain = sub.payload
            updates.append(
                GradientUpdate.from_delta(
                    sub.client_id, sub.round, decode_gradient(plain, config.quant_scale)
                )
            )
        if config.clip is not None:
            updates = adaptive_clip(updates, config.clip)
        state.global_update = GlobalUpdate(
            apply_rule(updates, config.agg_rule), [u.client_id for u in updates], []
        )

    scn.momentum, emitted = momentum_normalize(
        scn.momentum, state.global_update.vector, config.momentum_beta
    )
    scn.model = apply_global_update(scn.model, emitted)
    broadcast = struct.pack("<I", state.round) + scn.model.as_vector().astype("<f8").tobytes()
    state.transcript.messages.append(
        TranscriptMessage(AGGREGATOR_ID, PHASE_GLOBAL, broadcast)
    )
    state.accuracy, state.loss = evaluate(scn.model, scn.pool)
    return (
        crypto_cost
        + len(broadcast) * _COST_WIRE_BYTE
        + len(scn.pool) * _COST_EVAL_SAMPLE
    )


_PHASE_BODIES = {"A": _phase_a, "B": _phase_b, "C": _phase_c}


def run_phase(state: RoundState, phase: str) -> RoundState:
    """Run one phase; phases must be invoked in order A -> B -> C."""
    if phase not in _PHASE_BODIES:
        raise ValueError(f"unknown phase {phase!r}")
    if phase != state.next_phase:
        raise ValueError(
            f"out-of-order phase {phase!r}: round {state.round} expects {state.next_phase!r}"
        )
    started = time.perf_counter()
    virtual = _PHASE_BODIES[phase](state)
    state.wall_seconds[phase] = time.perf_counter() - started
    state.transcript.timings[phase] = virtual
    state.next_phase = {"A": "B", "B": "C", "C": "done"}[phase]
    return state


def commit_round(state: RoundState) -> None:
    """Fold a completed round back into the scenario."""
    if state.next_phase != "done":
        raise ValueError(f"round {state.round} is not finished (next: {state.next_phase})")
    scn = state.scenario
    config = scn.config
    if config.dp.enabled:
        scn.ledger = compose_budget(scn.ledger, (config.dp.epsilon, config.dp.delta))
    scn.rows.append(
        RoundMetrics(
            round=state.round,
            loss=state.loss,
            accuracy=state.accuracy,
            contributors=len(state.global_update.contributors),
            excluded=len(state.global_update.excluded),
            bytes_on_wire=state.transcript.bytes_on_wire,
            phase_a_s=state.transcript.timings["A"],
            phase_b_s=state.transcript.timings["B"],
            phase_c_s=state.transcript.timings["C"],
        )
    )
    scn.transcripts.append(state.transcript)
    scn.wall_bc_seconds += state.wall_seconds["B"] + state.wall_seconds["C"]
    scn.next_round += 1


def run_scenario(config: ScenarioConfig) -> tuple[Metrics, list[RoundTranscript]]:
    metrics, transcripts, _ = run_scenario_with_ground_truth(config)
    return metrics, transcripts


def run_scenario_with_ground_truth(
    config: ScenarioConfig,
) -> tuple[Metrics, list[RoundTranscript], dict[tuple[int, int], np.ndarray]]:
    """run_scenario plus the simulator's private record of every delta as
    sent, keyed by (round, client_id).  Test instrumentation only."""
    scn = setup_scenario(config)
    for _ in range(config.rounds):
        state = begin_round(scn)
        for phase in ("A", "B", "C"):
            run_phase(state, phase)
        commit_round(state)
    metrics = Metrics(
        per_round=scn.rows,
        final_accuracy=scn.rows[-1].accuracy,
        dp_total_epsilon=scn.ledger.total_epsilon,
        dp_total_delta=scn.ledger.total_delta,
        wall_bc_seconds=scn.wall_bc_seconds,
    )
    return metrics, [scn.setup_transcript] + scn.transcripts, scn.ground_truth


@dataclass(frozen=True)
class OverheadReport:
    ratio: float  # median of per-repetition ratios
    per_repetition: tuple[float, ...]
    base_seconds: float
    variant_seconds: float


_CRYPTO_FIELDS = ("crypto_suite", "kem", "rsa_bits")


def measure_overhead(
    config_base: ScenarioConfig,
    config_variant: ScenarioConfig,
    repetitions: int = 3,
) -> OverheadReport:
    """Wall-clock phase-B+C overhead of the variant relative to the base.

    The two configs may differ only in crypto suite or KEM parameters."""
    base_dict = config_base.to_dict()
    variant_dict = config_variant.to_dict()
    for key in _CRYPTO_FIELDS:
        base_dict.pop(key)
        variant_dict.pop(key)
    if base_dict != variant_dict:
        diff = [k for k in base_dict if base_dict[k] != variant_dict[k]]
        raise ValueError(f"configs differ outside crypto fields: {diff}")
    ratios = []
    base_times = []
    variant_times = []
    for _ in range(repetitions):
        t_base = run_scenario(config_base)[0].wall_bc_seconds
        t_variant = run_scenario(config_variant)[0].wall_bc_seconds
        base_times.append(t_base)
        variant_times.append(t_variant)
        ratios.append((t_variant - t_base) / t_base)
    return OverheadReport(
        ratio=statistics.median(ratios),
        per_repetition=tuple(ratios),
        base_seconds=statistics.median(base_times),
        variant_seconds=statistics.median(variant_times),
    )
