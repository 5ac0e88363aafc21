"""The adversary harness.

Three attacker roles from the threat model: Byzantine clients corrupting
their own updates, a gradient-inversion attacker reading plaintext updates,
and the retrospective eavesdropper who recorded every wire byte and later
gains an order-finding oracle.  The oracle is a classical stand-in for
quantum period finding, capped at 32-bit moduli so the demonstration runs
in seconds; it breaks the toy-RSA baseline completely and does nothing
against the lattice suite.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass

import numpy as np

from .fl import Dataset, GradientUpdate, ModelParams
from .ring import _is_prime
from .transcript import (
    AGGREGATOR_ID,
    PHASE_SETUP,
    PHASE_SUBMIT,
    RoundTranscript,
    SUITE_NAMES,
    SUITE_PLAINTEXT,
    SUITE_PQC,
    SUITE_RSA,
    decode_setup_payload,
)
from .wire import SignedCipherUpdate, decode_gradient

RSA_PUBLIC_EXPONENT = 17
METHOD_NO_QUANTUM_ATTACK = "no applicable quantum attack implemented"


@dataclass(frozen=True)
class AttackSpec:
    kind: str  # "none" | "sign_flip" | "scale" | "label_flip" | "gaussian"
    attacker_ids: frozenset[int] = frozenset()
    lam: float = 1.0  # scale factor
    sigma: float = 0.0  # gaussian noise scale

    def __post_init__(self) -> None:
        if self.kind not in ("none", "sign_flip", "scale", "label_flip", "gaussian"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "scale" and self.lam == 0:
            raise ValueError("scale attack requires lambda != 0")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian attack requires sigma > 0")
        object.__setattr__(self, "attacker_ids", frozenset(self.attacker_ids))


def byzantine_transform(
    honest: GradientUpdate, spec: AttackSpec, rng_seed: int
) -> GradientUpdate:
    """Corrupt one update.  label_flip is a dataset-level attack and is
    rejected here; use flip_labels before training instead."""
    if spec.kind == "label_flip":
        raise ValueError("label_flip acts on the dataset before training, not on updates")
    if spec.kind in ("none",):
        return honest
    if spec.kind == "sign_flip":
        delta = -honest.delta
    elif spec.kind == "scale":
        delta = spec.lam * honest.delta
    else:  # gaussian
        delta = honest.delta + np.random.default_rng(rng_seed).normal(
            0.0, spec.sigma, honest.delta.shape
        )
    return GradientUpdate.from_delta(honest.client_id, honest.round, delta)


def flip_labels(data: Dataset) -> Dataset:
    return Dataset(data.features.copy(), 1 - data.labels)


def model_inversion_attack(
    update: GradientUpdate, known_params: ModelParams | None = None
) -> np.ndarray | None:
    """Recover the training sample from a single-sample, single-step,
    full-batch update: the delta is a scalar multiple of (x || 1), so
    x = delta_w / delta_b.  Returns None when the residual vanishes."""
    if known_params is not None and known_params.d != update.delta.shape[0] - 1:
        raise ValueError("known_params dimension does not match the update")
    g_b = update.delta[-1]
    if abs(g_b) < 1e-9:
        return None
    return update.delta[:-1] / g_b


@dataclass(frozen=True)
class QuantumOracle:
    """Classical order-finding stand-in for the quantum period subroutine."""

    max_modulus_bits: int = 32

    def check_modulus(self, n_modulus: int) -> None:
        if n_modulus.bit_length() > self.max_modulus_bits:
            raise ValueError(
                f"modulus of {n_modulus.bit_length()} bits exceeds the oracle's "
                f"{self.max_modulus_bits}-bit bound"
            )


@dataclass(frozen=True)
class OrderFindResult:
    order: int | None = None
    shared_factor: int | None = None


def shor_order_find(a: int, n_modulus: int, oracle: QuantumOracle) -> OrderFindResult:
    """Multiplicative order of a mod n by iteration, or the gcd shortcut when
    a already shares a factor with n."""
    if not 1 < a < n_modulus:
        raise ValueError(f"need 1 < a < n, got a={a}, n={n_modulus}")
    oracle.check_modulus(n_modulus)
    g = math.gcd(a, n_modulus)
    if g > 1:
        return OrderFindResult(shared_factor=g)
    x = a
    r = 1
    while x != 1:
        x = x * a % n_modulus
        r += 1
    return OrderFindResult(order=r)


def factor_from_order(a: int, r: int, n_modulus: int) -> tuple[int, int] | None:
    """Shor post-processing: factors gcd(a^(r/2) +- 1, n), or None as the
    retry signal when r is odd or a^(r/2) = -1."""
    if r % 2 == 1:
        return None
    x = pow(a, r // 2, n_modulus)
    if x == n_modulus - 1:
        return None
    for candidate in (math.gcd(x - 1, n_modulus), math.gcd(x + 1, n_modulus)):
        if 1 < candidate < n_modulus:
            return tuple(sorted((candidate, n_modulus // candidate)))  # type: ignore[return-value]
    return None


def factor_modulus(n_modulus: int, oracle: QuantumOracle, rng_seed: int = 0) -> tuple[int, int]:
    """Full factoring loop: seeded random bases until post-processing lands."""
    oracle.check_modulus(n_modulus)
    rng = random.Random(rng_seed)
    while True:
        a = rng.randrange(2, n_modulus - 1)
        result = shor_order_find(a, n_modulus, oracle)
        if result.shared_factor is not None:
            p = result.shared_factor
            return tuple(sorted((p, n_modulus // p)))  # type: ignore[return-value]
        factors = factor_from_order(a, result.order, n_modulus)
        if factors is not None:
            return factors


@dataclass(frozen=True)
class RsaToyKey:
    n_modulus: int
    e_pub: int
    d_priv: int
    p: int
    q_factor: int

    def __post_init__(self) -> None:
        if self.p * self.q_factor != self.n_modulus:
            raise ValueError("p * q must equal the modulus")
        if self.n_modulus >= 1 << 32:
            raise ValueError("toy modulus must stay below 2^32")
        phi = (self.p - 1) * (self.q_factor - 1)
        if self.e_pub * self.d_priv % phi != 1:
            raise ValueError("e*d != 1 mod (p-1)(q-1)")


def rsa_key_from_primes(p: int, q: int) -> RsaToyKey:
    phi = (p - 1) * (q - 1)
    if math.gcd(RSA_PUBLIC_EXPONENT, phi) != 1:
        raise ValueError(f"e={RSA_PUBLIC_EXPONENT} not coprime with phi")
    return RsaToyKey(p * q, RSA_PUBLIC_EXPONENT, pow(RSA_PUBLIC_EXPONENT, -1, phi), p, q)


def _random_prime(rng: random.Random, bits: int) -> int:
    while True:
        candidate = rng.randrange(1 << (bits - 1), 1 << bits) | 1
        if _is_prime(candidate):
            return candidate


def rsa_toy_keygen(bits: int, rng_seed: int) -> RsaToyKey:
    """Deliberately breakable baseline: an RSA modulus of 8..32 bits."""
    if not 8 <= bits <= 32:
        raise ValueError(f"bits must be in [8, 32], got {bits}")
    rng = random.Random(rng_seed)
    half = bits // 2
    while True:
        p = _random_prime(rng, half)
        q = _random_prime(rng, bits - half)
        if p == q:
            continue
        if math.gcd(RSA_PUBLIC_EXPONENT, (p - 1) * (q - 1)) != 1:
            continue
        return rsa_key_from_primes(p, q)


def rsa_toy_cipher(key: RsaToyKey, block: int, direction: str) -> int:
    if direction not in ("encrypt", "decrypt"):
        raise ValueError(f"direction must be encrypt or decrypt, got {direction!r}")
    if not 0 <= block < key.n_modulus:
        raise ValueError(f"block {block} out of range [0, {key.n_modulus})")
    exponent = key.e_pub if direction == "encrypt" else key.d_priv
    return pow(block, exponent, key.n_modulus)


def rsa_encrypt_payload(n_modulus: int, e_pub: int, data: bytes) -> bytes:
    """Textbook block encryption of 16-bit chunks into u32 ciphertext words."""
    if n_modulus <= 1 << 16:
        raise ValueError("modulus must exceed 2^16 to carry 16-bit blocks")
    if len(data) % 2:
        raise ValueError("payload length must be even")
    blocks = np.frombuffer(data, dtype="<u2")
    return b"".join(
        struct.pack("<I", pow(int(m), e_pub, n_modulus)) for m in blocks
    )


def rsa_decrypt_payload(n_modulus: int, d_priv: int, data: bytes) -> bytes:
    if len(data) % 4:
        raise ValueError("ciphertext length must be a multiple of 4")
    words = np.frombuffer(data, dtype="<u4")
    plain = [pow(int(c), d_priv, n_modulus) for c in words]
    if any(m >= 1 << 16 for m in plain):
        raise ValueError("decrypted block exceeds 16 bits")
    return np.array(plain, dtype="<u2").tobytes()


@dataclass(eq=False)
class DecryptionReport:
    total_messages: int
    recovered: int
    recovered_plaintexts: list[tuple[int, int, np.ndarray]]  # (round, client, delta)
    method: str

    def __post_init__(self) -> None:
        if self.recovered > self.total_messages:
            raise ValueError("recovered count cannot exceed total")


def harvest_decrypt(
    transcripts: list[RoundTranscript], oracle: QuantumOracle, rng_seed: int = 0
) -> DecryptionReport:
    """Replay a harvested transcript: factor the toy-RSA modulus published in
    setup and decrypt every gradient payload, or report zero recoveries for
    the lattice suite."""
    setup = None
    submissions: list[tuple[int, SignedCipherUpdate]] = []
    for rt in transcripts:
        for msg in rt.messages:
            if msg.phase == PHASE_SETUP and msg.sender == AGGREGATOR_ID and setup is None:
                setup = decode_setup_payload(msg.payload)
            elif msg.phase == PHASE_SUBMIT:
                submissions.append((rt.round, SignedCipherUpdate.from_bytes(msg.payload)))

    total = len(submissions)
    if total == 0:
        return DecryptionReport(0, 0, [], "no gradient messages harvested")
    if setup is None:
        return DecryptionReport(total, 0, [], "no setup message found; suite unknown")
    suite, quant_scale, key_bytes = setup

    if suite == SUITE_PQC:
        return DecryptionReport(total, 0, [], METHOD_NO_QUANTUM_ATTACK)

    if suite == SUITE_PLAINTEXT:
        plaintexts = [
            (rnd, sub.client_id, decode_gradient(sub.payload, quant_scale))
            for rnd, sub in submissions
        ]
        return DecryptionReport(total, total, plaintexts, "plaintext suite; no decryption needed")

    assert suite == SUITE_RSA, SUITE_NAMES.get(suite, suite)
    n_modulus, e_pub = struct.unpack("<QQ", key_bytes)
    p, q = factor_modulus(n_modulus, oracle, rng_seed)
    d_priv = pow(e_pub, -1, (p - 1) * (q - 1))
    plaintexts = []
    recovered = 0
    for rnd, sub in submissions:
        try:
            plain = rsa_decrypt_payload(n_modulus, d_priv, sub.payload)
            plaintexts.append((rnd, sub.client_id, decode_gradient(plain, quant_scale)))
            recovered += 1
        except ValueError:
            continue
    return DecryptionReport(
        total,
        recovered,
        plaintexts,
        f"order-finding oracle factored n={n_modulus} as {p}*{q}; "
        "reconstructed d and decrypted all blocks",
    )
