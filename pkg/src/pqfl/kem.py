"""Module-LWE key encapsulation.

LPR-style encryption over R_q^k (public key t = A*s + e) wrapped in a
simplified Fujisaki-Okamoto transform with implicit rejection: decapsulating
a tampered ciphertext yields a stable garbage secret derived from a per-key
hidden value rather than an error.  All three operations are deterministic
functions of their declared inputs.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass

import numpy as np

from .ring import (
    KYBER_RING,
    PolyVec,
    RingParams,
    centered,
    intt_array,
    matvec_ntt,
    ntt_array,
    nttmul_array,
    pack_bits,
    poly_from_bytes,
    sample_cbd,
    sample_uniform,
    unpack_bits,
)

_KEYGEN_DOMAIN = b"pqfl/kem/keygen"
_MSG_DOMAIN = b"pqfl/kem/m"
_COINS_DOMAIN = b"pqfl/kem/coins"
_SECRET_DOMAIN = b"pqfl/kem/ss"
_REJECT_DOMAIN = b"pqfl/kem/rej"


@dataclass(frozen=True)
class KemParams:
    ring: RingParams = KYBER_RING
    k: int = 2
    eta1: int = 3
    eta2: int = 2
    du: int = 10
    dv: int = 4

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"module rank k must be >= 1, got {self.k}")
        if self.eta1 not in (2, 3) or self.eta2 not in (2, 3):
            raise ValueError("eta1 and eta2 must be 2 or 3")
        qbits = self.ring.q.bit_length()
        if not (0 < self.du <= qbits and 0 < self.dv <= qbits):
            raise ValueError("du/dv must be in (0, bit length of q]")

    @property
    def public_key_bytes(self) -> int:
        return 32 + self.k * 2 * self.ring.n

    @property
    def ciphertext_bytes(self) -> int:
        return (self.k * self.ring.n * self.du + self.ring.n * self.dv) // 8


@dataclass(eq=False)
class KemPublicKey:
    params: KemParams
    seed_a: bytes
    t: PolyVec

    def to_bytes(self) -> bytes:
        return self.seed_a + b"".join(
            self.t.data[i].astype("<u2").tobytes() for i in range(self.params.k)
        )

    @classmethod
    def from_bytes(cls, params: KemParams, data: bytes) -> "KemPublicKey":
        if len(data) != params.public_key_bytes:
            raise ValueError(
                f"public key must be {params.public_key_bytes} bytes, got {len(data)}"
            )
        seed_a, rest = data[:32], data[32:]
        n = params.ring.n
        polys = [poly_from_bytes(params.ring, rest[2 * n * i : 2 * n * (i + 1)]).coeffs
                 for i in range(params.k)]
        return cls(params, seed_a, PolyVec(params.ring, np.stack(polys)))


@dataclass(eq=False)
class KemKeyPair:
    params: KemParams
    public: KemPublicKey
    s: PolyVec
    z_reject: bytes  # implicit-rejection secret


@dataclass(frozen=True)
class KemCiphertext:
    u_packed: bytes
    v_packed: bytes

    def to_bytes(self) -> bytes:
        return self.u_packed + self.v_packed

    @classmethod
    def from_bytes(cls, params: KemParams, data: bytes) -> "KemCiphertext":
        if len(data) != params.ciphertext_bytes:
            raise ValueError(
                f"ciphertext must be {params.ciphertext_bytes} bytes, got {len(data)}"
            )
        u_len = params.k * params.ring.n * params.du // 8
        return cls(data[:u_len], data[u_len:])


@dataclass(frozen=True)
class SharedSecret:
    bytes: "bytes"

    def __post_init__(self) -> None:
        if len(self.bytes) != 32:
            raise ValueError("shared secret must be 32 bytes")


@functools.lru_cache(maxsize=128)
def _matrix_ntt(seed_a: bytes, params: KemParams) -> np.ndarray:
    """Public matrix A expanded from its seed, cached in the transform domain."""
    k, ring = params.k, params.ring
    rows = np.stack(
        [
            np.stack([sample_uniform(ring, seed_a, i * k + j).coeffs for j in range(k)])
            for i in range(k)
        ]
    )
    a_hat = ntt_array(rows, ring)
    a_hat.flags.writeable = False
    return a_hat


def expand_matrix(seed_a: bytes, params: KemParams) -> np.ndarray:
    """Standard-domain A, entry (i, j) = sample_uniform(seed_a, i*k + j)."""
    return intt_array(_matrix_ntt(seed_a, params), params.ring)


def _compress(values: np.ndarray, d: int, q: int) -> np.ndarray:
    return (((values.astype(np.int64) << d) + q // 2) // q) % (1 << d)


def _decompress(values: np.ndarray, d: int, q: int) -> np.ndarray:
    return (values.astype(np.int64) * q + (1 << (d - 1))) >> d


def _cbd_vec(params: KemParams, seed: bytes, base_nonce: int, count: int, eta: int) -> np.ndarray:
    return np.stack(
        [sample_cbd(params.ring, seed, base_nonce + i, eta).coeffs for i in range(count)]
    )


def kem_keygen(params: KemParams, rng_seed: bytes) -> KemKeyPair:
    """t = A*s + e with A from a public seed and (s, e) centered-binomial noise."""
    if len(rng_seed) != 32:
        raise ValueError("rng_seed must be 32 bytes")
    root = hashlib.shake_256(_KEYGEN_DOMAIN + rng_seed).digest(96)
    seed_a, noise_seed, z_reject = root[:32], root[32:64], root[64:96]
    s = _cbd_vec(params, noise_seed, 0, params.k, params.eta1)
    e = _cbd_vec(params, noise_seed, params.k, params.k, params.eta1)
    return _keygen_from_noise(params, seed_a, s, e, z_reject)


def _keygen_from_noise(
    params: KemParams, seed_a: bytes, s: np.ndarray, e: np.ndarray, z_reject: bytes
) -> KemKeyPair:
    ring = params.ring
    a_hat = _matrix_ntt(seed_a, params)
    t = (intt_array(matvec_ntt(a_hat, ntt_array(s, ring), ring), ring) + e) % ring.q
    public = KemPublicKey(params, seed_a, PolyVec(ring, t))
    return KemKeyPair(params, public, PolyVec(ring, s % ring.q), z_reject)


def _encrypt(pk: KemPublicKey, msg: bytes, coins: bytes) -> KemCiphertext:
    params, ring = pk.params, pk.params.ring
    q, k = ring.q, params.k
    r = _cbd_vec(params, coins, 0, k, params.eta1)
    e1 = _cbd_vec(params, coins, k, k, params.eta2)
    e2 = sample_cbd(ring, coins, 2 * k, params.eta2).coeffs

    a_hat = _matrix_ntt(pk.seed_a, params)
    r_hat = ntt_array(r, ring)
    u = (intt_array(matvec_ntt(a_hat.transpose(1, 0, 2), r_hat, ring), ring) + e1) % q

    t_hat = ntt_array(pk.t.data, ring)
    tr = intt_array(nttmul_array(t_hat, r_hat, ring).sum(axis=0) % q, ring)
    bits = np.unpackbits(np.frombuffer(msg, dtype=np.uint8), bitorder="little")[: ring.n]
    msg_poly = _decompress(bits.astype(np.int64), 1, q)
    v = (tr + e2 + msg_poly) % q

    return KemCiphertext(
        pack_bits(_compress(u, params.du, q).reshape(-1), params.du),
        pack_bits(_compress(v, params.dv, q), params.dv),
    )


def _decrypt(kp: KemKeyPair, ct: KemCiphertext) -> bytes:
    params, ring = kp.params, kp.params.ring
    q, k, n = ring.q, params.k, params.ring.n
    u = unpack_bits(ct.u_packed, params.du, k * n).reshape(k, n)
    u = _decompress(u, params.du, q) % q
    v = _decompress(unpack_bits(ct.v_packed, params.dv, n), params.dv, q) % q
    su = intt_array(
        nttmul_array(ntt_array(kp.s.data, ring), ntt_array(u, ring), ring).sum(axis=0) % q,
        ring,
    )
    bits = _compress((v - su) % q, 1, q).astype(np.uint8)
    return np.packbits(bits, bitorder="little").tobytes()


def _hash32(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def kem_encapsulate(pk: KemPublicKey, rng_seed: bytes) -> tuple[KemCiphertext, SharedSecret]:
    """Encrypt a fresh 256-bit message m; secret = Hash(m || Hash(ciphertext))."""
    if len(rng_seed) != 32:
        raise ValueError("rng_seed must be 32 bytes")
    if pk.t.k != pk.params.k or len(pk.seed_a) != 32:
        raise ValueError("malformed public key")
    m = hashlib.shake_256(_MSG_DOMAIN + rng_seed).digest(pk.params.ring.n // 8)
    coins = hashlib.shake_256(_COINS_DOMAIN + m + _hash32(pk.to_bytes())).digest(32)
    ct = _encrypt(pk, m, coins)
    secret = hashlib.shake_256(_SECRET_DOMAIN + m + _hash32(ct.to_bytes())).digest(32)
    return ct, SharedSecret(secret)


def kem_decapsulate(kp: KemKeyPair, ct: KemCiphertext) -> SharedSecret:
    """Recover m, re-encrypt to check, and on mismatch return the
    implicit-rejection secret instead of signalling an error."""
    expected = kp.params.ciphertext_bytes
    if len(ct.u_packed) + len(ct.v_packed) != expected:
        raise ValueError(f"ciphertext must be {expected} bytes")
    m = _decrypt(kp, ct)
    coins = hashlib.shake_256(_COINS_DOMAIN + m + _hash32(kp.public.to_bytes())).digest(32)
    ct_check = _encrypt(kp.public, m, coins)
    ct_hash = _hash32(ct.to_bytes())
    if ct_check.to_bytes() == ct.to_bytes():
        return SharedSecret(hashlib.shake_256(_SECRET_DOMAIN + m + ct_hash).digest(32))
    return SharedSecret(hashlib.shake_256(_REJECT_DOMAIN + kp.z_reject + ct_hash).digest(32))
