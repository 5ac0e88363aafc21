"""Module-SIS signatures via Fiat-Shamir with aborts.

Response z = y + c*s1 is released only when its infinity norm stays below
gamma1 - beta and the high-order part of A*z - c*t matches the commitment
that was hashed, so emitted signatures leak nothing about s1.  The public
key carries the full t (no compression, no hint vector), which costs
bandwidth but keeps verification a direct recomputation.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .ring import (
    DILITHIUM_RING,
    PolyVec,
    RingParams,
    centered,
    intt_array,
    matvec_ntt,
    ntt_array,
    nttmul_array,
    pack_bits,
    sample_uniform,
    unpack_bits,
)

_KEYGEN_DOMAIN = b"pqfl/sig/keygen"
_SMALL_DOMAIN = b"pqfl/sig/small"
_MASK_DOMAIN = b"pqfl/sig/mask"
_CHALLENGE_DOMAIN = b"pqfl/sig/chal"
_BALL_DOMAIN = b"pqfl/sig/ball"

MAX_SIGN_ITERATIONS = 1000


@dataclass(frozen=True)
class SigParams:
    ring: RingParams = DILITHIUM_RING
    k: int = 4
    l: int = 4
    eta: int = 2
    gamma1: int = 1 << 17
    tau: int = 39
    beta: int = 78  # tau * eta
    d_low: int = 17  # HighBits drops this many low-order bits

    def __post_init__(self) -> None:
        if self.k != self.l:
            raise ValueError("square module only: k must equal l")
        if not self.gamma1 > self.beta > 0:
            raise ValueError("need gamma1 > beta > 0")
        if self.eta < 1:
            raise ValueError("eta must be >= 1")
        if not 0 < self.tau <= self.ring.n:
            raise ValueError("tau must be in (0, n]")
        if (self.ring.q >> self.d_low) > 254:
            raise ValueError("d_low too small for single-byte high parts")

    @property
    def z_bits(self) -> int:
        # Signed field wide enough for |z| < gamma1.
        return self.gamma1.bit_length() + 1

    @property
    def signature_bytes(self) -> int:
        return (self.l * self.ring.n * self.z_bits + 7) // 8 + 32


@dataclass(eq=False)
class SigPublicKey:
    params: SigParams
    seed_a: bytes
    t: PolyVec
    _t_hat: np.ndarray | None = field(default=None, repr=False)

    def to_bytes(self) -> bytes:
        return self.seed_a + pack_bits(self.t.data.reshape(-1), 24)

    @classmethod
    def from_bytes(cls, params: SigParams, data: bytes) -> "SigPublicKey":
        n, k = params.ring.n, params.k
        expected = 32 + (k * n * 24 + 7) // 8
        if len(data) != expected:
            raise ValueError(f"public key must be {expected} bytes, got {len(data)}")
        t = unpack_bits(data[32:], 24, k * n).reshape(k, n)
        if (t >= params.ring.q).any():
            raise ValueError("encoded coefficient out of range")
        return cls(params, data[:32], PolyVec(params.ring, t))

    def t_ntt(self) -> np.ndarray:
        if self._t_hat is None:
            self._t_hat = ntt_array(self.t.data, self.params.ring)
        return self._t_hat


@dataclass(eq=False)
class SigKeyPair:
    params: SigParams
    public: SigPublicKey
    s1: PolyVec
    s2: PolyVec


@dataclass(eq=False)
class Signature:
    z: PolyVec
    c_seed: bytes
    c: "np.ndarray"  # challenge coefficients mod q, tau nonzero entries of +-1

    def to_bytes(self, params: SigParams) -> bytes:
        signed = centered(self.z.data.reshape(-1), params.ring.q)
        mask = (1 << params.z_bits) - 1
        return pack_bits(signed & mask, params.z_bits) + self.c_seed

    @classmethod
    def from_bytes(cls, params: SigParams, data: bytes) -> "Signature":
        if len(data) != params.signature_bytes:
            raise ValueError(f"signature must be {params.signature_bytes} bytes")
        c_seed = data[-32:]
        n, l, bits = params.ring.n, params.l, params.z_bits
        vals = unpack_bits(data[:-32], bits, l * n)
        vals = np.where(vals >= 1 << (bits - 1), vals - (1 << bits), vals)
        z = PolyVec(params.ring, vals.reshape(l, n) % params.ring.q)
        return cls(z, c_seed, challenge_poly(params, c_seed))


@functools.lru_cache(maxsize=128)
def _matrix_ntt(seed_a: bytes, params: SigParams) -> np.ndarray:
    k, l, ring = params.k, params.l, params.ring
    rows = np.stack(
        [
            np.stack([sample_uniform(ring, seed_a, i * l + j).coeffs for j in range(l)])
            for i in range(k)
        ]
    )
    a_hat = ntt_array(rows, ring)
    a_hat.flags.writeable = False
    return a_hat


def expand_matrix(seed_a: bytes, params: SigParams) -> np.ndarray:
    return intt_array(_matrix_ntt(seed_a, params), params.ring)


def _sample_signed_uniform(
    domain: bytes, seed: bytes, nonce: int, bound: int, n: int, q: int
) -> np.ndarray:
    """n coefficients uniform over [-bound, bound], returned mod q."""
    span = 2 * bound + 1
    bits = span.bit_length()
    width = (bits + 7) // 8
    mask = (1 << bits) - 1
    xof = hashlib.shake_256(domain + seed + nonce.to_bytes(4, "little"))
    total = width * (2 * n + 16)
    while True:
        stream = np.frombuffer(xof.digest(total), dtype=np.uint8)
        chunks = stream[: (len(stream) // width) * width].reshape(-1, width).astype(np.int64)
        vals = (chunks << (8 * np.arange(width, dtype=np.int64))).sum(axis=1) & mask
        accepted = vals[vals < span]
        if len(accepted) >= n:
            return (accepted[:n] - bound) % q
        total *= 2


def challenge_poly(params: SigParams, c_seed: bytes) -> np.ndarray:
    """Sparse challenge: exactly tau coefficients of +-1, Fisher-Yates placed."""
    n, q = params.ring.n, params.ring.q
    stream = hashlib.shake_256(_BALL_DOMAIN + c_seed).digest(8 + 8 * params.tau)
    sign_bits = np.unpackbits(np.frombuffer(stream[:8], dtype=np.uint8), bitorder="little")
    c = np.zeros(n, dtype=np.int64)
    pos = 8
    for idx, i in enumerate(range(n - params.tau, n)):
        while True:
            j = stream[pos]
            pos += 1
            if pos >= len(stream):
                stream += hashlib.shake_256(_BALL_DOMAIN + c_seed).digest(2 * len(stream))[len(stream):]
            if j <= i:
                break
        c[i] = c[j]
        c[j] = 1 if sign_bits[idx] == 0 else q - 1
    return c


def _high_bits(values: np.ndarray, params: SigParams) -> np.ndarray:
    """values = high*2^d_low + low with low centered in [-2^(d-1), 2^(d-1))."""
    d = params.d_low
    half = 1 << (d - 1)
    low = ((values + half) % (1 << d)) - half
    return (values - low) >> d


def _low_bits(values: np.ndarray, params: SigParams) -> np.ndarray:
    d = params.d_low
    half = 1 << (d - 1)
    return ((values + half) % (1 << d)) - half


def _challenge_seed(params: SigParams, w1: np.ndarray, message: bytes) -> bytes:
    return hashlib.shake_256(
        _CHALLENGE_DOMAIN + w1.astype(np.uint8).tobytes() + message
    ).digest(32)


def sig_keygen(params: SigParams, rng_seed: bytes) -> SigKeyPair:
    """A from a public seed; s1, s2 uniform small; t = A*s1 + s2."""
    if len(rng_seed) != 32:
        raise ValueError("rng_seed must be 32 bytes")
    ring = params.ring
    root = hashlib.shake_256(_KEYGEN_DOMAIN + rng_seed).digest(64)
    seed_a, noise_seed = root[:32], root[32:]
    s1 = np.stack(
        [
            _sample_signed_uniform(_SMALL_DOMAIN, noise_seed, i, params.eta, ring.n, ring.q)
            for i in range(params.l)
        ]
    )
    s2 = np.stack(
        [
            _sample_signed_uniform(
                _SMALL_DOMAIN, noise_seed, params.l + i, params.eta, ring.n, ring.q
            )
            for i in range(params.k)
        ]
    )
    a_hat = _matrix_ntt(seed_a, params)
    t = (intt_array(matvec_ntt(a_hat, ntt_array(s1, ring), ring), ring) + s2) % ring.q
    public = SigPublicKey(params, seed_a, PolyVec(ring, t))
    return SigKeyPair(params, public, PolyVec(ring, s1), PolyVec(ring, s2))


def sig_sign_with_attempts(
    kp: SigKeyPair, message: bytes, rng_seed: bytes
) -> tuple[Signature, int]:
    """Rejection-sampling loop; also reports how many attempts it took."""
    if len(rng_seed) != 32:
        raise ValueError("rng_seed must be 32 bytes")
    params, ring = kp.params, kp.params.ring
    q = ring.q
    a_hat = _matrix_ntt(kp.public.seed_a, params)
    s1_hat = ntt_array(kp.s1.data, ring)
    s2_hat = ntt_array(kp.s2.data, ring)
    bound = params.gamma1 - params.beta
    for attempt in range(1, MAX_SIGN_ITERATIONS + 1):
        y = np.stack(
            [
                _sample_signed_uniform(
                    _MASK_DOMAIN, rng_seed, attempt * params.l + j, params.gamma1 - 1, ring.n, q
                )
                for j in range(params.l)
            ]
        )
        w = intt_array(matvec_ntt(a_hat, ntt_array(y, ring), ring), ring)
        w1 = _high_bits(w, params)
        c_seed = _challenge_seed(params, w1, message)
        c = challenge_poly(params, c_seed)
        c_hat = ntt_array(c, ring)
        z = (y + intt_array(nttmul_array(c_hat, s1_hat, ring), ring)) % q
        if np.abs(centered(z, q)).max() >= bound:
            continue
        # Low-order check: the verifier recomputes A*z - c*t = w - c*s2 and
        # must land on the same high parts that were hashed.
        w_adj = (w - intt_array(nttmul_array(c_hat, s2_hat, ring), ring)) % q
        if not np.array_equal(_high_bits(w_adj, params), w1):
            continue
        return Signature(PolyVec(ring, z), c_seed, c), attempt
    raise RuntimeError(
        f"no accepted signature after {MAX_SIGN_ITERATIONS} attempts; "
        "parameters are misconfigured"
    )


def sig_sign(kp: SigKeyPair, message: bytes, rng_seed: bytes) -> Signature:
    return sig_sign_with_attempts(kp, message, rng_seed)[0]


def sig_verify(pk: SigPublicKey, message: bytes, sig: Signature) -> bool:
    """Accept iff z is short and the challenge seed re-derives; never raises
    on malformed content."""
    params, ring = pk.params, pk.params.ring
    q = ring.q
    try:
        z = sig.z.data
        if z.shape != (params.l, ring.n):
            return False
        if np.abs(centered(z, q)).max() >= params.gamma1 - params.beta:
            return False
        c = challenge_poly(params, sig.c_seed)
        a_hat = _matrix_ntt(pk.seed_a, params)
        az = matvec_ntt(a_hat, ntt_array(z, ring), ring)
        ct = nttmul_array(ntt_array(c, ring), pk.t_ntt(), ring)
        w_adj = intt_array((az - ct) % q, ring)
        return _challenge_seed(params, _high_bits(w_adj, params), message) == sig.c_seed
    except (ValueError, TypeError):
        return False
