"""Arithmetic in the quotient ring Z_q[X]/(X^n + 1).

Polynomials are length-n int64 coefficient arrays with every coefficient
reduced to [0, q).  Multiplication runs through a negacyclic number-theoretic
transform.  Moduli with q = 1 (mod 2n) get the full transform down to scalar
slots; moduli with only q = 1 (mod n) -- notably 3329 at n = 256, where no
512th root of unity exists -- stop one butterfly level early, and the
transform domain holds n/2 degree-1 residues that are multiplied pairwise.
Either way intt(ntt(a) (*) ntt(b)) is the exact negacyclic product.
"""

from __future__ import annotations

import functools
import hashlib
from dataclasses import dataclass

import numpy as np

UNIFORM_DOMAIN = b"pqfl/uniform"
CBD_DOMAIN = b"pqfl/cbd"
SEED_BYTES = 32


def _is_prime(m: int) -> bool:
    if m < 2:
        return False
    d = 2
    while d * d <= m:
        if m % d == 0:
            return False
        d += 1 if d == 2 else 2
    return True


def _prime_factors(m: int) -> list[int]:
    factors = []
    d = 2
    while d * d <= m:
        if m % d == 0:
            factors.append(d)
            while m % d == 0:
                m //= d
        d += 1 if d == 2 else 2
    if m > 1:
        factors.append(m)
    return factors


def _bitrev(value: int, bits: int) -> int:
    out = 0
    for _ in range(bits):
        out = (out << 1) | (value & 1)
        value >>= 1
    return out


@dataclass(frozen=True)
class RingParams:
    """Ring dimension n (a power of two) and prime modulus q.

    q = 1 (mod n) is required so the negacyclic NTT exists; q = 1 (mod 2n)
    additionally enables the full-depth transform.
    """

    n: int
    q: int

    def __post_init__(self) -> None:
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 2, got {self.n}")
        if not _is_prime(self.q):
            raise ValueError(f"q must be prime, got {self.q}")
        if (self.q - 1) % self.n != 0:
            raise ValueError(
                f"q={self.q} does not support a negacyclic NTT at n={self.n} "
                "(need q = 1 mod n)"
            )

    @property
    def full_ntt(self) -> bool:
        return (self.q - 1) % (2 * self.n) == 0


KYBER_RING = RingParams(n=256, q=3329)
DILITHIUM_RING = RingParams(n=256, q=8380417)
TOY_RING = RingParams(n=4, q=17)


@dataclass(frozen=True)
class _NttTables:
    levels: int
    leaf_degree: int
    zetas: np.ndarray
    zetas_inv: np.ndarray
    leaf_roots: np.ndarray | None
    scale_inv: int


def _find_root_of_unity(q: int, order: int) -> int:
    """Element of exact multiplicative order `order` mod q."""
    for g in range(2, q):
        if all(pow(g, (q - 1) // p, q) != 1 for p in _prime_factors(q - 1)):
            break
    else:  # pragma: no cover - q prime guarantees a generator
        raise ValueError(f"no generator mod {q}")
    psi = pow(g, (q - 1) // order, q)
    assert pow(psi, order // 2, q) == q - 1
    return psi


@functools.lru_cache(maxsize=None)
def _ntt_tables(n: int, q: int) -> _NttTables:
    full = (q - 1) % (2 * n) == 0
    levels = n.bit_length() - 1 if full else n.bit_length() - 2
    half = 1 << levels
    psi = _find_root_of_unity(q, 2 * half)
    zetas = np.array([pow(psi, _bitrev(k, levels), q) for k in range(half)], dtype=np.int64)
    zetas_inv = np.array([pow(int(z), q - 2, q) for z in zetas], dtype=np.int64)
    leaf_roots = None
    if not full:
        # Transform-domain slot j holds a residue mod (X^2 - psi^(2*brv(j)+1)).
        leaf_roots = np.array(
            [pow(psi, 2 * _bitrev(j, levels) + 1, q) for j in range(half)], dtype=np.int64
        )
    return _NttTables(
        levels=levels,
        leaf_degree=n >> levels,
        zetas=zetas,
        zetas_inv=zetas_inv,
        leaf_roots=leaf_roots,
        scale_inv=pow(half, q - 2, q),
    )


def ntt_array(values: np.ndarray, params: RingParams) -> np.ndarray:
    """Forward transform over the last axis; leading axes are batched."""
    n, q = params.n, params.q
    tables = _ntt_tables(n, q)
    a = np.asarray(values, dtype=np.int64) % q
    shape = a.shape
    length = n >> 1
    while length >= tables.leaf_degree:
        nb = n // (2 * length)
        blocks = a.reshape(shape[:-1] + (nb, 2, length))
        z = tables.zetas[nb : 2 * nb, None]
        t = (z * blocks[..., 1, :]) % q
        lo = (blocks[..., 0, :] + t) % q
        hi = (blocks[..., 0, :] - t) % q
        a = np.stack([lo, hi], axis=-2).reshape(shape)
        length >>= 1
    return a


def intt_array(values: np.ndarray, params: RingParams) -> np.ndarray:
    """Inverse of ntt_array, including the 2^-levels scaling."""
    n, q = params.n, params.q
    tables = _ntt_tables(n, q)
    a = np.asarray(values, dtype=np.int64) % q
    shape = a.shape
    length = tables.leaf_degree
    while length <= n >> 1:
        nb = n // (2 * length)
        blocks = a.reshape(shape[:-1] + (nb, 2, length))
        zi = tables.zetas_inv[nb : 2 * nb, None]
        lo = (blocks[..., 0, :] + blocks[..., 1, :]) % q
        hi = (zi * (blocks[..., 0, :] - blocks[..., 1, :])) % q
        a = np.stack([lo, hi], axis=-2).reshape(shape)
        length <<= 1
    return (a * tables.scale_inv) % q


def nttmul_array(a: np.ndarray, b: np.ndarray, params: RingParams) -> np.ndarray:
    """Product of two transform-domain arrays (broadcasts leading axes)."""
    q = params.q
    tables = _ntt_tables(params.n, q)
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if tables.leaf_roots is None:
        return (a * b) % q
    a0, a1 = a[..., 0::2], a[..., 1::2]
    b0, b1 = b[..., 0::2], b[..., 1::2]
    r0 = (a0 * b0 + (a1 * b1) % q * tables.leaf_roots) % q
    r1 = (a0 * b1 + a1 * b0) % q
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.int64)
    out[..., 0::2] = r0
    out[..., 1::2] = r1
    return out


def mul_array(a: np.ndarray, b: np.ndarray, params: RingParams) -> np.ndarray:
    return intt_array(nttmul_array(ntt_array(a, params), ntt_array(b, params), params), params)


def centered(values: np.ndarray, q: int) -> np.ndarray:
    """Map residues in [0, q) to representatives in [-q/2, q/2)."""
    v = np.asarray(values, dtype=np.int64) % q
    return ((v + q // 2) % q) - q // 2


@dataclass(eq=False)
class Poly:
    """One ring element: n coefficients in [0, q)."""

    params: RingParams
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.int64)
        if c.shape != (self.params.n,):
            raise ValueError(f"expected {self.params.n} coefficients, got shape {c.shape}")
        if ((c < 0) | (c >= self.params.q)).any():
            raise ValueError("coefficients out of range [0, q)")
        self.coeffs = c

    @classmethod
    def zero(cls, params: RingParams) -> "Poly":
        return cls(params, np.zeros(params.n, dtype=np.int64))

    @classmethod
    def one(cls, params: RingParams) -> "Poly":
        c = np.zeros(params.n, dtype=np.int64)
        c[0] = 1
        return cls(params, c)

    @classmethod
    def from_list(cls, params: RingParams, values) -> "Poly":
        c = np.asarray(list(values), dtype=np.int64) % params.q
        return cls(params, c)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Poly):
            return NotImplemented
        return self.params == other.params and bool(np.array_equal(self.coeffs, other.coeffs))

    def __add__(self, other: "Poly") -> "Poly":
        return poly_add(self, other)

    def __sub__(self, other: "Poly") -> "Poly":
        return poly_sub(self, other)

    def __mul__(self, other: "Poly") -> "Poly":
        return poly_mul_negacyclic(self, other)

    def __neg__(self) -> "Poly":
        return Poly(self.params, (-self.coeffs) % self.params.q)


def _require_same_params(a: Poly, b: Poly) -> None:
    if a.params != b.params:
        raise ValueError(f"ring parameter mismatch: {a.params} vs {b.params}")


def poly_add(a: Poly, b: Poly) -> Poly:
    _require_same_params(a, b)
    return Poly(a.params, (a.coeffs + b.coeffs) % a.params.q)


def poly_sub(a: Poly, b: Poly) -> Poly:
    _require_same_params(a, b)
    return Poly(a.params, (a.coeffs - b.coeffs) % a.params.q)


def poly_mul_negacyclic(a: Poly, b: Poly) -> Poly:
    _require_same_params(a, b)
    return Poly(a.params, mul_array(a.coeffs, b.coeffs, a.params))


def ntt_forward(a: Poly) -> Poly:
    return Poly(a.params, ntt_array(a.coeffs, a.params))


def ntt_inverse(a_hat: Poly) -> Poly:
    return Poly(a_hat.params, intt_array(a_hat.coeffs, a_hat.params))


def ntt_pointwise_mul(a_hat: Poly, b_hat: Poly) -> Poly:
    _require_same_params(a_hat, b_hat)
    return Poly(a_hat.params, nttmul_array(a_hat.coeffs, b_hat.coeffs, a_hat.params))


@dataclass(eq=False)
class PolyVec:
    """Length-k vector of ring elements, stored as a (k, n) array."""

    params: RingParams
    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=np.int64)
        if d.ndim != 2 or d.shape[1] != self.params.n:
            raise ValueError(f"expected shape (k, {self.params.n}), got {d.shape}")
        if ((d < 0) | (d >= self.params.q)).any():
            raise ValueError("coefficients out of range [0, q)")
        self.data = d

    @property
    def k(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_polys(cls, polys: list[Poly]) -> "PolyVec":
        if not polys:
            raise ValueError("empty vector")
        return cls(polys[0].params, np.stack([p.coeffs for p in polys]))

    def entry(self, i: int) -> Poly:
        return Poly(self.params, self.data[i].copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PolyVec):
            return NotImplemented
        return self.params == other.params and bool(np.array_equal(self.data, other.data))


@dataclass(eq=False)
class PolyMat:
    """Square k-by-k matrix of ring elements, stored as a (k, k, n) array."""

    params: RingParams
    data: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.data, dtype=np.int64)
        if d.ndim != 3 or d.shape[0] != d.shape[1] or d.shape[2] != self.params.n:
            raise ValueError(f"expected shape (k, k, {self.params.n}), got {d.shape}")
        if ((d < 0) | (d >= self.params.q)).any():
            raise ValueError("coefficients out of range [0, q)")
        self.data = d

    @property
    def k(self) -> int:
        return self.data.shape[0]


def matvec_ntt(a_hat: np.ndarray, v_hat: np.ndarray, params: RingParams) -> np.ndarray:
    """(k, k, n) @ (k, n) -> (k, n), all operands in the transform domain."""
    prods = nttmul_array(a_hat, v_hat[None, :, :], params)
    return prods.sum(axis=1) % params.q


def _check_seed(seed: bytes) -> bytes:
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_BYTES:
        raise ValueError(f"seed must be {SEED_BYTES} bytes")
    return bytes(seed)


def sample_uniform(params: RingParams, seed: bytes, nonce: int) -> Poly:
    """Uniform ring element via rejection sampling from a seeded XOF stream."""
    seed = _check_seed(seed)
    q = params.q
    bits = q.bit_length()
    width = (bits + 7) // 8
    mask = (1 << bits) - 1
    xof = hashlib.shake_128(UNIFORM_DOMAIN + seed + nonce.to_bytes(4, "little"))
    # Expected acceptance rate is q / 2^bits > 1/2; 2x oversampling almost
    # always suffices on the first squeeze.
    total = width * (2 * params.n + 16)
    while True:
        stream = np.frombuffer(xof.digest(total), dtype=np.uint8)
        chunks = stream[: (len(stream) // width) * width].reshape(-1, width).astype(np.int64)
        vals = (chunks << (8 * np.arange(width, dtype=np.int64))).sum(axis=1) & mask
        accepted = vals[vals < q]
        if len(accepted) >= params.n:
            return Poly(params, accepted[: params.n])
        total *= 2


def sample_cbd(params: RingParams, seed: bytes, nonce: int, eta: int) -> Poly:
    """Centered binomial sample: each coefficient in [-eta, eta], stored mod q."""
    seed = _check_seed(seed)
    if eta not in (2, 3):
        raise ValueError(f"eta must be 2 or 3, got {eta}")
    nbits = 2 * eta * params.n
    stream = hashlib.shake_256(
        CBD_DOMAIN + bytes([eta]) + seed + nonce.to_bytes(4, "little")
    ).digest((nbits + 7) // 8)
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8), bitorder="little")[:nbits]
    halves = bits.reshape(params.n, 2, eta).sum(axis=2, dtype=np.int64)
    return Poly(params, (halves[:, 0] - halves[:, 1]) % params.q)


def poly_to_bytes(a: Poly) -> bytes:
    """16-bit little-endian per coefficient, in index order (requires q <= 2^16)."""
    if a.params.q > 1 << 16:
        raise ValueError(f"q={a.params.q} exceeds the 16-bit coefficient encoding")
    return a.coeffs.astype("<u2").tobytes()


def poly_from_bytes(params: RingParams, data: bytes) -> Poly:
    if len(data) != 2 * params.n:
        raise ValueError(f"expected {2 * params.n} bytes, got {len(data)}")
    c = np.frombuffer(data, dtype="<u2").astype(np.int64)
    if (c >= params.q).any():
        raise ValueError("encoded coefficient out of range")
    return Poly(params, c)


def pack_bits(values: np.ndarray, width: int) -> bytes:
    """Pack unsigned `width`-bit values into a little-endian bit stream."""
    v = np.asarray(values, dtype=np.int64)
    if ((v < 0) | (v >= (1 << width))).any():
        raise ValueError(f"value out of range for {width}-bit packing")
    bits = ((v[:, None] >> np.arange(width, dtype=np.int64)) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def unpack_bits(data: bytes, width: int, count: int) -> np.ndarray:
    need = (count * width + 7) // 8
    if len(data) < need:
        raise ValueError(f"expected at least {need} bytes, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    bits = bits[: count * width].reshape(count, width).astype(np.int64)
    return (bits << np.arange(width, dtype=np.int64)).sum(axis=1)
