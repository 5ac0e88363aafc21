"""Gradient transport: fixed-point quantization, keystream encryption, and
the signed-ciphertext wire format.

Each coordinate of a model delta is carried as a saturating signed 16-bit
fixed-point value (default 2^10 units per 1.0).  Bulk encryption XORs the
quantized payload with an XOF stream keyed by the KEM shared secret plus
round and sender, so each submission gets an independent keystream.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_QUANT_SCALE = 1 << 10
_STREAM_DOMAIN = b"pqfl/stream"
_INT16_MIN, _INT16_MAX = -(1 << 15), (1 << 15) - 1


def quantize(vector: np.ndarray, scale: int = DEFAULT_QUANT_SCALE) -> np.ndarray:
    """Round to signed 16-bit fixed point, saturating at the type bounds."""
    scaled = np.rint(np.asarray(vector, dtype=np.float64) * scale)
    return np.clip(scaled, _INT16_MIN, _INT16_MAX).astype(np.int16)


def dequantize(values: np.ndarray, scale: int = DEFAULT_QUANT_SCALE) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / scale


def encode_gradient(vector: np.ndarray, scale: int = DEFAULT_QUANT_SCALE) -> bytes:
    return quantize(vector, scale).astype("<i2").tobytes()


def decode_gradient(data: bytes, scale: int = DEFAULT_QUANT_SCALE) -> np.ndarray:
    if len(data) % 2:
        raise ValueError("quantized payload length must be even")
    return dequantize(np.frombuffer(data, dtype="<i2"), scale)


def keystream(secret: bytes, round: int, client_id: int, length: int) -> bytes:
    return hashlib.shake_256(
        _STREAM_DOMAIN + secret + struct.pack("<II", round, client_id)
    ).digest(length)


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands must have equal length")
    return np.bitwise_xor(
        np.frombuffer(a, dtype=np.uint8), np.frombuffer(b, dtype=np.uint8)
    ).tobytes()


@dataclass(frozen=True)
class SignedCipherUpdate:
    """One client's phase-B submission: KEM ciphertext, encrypted gradient
    payload, and a signature over everything that precedes it."""

    round: int
    client_id: int
    kem_ct: bytes
    payload: bytes
    signature: bytes

    def signed_span(self) -> bytes:
        return struct.pack("<II", self.round, self.client_id) + self.kem_ct + self.payload

    def to_bytes(self) -> bytes:
        return (
            struct.pack("<II", self.round, self.client_id)
            + struct.pack("<I", len(self.kem_ct)) + self.kem_ct
            + struct.pack("<I", len(self.payload)) + self.payload
            + struct.pack("<I", len(self.signature)) + self.signature
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedCipherUpdate":
        if len(data) < 12:
            raise ValueError("truncated submission header")
        round, client_id = struct.unpack_from("<II", data, 0)
        fields = []
        offset = 8
        for name in ("ciphertext", "payload", "signature"):
            if offset + 4 > len(data):
                raise ValueError(f"truncated {name} length")
            (length,) = struct.unpack_from("<I", data, offset)
            offset += 4
            if offset + length > len(data):
                raise ValueError(f"truncated {name} body")
            fields.append(data[offset : offset + length])
            offset += length
        if offset != len(data):
            raise ValueError(f"{len(data) - offset} trailing bytes after submission")
        return cls(round, client_id, *fields)
