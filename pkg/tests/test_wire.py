"""Quantized transport and the submission wire format."""

import numpy as np
import pytest

from pqfl.wire import (
    DEFAULT_QUANT_SCALE,
    SignedCipherUpdate,
    decode_gradient,
    dequantize,
    encode_gradient,
    keystream,
    quantize,
    xor_bytes,
)


class TestQuantization:
    def test_roundtrip_error_bounded(self, rng):
        v = rng.normal(0, 2, 64)
        back = dequantize(quantize(v), DEFAULT_QUANT_SCALE)
        assert np.abs(back - v).max() <= 0.5 / DEFAULT_QUANT_SCALE + 1e-12

    def test_saturation(self):
        q = quantize(np.array([1e6, -1e6]))
        assert q[0] == 32767 and q[1] == -32768

    def test_bytes_roundtrip(self, rng):
        v = rng.normal(0, 1, 33)
        data = encode_gradient(v)
        assert len(data) == 66
        assert np.array_equal(decode_gradient(data), dequantize(quantize(v)))

    def test_odd_payload_rejected(self):
        with pytest.raises(ValueError, match="even"):
            decode_gradient(b"\x01\x02\x03")


class TestKeystream:
    def test_deterministic_and_context_bound(self):
        k = b"\x07" * 32
        a = keystream(k, 1, 2, 64)
        assert a == keystream(k, 1, 2, 64)
        assert a != keystream(k, 1, 3, 64)
        assert a != keystream(k, 2, 2, 64)

    def test_xor_involution(self, rng):
        data = rng.integers(0, 256, 100, dtype=np.uint8).tobytes()
        ks = keystream(b"\x01" * 32, 0, 0, 100)
        assert xor_bytes(xor_bytes(data, ks), ks) == data

    def test_xor_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            xor_bytes(b"ab", b"abc")


class TestSignedCipherUpdate:
    def test_wire_roundtrip(self):
        sub = SignedCipherUpdate(3, 7, b"ct-bytes", b"payload!", b"sig")
        back = SignedCipherUpdate.from_bytes(sub.to_bytes())
        assert back == sub

    def test_wire_layout(self):
        sub = SignedCipherUpdate(1, 2, b"AB", b"C", b"")
        raw = sub.to_bytes()
        assert raw[0:4] == (1).to_bytes(4, "little")
        assert raw[4:8] == (2).to_bytes(4, "little")
        assert raw[8:12] == (2).to_bytes(4, "little") and raw[12:14] == b"AB"
        assert raw[14:18] == (1).to_bytes(4, "little") and raw[18:19] == b"C"
        assert raw[19:23] == (0).to_bytes(4, "little")

    def test_signed_span_excludes_signature(self):
        a = SignedCipherUpdate(1, 2, b"ct", b"pl", b"sigA")
        b = SignedCipherUpdate(1, 2, b"ct", b"pl", b"sigB")
        assert a.signed_span() == b.signed_span()

    def test_truncation_detected(self):
        raw = SignedCipherUpdate(1, 2, b"ct", b"payload", b"s").to_bytes()
        with pytest.raises(ValueError, match="truncated"):
            SignedCipherUpdate.from_bytes(raw[:-3])

    def test_trailing_garbage_detected(self):
        raw = SignedCipherUpdate(1, 2, b"ct", b"payload", b"s").to_bytes()
        with pytest.raises(ValueError, match="trailing"):
            SignedCipherUpdate.from_bytes(raw + b"xx")
