"""Signatures: completeness, binding, bounds, rejection-loop behaviour."""

import numpy as np
import pytest

from pqfl.ring import PolyVec, centered
from pqfl.sig import (
    SigParams,
    Signature,
    SigPublicKey,
    _high_bits,
    _low_bits,
    challenge_poly,
    expand_matrix,
    sig_keygen,
    sig_sign,
    sig_sign_with_attempts,
    sig_verify,
)

from conftest import schoolbook_negacyclic

PARAMS = SigParams()


def seed_bytes(i):
    return i.to_bytes(4, "little") * 8


@pytest.fixture(scope="module")
def keypair():
    return sig_keygen(PARAMS, seed_bytes(7))


class TestParams:
    def test_defaults(self):
        assert PARAMS.gamma1 == 1 << 17
        assert PARAMS.beta == PARAMS.tau * PARAMS.eta

    def test_bounds_ordering_enforced(self):
        with pytest.raises(ValueError, match="gamma1 > beta"):
            SigParams(gamma1=10, beta=20)

    def test_rectangular_rejected(self):
        with pytest.raises(ValueError, match="square"):
            SigParams(k=4, l=3)


class TestKeygen:
    def test_deterministic(self):
        a = sig_keygen(PARAMS, seed_bytes(1))
        b = sig_keygen(PARAMS, seed_bytes(1))
        assert a.public.to_bytes() == b.public.to_bytes()
        assert np.array_equal(a.s1.data, b.s1.data)

    def test_secret_coefficients_small(self, keypair):
        for vec in (keypair.s1, keypair.s2):
            c = centered(vec.data, PARAMS.ring.q)
            assert c.min() >= -PARAMS.eta and c.max() <= PARAMS.eta

    def test_regeneration_oracle(self):
        # t - A*s1 must equal s2, recomputed by schoolbook matrix product.
        q = PARAMS.ring.q
        for trial in range(100):
            kp = sig_keygen(PARAMS, seed_bytes(1000 + trial))
            a_std = expand_matrix(kp.public.seed_a, PARAMS)
            s1_centered = centered(kp.s1.data, q)
            for i in range(PARAMS.k):
                acc = np.zeros(PARAMS.ring.n, dtype=np.int64)
                for j in range(PARAMS.l):
                    acc = (acc + schoolbook_negacyclic(a_std[i, j], s1_centered[j], q)) % q
                residue = (kp.public.t.data[i] - acc) % q
                assert np.array_equal(residue, kp.s2.data[i]), trial


class TestHighLowBits:
    def test_decomposition_roundtrip(self, rng):
        w = rng.integers(0, PARAMS.ring.q, 4096)
        hi = _high_bits(w, PARAMS)
        lo = _low_bits(w, PARAMS)
        assert np.array_equal(hi * (1 << PARAMS.d_low) + lo, w)
        half = 1 << (PARAMS.d_low - 1)
        assert lo.min() >= -half and lo.max() < half


class TestChallenge:
    def test_sparsity_and_signs(self):
        c = challenge_poly(PARAMS, b"\xaa" * 32)
        nonzero = c[c != 0]
        assert len(nonzero) == PARAMS.tau
        assert set(np.unique(centered(nonzero, PARAMS.ring.q))) <= {-1, 1}

    def test_deterministic(self):
        assert np.array_equal(challenge_poly(PARAMS, b"\x01" * 32), challenge_poly(PARAMS, b"\x01" * 32))


class TestSign:
    def test_deterministic(self, keypair):
        s1 = sig_sign(keypair, b"update", seed_bytes(9))
        s2 = sig_sign(keypair, b"update", seed_bytes(9))
        assert s1.to_bytes(PARAMS) == s2.to_bytes(PARAMS)

    def test_emitted_bound_and_restarts(self, keypair):
        # All emitted z within gamma1 - beta; mean restarts lands in [1, 20].
        bound = PARAMS.gamma1 - PARAMS.beta
        attempts = []
        for i in range(300):
            sig, n = sig_sign_with_attempts(keypair, b"m%d" % i, seed_bytes(i))
            attempts.append(n)
            assert np.abs(centered(sig.z.data, PARAMS.ring.q)).max() < bound
        mean = sum(attempts) / len(attempts)
        assert 1 <= mean <= 20, mean


class TestVerify:
    def test_completeness(self, keypair):
        for i in range(200):
            msg = b"gradient %d" % i
            assert sig_verify(keypair.public, msg, sig_sign(keypair, msg, seed_bytes(i)))

    def test_single_bit_message_flip_rejects(self, keypair):
        msg = bytearray(b"threat indicator batch 77")
        sig = sig_sign(keypair, bytes(msg), seed_bytes(3))
        for bit in range(0, 8 * len(msg), 13):
            tampered = bytearray(msg)
            tampered[bit // 8] ^= 1 << (bit % 8)
            assert not sig_verify(keypair.public, bytes(tampered), sig)

    def test_oversized_z_rejects(self, keypair):
        sig = sig_sign(keypair, b"m", seed_bytes(4))
        z = sig.z.data.copy()
        z[0, 0] = PARAMS.gamma1 - PARAMS.beta  # at the bound: must reject
        assert not sig_verify(keypair.public, b"m", Signature(PolyVec(PARAMS.ring, z), sig.c_seed, sig.c))

    def test_nonmalleability_smoke(self, keypair):
        # Perturbing any single coefficient of z by +1 must reject
        # (>= 999/1000 empirically; here a 300-trial slice).
        rng = np.random.default_rng(5)
        rejected = 0
        trials = 300
        for i in range(trials):
            msg = b"nm %d" % i
            sig = sig_sign(keypair, msg, seed_bytes(i + 10_000))
            z = sig.z.data.copy()
            pos = (int(rng.integers(0, PARAMS.l)), int(rng.integers(0, PARAMS.ring.n)))
            z[pos] = (z[pos] + 1) % PARAMS.ring.q
            if not sig_verify(keypair.public, msg, Signature(PolyVec(PARAMS.ring, z), sig.c_seed, sig.c)):
                rejected += 1
        assert rejected >= trials - 1

    def test_signature_bytes_roundtrip(self, keypair):
        sig = sig_sign(keypair, b"wire", seed_bytes(11))
        raw = sig.to_bytes(PARAMS)
        assert len(raw) == PARAMS.signature_bytes
        parsed = Signature.from_bytes(PARAMS, raw)
        assert sig_verify(keypair.public, b"wire", parsed)
        assert parsed.to_bytes(PARAMS) == raw

    def test_public_key_roundtrip(self, keypair):
        pk = SigPublicKey.from_bytes(PARAMS, keypair.public.to_bytes())
        sig = sig_sign(keypair, b"pk", seed_bytes(12))
        assert sig_verify(pk, b"pk", sig)

    def test_wrong_key_rejects(self, keypair):
        other = sig_keygen(PARAMS, seed_bytes(999))
        sig = sig_sign(keypair, b"m", seed_bytes(13))
        assert not sig_verify(other.public, b"m", sig)
