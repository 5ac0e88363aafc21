"""Ring arithmetic: NTT vs schoolbook, samplers, serialization."""

import numpy as np
import pytest
from scipy import stats

from pqfl.ring import (
    DILITHIUM_RING,
    KYBER_RING,
    TOY_RING,
    Poly,
    RingParams,
    centered,
    ntt_forward,
    ntt_inverse,
    ntt_pointwise_mul,
    pack_bits,
    poly_add,
    poly_from_bytes,
    poly_mul_negacyclic,
    poly_sub,
    poly_to_bytes,
    sample_cbd,
    sample_uniform,
    unpack_bits,
)

from conftest import schoolbook_negacyclic

SEED = b"\x42" * 32


def random_poly(params, rng):
    return Poly(params, rng.integers(0, params.q, params.n))


class TestRingParams:
    def test_defaults_valid(self):
        assert KYBER_RING.n == 256 and KYBER_RING.q == 3329
        assert DILITHIUM_RING.full_ntt
        assert not KYBER_RING.full_ntt  # 3328 = 2^8 * 13: no 512th root exists

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError, match="power of two"):
            RingParams(n=6, q=17)

    def test_rejects_composite_modulus(self):
        with pytest.raises(ValueError, match="prime"):
            RingParams(n=4, q=15)

    def test_rejects_ntt_unfriendly_prime(self):
        with pytest.raises(ValueError, match="NTT"):
            RingParams(n=4, q=7)  # 6 is not divisible by 4


class TestPolyAdd:
    def test_modular_wraparound(self):
        a = Poly.from_list(TOY_RING, [1, 2, 3, 4])
        b = Poly.from_list(TOY_RING, [16, 16, 0, 0])
        assert poly_add(a, b) == Poly.from_list(TOY_RING, [0, 1, 3, 4])

    def test_zero_identity(self, rng):
        a = random_poly(KYBER_RING, rng)
        assert poly_add(a, Poly.zero(KYBER_RING)) == a

    def test_additive_inverse(self, rng):
        # a + (q - a) = 0, coefficientwise oracle
        for _ in range(50):
            a = random_poly(KYBER_RING, rng)
            neg = Poly(KYBER_RING, (KYBER_RING.q - a.coeffs) % KYBER_RING.q)
            expected = (a.coeffs + neg.coeffs) % KYBER_RING.q
            assert np.array_equal(expected, np.zeros(KYBER_RING.n))
            assert poly_add(a, neg) == Poly.zero(KYBER_RING)

    def test_params_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            poly_add(Poly.zero(TOY_RING), Poly.zero(KYBER_RING))


class TestPolyMul:
    def test_x3_times_x_wraps_negative(self):
        # X^3 * X = X^4 = -1 in Z_17[X]/(X^4+1)
        x3 = Poly.from_list(TOY_RING, [0, 0, 0, 1])
        x1 = Poly.from_list(TOY_RING, [0, 1, 0, 0])
        assert poly_mul_negacyclic(x3, x1) == Poly.from_list(TOY_RING, [16, 0, 0, 0])

    def test_multiplicative_identity(self, rng):
        for params in (TOY_RING, KYBER_RING, DILITHIUM_RING):
            a = random_poly(params, rng)
            assert poly_mul_negacyclic(a, Poly.one(params)) == a

    @pytest.mark.parametrize("params", [TOY_RING, KYBER_RING, DILITHIUM_RING])
    def test_matches_schoolbook(self, params, rng):
        trials = 100 if params.q < 1 << 16 else 20
        for _ in range(trials):
            a = random_poly(params, rng)
            b = random_poly(params, rng)
            want = schoolbook_negacyclic(a.coeffs, b.coeffs, params.q)
            assert np.array_equal(poly_mul_negacyclic(a, b).coeffs, want)

    def test_half_depth_ring_matches_schoolbook(self, rng):
        # q = 13 supports only the incomplete transform at n = 4
        params = RingParams(n=4, q=13)
        for _ in range(200):
            a = random_poly(params, rng)
            b = random_poly(params, rng)
            want = schoolbook_negacyclic(a.coeffs, b.coeffs, params.q)
            assert np.array_equal(poly_mul_negacyclic(a, b).coeffs, want)


class TestNtt:
    def test_zero_maps_to_zero(self):
        for params in (TOY_RING, KYBER_RING, DILITHIUM_RING):
            assert ntt_forward(Poly.zero(params)) == Poly.zero(params)
            assert ntt_inverse(Poly.zero(params)) == Poly.zero(params)

    @pytest.mark.parametrize("params", [TOY_RING, KYBER_RING, DILITHIUM_RING])
    def test_roundtrip(self, params, rng):
        for _ in range(200):
            a = random_poly(params, rng)
            assert ntt_inverse(ntt_forward(a)) == a

    def test_two_sided_inverse(self, rng):
        for _ in range(100):
            a_hat = random_poly(KYBER_RING, rng)
            assert ntt_forward(ntt_inverse(a_hat)) == a_hat

    def test_pointwise_equals_negacyclic(self, rng):
        for params in (KYBER_RING, DILITHIUM_RING):
            for _ in range(50):
                a = random_poly(params, rng)
                b = random_poly(params, rng)
                via_ntt = ntt_inverse(ntt_pointwise_mul(ntt_forward(a), ntt_forward(b)))
                assert via_ntt == poly_mul_negacyclic(a, b)

    def test_inverse_linearity(self, rng):
        for _ in range(50):
            a_hat = random_poly(KYBER_RING, rng)
            b_hat = random_poly(KYBER_RING, rng)
            lhs = ntt_inverse(poly_add(a_hat, b_hat))
            rhs = poly_add(ntt_inverse(a_hat), ntt_inverse(b_hat))
            assert lhs == rhs


class TestRingAxioms:
    @pytest.mark.parametrize("params", [TOY_RING, KYBER_RING])
    def test_mul_associative(self, params, rng):
        for _ in range(20):
            a, b, c = (random_poly(params, rng) for _ in range(3))
            assert (a * b) * c == a * (b * c)

    @pytest.mark.parametrize("params", [TOY_RING, KYBER_RING])
    def test_mul_distributes_over_add(self, params, rng):
        for _ in range(20):
            a, b, c = (random_poly(params, rng) for _ in range(3))
            assert a * (b + c) == a * b + a * c

    def test_axioms_large_modulus(self, rng):
        for _ in range(5):
            a, b, c = (random_poly(DILITHIUM_RING, rng) for _ in range(3))
            assert (a * b) * c == a * (b * c)
            assert a * (b + c) == a * b + a * c


class TestSampleUniform:
    def test_deterministic(self):
        assert sample_uniform(KYBER_RING, SEED, 3) == sample_uniform(KYBER_RING, SEED, 3)

    def test_nonce_changes_output(self):
        assert sample_uniform(KYBER_RING, SEED, 0) != sample_uniform(KYBER_RING, SEED, 1)

    def test_range(self):
        for nonce in range(8):
            p = sample_uniform(KYBER_RING, SEED, nonce)
            assert p.coeffs.min() >= 0 and p.coeffs.max() < KYBER_RING.q

    def test_chi_square_uniformity(self):
        # 10^5 coefficients over [0, q); significance 0.001
        need = 100_000
        coeffs = np.concatenate(
            [
                sample_uniform(KYBER_RING, SEED, nonce).coeffs
                for nonce in range((need + 255) // 256)
            ]
        )[:need]
        counts = np.bincount(coeffs, minlength=KYBER_RING.q)
        _, pvalue = stats.chisquare(counts)
        assert pvalue > 0.001

    def test_rejects_bad_seed(self):
        with pytest.raises(ValueError, match="32 bytes"):
            sample_uniform(KYBER_RING, b"short", 0)


class TestSampleCbd:
    @pytest.mark.parametrize("eta", [2, 3])
    def test_support(self, eta):
        for nonce in range(8):
            c = centered(sample_cbd(KYBER_RING, SEED, nonce, eta).coeffs, KYBER_RING.q)
            assert c.min() >= -eta and c.max() <= eta

    def test_mean_within_three_sigma(self):
        # Var of CBD(eta) is eta/2; mean of 10^5 samples should sit near 0.
        eta, total = 2, 100_000
        samples = np.concatenate(
            [
                centered(sample_cbd(KYBER_RING, SEED, nonce, eta).coeffs, KYBER_RING.q)
                for nonce in range((total + 255) // 256)
            ]
        )[:total]
        three_sigma = 3 * np.sqrt(eta / 2.0 / total)
        assert abs(samples.mean()) < three_sigma

    def test_deterministic(self):
        a = sample_cbd(KYBER_RING, SEED, 5, 3)
        b = sample_cbd(KYBER_RING, SEED, 5, 3)
        assert a == b

    def test_unsupported_eta(self):
        with pytest.raises(ValueError, match="eta"):
            sample_cbd(KYBER_RING, SEED, 0, 4)


class TestSerialization:
    def test_roundtrip(self, rng):
        a = random_poly(KYBER_RING, rng)
        assert poly_from_bytes(KYBER_RING, poly_to_bytes(a)) == a

    def test_sixteen_bit_little_endian_layout(self):
        a = Poly.from_list(TOY_RING, [1, 2, 3, 16])
        assert poly_to_bytes(a) == b"\x01\x00\x02\x00\x03\x00\x10\x00"

    def test_rejects_wide_modulus(self):
        with pytest.raises(ValueError, match="16-bit"):
            poly_to_bytes(Poly.zero(DILITHIUM_RING))

    def test_pack_bits_roundtrip(self, rng):
        for width in (1, 4, 10, 18, 24):
            vals = rng.integers(0, 1 << width, 300)
            assert np.array_equal(unpack_bits(pack_bits(vals, width), width, 300), vals)

    def test_poly_range_validation(self):
        with pytest.raises(ValueError, match="range"):
            Poly(TOY_RING, np.array([0, 0, 0, 17]))
