"""Clipping, robust rules, and the signature-gated pipeline."""

import numpy as np
import pytest

from pqfl.aggregation import (
    AggregationError,
    AggRule,
    ClipPolicy,
    adaptive_clip,
    apply_rule,
    clip_threshold,
    krum,
    momentum_normalize,
    trimmed_mean,
    verified_secure_aggregate,
)
from pqfl.fl import GradientUpdate
from pqfl.kem import KemParams, kem_encapsulate, kem_keygen
from pqfl.sig import SigParams, sig_keygen, sig_sign
from pqfl.wire import SignedCipherUpdate, encode_gradient, keystream, xor_bytes

from conftest import krum_scores_bruteforce, nearest_rank_percentile


def unit_update(client_id, norm, dim=4):
    delta = np.zeros(dim)
    delta[0] = norm
    return GradientUpdate.from_delta(client_id, 0, delta)


class TestAdaptiveClip:
    def test_norms_one_to_twenty_nearest_rank(self):
        # ceil(0.95 * 20) = 19: tau is the 19th smallest norm, i.e. 19.
        updates = [unit_update(i, float(i + 1)) for i in range(20)]
        policy = ClipPolicy.adaptive(95)
        assert clip_threshold([u.norm for u in updates], policy) == 19.0
        assert nearest_rank_percentile([u.norm for u in updates], 95) == 19.0
        clipped = adaptive_clip(updates, policy)
        for before, after in zip(updates, clipped):
            if before.norm > 19:
                assert np.isclose(after.norm, 19.0)
            else:
                assert after is before

    def test_equal_norms_untouched(self):
        updates = [unit_update(i, 3.0) for i in range(5)]
        assert adaptive_clip(updates, ClipPolicy.adaptive(95)) == updates

    def test_idempotent(self, rng):
        updates = [
            GradientUpdate.from_delta(i, 0, rng.normal(0, i + 1, 6)) for i in range(12)
        ]
        policy = ClipPolicy.adaptive(80)
        once = adaptive_clip(updates, policy)
        twice = adaptive_clip(once, policy)
        for a, b in zip(once, twice):
            assert np.array_equal(a.delta, b.delta)

    def test_post_clip_bound(self, rng):
        updates = [
            GradientUpdate.from_delta(i, 0, rng.normal(0, 5, 8)) for i in range(30)
        ]
        policy = ClipPolicy.adaptive(60)
        tau = clip_threshold([u.norm for u in updates], policy)
        for u in adaptive_clip(updates, policy):
            assert u.norm <= tau * (1 + 1e-12)

    def test_static_mode(self):
        updates = [unit_update(0, 10.0), unit_update(1, 0.5)]
        clipped = adaptive_clip(updates, ClipPolicy.static(2.0))
        assert np.isclose(clipped[0].norm, 2.0) and clipped[1].norm == 0.5

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            adaptive_clip([], ClipPolicy.adaptive(95))

    def test_percentile_validation(self):
        with pytest.raises(ValueError, match=r"\(0, 100\]"):
            ClipPolicy.adaptive(150)


class TestMomentum:
    def test_beta_zero_passthrough(self, rng):
        g = rng.normal(0, 1, 5)
        _, emitted = momentum_normalize(np.zeros(5), g, 0.0)
        assert np.array_equal(emitted, g)

    def test_formula(self):
        m, emitted = momentum_normalize(np.zeros(2), np.array([1.0, 1.0]), 0.9)
        assert np.allclose(m, [0.1, 0.1]) and np.allclose(emitted, [0.1, 0.1])

    def test_geometric_convergence(self):
        # After 100 steps of a constant aggregate g: ||m - g|| <= 1e-4 ||g||.
        g = np.array([2.0, -1.0, 0.5])
        m = np.zeros(3)
        for _ in range(100):
            m, _ = momentum_normalize(m, g, 0.9)
        assert np.linalg.norm(m - g) <= 1e-4 * np.linalg.norm(g)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            momentum_normalize(np.zeros(2), np.zeros(3), 0.5)


class TestTrimmedMean:
    def test_worked_example(self):
        values = [1.0, 2.0, 3.0, 4.0, 100.0]
        updates = [GradientUpdate.from_delta(i, 0, np.array([v])) for i, v in enumerate(values)]
        assert trimmed_mean(updates, 0.2) == np.array([3.0])

    def test_zero_fraction_is_plain_mean(self, rng):
        updates = [GradientUpdate.from_delta(i, 0, rng.normal(0, 1, 4)) for i in range(7)]
        want = np.mean([u.delta for u in updates], axis=0)
        assert np.allclose(trimmed_mean(updates, 0.0), want)

    def test_permutation_invariant(self, rng):
        updates = [GradientUpdate.from_delta(i, 0, rng.normal(0, 1, 3)) for i in range(9)]
        base = trimmed_mean(updates, 0.2)
        perm = [updates[i] for i in rng.permutation(9)]
        assert np.allclose(trimmed_mean(perm, 0.2), base)

    def test_overtrim_rejected(self):
        # floor(fraction*n) with fraction < 0.5 always leaves a value, so the
        # over-trim error surfaces as fraction validation.
        updates = [unit_update(i, 1.0) for i in range(2)]
        with pytest.raises(ValueError, match="fraction"):
            trimmed_mean(updates, 0.5)

    def test_floor_never_empties(self, rng):
        for n in range(1, 12):
            updates = [GradientUpdate.from_delta(i, 0, rng.normal(0, 1, 2)) for i in range(n)]
            out = trimmed_mean(updates, 0.49)
            assert np.isfinite(out).all()


class TestKrum:
    def test_outlier_never_chosen(self, rng):
        cluster = [GradientUpdate.from_delta(i, 0, rng.normal(0, 0.3, 4)) for i in range(4)]
        outlier = GradientUpdate.from_delta(4, 0, np.full(4, 100.0))
        updates = cluster + [outlier]
        chosen = krum(updates, f=1)
        assert chosen in cluster
        scores = krum_scores_bruteforce([u.delta for u in updates], 1)
        assert chosen is updates[int(np.argmin(scores))]

    def test_matches_bruteforce_scores(self, rng):
        for _ in range(20):
            updates = [
                GradientUpdate.from_delta(i, 0, rng.normal(0, 1, 5)) for i in range(8)
            ]
            scores = krum_scores_bruteforce([u.delta for u in updates], 2)
            assert krum(updates, 2) is updates[int(np.argmin(scores))]

    def test_tie_breaks_to_lowest_client_id(self):
        updates = [unit_update(cid, 1.0) for cid in (5, 3, 9, 4, 7)]
        assert krum(updates, 1).client_id == 3

    def test_cohort_too_small(self):
        updates = [unit_update(i, 1.0) for i in range(4)]
        with pytest.raises(ValueError, match="2f\\+3"):
            krum(updates, 1)

    def test_output_is_input_element(self, rng):
        updates = [GradientUpdate.from_delta(i, 0, rng.normal(0, 1, 3)) for i in range(7)]
        assert krum(updates, 1) in updates


@pytest.fixture(scope="module")
def keys():
    kem_kp = kem_keygen(KemParams(), b"\x21" * 32)
    sig_kps = {cid: sig_keygen(SigParams(), bytes([cid + 1]) * 32) for cid in range(5)}
    return kem_kp, sig_kps


class TestVerifiedSecureAggregate:
    KEM = KemParams()
    SIG = SigParams()

    def _submission(self, kem_kp, sig_kp, client_id, delta, round=1, tamper=False):
        plain = encode_gradient(delta)
        ct, secret = kem_encapsulate(kem_kp.public, bytes([client_id]) * 32)
        enc = xor_bytes(plain, keystream(secret.bytes, round, client_id, len(plain)))
        draft = SignedCipherUpdate(round, client_id, ct.to_bytes(), enc, b"")
        signature = sig_sign(sig_kp, draft.signed_span(), bytes([client_id + 1]) * 32)
        if tamper:
            enc = bytes([enc[0] ^ 0xFF]) + enc[1:]
        return SignedCipherUpdate(
            round, client_id, ct.to_bytes(), enc, signature.to_bytes(self.SIG)
        )

    def test_three_honest_clients_mean(self, keys):
        kem_kp, sig_kps = keys
        deltas = {c: np.ones(3) * (c + 1) for c in range(3)}
        subs = [self._submission(kem_kp, sig_kps[c], c, deltas[c]) for c in range(3)]
        out = verified_secure_aggregate(
            subs, {c: sig_kps[c].public for c in range(3)}, kem_kp, AggRule.mean()
        )
        assert out.contributors == [0, 1, 2] and out.excluded == []
        assert np.abs(out.vector - 2.0 * np.ones(3)).max() <= 2 / 1024

    def test_tampered_submission_excluded(self, keys):
        kem_kp, sig_kps = keys
        deltas = {c: np.full(3, float(c)) for c in range(3)}
        subs = [
            self._submission(kem_kp, sig_kps[c], c, deltas[c], tamper=(c == 1))
            for c in range(3)
        ]
        out = verified_secure_aggregate(
            subs, {c: sig_kps[c].public for c in range(3)}, kem_kp, AggRule.mean()
        )
        assert out.excluded == [1]
        assert out.contributors == [0, 2]
        # Gate soundness: result identical to aggregating without the offender.
        honest_only = verified_secure_aggregate(
            [s for s in subs if s.client_id != 1],
            {c: sig_kps[c].public for c in range(3)},
            kem_kp,
            AggRule.mean(),
        )
        assert np.array_equal(out.vector, honest_only.vector)

    def test_all_invalid_raises(self, keys):
        kem_kp, sig_kps = keys
        subs = [
            self._submission(kem_kp, sig_kps[c], c, np.ones(3), tamper=True)
            for c in range(3)
        ]
        with pytest.raises(AggregationError, match="no verified contributors"):
            verified_secure_aggregate(
                subs, {c: sig_kps[c].public for c in range(3)}, kem_kp, AggRule.mean()
            )

    def test_missing_key_is_an_error(self, keys):
        kem_kp, sig_kps = keys
        subs = [self._submission(kem_kp, sig_kps[0], 0, np.ones(3))]
        with pytest.raises(ValueError, match="no verification key"):
            verified_secure_aggregate(subs, {}, kem_kp, AggRule.mean())

    def test_sum_rule_scales_with_cohort(self, keys):
        kem_kp, sig_kps = keys
        subs = [self._submission(kem_kp, sig_kps[c], c, np.ones(2)) for c in range(3)]
        out = verified_secure_aggregate(
            subs, {c: sig_kps[c].public for c in range(3)}, kem_kp, AggRule("sum")
        )
        assert np.abs(out.vector - 3.0).max() <= 3 / 1024


class TestApplyRule:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown aggregation rule"):
            AggRule("median")

    def test_mean_sorted_by_client_id(self, rng):
        updates = [GradientUpdate.from_delta(i, 0, rng.normal(0, 1, 4)) for i in range(6)]
        shuffled = [updates[i] for i in rng.permutation(6)]
        assert np.array_equal(apply_rule(updates, AggRule.mean()),
                              apply_rule(shuffled, AggRule.mean()))
