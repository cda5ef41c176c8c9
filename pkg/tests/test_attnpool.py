import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenocluster.attnpool import (TokenMaskPolicy, TokenStreamError,
                                   TokenStreamRecord,
                                   differential_entropy_spacing,
                                   entropy_weights, patient_note_vector,
                                   pool_chunk)

LN4 = math.log(4.0)


def make_stream_record(embedding, attention, pid="p1", note="n1", chunk=0, tokens=None):
    n = len(embedding)
    if tokens is None:
        tokens = [f"t{i}" for i in range(n)]
    return TokenStreamRecord(patient_id=pid, note_id=note, chunk_index=chunk,
                             tokens=tokens, embedding=np.asarray(embedding, dtype=float),
                             attention=np.asarray(attention, dtype=float))


def random_record(rng, n=None, d=4, pid="p1", note="n1", chunk=0):
    n = n or rng.integers(2, 9)
    emb = rng.normal(size=(n, d))
    att = rng.dirichlet(np.ones(n), size=n)
    return make_stream_record(emb, att, pid=pid, note=note, chunk=chunk)


class TestDifferentialEntropySpacing:
    def test_hand_example_four_points(self):
        # Each of the four window terms evaluates to ln 4.
        assert differential_entropy_spacing([0, 1, 2, 3]) == pytest.approx(LN4, abs=1e-12)

    def test_constant_sample_clamped(self):
        h = differential_entropy_spacing([0.25] * 4)
        assert h <= math.log(4 * 1e-12)
        assert math.isfinite(h)

    def test_scaling_identity(self):
        rng = np.random.default_rng(7)
        x = rng.random(50)
        for a in (2.0, 7.5, 0.3):
            assert differential_entropy_spacing(a * x) == pytest.approx(
                differential_entropy_spacing(x) + math.log(a), abs=1e-9)

    @given(st.floats(min_value=0.1, max_value=100.0),
           st.integers(min_value=2, max_value=200), st.integers())
    @settings(max_examples=40, deadline=None)
    def test_scaling_identity_property(self, a, n, seed):
        rng = np.random.default_rng(seed % (2 ** 32))
        x = rng.normal(size=n)
        if np.unique(x).size < n:
            return  # clamping voids the identity
        assert differential_entropy_spacing(a * x) == pytest.approx(
            differential_entropy_spacing(x) + math.log(a), abs=1e-9)

    def test_single_point_degenerate(self):
        h = differential_entropy_spacing([3.0])
        assert math.isfinite(h) and h < -20

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            differential_entropy_spacing([0.0, math.nan])


class TestEntropyWeights:
    def test_uniform_attention_gives_uniform_weights(self):
        n = 5
        ew = entropy_weights(np.full((n, n), 1.0 / n))
        assert ew.degenerate
        assert np.array_equal(ew.weights, np.full(n, 1.0 / n))

    def test_softmax_of_log_entropies(self):
        # Softmax of (ln 1, ln 2, ln 3) is (1/6, 2/6, 3/6); verified by
        # injecting the entropies through the softmax helper directly.
        from phenocluster.attnpool import _softmax_sorted
        w = _softmax_sorted(np.log(np.array([1.0, 2.0, 3.0])))
        assert w == pytest.approx([1 / 6, 2 / 6, 3 / 6], abs=1e-12)

    def test_near_uniform_row_has_largest_weight(self):
        # Hand evaluation: the one-hot-style rows repeat their off-diagonal
        # value, so their clamped spacing entropies are hugely negative,
        # while the spread row keeps a moderate estimate.
        att = np.array([
            [0.32, 0.33, 0.35],
            [0.001, 0.998, 0.001],
            [0.001, 0.001, 0.998],
        ])
        ew = entropy_weights(att)
        assert not ew.degenerate
        assert np.argmax(ew.weights) == 0
        assert ew.entropies[0] > ew.entropies[1]

    def test_weights_form_probability_vector(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(1, 12))
            ew = entropy_weights(rng.dirichlet(np.ones(n), size=n))
            assert (ew.weights >= 0).all()
            assert abs(ew.weights.sum() - 1.0) < 1e-9


class TestPoolChunk:
    def test_single_token(self):
        rec = make_stream_record([[1.5, -2.0]], [[1.0]])
        assert pool_chunk(rec).tolist() == [1.5, -2.0]

    def test_uniform_attention_equals_mean(self):
        rng = np.random.default_rng(3)
        n, d = 6, 5
        emb = rng.normal(size=(n, d))
        rec = make_stream_record(emb, np.full((n, n), 1.0 / n))
        assert pool_chunk(rec) == pytest.approx(emb.mean(axis=0), abs=1e-6)

    def test_against_dot_product_oracle(self):
        rng = np.random.default_rng(4)
        rec = random_record(rng, n=5)
        ew = entropy_weights(rec.attention)
        expected = np.zeros(rec.d_model)
        for i in range(5):
            expected += ew.weights[i] * rec.embedding[i]
        assert pool_chunk(rec) == pytest.approx(expected, abs=1e-12)

    def test_convex_hull_componentwise(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            rec = random_record(rng)
            pooled = pool_chunk(rec)
            assert (pooled >= rec.embedding.min(axis=0) - 1e-12).all()
            assert (pooled <= rec.embedding.max(axis=0) + 1e-12).all()

    def test_permutation_invariance_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            rec = random_record(rng)
            perm = rng.permutation(rec.n_tokens)
            permuted = make_stream_record(
                rec.embedding[perm], rec.attention[np.ix_(perm, perm)],
                tokens=[rec.tokens[i] for i in perm])
            assert np.array_equal(pool_chunk(rec), pool_chunk(permuted))

    def test_mask_policy_renormalizes(self):
        rng = np.random.default_rng(8)
        emb = rng.normal(size=(3, 2))
        att = rng.dirichlet(np.ones(3), size=3)
        rec = make_stream_record(emb, att, tokens=["[CLS]", "word", "[SEP]"])
        pooled = pool_chunk(rec, TokenMaskPolicy.exclude_tokens(["[CLS]", "[SEP]"]))
        assert pooled == pytest.approx(emb[1], abs=1e-12)

    def test_mask_removing_all_tokens_errors(self):
        rec = make_stream_record([[1.0]], [[1.0]], tokens=["[CLS]"])
        with pytest.raises(ValueError):
            pool_chunk(rec, TokenMaskPolicy.exclude_tokens(["[CLS]"]))


class TestPatientNoteVector:
    def test_one_chunk(self):
        rec = make_stream_record([[2.0, 4.0]], [[1.0]])
        pooled = patient_note_vector([rec])
        assert pooled.vector.tolist() == [2.0, 4.0]
        assert pooled.n_chunks == 1

    def test_two_chunk_mean(self):
        a = make_stream_record([[1.0, 0.0]], [[1.0]], chunk=0)
        b = make_stream_record([[0.0, 1.0]], [[1.0]], chunk=1)
        assert patient_note_vector([a, b]).vector == pytest.approx([0.5, 0.5])

    def test_matches_fixed_order_summation_oracle(self):
        rng = np.random.default_rng(9)
        records = [random_record(rng, note=f"n{i % 3}", chunk=i) for i in range(7)]
        pooled = patient_note_vector(records)
        ordered = sorted(records, key=lambda r: (r.note_id, r.chunk_index))
        total = np.zeros(records[0].d_model)
        for rec in ordered:
            total += pool_chunk(rec)
        assert pooled.vector == pytest.approx(total / 7, abs=1e-12)

    def test_mixed_patients_rejected(self):
        a = make_stream_record([[1.0]], [[1.0]], pid="p1")
        b = make_stream_record([[1.0]], [[1.0]], pid="p2")
        with pytest.raises(ValueError):
            patient_note_vector([a, b])


class TestRecordValidation:
    def test_row_sum_violation(self):
        with pytest.raises(TokenStreamError, match="row 1"):
            make_stream_record([[1.0, 0.0], [0.0, 1.0]],
                               [[0.5, 0.5], [0.45, 0.45]])

    def test_negative_attention(self):
        with pytest.raises(TokenStreamError):
            make_stream_record([[1.0]], [[-1.0]])

    def test_too_many_tokens(self):
        n = 513
        with pytest.raises(TokenStreamError):
            make_stream_record(np.zeros((n, 1)), np.full((n, n), 1.0 / n))
