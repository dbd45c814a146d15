"""Similarity-based representation matrix: build, normalize, export."""

import numpy as np
import pytest

from gssf.seq2seq import Annotations, ScoredDecode
from gssf.sbr import (SbRMatrix, build_sbr_matrix, load_csv, normalize_unit_interval,
                      save_csv, save_pgm, to_csv, to_pgm)
from gssf.similarity import AnswerScoring, SimilarityKind, UnscorableAnswer


def matrix(values, kind=SimilarityKind.GSSF, normalized=False):
    values = np.asarray(values, dtype=float)
    ids = [f"s{i}" for i in range(values.shape[0])]
    return SbRMatrix(values=values, ids=ids, kind=kind, normalized=normalized)


class TestNormalize:
    def test_hand_min_max(self):
        out = normalize_unit_interval(matrix([[0.0, -2.0], [-2.0, 0.0]]))
        np.testing.assert_array_equal(out.values, [[1.0, 0.0], [0.0, 1.0]])
        assert out.normalized and not out.degenerate

    def test_constant_matrix_degenerate(self):
        out = normalize_unit_interval(matrix([[3.0, 3.0], [3.0, 3.0]]))
        np.testing.assert_array_equal(out.values, np.zeros((2, 2)))
        assert out.degenerate

    def test_attained_unit_range_unchanged(self):
        vals = np.array([[0.0, 0.25], [0.75, 1.0]])
        out = normalize_unit_interval(matrix(vals))
        np.testing.assert_array_equal(out.values, vals)

    def test_order_preserved(self):
        rng = np.random.default_rng(0)
        vals = rng.normal(0, 5, (6, 6))
        out = normalize_unit_interval(matrix(vals))
        flat_in, flat_out = vals.ravel(), out.values.ravel()
        order_in = np.argsort(flat_in, kind="stable")
        order_out = np.argsort(flat_out, kind="stable")
        np.testing.assert_array_equal(order_in, order_out)
        assert out.values.min() == 0.0 and out.values.max() == 1.0

    def test_per_row_mode(self):
        vals = np.array([[0.0, -4.0], [-1.0, 0.0]])
        out = normalize_unit_interval(matrix(vals), mode="per_row")
        np.testing.assert_array_equal(out.values, [[1.0, 0.0], [0.0, 1.0]])

    def test_diagonal_is_maximum_when_off_diagonals_negative(self):
        vals = np.array([[0.0, -1.0, -3.0], [-1.0, 0.0, -2.0], [-3.0, -2.0, 0.0]])
        out = normalize_unit_interval(matrix(vals))
        np.testing.assert_array_equal(np.diag(out.values), np.ones(3))
        assert out.values.max() == 1.0

    def test_double_normalize_rejected(self):
        out = normalize_unit_interval(matrix([[0.0, -1.0], [-1.0, 0.0]]))
        with pytest.raises(ValueError):
            normalize_unit_interval(out)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            normalize_unit_interval(matrix([[0.0, np.inf], [0.0, 0.0]]))

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="mode"):
            normalize_unit_interval(matrix([[0.0, -1.0], [-1.0, 0.0]]), mode="rows")


class TestBuild:
    def test_gssf_diagonal_zero_and_symmetric(self, tiny_scored):
        params, _, answers = tiny_scored
        m = build_sbr_matrix(answers, SimilarityKind.GSSF, params)
        np.testing.assert_array_equal(np.diag(m.values), np.zeros(len(answers)))
        np.testing.assert_array_equal(m.values, m.values.T)

    def test_asymmetric_equals_f_and_averages_to_gssf(self, tiny_scored):
        params, _, answers = tiny_scored
        from gssf.similarity import conditional_score

        asym = build_sbr_matrix(answers, SimilarityKind.ASYMMETRIC, params)
        gssf_m = build_sbr_matrix(answers, SimilarityKind.GSSF, params)
        n = len(answers)
        pairwise = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                pairwise[i, j] = conditional_score(answers[i], answers[j], params)
        np.testing.assert_allclose(asym.values, pairwise, atol=1e-9)
        np.testing.assert_allclose((asym.values + asym.values.T) / 2.0, gssf_m.values,
                                   atol=1e-12)

    def test_min_max_bound_gssf(self, tiny_scored):
        params, _, answers = tiny_scored
        lo = build_sbr_matrix(answers, SimilarityKind.MIN, params).values
        mid = build_sbr_matrix(answers, SimilarityKind.GSSF, params).values
        hi = build_sbr_matrix(answers, SimilarityKind.MAX, params).values
        assert np.all(lo <= mid + 1e-12) and np.all(mid <= hi + 1e-12)

    def test_edit_kind_symmetric_integer_valued(self, tiny_scored):
        params, _, answers = tiny_scored
        m = build_sbr_matrix(answers, SimilarityKind.NEG_EDIT_DISTANCE, params)
        np.testing.assert_array_equal(m.values, m.values.T)
        assert np.all(m.values <= 0)
        assert np.all(m.values == np.round(m.values))

    def test_unscorable_sentinel_fill(self, tiny_scored):
        params, _, answers = tiny_scored
        empty = AnswerScoring(
            id="empty",
            annotations=Annotations(vectors=np.zeros((1, params.arch.annotation_dim)),
                                    source_len=1),
            decode=ScoredDecode(tokens=[], self_logprobs=np.array([])),
        )
        mixed = list(answers[:3]) + [empty]
        m = build_sbr_matrix(mixed, SimilarityKind.GSSF, params)
        finite_min = m.values[:3, :3].min()
        assert m.values[3, 3] == 0.0
        np.testing.assert_array_equal(m.values[3, :3], np.full(3, finite_min))
        np.testing.assert_array_equal(m.values[:3, 3], np.full(3, finite_min))

    def test_all_unscorable_raises(self, tiny_scored):
        params, _, _ = tiny_scored
        empties = [
            AnswerScoring(id=f"e{i}",
                          annotations=Annotations(np.zeros((1, params.arch.annotation_dim)), 1),
                          decode=ScoredDecode(tokens=[], self_logprobs=np.array([])))
            for i in range(2)
        ]
        with pytest.raises(UnscorableAnswer):
            build_sbr_matrix(empties, SimilarityKind.GSSF, params)

    def test_too_few_answers(self, tiny_scored):
        params, _, answers = tiny_scored
        with pytest.raises(ValueError):
            build_sbr_matrix(answers[:1], SimilarityKind.GSSF, params)


class TestExport:
    def test_csv_round_trip(self, tmp_path):
        m = matrix(np.array([[0.0, -1.5], [-1.5, 0.0]]))
        path = tmp_path / "m.csv"
        save_csv(path, m)
        ids, values = load_csv(path)
        assert ids == m.ids
        np.testing.assert_array_equal(values, m.values)

    def test_csv_rejects_commas_in_ids(self):
        m = SbRMatrix(values=np.zeros((2, 2)), ids=["a,b", "c"], kind=SimilarityKind.GSSF)
        with pytest.raises(ValueError):
            to_csv(m)

    def test_pgm_format(self, tmp_path):
        norm = normalize_unit_interval(matrix([[0.0, -2.0], [-4.0, 0.0]]))
        blob = to_pgm(norm)
        assert blob.startswith(b"P5\n2 2\n255\n")
        pixels = np.frombuffer(blob[len(b"P5\n2 2\n255\n"):], dtype=np.uint8).reshape(2, 2)
        np.testing.assert_array_equal(pixels, np.rint(255 * norm.values).astype(np.uint8))
        path = tmp_path / "m.pgm"
        save_pgm(path, norm)
        assert path.read_bytes() == blob

    def test_pgm_requires_normalized(self):
        with pytest.raises(ValueError):
            to_pgm(matrix([[0.0, -2.0], [-2.0, 0.0]]))
