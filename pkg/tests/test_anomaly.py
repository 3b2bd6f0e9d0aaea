"""User ranking in component space and cross-dataset score correlation."""

import numpy as np
import pytest

from triscope import (
    DegenerateInputError,
    FeatureTensor,
    InvalidInputError,
    hooi,
    preprocess,
    ranking_correlation,
    tensor3,
    user_scores,
)
from triscope.anomaly import AnomalyRanking
from triscope.tucker import TuckerModel


def model_with_factor_a(a):
    a = np.asarray(a, dtype=float)
    p = a.shape[1]
    core = np.zeros((p, 1, 1))
    return TuckerModel(core, a, np.ones((1, 1)), np.ones((1, 1)), 0.0)


class TestUserScores:
    def test_single_user_degenerate_score(self):
        r = user_scores(model_with_factor_a([[0.3, 0.4]]), ["only"])
        assert r.user_ids == ("only",)
        np.testing.assert_allclose(r.scores, [1.0])

    def test_unit_basis_rows_tie(self):
        r = user_scores(model_with_factor_a(np.eye(3)), ["charlie", "alice", "bob"])
        np.testing.assert_allclose(r.distances, [1.0, 1.0, 1.0])
        np.testing.assert_allclose(r.scores, [1.0, 1.0, 1.0])
        assert r.user_ids == ("alice", "bob", "charlie")

    def test_distances_are_row_norms(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(6, 3))
        r = user_scores(model_with_factor_a(a), [f"u{i}" for i in range(6)])
        by_user = dict(zip(r.user_ids, r.distances))
        for i in range(6):
            np.testing.assert_allclose(by_user[f"u{i}"], np.linalg.norm(a[i]), rtol=1e-12)

    def test_first_k_components_option(self):
        a = np.array([[3.0, 0.0, 100.0], [0.0, 4.0, 0.0]])
        r = user_scores(model_with_factor_a(a), ["x", "y"], n_components=2)
        by_user = dict(zip(r.user_ids, r.distances))
        np.testing.assert_allclose(by_user["x"], 3.0)
        np.testing.assert_allclose(by_user["y"], 4.0)

    def test_order_invariant_under_rescaling(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(8, 2))
        ids = [f"u{i}" for i in range(8)]
        base = user_scores(model_with_factor_a(a), ids)
        scaled = user_scores(model_with_factor_a(a * 37.5), ids)
        assert base.user_ids == scaled.user_ids

    def test_planted_inflated_user_ranks_first(self):
        """A user whose feature slab is grossly inflated over 50 hours tops
        the ranking after preprocessing + decomposition."""
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(12, 10, 120))
        raw[7, :, 30:80] += 10.0
        ids = tuple(f"u{i:02d}" for i in range(12))
        ft = preprocess(FeatureTensor(raw, ids))
        model = hooi(tensor3(ft.tensor), 3, 2, 2)
        r = user_scores(model, ids)
        assert r.user_ids[0] == "u07"

    def test_id_count_mismatch(self):
        with pytest.raises(InvalidInputError):
            user_scores(model_with_factor_a(np.eye(3)), ["a", "b"])


class TestRankingCorrelation:
    def mk(self, ids, scores):
        scores = np.asarray(scores, dtype=float)
        order = np.argsort(-scores, kind="stable")
        return AnomalyRanking(
            tuple(np.asarray(ids, dtype=object)[order]),
            scores[order].copy(),
            scores[order].copy(),
        )

    def test_identical_rankings(self):
        r = self.mk(list("abcde"), [0.1, 0.3, 0.5, 0.7, 0.9])
        np.testing.assert_allclose(ranking_correlation(r, r), 1.0)

    def test_reversed_scores_anticorrelate(self):
        ids = list("abcde")
        s = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
        np.testing.assert_allclose(
            ranking_correlation(self.mk(ids, s), self.mk(ids, s.max() - s)), -1.0, atol=1e-12
        )

    def test_hand_computed_pearson(self):
        ids = list("abcde")
        s1 = np.array([0.0, 0.2, 0.4, 0.8, 1.0])
        s2 = np.array([0.1, 0.1, 0.5, 0.6, 1.0])
        d1 = s1 - s1.mean()
        d2 = s2 - s2.mean()
        expected = (d1 * d2).sum() / np.sqrt((d1**2).sum() * (d2**2).sum())
        np.testing.assert_allclose(
            ranking_correlation(self.mk(ids, s1), self.mk(ids, s2)), expected, rtol=1e-12
        )

    def test_symmetric_and_affine_invariant(self):
        rng = np.random.default_rng(3)
        ids = [f"u{i}" for i in range(10)]
        s1 = rng.random(10)
        s2 = rng.random(10)
        a = ranking_correlation(self.mk(ids, s1), self.mk(ids, s2))
        b = ranking_correlation(self.mk(ids, s2), self.mk(ids, s1))
        np.testing.assert_allclose(a, b, rtol=1e-12)
        c = ranking_correlation(self.mk(ids, 3.0 * s1 + 2.0), self.mk(ids, s2))
        np.testing.assert_allclose(a, c, rtol=1e-10)

    def test_uses_common_users_only(self):
        r1 = self.mk(["a", "b", "c", "zz"], [0.1, 0.5, 0.9, 0.3])
        r2 = self.mk(["a", "b", "c", "yy"], [0.2, 0.6, 1.0, 0.8])
        r3 = self.mk(["a", "b", "c"], [0.2, 0.6, 1.0])
        np.testing.assert_allclose(
            ranking_correlation(r1, r2), ranking_correlation(r1, r3), rtol=1e-12
        )

    def test_too_few_common_users(self):
        with pytest.raises(DegenerateInputError):
            ranking_correlation(self.mk(["a", "b"], [0.1, 0.9]), self.mk(["a", "x"], [0.2, 0.8]))

    def test_zero_variance_rejected(self):
        ids = ["a", "b", "c"]
        with pytest.raises(DegenerateInputError):
            ranking_correlation(self.mk(ids, [0.5, 0.5, 0.5]), self.mk(ids, [0.1, 0.2, 0.3]))
