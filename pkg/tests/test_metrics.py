import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedseqrec.metrics import hr_ndcg, rank_target, summarize


def sort_rank(scores, target, exclude):
    """Oracle: position of target after a full stable sort, ties by item id."""
    order = sorted((i for i in range(len(scores)) if i not in exclude), key=lambda i: (-scores[i], i))
    return order.index(target) + 1


class TestRank:
    def test_best(self):
        assert rank_target(np.array([0.1, 0.9, 0.3]), 1) == 1

    def test_worst_of_751(self):
        s = np.arange(751, dtype=float)
        assert rank_target(s, 0) == 751

    def test_exclusion(self):
        assert rank_target(np.array([5.0, 4.0, 1.0]), 2, exclude={0, 1}) == 1

    def test_ties_lower_id_first(self):
        s = np.zeros(4)
        assert [rank_target(s, i) for i in range(4)] == [1, 2, 3, 4]

    def test_excluded_target(self):
        with pytest.raises(ValueError):
            rank_target(np.zeros(3), 1, exclude={1})

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-3, 3), min_size=2, max_size=30), st.data())
    def test_matches_sort_oracle(self, raw, data):
        scores = np.array(raw, dtype=float)
        target = data.draw(st.integers(0, len(raw) - 1))
        exclude = set(data.draw(st.lists(st.integers(0, len(raw) - 1), max_size=5))) - {target}
        assert rank_target(scores, target, exclude) == sort_rank(scores, target, exclude)


class TestHrNdcg:
    def test_rank_one(self):
        assert hr_ndcg([1, 1], 10) == (1.0, 1.0)

    def test_rank_two(self):
        hr, nd = hr_ndcg([2], 10)
        assert hr == 1.0
        np.testing.assert_allclose(nd, 1 / np.log2(3))
        np.testing.assert_allclose(nd, 0.6309, atol=1e-4)

    def test_rank_eleven(self):
        assert hr_ndcg([11], 10) == (0.0, 0.0)

    def test_empty(self):
        assert hr_ndcg([], 10) == (0.0, 0.0)

    def test_zero_rank_rejected(self):
        with pytest.raises(ValueError):
            hr_ndcg([0], 10)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(1, 40), min_size=1, max_size=50))
    def test_invariants(self, ranks):
        r = summarize(ranks)
        assert r.hr10 <= r.hr20 and r.ndcg10 <= r.ndcg20
        assert r.ndcg10 <= r.hr10 and r.ndcg20 <= r.hr20
        assert (r.ndcg10 == r.hr10) == all(k == 1 or k > 10 for k in ranks)
