import pytest

from fedseqrec.domain import (
    Catalog,
    InteractionSequence,
    SplitDataset,
    UserSplit,
    invert,
    remap_ids,
    split_leave_two,
)


class TestCatalog:
    def test_size(self):
        assert Catalog(("a", "b")).size == 2

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Catalog(())

    def test_rejects_blank_title(self):
        with pytest.raises(ValueError):
            Catalog(("a", "  "))

    def test_key_length_must_match(self):
        with pytest.raises(ValueError):
            Catalog(("a", "b"), ("k",))


class TestSequences:
    def test_timestamps_must_not_decrease(self):
        with pytest.raises(ValueError):
            InteractionSequence(0, (1, 2), (5, 4))

    def test_equal_timestamps_allowed(self):
        assert len(InteractionSequence(0, (1, 2), (5, 5))) == 2

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            InteractionSequence(0, ())


class TestRemap:
    def test_first_appearance_order(self):
        m = remap_ids(["x", "y", "x", "z"])
        assert m == {"x": 0, "y": 1, "z": 2}

    def test_invert_round_trip(self):
        m = remap_ids("cabca")
        assert invert(m) == ["c", "a", "b"]


class TestSplit:
    def test_leave_two(self):
        (s,) = split_leave_two([InteractionSequence(3, (1, 2, 3, 4, 5))])
        assert s == UserSplit(3, (1, 2, 3), 4, 5)
        assert s.full == (1, 2, 3, 4, 5)

    def test_minimum_length(self):
        (s,) = split_leave_two([InteractionSequence(0, (7, 8, 9))])
        assert s.train == (7,) and s.valid_target == 8 and s.test_target == 9

    def test_too_short(self):
        with pytest.raises(ValueError):
            split_leave_two([InteractionSequence(0, (1, 2))])

    def test_check_catches_out_of_range(self):
        ds = SplitDataset(Catalog(("a", "b")), (UserSplit(0, (0,), 1, 2),))
        with pytest.raises(ValueError):
            ds.check()
