import json

import numpy as np
import pytest

from fedseqrec.ingest import (
    RawInteraction,
    build_sequences,
    dataset_stats,
    group_of,
    load_raw_dataset,
    parse_catalog,
    parse_interactions,
    read_bundle,
    synth_dataset,
    synth_markov,
    write_bundle,
)


def _write_raw(tmp_path, interactions, titles):
    ip, cp = tmp_path / "inter.jsonl", tmp_path / "cat.jsonl"
    ip.write_text("\n".join(json.dumps(r) for r in interactions) + "\n")
    cp.write_text("\n".join(json.dumps({"item": k, "title": t}) for k, t in titles.items()) + "\n")
    return ip, cp


class TestParsing:
    def test_malformed_lines_are_counted(self):
        res = parse_interactions(['{"user": "u", "item": "i", "timestamp": 3}', "not json", "",
                                  '{"user": "u"}'])
        assert len(res) == 1 and res.skipped == 2
        assert res.records[0] == RawInteraction("u", "i", 3)

    def test_catalog_blank_titles_skipped(self):
        titles, skipped = parse_catalog(['{"item": "a", "title": "A"}', '{"item": "b", "title": " "}'])
        assert titles == {"a": "A"} and skipped == 1


class TestBuildSequences:
    def test_sorted_truncated_and_filtered(self):
        recs = [RawInteraction("u1", f"i{k}", 10 - k) for k in range(6)]
        recs += [RawInteraction("u2", "i0", 1), RawInteraction("u2", "i1", 2)]  # too short
        seqs, umap, imap = build_sequences(recs, max_len=4)
        assert list(umap) == ["u1"]
        (s,) = seqs
        # chronological order is i5, i4, ..., i0; the newest four are kept
        assert [k for k, _ in sorted(imap.items(), key=lambda kv: kv[1])] == ["i3", "i2", "i1", "i0"]
        assert s.items == (0, 1, 2, 3)
        assert s.timestamps == (7, 8, 9, 10)

    def test_timestamp_ties_keep_input_order(self):
        recs = [RawInteraction("u", x, 1) for x in "abc"]
        seqs, _, imap = build_sequences(recs)
        assert seqs[0].items == (imap["a"], imap["b"], imap["c"])


class TestLoadRaw:
    def test_stats_and_split(self, tmp_path):
        inter = [{"user": u, "item": i, "timestamp": t}
                 for u in ("a", "b") for t, i in enumerate(["x", "y", "z", "w"])]
        inter.append({"user": "c", "item": "x", "timestamp": 0})
        ip, cp = _write_raw(tmp_path, inter, {"x": "X", "y": "Y", "z": "Z", "w": "W"})
        ds = load_raw_dataset(ip, cp)
        st = dataset_stats(ds)
        assert st == {"users": 2, "items": 4, "interactions": 8, "avg_length": 4.0, "density": 1.0}
        assert ds.users[0].train == (0, 1) and ds.users[0].test_target == 3

    def test_untitled_items_dropped(self, tmp_path):
        inter = [{"user": "a", "item": i, "timestamp": t} for t, i in enumerate("pqrs")]
        ip, cp = _write_raw(tmp_path, inter, {"p": "P", "q": "Q", "r": "R"})
        ds = load_raw_dataset(ip, cp)
        assert ds.num_items == 3 and ds.users[0].full == (0, 1, 2)

    def test_empty_input(self, tmp_path):
        ip, cp = _write_raw(tmp_path, [], {"x": "X"})
        with pytest.raises(ValueError):
            load_raw_dataset(ip, cp)


class TestSynthetic:
    def test_deterministic(self):
        a = synth_dataset(20, 30, 2.0, seed=3)
        b = synth_dataset(20, 30, 2.0, seed=3)
        assert a.users == b.users and a.catalog == b.catalog

    def test_groups_are_contiguous(self):
        g = group_of(50, 5)
        assert list(np.bincount(g)) == [10] * 5
        assert np.all(np.diff(g) >= 0)

    def test_sharpness_biases_transitions(self):
        _, seqs = synth_markov(300, 50, 4.0, seed=0)
        g = group_of(50, 5)
        pairs = [(a, b) for s in seqs for a, b in zip(s.items, s.items[1:])]
        same = np.mean([g[a] == g[b] for a, b in pairs])
        # exp(4) * 10 / (exp(4) * 10 + 40) ~= 0.93 same-group transitions
        assert same > 0.85

    def test_lengths_in_range(self):
        _, seqs = synth_markov(50, 20, 1.0, seed=1, min_len=4, max_len=6)
        assert all(4 <= len(s) <= 6 for s in seqs)

    def test_shared_words_prefix_titles(self):
        cat, _ = synth_markov(5, 10, 1.0, seed=0, shared_words=2)
        assert cat.titles[0].startswith("common-0 common-1 group-0")


class TestBundle:
    def test_round_trip_is_identical(self, tmp_path):
        ds = synth_dataset(15, 20, 2.0, seed=4)
        write_bundle(ds, tmp_path / "b1")
        back = read_bundle(tmp_path / "b1")
        assert back.users == ds.users and back.catalog.titles == ds.catalog.titles
        write_bundle(back, tmp_path / "b2")
        for name in ("catalog.jsonl", "sequences.jsonl", "stats.json"):
            assert (tmp_path / "b1" / name).read_bytes() == (tmp_path / "b2" / name).read_bytes()
