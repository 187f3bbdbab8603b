import csv
import json

import pytest

from fedseqrec import config as config_mod
from fedseqrec.cli import main


def write_config(tmp_path, **overrides):
    cfg = {
        "data": {"synth": {"num_users": 30, "num_items": 25, "seed": 1}},
        "federation": {"rounds": 2, "clients_per_step": 16, "local_epochs": 2},
        "provider": {"dim": 16},
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_defaults_filled(self, tmp_path):
        cfg = config_mod.load(write_config(tmp_path))
        assert cfg["model"] == {"type": "sasrec", "dim": 8, "depth": 1, "max_len": 50}
        assert cfg["fellas"]["inv_epsilon"] == 0.01
        assert cfg["data"]["synth"]["sharpness"] == 3.0

    @pytest.mark.parametrize("raw,msg", [
        ({"data": {"synth": {}}, "extra": 1}, "unknown"),
        ({"data": {"synth": {"nope": 1}}}, "unknown"),
        ({"data": {}}, "exactly one"),
        ({"data": {"bundle": "x", "synth": {}}}, "exactly one"),
        ({"data": {"synth": {}}, "model": {"type": "lstm"}}, "model"),
        ({"data": {"synth": {}}, "model": 3}, "object"),
        ({"data": {"synth": {}}, "provider": {"mode": "file"}}, "cache"),
        ({"data": {"synth": {}}, "attack": {"grid": []}}, "grid"),
        ({"data": {"synth": {}}, "attack": {"matching": "fuzzy"}}, "matching"),
    ])
    def test_rejects(self, raw, msg):
        with pytest.raises(config_mod.ConfigError, match=msg):
            config_mod.resolve(raw)

    def test_seed_override(self, tmp_path):
        assert config_mod.load(write_config(tmp_path), seed=9)["seed"] == 9

    def test_invalid_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{")
        with pytest.raises(config_mod.ConfigError):
            config_mod.load(tmp_path / "c.json")


class TestIngest:
    def test_stats_and_rerun(self, tmp_path, capsys):
        inter = tmp_path / "i.jsonl"
        cat = tmp_path / "c.jsonl"
        inter.write_text("".join(json.dumps({"user": u, "item": i, "timestamp": t}) + "\n"
                                 for u in "ab" for t, i in enumerate("xyzw")))
        cat.write_text("".join(json.dumps({"item": i, "title": i.upper()}) + "\n" for i in "xyzw"))
        assert main(["ingest", "--interactions", str(inter), "--catalog", str(cat), "--out", str(tmp_path / "b1")]) == 0
        out = capsys.readouterr().out
        assert "#Users" in out and "100.00%" in out
        main(["ingest", "--interactions", str(inter), "--catalog", str(cat), "--out", str(tmp_path / "b2")])
        for f in ("catalog.jsonl", "sequences.jsonl", "stats.json"):
            assert (tmp_path / "b1" / f).read_bytes() == (tmp_path / "b2" / f).read_bytes()

    def test_missing_file(self, tmp_path, capsys):
        assert main(["ingest", "--interactions", "nope", "--catalog", "nope", "--out", str(tmp_path)]) == 2
        assert "not found" in capsys.readouterr().err

    def test_empty_input(self, tmp_path):
        (tmp_path / "i").write_text("")
        (tmp_path / "c").write_text("")
        assert main(["ingest", "--interactions", str(tmp_path / "i"), "--catalog", str(tmp_path / "c"),
                     "--out", str(tmp_path / "b")]) == 2


class TestTrain:
    @pytest.mark.parametrize("mode", ["central", "fed", "fellas", "fellas-item-only"])
    def test_modes(self, tmp_path, mode):
        cfg = write_config(tmp_path)
        assert main(["train", "--config", str(cfg), "--mode", mode]) == 0
        rows = read_csv(tmp_path / "out" / "metrics.csv")
        assert rows[0] == ["round", "mode", "model", "hr10", "ndcg10", "hr20", "ndcg20", "loss"]
        assert [r[0] for r in rows[1:]] == ["1", "2", "test"]
        assert (tmp_path / "out" / "model.ckpt").is_file()
        assert (tmp_path / "out" / "config.effective.json").is_file()

    def test_zero_shot(self, tmp_path):
        assert main(["train", "--config", str(write_config(tmp_path)), "--mode", "zero-shot"]) == 0
        rows = read_csv(tmp_path / "out" / "metrics.csv")
        assert rows[1][0] == "test" and rows[1][1] == "zero-shot"

    def test_effective_config_reruns_identically(self, tmp_path):
        main(["train", "--config", str(write_config(tmp_path)), "--mode", "fellas"])
        first = (tmp_path / "out" / "metrics.csv").read_bytes()
        eff = tmp_path / "out" / "config.effective.json"
        main(["train", "--config", str(eff), "--mode", "fellas", "--output-dir", str(tmp_path / "again")])
        assert (tmp_path / "again" / "metrics.csv").read_bytes() == first

    def test_seed_flag_changes_run(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train", "--config", str(cfg), "--mode", "fed", "--output-dir", str(tmp_path / "a")])
        main(["train", "--config", str(cfg), "--mode", "fed", "--seed", "5", "--output-dir", str(tmp_path / "b")])
        assert json.loads((tmp_path / "b" / "config.effective.json").read_text())["seed"] == 5
        assert (tmp_path / "a" / "model.ckpt").read_bytes() != (tmp_path / "b" / "model.ckpt").read_bytes()

    def test_invalid_config_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"data": {"synth": {}}, "federation": {"rounds": -1}}))
        assert main(["train", "--config", str(bad)]) == 2
        assert "invalid config" in capsys.readouterr().err

    def test_missing_bundle(self, tmp_path):
        cfg = write_config(tmp_path, data={"bundle": str(tmp_path / "missing")})
        assert main(["train", "--config", str(cfg)]) == 2

    def test_bundle_input(self, tmp_path):
        assert main(["synth", "--users", "20", "--items", "20", "--out", str(tmp_path / "b")]) == 0
        cfg = write_config(tmp_path, data={"bundle": str(tmp_path / "b")})
        assert main(["train", "--config", str(cfg), "--mode", "fed"]) == 0


class TestAttackAndEval:
    def test_attack_report(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train", "--config", str(cfg), "--mode", "fellas"])
        assert main(["attack", "--config", str(cfg)]) == 0
        rows = read_csv(tmp_path / "out" / "attack.csv")
        assert rows[0] == ["user", "attack", "inv_epsilon", "precision", "recall", "f1"]
        summary = [r for r in rows[1:] if r[0] == "ALL"]
        assert len(summary) == 8
        assert {(r[1], r[2]) for r in summary} == {(a, s) for a in ("SIA", "SIAUI")
                                                   for s in ("0.1", "0.01", "0.001", "random")}
        assert all(0.0 <= float(r[5]) <= 1.0 for r in rows[1:])

    def test_attack_missing_checkpoint(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["attack", "--config", str(cfg), "--checkpoint", str(tmp_path / "none.ckpt")]) == 2
        assert "checkpoint not found" in capsys.readouterr().err

    def test_eval_matches_training_test_row(self, tmp_path):
        cfg = write_config(tmp_path)
        main(["train", "--config", str(cfg), "--mode", "fellas-item-only"])
        assert main(["eval", "--config", str(cfg), "--mode", "fellas-item-only"]) == 0
        test_row = read_csv(tmp_path / "out" / "metrics.csv")[-1]
        eval_row = read_csv(tmp_path / "out" / "eval_test.csv")[1]
        assert eval_row[1:] == test_row[3:7]

    def test_embed_cache(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        assert main(["embed-cache", "--config", str(cfg)]) == 0
        assert (tmp_path / "out" / "item_embeddings.txt").read_text().startswith("dim=16 count=25")
        assert "25 item embeddings" in capsys.readouterr().out
