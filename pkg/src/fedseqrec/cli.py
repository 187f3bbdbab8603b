"""Command-line experiment runner.

Subcommands: ``ingest``, ``synth``, ``embed-cache``, ``train``, ``attack``, ``eval``.
Every command that takes ``--config`` writes the effective (defaults-resolved)
configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .attacks import REPORT_HEADER, report_rows, run_attack_suite
from .embed_service import ProviderError, embed_items, make_provider
from .fedsim import evaluate, run_centralized, run_federated, zero_shot_rank
from .ingest import dataset_stats, load_raw_dataset, read_bundle, synth_dataset, write_bundle
from .seqmodel import load_checkpoint, save_checkpoint

log = logging.getLogger("fedseqrec")

TRAIN_MODES = {"central": "vanilla", "fed": "vanilla", "fellas": "fellas",
               "fellas-item-only": "fellas_item_only", "zero-shot": None}
METRIC_HEADER = ("round", "mode", "model", "hr10", "ndcg10", "hr20", "ndcg20", "loss")
ITEM_CACHE_NAME = "item_embeddings.txt"
CHECKPOINT_NAME = "model.ckpt"


class CommandError(Exception):
    """A user-facing failure: reported on stderr with exit status 2."""


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def print_stats(stats: dict, out=None) -> None:
    out = out or sys.stdout
    print(f"{'#Users':<14}{stats['users']:,}", file=out)
    print(f"{'#Items':<14}{stats['items']:,}", file=out)
    print(f"{'#Interactions':<14}{stats['interactions']:,}", file=out)
    print(f"{'Avg. length':<14}{stats['avg_length']:.2f}", file=out)
    print(f"{'Density':<14}{stats['density'] * 100:.2f}%", file=out)


# -- shared plumbing -----------------------------------------------------------

def _load_config(args) -> dict:
    try:
        cfg = config_mod.load(args.config, args.seed)
    except config_mod.ConfigError as exc:
        raise CommandError(f"invalid config: {exc}") from exc
    if getattr(args, "output_dir", None):
        cfg["output_dir"] = args.output_dir
    return cfg


def _dataset(cfg: dict):
    data = cfg["data"]
    if data["bundle"] is not None:
        if not Path(data["bundle"]).is_dir():
            raise CommandError(f"dataset bundle not found: {data['bundle']}")
        return read_bundle(data["bundle"])
    s = data["synth"]
    return synth_dataset(s["num_users"], s["num_items"], s["sharpness"], s["seed"],
                         num_groups=s["num_groups"], min_len=s["min_len"], max_len=s["max_len"],
                         popularity_skew=s["popularity_skew"], shared_words=s["shared_words"])


def _item_embeddings(cfg: dict, dataset):
    provider = make_provider(config_mod.provider_config(cfg))
    cache = cfg["provider"]["cache"] or str(Path(cfg["output_dir"]) / ITEM_CACHE_NAME)
    try:
        return provider, embed_items(dataset.catalog, provider, cache)
    except (ProviderError, ValueError) as exc:
        raise CommandError(f"item embeddings unavailable: {exc}") from exc


def _metric_rows(run_log, test, mode_name, model):
    rows = [tuple(r[k] for k in METRIC_HEADER) for r in run_log]
    rows.append(("test", mode_name, model, test.hr10, test.ndcg10, test.hr20, test.ndcg20, ""))
    return rows


# -- commands ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    for p in (args.interactions, args.catalog):
        if not Path(p).is_file():
            raise CommandError(f"file not found: {p}")
    try:
        ds = load_raw_dataset(args.interactions, args.catalog, args.max_len)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    write_bundle(ds, args.out)
    print_stats(dataset_stats(ds))
    return 0


def cmd_synth(args) -> int:
    ds = synth_dataset(args.users, args.items, args.sharpness, args.seed, num_groups=args.groups,
                       shared_words=args.shared_words)
    write_bundle(ds, args.out)
    print_stats(dataset_stats(ds))
    return 0


def cmd_embed_cache(args) -> int:
    cfg = _load_config(args)
    ds = _dataset(cfg)
    _, llm = _item_embeddings(cfg, ds)
    config_mod.write_effective(cfg, cfg["output_dir"])
    print(f"{llm.shape[0]} item embeddings of dim {llm.shape[1]}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg["output_dir"])
    ds = _dataset(cfg)
    mode = args.mode
    if mode == "zero-shot":
        provider, llm = _item_embeddings(cfg, ds)
        try:
            test = zero_shot_rank(ds, provider, llm)
        except ProviderError as exc:
            raise CommandError(f"zero-shot needs a provider that embeds text: {exc}") from exc
        write_csv(out / "metrics.csv", METRIC_HEADER, _metric_rows([], test, mode, "none"))
        config_mod.write_effective(cfg, out)
        print(f"test HR@10={test.hr10:.4f} NDCG@10={test.ndcg10:.4f}")
        return 0

    fed = config_mod.fed_config(cfg, TRAIN_MODES[mode])
    provider = llm = None
    if fed.uses_item_service:
        provider, llm = _item_embeddings(cfg, ds)
    if mode == "central":
        result = run_centralized(ds, fed, llm)
    else:
        result = run_federated(ds, fed, provider, llm)
    write_csv(out / "metrics.csv", METRIC_HEADER, _metric_rows(result.log, result.test, mode, fed.model))
    save_checkpoint(result.params, out / CHECKPOINT_NAME)
    config_mod.write_effective(cfg, out)
    print(f"best round {result.best_round}: test HR@10={result.test.hr10:.4f} "
          f"NDCG@10={result.test.ndcg10:.4f}")
    return 0


def _checkpoint(args, cfg):
    path = Path(args.checkpoint or Path(cfg["output_dir"]) / CHECKPOINT_NAME)
    if not path.is_file():
        raise CommandError(f"checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, OSError) as exc:
        raise CommandError(f"unreadable checkpoint {path}: {exc}") from exc


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    ds = _dataset(cfg)
    params = _checkpoint(args, cfg)
    _, llm = _item_embeddings(cfg, ds)
    fed = config_mod.fed_config(cfg, TRAIN_MODES[args.mode])
    if params.num_items != ds.num_items:
        raise CommandError("checkpoint does not match the dataset's catalog size")
    reports = run_attack_suite(ds, llm, params, fed, cfg["attack"]["grid"])
    rows = report_rows(reports, cfg["attack"]["average"], cfg["attack"]["matching"])
    path = write_csv(Path(cfg["output_dir"]) / "attack.csv", REPORT_HEADER, rows)
    config_mod.write_effective(cfg, cfg["output_dir"])
    for row in rows:
        if row[0] == "ALL":
            print(f"{row[1]:<6} 1/eps={row[2]:<7} F1={row[5]:.5f}")
    log.info("wrote %s", path)
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    ds = _dataset(cfg)
    params = _checkpoint(args, cfg)
    fed = config_mod.fed_config(cfg, TRAIN_MODES[args.mode])
    llm = _item_embeddings(cfg, ds)[1] if fed.uses_item_service else None
    res = evaluate(params, ds, args.split, llm)
    write_csv(Path(cfg["output_dir"]) / f"eval_{args.split}.csv", ("split", "hr10", "ndcg10", "hr20", "ndcg20"),
              [(args.split, res.hr10, res.ndcg10, res.hr20, res.ndcg20)])
    print(f"{args.split}: HR@10={res.hr10:.4f} NDCG@10={res.ndcg10:.4f} "
          f"HR@20={res.hr20:.4f} NDCG@20={res.ndcg20:.4f}")
    return 0


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedseqrec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw interactions into a dataset bundle")
    p.add_argument("--interactions", required=True, help="JSONL with user, item, timestamp")
    p.add_argument("--catalog", required=True, help="JSONL with item and title")
    p.add_argument("--out", required=True, help="bundle directory to write")
    p.add_argument("--max-len", type=int, default=50)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write a synthetic grouped Markov dataset bundle")
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--items", type=int, default=50)
    p.add_argument("--sharpness", type=float, default=3.0)
    p.add_argument("--groups", type=int, default=5)
    p.add_argument("--shared-words", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    def with_config(p):
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--output-dir", default=None, help="override the config output_dir")

    p = sub.add_parser("embed-cache", help="fetch and cache item embeddings")
    with_config(p)
    p.set_defaults(func=cmd_embed_cache)

    p = sub.add_parser("train", help="train a model and write metrics.csv and a checkpoint")
    with_config(p)
    p.add_argument("--mode", choices=list(TRAIN_MODES), default="fellas")
    p.set_defaults(func=cmd_train)

    model_modes = [m for m in TRAIN_MODES if m != "zero-shot"]
    p = sub.add_parser("attack", help="run SIA/SIAUI against a trained checkpoint")
    with_config(p)
    p.add_argument("--checkpoint", default=None, help="defaults to <output_dir>/" + CHECKPOINT_NAME)
    p.add_argument("--mode", choices=model_modes, default="fellas", help="mode the checkpoint was trained in")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the valid or test split")
    with_config(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--mode", choices=model_modes, default="fellas")
    p.add_argument("--split", choices=["valid", "test"], default="test")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
