"""Command-line entry point: ``mgbr <command> [flags]``.

Exit codes: 0 success, 2 usage or config, 3 data, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .config import MgbrConfig
from .data import Dataset, filter_and_reindex, generate_synthetic, parse_groups, split, write_groups
from .errors import ConfigError, DataError, MgbrError
from .evaluate import evaluate_model, write_ranks_csv
from .gcn import export_embeddings
from .gradcheck import TINY, run_gradcheck

GRADCHECK_TOLERANCE = 1e-3

log = logging.getLogger("mgbr")


def _ratio(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"split must look like 7:3:1, got {text!r}") from None
    if len(parts) != 3 or min(parts) <= 0:
        raise argparse.ArgumentTypeError(f"split needs three positive parts, got {text!r}")
    return parts


def _load_config(path: str | None, base: MgbrConfig | None = None) -> MgbrConfig:
    if path is None:
        return base or MgbrConfig()
    try:
        return MgbrConfig.load(path, base)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


def cmd_prepare(args) -> int:
    raw = parse_groups(args.input)
    core = filter_and_reindex(raw, args.min_interactions, initiator_only=args.initiator_only)
    train, val, test = split(core.groups, args.split, args.seed)
    dataset = Dataset(core.n_users, core.n_items, train, val, test)
    meta = {"source": str(args.input), "min_interactions": args.min_interactions,
            "initiator_only": args.initiator_only,
            "split": list(args.split), "seed": args.seed, "raw_groups": len(raw),
            "user_ids": core.user_ids, "item_ids": core.item_ids}
    dataset.save(args.out, meta)
    stats = dataset.stats()
    (Path(args.out) / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(stats))
    return 0


def cmd_synth(args) -> int:
    groups = generate_synthetic(args.users, args.items, args.groups, args.latent_dim, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_groups(out, groups)
    print(f"wrote {len(groups)} groups to {out}")
    return 0


def cmd_train(args) -> int:
    from .train import train

    config = _load_config(args.config)
    dataset = Dataset.load(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.dumps(), encoding="utf-8")
    with threadpool_limits(config.threads):
        result = train(dataset, config, log_path=out / "train_log.csv")
    save_checkpoint(out / "model.ckpt", result.model, dataset.train,
                    extra={"data": str(Path(args.data).resolve()), "best_epoch": result.best_epoch,
                           "epochs_run": len(result.history)})
    print(json.dumps({"checkpoint": str(out / "model.ckpt"), "best_epoch": result.best_epoch,
                      "epochs_run": len(result.history), "stopped_early": result.stopped_early}))
    return 0


def cmd_eval(args) -> int:
    dataset = Dataset.load(args.data)
    model = load_checkpoint(args.checkpoint, dataset)
    with threadpool_limits(model.config.threads):
        report, inst_a, inst_b = evaluate_model(model, dataset, args.split, args.neg_ratio, args.seed)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_ranks_csv(out / "ranks.csv", inst_a, inst_b)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    config = _load_config(args.config, TINY)
    errors = run_gradcheck(config, args.seed)
    name, worst = max(errors.items(), key=lambda kv: kv[1])
    verdict = "PASS" if worst <= GRADCHECK_TOLERANCE else "FAIL"
    print(f"max relative error {worst:.3e} ({name}) over {len(errors)} tensors: {verdict}")
    return 0 if verdict == "PASS" else 4


def cmd_export_embeddings(args) -> int:
    header, _ = read_checkpoint(args.checkpoint)
    data = args.data or header.get("extra", {}).get("data")
    if not data:
        raise DataError("checkpoint does not record its data directory; pass --data")
    model = load_checkpoint(args.checkpoint, Dataset.load(data))
    rows = export_embeddings(model.embeddings(), args.out)
    print(f"wrote {rows} embedding rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mgbr", description="Multi-task group-buying recommender.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="filter, reindex and split a raw deal-group log")
    s.add_argument("--input", required=True, help="raw log: initiator<TAB>item<TAB>p1,p2,...")
    s.add_argument("--min-interactions", type=int, default=5, help="drop users with fewer purchases (default 5)")
    s.add_argument("--initiator-only", action="store_true",
                   help="count only launched groups toward --min-interactions")
    s.add_argument("--split", type=_ratio, default=(7, 3, 1), help="train:val:test ratio (default 7:3:1)")
    s.add_argument("--seed", type=int, default=0, help="shuffle seed")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("synth", help="write a latent-factor synthetic deal-group log")
    s.add_argument("--users", type=int, default=200)
    s.add_argument("--items", type=int, default=60)
    s.add_argument("--groups", type=int, default=1500)
    s.add_argument("--latent-dim", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output groups file")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train on a prepared data directory")
    s.add_argument("--data", required=True, help="directory written by 'prepare'")
    s.add_argument("--config", help="key=value file overriding the defaults")
    s.add_argument("--out", required=True, help="directory for model.ckpt, train_log.csv, config.txt")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="rank held-out candidates and report MRR/NDCG")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--neg-ratio", type=int, choices=(9, 99), default=9, help="negatives per positive")
    s.add_argument("--seed", type=int, default=0, help="candidate sampling seed")
    s.add_argument("--split", choices=("val", "test"), default="test")
    s.add_argument("--out", help="directory for report.json and ranks.csv")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="compare tape gradients with finite differences on a tiny model")
    s.add_argument("--config", help="key=value overrides of the tiny config")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("export-embeddings", help="write initiator/participant/item embeddings as CSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", help="data directory (defaults to the one recorded at training time)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_embeddings)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MgbrError as exc:
        print(f"mgbr {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mgbr {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
