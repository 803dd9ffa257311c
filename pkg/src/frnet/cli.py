"""Command-line entry point: ``frnet {train,eval,ablate,gradcheck,gatestats,dump-embeddings,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, data, gradcheck, metrics, plotting, synthetic, training
from .config import ConfigError, TrainConfig, load_config
from .refinement import VARIANT_FORMULAS, resolve_variant

log = logging.getLogger("frnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="single file split by --split")
    p.add_argument("--split", default="7:2:1", help="train:val:test ratios for --data (default 7:2:1)")
    p.add_argument("--train")
    p.add_argument("--val")
    p.add_argument("--test")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--numeric-fields", default="", help="comma-separated columns to log-discretize")


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--variant", help="fm | frnet | frnet-vec | 1..13")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--attn-dim", type=int)
    p.add_argument("--cie-hidden", help="comma-separated hidden widths, '' for none")
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--early-stop-patience", type=int)
    p.add_argument("--min-feature-count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single-threaded, reproducible metrics files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one model")
    _data_args(p)
    _config_args(p)

    p = sub.add_parser("ablate", help="train variants 1..13 and compare")
    _data_args(p)
    _config_args(p)
    p.add_argument("--variants", default="1-13", help="e.g. 1-13 or 1,7,11,13")
    p.add_argument("--seeds", default=None, help="comma-separated seeds; metrics are averaged")

    p = sub.add_parser("eval", help="AUC/Logloss of a checkpoint on a data file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", help="vocabulary dump (default: vocab.tsv next to the checkpoint)")
    p.add_argument("--delimiter", default=",")

    p = sub.add_parser("gradcheck", help="double-precision finite-difference suite")
    p.add_argument("--seeds", type=int, default=50)

    p = sub.add_parser("gatestats", help="distribution of the learned bit-level gate")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--vocab")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--sample-size", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("dump-embeddings", help="feature embeddings (or refined per-instance vectors) as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--data", help="also dump refined vectors for the instances of this file")
    p.add_argument("--vocab")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--limit", type=int, default=1000)

    p = sub.add_parser("synth", help="write a Frappe-shaped synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=synthetic.FRAPPE_ROWS)
    p.add_argument("--seed", type=int, default=0)
    return parser


# helpers -------------------------------------------------------------------

def _config_from_args(args) -> TrainConfig:
    cie_hidden = None
    if args.cie_hidden is not None:
        try:
            cie_hidden = tuple(int(x) for x in args.cie_hidden.split(",") if x.strip())
        except ValueError:
            raise ConfigError(f"bad --cie-hidden {args.cie_hidden!r}") from None
    return load_config(
        args.config, variant=args.variant, embed_dim=args.embed_dim, attention_dim=args.attn_dim,
        cie_hidden=cie_hidden, batch_size=args.batch, lr=args.lr, dropout=args.dropout,
        max_epochs=args.max_epochs, early_stop_patience=args.early_stop_patience,
        min_feature_count=args.min_feature_count, seed=args.seed, deterministic=args.deterministic)


def _load_data(args, config: TrainConfig):
    numeric = [c.strip() for c in args.numeric_fields.split(",") if c.strip()]
    if args.data is None and not (args.train and args.val and args.test):
        raise UsageError("need --data, or all of --train, --val and --test")
    try:
        ratios = data.parse_ratios(args.split)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return data.load_splits(data=args.data, ratios=ratios, train=args.train, val=args.val,
                            test=args.test, seed=config.seed, delimiter=args.delimiter,
                            min_feature_count=config.min_feature_count, numeric_fields=numeric)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _load_for_eval(args):
    model, train_cfg = checkpoint.load_model(args.checkpoint)
    vocab_path = Path(args.vocab) if args.vocab else Path(args.checkpoint).with_name("vocab.tsv")
    if not vocab_path.exists():
        raise data.DataError(f"{vocab_path}: vocabulary dump not found (pass --vocab)")
    vocab = data.Vocab.load(vocab_path)
    if vocab.num_features != model.spec.num_features:
        raise data.DataError(f"{vocab_path}: {vocab.num_features} features, checkpoint expects "
                             f"{model.spec.num_features}")
    numeric = [c for c in train_cfg.get("numeric_fields", "").split(",") if c]
    ds = data.encode(data.read_table(args.data, args.delimiter, numeric), vocab)
    return model, ds


# commands ------------------------------------------------------------------

def cmd_train(args) -> int:
    config = _config_from_args(args)
    out = _out_dir(args.out_dir)
    tr, va, te = _load_data(args, config)
    tr.vocab.dump(out / "vocab.tsv")
    result = training.train(tr, va, config, te, metrics_path=out / "metrics.csv")
    echo = dict(config.items())
    echo["numeric_fields"] = args.numeric_fields
    checkpoint.save_model(out / "model.frn", result.model, echo)
    _write_rows(out / "test_metrics.csv", ["variant", "best_epoch", "best_val_auc", "test_auc", "test_logloss"],
                [[config.variant_id, result.best_epoch, repr(result.best_val_auc),
                  repr(result.test_auc), repr(result.test_logloss)]])
    if not args.no_plots and result.history:
        plotting.learning_curves(result.history, out / "learning_curves.png")
    print(f"best epoch {result.best_epoch}  val AUC {result.best_val_auc}")
    print(f"test AUC {result.test_auc:.6f}  test Logloss {result.test_logloss:.6f}")
    return EXIT_OK


def _parse_variants(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(resolve_variant(part))
    return [resolve_variant(v) for v in out]


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    out = _out_dir(args.out_dir)
    try:
        variants = _parse_variants(args.variants)
        seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [config.seed]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    tr, va, te = _load_data(args, config)  # one encoding shared by every run
    tr.vocab.dump(out / "vocab.tsv")
    rows = []
    for v in variants:
        runs = []
        for seed in seeds:
            res = training.train(tr, va, config.replace(variant=str(v), seed=seed), te,
                                 metrics_path=out / f"metrics_v{v}_s{seed}.csv")
            runs.append((res.best_val_auc, res.test_auc, res.test_logloss))
            log.info("variant %d seed %d: test AUC %.5f logloss %.5f", v, seed, res.test_auc, res.test_logloss)
        val_auc, test_auc, test_ll = (float(x) for x in np.mean(runs, axis=0))
        rows.append({"variant": v, "formula": VARIANT_FORMULAS[v], "val_auc": val_auc,
                     "test_auc": test_auc, "test_logloss": test_ll})
    _write_rows(out / "ablation.csv", ["variant", "formula", "seeds", "val_auc", "test_auc", "test_logloss"],
                [[r["variant"], r["formula"], len(seeds), repr(r["val_auc"]), repr(r["test_auc"]),
                  repr(r["test_logloss"])] for r in rows])
    if not args.no_plots and rows:
        plotting.ablation_bars(rows, out / "ablation.png")
    for r in rows:
        print(f"#{r['variant']:<3d} {r['formula']:<24s} AUC {r['test_auc']:.5f}  Logloss {r['test_logloss']:.5f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, ds = _load_for_eval(args)
    auc, ll = training.evaluate(model, ds)
    print(f"AUC {auc:.6f}")
    print(f"Logloss {ll:.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(seeds=args.seeds)
    failed = False
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<20s} max rel-err {r.worst:.3e}")
        failed |= not r.ok
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_gatestats(args) -> int:
    model, ds = _load_for_eval(args)
    if model.variant not in (4, 7, 9, 11, 13):
        raise UsageError(f"variant {model.variant} has no bit-level gate")
    out = _out_dir(args.out_dir)
    rng = np.random.default_rng(args.seed)
    n = min(args.sample_size, len(ds))
    rows = np.sort(rng.choice(len(ds), n, replace=False))
    stats = metrics.gate_stats(model, ds.features[rows])
    stats.write_histogram(out / "gate_histogram.csv")
    _write_rows(out / "gate_summary.csv", ["instances", "values", "mean_selected", "mean_complement", "sum"],
                [[n, stats.count, repr(stats.mean), repr(stats.mean_complement),
                  repr(stats.mean + stats.mean_complement)]])
    if not args.no_plots:
        plotting.gate_histogram(stats, out / "gate_histogram.png")
    print(f"{stats.count} gate values from {n} instances")
    print(f"selected {stats.mean:.4f}  complementary {stats.mean_complement:.4f}")
    return EXIT_OK


def cmd_dump_embeddings(args) -> int:
    model, _ = checkpoint.load_model(args.checkpoint)
    out = _out_dir(args.out_dir)
    table = model.params["embed"].data
    d = table.shape[1]
    _write_rows(out / "embeddings.csv", ["feature", *[f"e{k}" for k in range(d)]],
                ([i, *map(repr, row.tolist())] for i, row in enumerate(table)))
    if args.data:
        model, ds = _load_for_eval(args)
        feats = ds.features[:args.limit]
        with training.nx.no_grad():
            refined = model.refined(feats).data
        _write_rows(out / "refined.csv", ["instance", "field", "feature", *[f"e{k}" for k in range(d)]],
                    ([i, j, int(feats[i, j]), *map(repr, refined[i, j].tolist())]
                     for i in range(len(feats)) for j in range(feats.shape[1])))
    return EXIT_OK


def cmd_synth(args) -> int:
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = synthetic.write_csv(path, synthetic.SyntheticConfig(rows=args.rows, seed=args.seed))
    print(f"wrote {n} rows to {path}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "ablate": cmd_ablate, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
    "gatestats": cmd_gatestats, "dump-embeddings": cmd_dump_embeddings, "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"frnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (data.DataError, checkpoint.CheckpointError, metrics.UndefinedMetricError, OSError) as exc:
        print(f"frnet: {exc}", file=sys.stderr)
        return EXIT_DATA
    except training.NumericError as exc:
        print(f"frnet: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
