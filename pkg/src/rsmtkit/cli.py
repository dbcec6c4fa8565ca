"""Command-line front end: gen, label, train, predict, eval.

Every command is a pure function of its flags and input files; seeds are
mandatory wherever randomness is involved, so re-running a command
overwrites its outputs byte-identically.
"""

from __future__ import annotations

import argparse
import functools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from . import data as dataio
from .errors import RsmtError
from .evaluation import evaluate, render_report, report_csv
from .nets import build_hanan_grid
from .predictor import predict_steiner_batch, refine_prediction, route_selection
from .training import TrainConfig, train

T = TypeVar("T")
U = TypeVar("U")


def _parse_degrees(text: str) -> list[int]:
    """Accepts "3..8", "3,5,7" or a single integer."""
    degrees: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise argparse.ArgumentTypeError(f"empty degree range {part!r}")
            degrees.extend(range(lo_i, hi_i + 1))
        else:
            degrees.append(int(part))
    if any(d < 2 for d in degrees):
        raise argparse.ArgumentTypeError("degrees must be >= 2")
    return degrees


def _pmap(fn: Callable[[T], U], items: Sequence[T], jobs: int) -> list[U]:
    """Order-preserving map, optionally across worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(items) // (jobs * 8))
        return list(pool.map(fn, items, chunksize=chunk))


def _cmd_gen(args: argparse.Namespace) -> None:
    records = dataio.generate_dataset(args.degrees, args.per_degree, args.seed, args.coord_max)
    dataio.save_dataset(records, args.out)
    print(f"wrote {len(records)} nets to {args.out}")


def _cmd_label(args: argparse.Namespace) -> None:
    records = dataio.load_dataset(args.data)
    too_large = [r.net.id for r in records if r.net.degree > args.max_degree]
    if too_large:
        raise RsmtError(
            f"{len(too_large)} net(s) exceed max degree {args.max_degree}: {too_large[:5]}"
        )
    worker = functools.partial(dataio.label_record, max_degree=args.max_degree)
    labeled = _pmap(worker, records, args.jobs)
    dataio.save_dataset(labeled, args.out)
    print(f"labeled {len(labeled)} nets into {args.out}")


def _cmd_train(args: argparse.Namespace) -> None:
    records = dataio.load_dataset(args.data)
    labeled = [dataio.LabeledNet.from_record(r) for r in records]
    cfg = TrainConfig(
        seed=args.seed,
        learning_rate=args.lr,
        patience=args.patience,
        max_epochs=args.max_epochs,
        batch_size=args.batch_size,
        l2_lambda=args.l2_lambda,
    )
    params, history = train(cfg, labeled)
    best = min(history, key=lambda h: h.val_loss)
    dataio.save_checkpoint(
        params,
        args.out,
        metadata={
            "seed": args.seed,
            "epochs_run": len(history),
            "best_epoch": best.epoch,
            "best_val_loss": best.val_loss.hex(),
        },
    )
    if args.history:
        lines = ["epoch,train_loss,val_loss,val_accuracy"]
        lines += [
            f"{h.epoch},{h.train_loss!r},{h.val_loss!r},{h.val_accuracy!r}" for h in history
        ]
        with open(args.history, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    print(
        f"trained {len(history)} epoch(s); best val loss {best.val_loss:.6f} "
        f"at epoch {best.epoch}; checkpoint in {args.out}"
    )


def _predict_one(item):
    net, pred = item
    grid = build_hanan_grid(net)
    tree = route_selection(net, grid, pred.selected)
    result = refine_prediction(net, pred, tree)
    return {
        "id": net.id,
        "degree": net.degree,
        "selected": list(result.selected),
        "wl": result.tree.total_wirelength,
        "refined": result.triggered,
    }


def _cmd_predict(args: argparse.Namespace) -> None:
    params, _ = dataio.load_checkpoint(args.model)
    records = dataio.load_dataset(args.data)
    nets = [r.net for r in records]
    preds = predict_steiner_batch(params, nets, args.threshold)
    rows = _pmap(_predict_one, list(zip(nets, preds)), args.jobs)
    lines = [json.dumps(row, sort_keys=True) for row in rows]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"predicted {len(rows)} nets into {args.out}")


def _cmd_eval(args: argparse.Namespace) -> None:
    records = dataio.load_dataset(args.data)
    labeled = [dataio.LabeledNet.from_record(r) for r in records]
    if args.use_oracle_labels:
        report = _oracle_self_report(labeled)
    else:
        params, _ = dataio.load_checkpoint(args.model)
        report = evaluate(params, labeled, threshold=args.threshold)
    text = render_report(report)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report_csv(report))
    sys.stdout.write(text)


def _oracle_self_report(labeled):
    """Score the oracle labels against themselves (sanity path)."""
    from .evaluation import EvalRow, EvalReport
    import numpy as np

    rows = []
    for item in sorted(labeled, key=lambda it: it.net.id):
        if item.wl_opt is None:
            raise RsmtError(f"net {item.net.id!r} lacks wl_opt")
        grid = build_hanan_grid(item.net)
        selection = [int(i) for i in np.nonzero(item.labels == 1)[0]]
        tree = route_selection(item.net, grid, selection)
        rows.append(
            EvalRow(
                net_id=item.net.id,
                degree=item.net.degree,
                accuracy=1.0,
                wl=tree.total_wirelength,
                wl_opt=int(item.wl_opt),
                wl_increase=(tree.total_wirelength - item.wl_opt) / item.wl_opt,
                refined=False,
            )
        )
    subopt = [r for r in rows if r.wl > r.wl_opt]
    if subopt:
        raise RsmtError(f"oracle labels route above optimum on {len(subopt)} net(s)")
    degrees = sorted({r.degree for r in rows})
    return EvalReport(
        average_accuracy=1.0,
        suboptimal_rate=0.0,
        wl_increase=None,
        outlier_count=0,
        per_degree_accuracy={d: 1.0 for d in degrees},
        rows=tuple(rows),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsmtkit",
        description="Steiner-point prediction toolkit: data generation, exact labeling, "
        "training, inference and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    cores = os.cpu_count() or 1

    p = sub.add_parser("gen", help="generate random unlabeled nets")
    p.add_argument("--degrees", type=_parse_degrees, required=True, help='e.g. "3..8" or "3,5,7"')
    p.add_argument("--per-degree", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--coord-max", type=int, default=1_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("label", help="attach exact oracle labels")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-degree", type=int, default=9)
    p.add_argument("--jobs", type=int, default=cores)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("train", help="train a model on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="per-epoch CSV path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--l2-lambda", type=float, default=5e-4)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="predict, route and refine nets")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--jobs", type=int, default=cores)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="score a model against oracle labels")
    p.add_argument("--model", help="checkpoint path (unless --use-oracle-labels)")
    p.add_argument("--data", required=True, help="labeled dataset with wl_opt")
    p.add_argument("--report", help="text report path")
    p.add_argument("--csv", help="per-net CSV path")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--use-oracle-labels", action="store_true",
                   help="score the oracle labels against themselves")
    p.add_argument("--jobs", type=int, default=cores)
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.use_oracle_labels and not args.model:
        parser.error("eval requires --model unless --use-oracle-labels is set")
    try:
        args.func(args)
    except RsmtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
