"""Prediction quality metrics: confusion accuracy, suboptimality, outliers.

Accuracy per net is TP / (TP + FP + FN) over Steiner-node predictions
(true negatives are ignored; a net with no true or predicted Steiner nodes
scores 1). A mispredicted net whose routed wirelength still equals the
optimum counts as fully correct, since such extra picks sit on an optimal
path and cost nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import LabeledNet
from .errors import MissingOracle, ShapeError
from .gat import ModelParams
from .nets import build_hanan_grid
from .predictor import (
    DEFAULT_THRESHOLD,
    RefinementResult,
    route_selection,
    predict_steiner_batch,
    refine_prediction,
)

EVAL_BATCH_NETS = 256


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int


def confusion_counts(selected: Iterable[int], labels: np.ndarray) -> ConfusionCounts:
    """Compare a selected index set against a per-node binary label vector."""
    labels = np.asarray(labels)
    chosen = set(int(i) for i in selected)
    if chosen and (min(chosen) < 0 or max(chosen) >= labels.shape[0]):
        raise ShapeError(f"selected index out of range for {labels.shape[0]} labels")
    positives = {int(i) for i in np.nonzero(labels == 1)[0]}
    tp = len(chosen & positives)
    return ConfusionCounts(tp=tp, fp=len(chosen) - tp, fn=len(positives) - tp)


def net_accuracy(counts: ConfusionCounts) -> float:
    """1 when there is nothing to predict and nothing was predicted."""
    total = counts.tp + counts.fp + counts.fn
    if total == 0:
        return 1.0
    return counts.tp / total


def outlier_count(increases: Sequence[float]) -> int:
    """Values above Q3 + 1.5 * IQR.

    Quartiles use linear interpolation between order statistics
    (numpy's default "linear" method). Only the high side is counted;
    wirelength never comes in under the optimum.
    """
    if len(increases) == 0:
        return 0
    arr = np.asarray(increases, dtype=np.float64)
    q1, q3 = np.quantile(arr, [0.25, 0.75], method="linear")
    return int(np.sum(arr > q3 + 1.5 * (q3 - q1)))


@dataclass(frozen=True)
class WlIncreaseStats:
    """Relative wirelength increase over suboptimal nets only."""

    mean: float
    minimum: float
    maximum: float
    q1: float
    median: float
    q3: float


@dataclass(frozen=True)
class EvalRow:
    net_id: str
    degree: int
    accuracy: float
    wl: int
    wl_opt: int
    wl_increase: float
    refined: bool


@dataclass(frozen=True)
class EvalReport:
    average_accuracy: float
    suboptimal_rate: float
    wl_increase: WlIncreaseStats | None  # None when no net is suboptimal
    outlier_count: int
    per_degree_accuracy: dict[int, float]
    rows: tuple[EvalRow, ...]


def evaluate(
    params: ModelParams,
    dataset: Sequence[LabeledNet],
    threshold: float = DEFAULT_THRESHOLD,
) -> EvalReport:
    """Predict, route and refine every net, then score against the oracle.

    Every entry must carry labels and the oracle wirelength. Nets are
    processed and reported in net-id order, so the report is a pure
    function of (params, dataset).
    """
    missing = [item.net.id for item in dataset if item.wl_opt is None]
    if missing:
        raise MissingOracle(f"{len(missing)} net(s) lack oracle wirelength, e.g. {missing[0]!r}")
    items = sorted(dataset, key=lambda item: item.net.id)

    rows: list[EvalRow] = []
    for start in range(0, len(items), EVAL_BATCH_NETS):
        chunk = items[start : start + EVAL_BATCH_NETS]
        preds = predict_steiner_batch(params, [it.net for it in chunk], threshold)
        for item, pred in zip(chunk, preds):
            grid = build_hanan_grid(item.net)
            tree = route_selection(item.net, grid, pred.selected)
            result: RefinementResult = refine_prediction(item.net, pred, tree)
            wl, wl_opt = result.tree.total_wirelength, int(item.wl_opt)
            assert wl >= wl_opt, f"net {item.net.id!r}: routed below optimum"
            acc = net_accuracy(confusion_counts(result.selected, item.labels))
            if wl == wl_opt:
                acc = 1.0
            rows.append(
                EvalRow(
                    net_id=item.net.id,
                    degree=item.net.degree,
                    accuracy=acc,
                    wl=wl,
                    wl_opt=wl_opt,
                    wl_increase=(wl - wl_opt) / wl_opt,
                    refined=result.triggered,
                )
            )

    increases = [r.wl_increase for r in rows if r.wl > r.wl_opt]
    stats = None
    if increases:
        arr = np.asarray(increases)
        q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75], method="linear")
        stats = WlIncreaseStats(
            mean=float(arr.mean()),
            minimum=float(arr.min()),
            maximum=float(arr.max()),
            q1=float(q1),
            median=float(med),
            q3=float(q3),
        )
    degrees = sorted({r.degree for r in rows})
    per_degree = {
        d: float(np.mean([r.accuracy for r in rows if r.degree == d])) for d in degrees
    }
    return EvalReport(
        average_accuracy=float(np.mean([r.accuracy for r in rows])),
        suboptimal_rate=len(increases) / len(rows),
        wl_increase=stats,
        outlier_count=outlier_count(increases),
        per_degree_accuracy=per_degree,
        rows=tuple(rows),
    )


def render_report(report: EvalReport) -> str:
    """Human-readable summary; values rounded for display only."""
    lines = [
        f"nets evaluated      {len(report.rows)}",
        f"average accuracy    {report.average_accuracy * 100:.3f}%",
        f"suboptimal WL nets  {report.suboptimal_rate * 100:.3f}%",
    ]
    if report.wl_increase is not None:
        s = report.wl_increase
        lines += [
            f"avg WL increase     {s.mean * 100:.3f}%",
            f"min WL increase     {s.minimum * 100:.3f}%",
            f"max WL increase     {s.maximum * 100:.3f}%",
            f"WL increase IQR     [{s.q1 * 100:.3f}%, {s.q3 * 100:.3f}%]",
        ]
    lines.append(f"outliers            {report.outlier_count}")
    lines.append("")
    lines.append("degree  accuracy")
    for d, acc in report.per_degree_accuracy.items():
        lines.append(f"{d:6d}  {acc * 100:.3f}%")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    """Machine-readable per-net rows at full precision."""
    out = ["net_id,degree,accuracy,wl,wl_opt,wl_increase,refined_flag"]
    for r in report.rows:
        out.append(
            f"{r.net_id},{r.degree},{r.accuracy!r},{r.wl},{r.wl_opt},"
            f"{r.wl_increase!r},{int(r.refined)}"
        )
    return "\n".join(out) + "\n"
