"""Inference: threshold probabilities, route, and clean up degree-2 picks.

A selected node that ends up with tree degree 2 is never a real Steiner
point; the refinement pass tries to drop such picks. It first strips
selected nodes globally by ascending probability until no degree-2 pick
remains, keeps that only if the wirelength strictly improved, and
otherwise restarts from the original tree removing degree-2 picks alone,
which can never make the tree longer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gat import ModelParams, model_forward
from .nets import HananGrid, Net, build_hanan_grid, disjoint_batch
from .rsmt import PointKind, RoutedTree, kruskal_mst, tree_degrees

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class SteinerPrediction:
    """Per-node probabilities plus the thresholded candidate selection."""

    probabilities: np.ndarray  # canonical node order
    selected: tuple[int, ...]  # candidate node indices, ascending
    threshold: float = DEFAULT_THRESHOLD


def _select(grid: HananGrid, probs: np.ndarray, threshold: float) -> tuple[int, ...]:
    return tuple(i for i in grid.candidate_indices() if probs[i] > threshold)


def predict_steiner(
    params: ModelParams, net: Net, threshold: float = DEFAULT_THRESHOLD
) -> SteinerPrediction:
    """Inference-mode Steiner probabilities for one net.

    Pin nodes are never selected, whatever their probability.
    """
    return predict_steiner_batch(params, [net], threshold)[0]


def predict_steiner_batch(
    params: ModelParams, nets: Sequence[Net], threshold: float = DEFAULT_THRESHOLD
) -> list[SteinerPrediction]:
    """Batched inference; equivalent to predicting each net on its own."""
    grids = [build_hanan_grid(net) for net in nets]
    batch = disjoint_batch(grids)
    probs, _ = model_forward(params, batch)
    out = []
    for k, grid in enumerate(grids):
        node_probs = probs[batch.member_slice(k)].copy()
        out.append(
            SteinerPrediction(
                probabilities=node_probs,
                selected=_select(grid, node_probs, threshold),
                threshold=threshold,
            )
        )
    return out


def route_selection(net: Net, grid: HananGrid, selection: Sequence[int]) -> RoutedTree:
    """MST over the net's pins plus the given candidate node indices."""
    points = [(p, PointKind.PIN) for p in net.pins]
    points += [(grid.nodes[i][0], PointKind.STEINER) for i in selection]
    return kruskal_mst(points)


def route_prediction(net: Net, pred: SteinerPrediction) -> RoutedTree:
    """MST over the net's pins plus the selected Steiner points."""
    grid = build_hanan_grid(net)
    return route_selection(net, grid, pred.selected)


def _degree2_positions(tree: RoutedTree, n_pins: int, n_selected: int) -> list[int]:
    """Positions (into the selection list) of selected nodes with degree 2."""
    deg = tree_degrees(tree)
    return [k for k in range(n_selected) if deg[n_pins + k] == 2]


@dataclass(frozen=True)
class RefinementResult:
    tree: RoutedTree
    selected: tuple[int, ...]
    triggered: bool  # a degree-2 selected node existed in the input tree


def refine_prediction(net: Net, pred: SteinerPrediction, tree: RoutedTree) -> RefinementResult:
    """Degree-2 cleanup; see the module docstring for the three steps.

    The result never has larger wirelength than the input tree and never
    contains a selected node of tree degree 2. Removal ties on probability
    go to the lowest canonical node index.
    """
    grid = build_hanan_grid(net)
    n_pins = net.degree
    initial = list(pred.selected)
    if not _degree2_positions(tree, n_pins, len(initial)):
        return RefinementResult(tree=tree, selected=tuple(initial), triggered=False)

    probs = pred.probabilities

    def lowest_prob(positions: list[int], selection: list[int]) -> int:
        # ascending selection order makes the first minimum the lowest index
        return min(positions, key=lambda k: (probs[selection[k]], selection[k]))

    # step 1: drop picks of any degree, lowest probability first
    selection = list(initial)
    current = tree
    while selection and _degree2_positions(current, n_pins, len(selection)):
        k = lowest_prob(list(range(len(selection))), selection)
        del selection[k]
        current = route_selection(net, grid, selection)

    # step 2: keep only a strict improvement
    if current.total_wirelength < tree.total_wirelength:
        return RefinementResult(tree=current, selected=tuple(selection), triggered=True)

    # step 3: from the initial tree, drop only degree-2 picks
    selection = list(initial)
    current = tree
    while True:
        d2 = _degree2_positions(current, n_pins, len(selection))
        if not d2:
            break
        k = lowest_prob(d2, selection)
        del selection[k]
        current = route_selection(net, grid, selection)
    return RefinementResult(tree=current, selected=tuple(selection), triggered=True)


def refine(net: Net, pred: SteinerPrediction, tree: RoutedTree) -> RoutedTree:
    """Refined routing for a prediction; tree must be route_prediction's output."""
    return refine_prediction(net, pred, tree).tree
