"""Nets, Hanan grids, node features and disjoint batching.

A net is a set of pins to connect. Its Hanan grid is the cross product of
the distinct pin x and y coordinates; grid intersections that are not pins
are the candidate Steiner locations. Nodes are kept in a canonical order
(ascending x, then ascending y) so that labels, checkpoints and batches are
reproducible regardless of pin list order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateNet, EmptyBatch

COORDINATE_MAX = 1_000_000
FEATURE_SCALE = 100.0


class Point(NamedTuple):
    x: int
    y: int


class NodeKind(Enum):
    PIN = "pin"
    CANDIDATE = "candidate"


@dataclass(frozen=True)
class Net:
    """A routing instance: an id plus >= 2 distinct pins.

    Duplicate pins are dropped at construction (first occurrence kept);
    a net that collapses to fewer than 2 pins is rejected.
    """

    id: str
    pins: tuple[Point, ...]

    def __init__(self, id: str, pins: Iterable[tuple[int, int]], coordinate_max: int = COORDINATE_MAX):
        seen: dict[Point, None] = {}
        for p in pins:
            pt = Point(int(p[0]), int(p[1]))
            if not (0 <= pt.x <= coordinate_max and 0 <= pt.y <= coordinate_max):
                raise ValueError(f"pin {pt} outside [0, {coordinate_max}]^2")
            seen.setdefault(pt)
        if len(seen) < 2:
            raise DegenerateNet(f"net {id!r} has {len(seen)} distinct pin(s), need >= 2")
        object.__setattr__(self, "id", str(id))
        object.__setattr__(self, "pins", tuple(seen))

    @property
    def degree(self) -> int:
        return len(self.pins)


@dataclass(frozen=True)
class HananGrid:
    """Hanan grid of a net in canonical node order.

    nodes[i * len(ys) + j] is the intersection (xs[i], ys[j]); this layout
    is exactly ascending x then ascending y. Edges connect 4-orthogonal
    grid neighbours (consecutive coordinates) and are stored once as
    (smaller index, larger index).
    """

    net_id: str
    xs: tuple[int, ...]
    ys: tuple[int, ...]
    nodes: tuple[tuple[Point, NodeKind], ...]
    edges: tuple[tuple[int, int], ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def points(self) -> tuple[Point, ...]:
        return tuple(p for p, _ in self.nodes)

    def pin_indices(self) -> list[int]:
        return [i for i, (_, kind) in enumerate(self.nodes) if kind is NodeKind.PIN]

    def candidate_indices(self) -> list[int]:
        return [i for i, (_, kind) in enumerate(self.nodes) if kind is NodeKind.CANDIDATE]

    def node_index(self, point: Point) -> int:
        """Canonical index of a grid point (both coordinates must be on the grid)."""
        i = self.xs.index(point.x)
        j = self.ys.index(point.y)
        return i * len(self.ys) + j


def build_hanan_grid(net: Net) -> HananGrid:
    """Construct the Hanan grid of a net.

    Pure function of the pin coordinate set: permuting the pin list of an
    equivalent net yields an identical grid.
    """
    xs = tuple(sorted({p.x for p in net.pins}))
    ys = tuple(sorted({p.y for p in net.pins}))
    pin_set = set(net.pins)
    ny = len(ys)
    nodes = tuple(
        (Point(x, y), NodeKind.PIN if Point(x, y) in pin_set else NodeKind.CANDIDATE)
        for x in xs
        for y in ys
    )
    edges: list[tuple[int, int]] = []
    for i in range(len(xs)):
        for j in range(ny):
            k = i * ny + j
            if j + 1 < ny:
                edges.append((k, k + 1))
            if i + 1 < len(xs):
                edges.append((k, k + ny))
    return HananGrid(net_id=net.id, xs=xs, ys=ys, nodes=nodes, edges=tuple(edges))


def grid_features(grid: HananGrid) -> np.ndarray:
    """Feature matrix of a grid: one (x_norm, y_norm, is_pin) row per node.

    Coordinates are translated so the minimum pin coordinate maps to 0 on
    each axis, then both axes are scaled by the single factor
    100 / max(width, height). The shared factor keeps the L1 geometry of
    the instance undistorted; a zero-extent axis maps to all zeros.
    """
    x0, y0 = grid.xs[0], grid.ys[0]
    width = grid.xs[-1] - x0
    height = grid.ys[-1] - y0
    scale = FEATURE_SCALE / max(width, height)
    rows = np.empty((grid.n_nodes, 3), dtype=np.float64)
    for i, (p, kind) in enumerate(grid.nodes):
        rows[i, 0] = (p.x - x0) * scale
        rows[i, 1] = (p.y - y0) * scale
        rows[i, 2] = 1.0 if kind is NodeKind.PIN else 0.0
    return rows


def normalize_features(net: Net) -> np.ndarray:
    """Feature matrix for a net's Hanan grid (canonical node order)."""
    return grid_features(build_hanan_grid(net))


@dataclass(frozen=True)
class BatchGraph:
    """Several Hanan grids glued into one block-diagonal graph.

    offsets[k] is the index of grid k's first node in the concatenation;
    no edge crosses a member boundary, so a forward pass over the batch
    cannot mix information between nets.
    """

    member_grids: tuple[HananGrid, ...]
    offsets: tuple[int, ...]
    features: np.ndarray  # (n_nodes, 3) float64
    edges: np.ndarray  # (n_edges, 2) int64, undirected pairs

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    def member_slice(self, k: int) -> slice:
        end = self.offsets[k + 1] if k + 1 < len(self.offsets) else self.n_nodes
        return slice(self.offsets[k], end)


def disjoint_batch(grids: Sequence[HananGrid]) -> BatchGraph:
    """Assemble grids into one BatchGraph, preserving member order."""
    if not grids:
        raise EmptyBatch("disjoint_batch requires at least one grid")
    offsets = []
    total = 0
    feats = []
    edge_blocks = []
    for g in grids:
        offsets.append(total)
        feats.append(grid_features(g))
        if g.edges:
            edge_blocks.append(np.asarray(g.edges, dtype=np.int64) + total)
        total += g.n_nodes
    edges = (
        np.concatenate(edge_blocks, axis=0)
        if edge_blocks
        else np.empty((0, 2), dtype=np.int64)
    )
    return BatchGraph(
        member_grids=tuple(grids),
        offsets=tuple(offsets),
        features=np.concatenate(feats, axis=0),
        edges=edges,
    )
