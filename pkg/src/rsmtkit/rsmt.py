"""Exact rectilinear Steiner minimal trees and L1 spanning trees.

The optimal wirelength of a net equals the minimum, over subsets S of its
Hanan-grid candidate nodes with |S| <= degree - 2, of the L1 minimum
spanning tree wirelength of pins + S. `exact_rsmt` computes that minimum
exactly and returns the tie-break-canonical subset: fewest Steiner points
first, then the lexicographically smallest canonical index list.

Enumerating every candidate subset is hopeless beyond tiny degrees, so the
optimum is found in three exact steps:

1. A Dreyfus-Wagner style dynamic program over pin subsets gives the
   optimal wirelength L*. Costs are integers throughout, so equality
   checks are exact.
2. A candidate node can belong to the returned subset only if it is a
   branch point (tree degree >= 3) of some optimal tree. That holds iff
   the pins can be partitioned into >= 3 groups whose optimal subtrees
   through the node sum to exactly L*; the DP table answers this for
   every node at once. This filter typically leaves under ~20 nodes.
3. Subsets of the filtered candidates are enumerated in (size, lex) order
   until one reproduces L* as an MST, which is guaranteed to happen at
   the minimal subset size.

Step 3's first hit is provably the canonical answer: any subset achieving
L* contains the branch set of some optimal tree, so minimal achieving
subsets *are* branch sets, and all branch sets survive the filter.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegreeTooLarge, EmptyPointSet
from .nets import HananGrid, Net, NodeKind, Point, build_hanan_grid


class PointKind(Enum):
    PIN = "pin"
    STEINER = "steiner"


def l1_distance(a: Point, b: Point) -> int:
    return abs(a.x - b.x) + abs(a.y - b.y)


@dataclass(frozen=True)
class RoutedTree:
    """A spanning tree over routed points with L1 edge lengths."""

    points: tuple[tuple[Point, PointKind], ...]
    edges: tuple[tuple[int, int, int], ...]  # (index, index, l1 length)
    total_wirelength: int


@dataclass(frozen=True)
class OracleSolution:
    """Optimal wirelength plus the canonical optimal Steiner subset.

    steiner_set holds canonical Hanan-grid node indices, ascending.
    """

    optimal_wirelength: int
    steiner_set: tuple[int, ...]
    tree: RoutedTree


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def kruskal_mst(points: list[tuple[Point, PointKind]]) -> RoutedTree:
    """Minimum spanning tree of the complete L1 graph over the points.

    Deterministic: edges are taken in (length, smaller index, larger index)
    order, so ties always resolve the same way.
    """
    if not points:
        raise EmptyPointSet("kruskal_mst requires at least one point")
    m = len(points)
    pts = [p for p, _ in points]
    edges = sorted(
        (abs(pts[i].x - pts[j].x) + abs(pts[i].y - pts[j].y), i, j)
        for i in range(m)
        for j in range(i + 1, m)
    )
    uf = _UnionFind(m)
    chosen: list[tuple[int, int, int]] = []
    total = 0
    for w, i, j in edges:
        if uf.union(i, j):
            chosen.append((i, j, w))
            total += w
            if len(chosen) == m - 1:
                break
    return RoutedTree(points=tuple(points), edges=tuple(chosen), total_wirelength=total)


def tree_degrees(tree: RoutedTree) -> dict[int, int]:
    """Degree of every point index in the tree."""
    deg = {i: 0 for i in range(len(tree.points))}
    for i, j, _ in tree.edges:
        deg[i] += 1
        deg[j] += 1
    return deg


def _mst_wirelength(dist: np.ndarray) -> int:
    """Prim over a precomputed integer distance matrix; weight only."""
    m = dist.shape[0]
    big = np.int64(1) << 62
    best = dist[0].copy()
    best[0] = big
    in_tree = np.zeros(m, dtype=bool)
    in_tree[0] = True
    total = 0
    for _ in range(m - 1):
        u = int(np.argmin(best))
        total += int(best[u])
        in_tree[u] = True
        best = np.minimum(best, dist[u])
        best[in_tree] = big
    return total


_SPLIT_CACHE: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}


def _submask_splits(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """For each mask s over n bits, the (t, s^t) submask pairs with t <= s^t.

    Index of the returned list is the mask value; entries for masks with
    fewer than 2 bits are empty. Cached per n: the structure depends only
    on the pin count, not the instance.
    """
    cached = _SPLIT_CACHE.get(n)
    if cached is not None:
        return cached
    splits: list[tuple[np.ndarray, np.ndarray]] = []
    for s in range(1 << n):
        ts: list[int] = []
        us: list[int] = []
        if s & (s - 1):
            t = (s - 1) & s
            while t:
                u = s ^ t
                if t <= u:
                    ts.append(t)
                    us.append(u)
                t = (t - 1) & s
        splits.append((np.array(ts, dtype=np.intp), np.array(us, dtype=np.intp)))
    _SPLIT_CACHE[n] = splits
    return splits


def _steiner_dp(grid: HananGrid, pin_nodes: list[int]) -> tuple[int, list[int]]:
    """Optimal wirelength and the branch-capable candidate nodes.

    Returns (L*, nodes v such that some optimal tree has v as a branch
    point), using the subset DP described in the module docstring.
    """
    n = len(pin_nodes)
    pts = np.array([(p.x, p.y) for p, _ in grid.nodes], dtype=np.int64)
    dist = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    big = np.int64(1) << 60
    full = (1 << n) - 1
    nn = grid.n_nodes
    # f[s][v]: optimal tree spanning pin subset s plus node v
    # g[s][v]: same but v joins >= 2 sub-trees (the pre-closure merge value)
    f = np.full((full + 1, nn), big, dtype=np.int64)
    g = np.full((full + 1, nn), big, dtype=np.int64)
    for i, t in enumerate(pin_nodes):
        f[1 << i] = dist[t]
    splits = _submask_splits(n)
    for s in range(1, full + 1):
        ts, us = splits[s]
        if ts.size == 0:
            continue
        g[s] = np.min(f[ts] + f[us], axis=0)
        f[s] = np.min(g[s][:, None] + dist, axis=0)
    wl_opt = int(f[full ^ 1][pin_nodes[0]]) if n > 1 else 0
    # v can be a branch of an optimal tree iff pins split into >= 3 parts
    # whose subtrees at v sum to exactly L*.
    m3 = np.full(nn, big, dtype=np.int64)
    for t_mask in range(1, full):
        np.minimum(m3, f[t_mask] + g[full ^ t_mask], out=m3)
    is_pin = np.zeros(nn, dtype=bool)
    is_pin[pin_nodes] = True
    branch = np.nonzero(~is_pin & (m3 == wl_opt))[0]
    return wl_opt, [int(v) for v in branch]


def exact_rsmt(net: Net, max_degree: int = 9, allow_large: bool = False) -> OracleSolution:
    """Exact RSMT oracle over the net's Hanan grid.

    Raises DegreeTooLarge for nets above max_degree unless allow_large is
    set; the subset DP is exponential in the degree (3^n table build), so
    the guard keeps accidental huge inputs out.
    """
    n = net.degree
    if n > max_degree and not allow_large:
        raise DegreeTooLarge(
            f"net {net.id!r} has degree {n} > max_degree {max_degree}; "
            "pass allow_large=True to override"
        )
    grid = build_hanan_grid(net)
    pin_nodes = [grid.node_index(p) for p in net.pins]
    wl_opt, branch_nodes = _steiner_dp(grid, pin_nodes)

    grid_pts = np.array([(p.x, p.y) for p, _ in grid.nodes], dtype=np.int64)
    pin_arr = np.array([(p.x, p.y) for p in net.pins], dtype=np.int64)

    def subset_wl(idxs: tuple[int, ...]) -> int:
        pts = np.concatenate([pin_arr, grid_pts[list(idxs)]]) if idxs else pin_arr
        d = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
        return _mst_wirelength(d)

    steiner: tuple[int, ...] | None = None
    if subset_wl(()) == wl_opt:
        steiner = ()
    else:
        for k in range(1, n - 1):
            for cand in itertools.combinations(branch_nodes, k):
                if subset_wl(cand) == wl_opt:
                    steiner = cand
                    break
            if steiner is not None:
                break
    if steiner is None:  # cannot happen: some optimal branch set achieves L*
        raise AssertionError(f"no achieving Steiner subset for net {net.id!r}")

    tree_points = [(p, PointKind.PIN) for p in net.pins]
    tree_points += [(grid.nodes[i][0], PointKind.STEINER) for i in steiner]
    tree = kruskal_mst(tree_points)
    assert tree.total_wirelength == wl_opt
    return OracleSolution(optimal_wirelength=wl_opt, steiner_set=steiner, tree=tree)
