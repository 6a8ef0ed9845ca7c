"""Greedy graph-based region merging over the sorted pixel graph.

A Kruskal-style pass over the ascending edge list merges two components when
the joining edge is no heavier than either component's internal difference
plus ``k / size``. A second pass absorbs components smaller than ``delta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from .imageio import Frame
from .pixelgraph import SortedPixelGraph


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _link(parent, size, ra, rb):
    """Union by size; equal sizes hang the larger id under the smaller one."""
    if size[ra] > size[rb] or (size[ra] == size[rb] and ra < rb):
        parent[rb] = ra
        size[ra] += size[rb]
        return ra
    parent[ra] = rb
    size[rb] += size[ra]
    return rb


@njit(cache=True)
def _merge_ok(w, int_a, size_a, int_b, size_b, k):
    return w <= int_a + k / size_a and w <= int_b + k / size_b


@njit(cache=True)
def _fh_kernel(a, b, weight, parent, size, internal, k):
    for e in range(weight.shape[0]):
        ra = _find(parent, a[e])
        rb = _find(parent, b[e])
        if ra == rb:
            continue
        w = weight[e]
        if _merge_ok(w, internal[ra], size[ra], internal[rb], size[rb], k):
            r = _link(parent, size, ra, rb)
            internal[r] = w


@njit(cache=True)
def _small_kernel(a, b, parent, size, delta):
    for e in range(a.shape[0]):
        ra = _find(parent, a[e])
        rb = _find(parent, b[e])
        if ra != rb and (size[ra] < delta or size[rb] < delta):
            _link(parent, size, ra, rb)


@njit(cache=True)
def _compress(parent):
    roots = np.empty(parent.shape[0], np.int64)
    for i in range(parent.shape[0]):
        roots[i] = _find(parent, i)
    return roots


@njit(cache=True)
def _dense_relabel(roots, base):
    """Map root ids to consecutive labels in order of first raster appearance."""
    n = roots.shape[0]
    remap = np.full(n, -1, np.int64)
    out = np.empty(n, np.int64)
    nxt = base
    for i in range(n):
        r = roots[i]
        if remap[r] < 0:
            remap[r] = nxt
            nxt += 1
        out[i] = remap[r]
    return out, nxt - base


@dataclass
class RegionForest:
    """Union-find state over pixels. ``size``/``internal`` are meaningful at roots only."""

    parent: np.ndarray
    size: np.ndarray
    internal: np.ndarray

    @classmethod
    def singletons(cls, n: int) -> "RegionForest":
        return cls(
            np.arange(n, dtype=np.int64),
            np.ones(n, dtype=np.int64),
            np.zeros(n, dtype=np.float64),
        )

    def copy(self) -> "RegionForest":
        return RegionForest(self.parent.copy(), self.size.copy(), self.internal.copy())

    def roots(self) -> np.ndarray:
        return _compress(self.parent)

    @property
    def n_regions(self) -> int:
        return int(np.count_nonzero(self.roots() == np.arange(len(self.parent))))


def segment_fh(g: SortedPixelGraph, k: float) -> RegionForest:
    """Single ascending pass merging regions X, Y when the joining edge weight is at
    most ``min(Int(X) + k/|X|, Int(Y) + k/|Y|)``."""
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    forest = RegionForest.singletons(g.n_nodes)
    _fh_kernel(g.a, g.b, g.weight, forest.parent, forest.size, forest.internal, float(k))
    return forest


def remove_small_regions(forest: RegionForest, g: SortedPixelGraph, delta: int) -> RegionForest:
    """Absorb every region smaller than ``delta`` pixels into its cheapest neighbor."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    out = forest.copy()
    if delta > 0:
        _small_kernel(g.a, g.b, out.parent, out.size, int(delta))
    return out


@dataclass
class Region:
    label: int
    size: int
    centroid: tuple[float, float]
    mean_color: tuple[float, float, float]
    bbox: tuple[int, int, int, int]


class Segmentation:
    """Per-pixel label map plus its region table.

    The table is stored column-wise and sorted by label: ``region_labels``,
    ``sizes``, ``centroids`` as (x, y), ``mean_colors`` as (r, g, b), and
    ``bboxes`` as inclusive (x0, y0, x1, y1).
    """

    def __init__(self, labels: np.ndarray, pixels: np.ndarray):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ValueError("label map must be 2-D")
        if pixels.shape[:2] != labels.shape:
            raise ValueError("label map and frame sizes differ")
        self.labels = labels
        h, w = labels.shape
        uniq, inv = np.unique(labels.ravel(), return_inverse=True)
        n = len(uniq)
        self.region_labels = uniq
        self.index = inv.reshape(h, w)
        self.sizes = np.bincount(inv, minlength=n)
        ys, xs = np.divmod(np.arange(h * w), w)
        cx = np.bincount(inv, weights=xs, minlength=n) / self.sizes
        cy = np.bincount(inv, weights=ys, minlength=n) / self.sizes
        self.centroids = np.column_stack([cx, cy])
        flat = pixels.reshape(-1, 3)
        self.mean_colors = np.column_stack(
            [np.bincount(inv, weights=flat[:, c], minlength=n) / self.sizes for c in range(3)]
        )
        x0 = np.full(n, w, np.int64)
        y0 = np.full(n, h, np.int64)
        x1 = np.full(n, -1, np.int64)
        y1 = np.full(n, -1, np.int64)
        np.minimum.at(x0, inv, xs)
        np.minimum.at(y0, inv, ys)
        np.maximum.at(x1, inv, xs)
        np.maximum.at(y1, inv, ys)
        self.bboxes = np.column_stack([x0, y0, x1, y1])

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def n_regions(self) -> int:
        return len(self.region_labels)

    def row_of(self, label: int) -> int:
        i = int(np.searchsorted(self.region_labels, label))
        if i >= self.n_regions or self.region_labels[i] != label:
            raise KeyError(label)
        return i

    def __contains__(self, label) -> bool:
        i = int(np.searchsorted(self.region_labels, label))
        return i < self.n_regions and self.region_labels[i] == label

    def region(self, label: int) -> Region:
        i = self.row_of(label)
        return Region(
            int(self.region_labels[i]),
            int(self.sizes[i]),
            (float(self.centroids[i, 0]), float(self.centroids[i, 1])),
            tuple(float(c) for c in self.mean_colors[i]),
            tuple(int(v) for v in self.bboxes[i]),
        )

    def regions(self) -> list[Region]:
        return [self.region(int(lab)) for lab in self.region_labels]

    @cached_property
    def members(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR pixel lists per table row: (flat pixel indices, row start offsets)."""
        flat = self.index.ravel()
        order = np.argsort(flat, kind="stable")
        starts = np.zeros(self.n_regions + 1, np.int64)
        np.cumsum(self.sizes, out=starts[1:])
        return order, starts

    def pixels_of_row(self, i: int) -> np.ndarray:
        order, starts = self.members
        return order[starts[i] : starts[i + 1]]

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label


def forest_to_segmentation(forest: RegionForest, frame: Frame, base: int = 0) -> Segmentation:
    """Dense labels ``base, base+1, ...`` in order of first raster appearance."""
    dense, _ = _dense_relabel(forest.roots(), int(base))
    return Segmentation(dense.reshape(frame.shape), frame.pixels)


def segment_frame(
    g: SortedPixelGraph, frame: Frame, k: float, delta: int, base: int = 0
) -> Segmentation:
    forest = remove_small_regions(segment_fh(g, k), g, delta)
    return forest_to_segmentation(forest, frame, base)


def partition_of(labels: np.ndarray) -> frozenset[frozenset[int]]:
    """Label-agnostic view of a labeling: the set of its pixel classes."""
    flat = np.asarray(labels).ravel()
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(flat.tolist()):
        groups.setdefault(lab, []).append(i)
    return frozenset(frozenset(v) for v in groups.values())
