"""Weighted 8-connected pixel graph with a shared ascending edge order.

Edges are generated in raster order, and for each pixel in the neighbor order
E, S, SE, SW (only in-bounds neighbors). That generation index is the
tie-breaker of the stable ascending sort, so the ordering is fully
deterministic even when weights repeat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .imageio import Frame

# (dy, dx) in construction order: E, S, SE, SW
NEIGHBOR_OFFSETS = ((0, 1), (1, 0), (1, 1), (1, -1))

MAX_RGB_DISTANCE = 255.0 * np.sqrt(3.0)

# Incremented on every comparison sort this module performs. Consumers that
# promise to reuse an existing order (msf) are checked against it in tests.
sort_calls = 0


def edge_count(width: int, height: int) -> int:
    return 4 * width * height - 3 * (width + height) + 2


@dataclass(frozen=True)
class SortedPixelGraph:
    """Pixel graph with edges in non-decreasing weight order.

    ``order[i]`` is the construction index of the i-th sorted edge.
    """

    width: int
    height: int
    a: np.ndarray
    b: np.ndarray
    weight: np.ndarray
    order: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.width * self.height

    @property
    def n_edges(self) -> int:
        return len(self.weight)

    def unsorted(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge arrays (a, b, weight) back in construction order."""
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(len(self.order))
        return self.a[inv], self.b[inv], self.weight[inv]


@njit(cache=True)
def _edges_kernel(pixels):
    h, w = pixels.shape[0], pixels.shape[1]
    m = 4 * w * h - 3 * (w + h) + 2
    a = np.empty(m, np.int64)
    b = np.empty(m, np.int64)
    weight = np.empty(m, np.float64)
    e = 0
    for y in range(h):
        for x in range(w):
            for d in range(4):
                if d == 0:
                    ny, nx = y, x + 1
                elif d == 1:
                    ny, nx = y + 1, x
                elif d == 2:
                    ny, nx = y + 1, x + 1
                else:
                    ny, nx = y + 1, x - 1
                if ny >= h or nx < 0 or nx >= w:
                    continue
                dr = pixels[y, x, 0] - pixels[ny, nx, 0]
                dg = pixels[y, x, 1] - pixels[ny, nx, 1]
                db = pixels[y, x, 2] - pixels[ny, nx, 2]
                a[e] = y * w + x
                b[e] = ny * w + nx
                weight[e] = np.sqrt(dr * dr + dg * dg + db * db)
                e += 1
    return a, b, weight


def construct_edges(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Endpoints and RGB-distance weights of every 8-neighbor pair, in construction order."""
    return _edges_kernel(np.ascontiguousarray(pixels, dtype=np.float64))


@njit(cache=True)
def _bucket_argsort(weight, n_buckets):
    n = weight.shape[0]
    top = 0.0
    for i in range(n):
        if weight[i] > top:
            top = weight[i]
    scale = (n_buckets - 1) / top if top > 0.0 else 0.0
    keys = np.empty(n, np.int64)
    ends = np.zeros(n_buckets + 1, np.int64)
    for i in range(n):
        # floor of a non-negative product is monotone in the weight
        k = min(int(weight[i] * scale), n_buckets - 1)
        keys[i] = k
        ends[k + 1] += 1
    for k in range(n_buckets):
        ends[k + 1] += ends[k]
    out = np.empty(n, np.int64)
    fill = ends[:-1].copy()
    for i in range(n):
        out[fill[keys[i]]] = i
        fill[keys[i]] += 1
    # exact comparisons inside each bucket; insertion sort keeps ties in order
    for k in range(n_buckets):
        lo, hi = ends[k], ends[k + 1]
        if hi - lo < 2:
            continue
        if hi - lo > 64:
            seg = out[lo:hi].copy()
            sub = np.argsort(weight[seg], kind="mergesort")
            out[lo:hi] = seg[sub]
            continue
        for i in range(lo + 1, hi):
            cur = out[i]
            wc = weight[cur]
            j = i - 1
            while j >= lo and weight[out[j]] > wc:
                out[j + 1] = out[j]
                j -= 1
            out[j + 1] = cur
    return out


def stable_order(weight: np.ndarray, method: str = "bucket") -> np.ndarray:
    """Indices that sort ``weight`` ascending, ties kept in input order.

    ``bucket`` bins on a 16-bit quantization and compares exact weights inside
    each bin; ``reference`` is numpy's stable sort. Both give the same permutation.
    """
    global sort_calls
    sort_calls += 1
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    if method == "reference":
        return np.argsort(weight, kind="stable")
    if method != "bucket":
        raise ValueError(f"unknown sort method {method!r}")
    return _bucket_argsort(weight, 1 << 16)


def build_graph(frame: Frame) -> SortedPixelGraph:
    """Build the 8-connected graph of ``frame`` with Euclidean RGB edge weights."""
    h, w = frame.shape
    if w < 2 or h < 2:
        raise ValueError(f"graph needs a frame of at least 2x2, got {w}x{h}")
    a, b, weight = construct_edges(frame.pixels)
    order = stable_order(weight)
    return SortedPixelGraph(w, h, a[order], b[order], weight[order], order)


def add_semantic_contour_bonus(
    g: SortedPixelGraph, classes: np.ndarray, c_sem: float
) -> SortedPixelGraph:
    """Raise by ``c_sem`` the weight of every edge whose endpoints differ in semantic class.

    The result is re-sorted with the same (weight, construction index) rule.
    """
    classes = np.asarray(getattr(classes, "classes", classes))
    if classes.shape != (g.height, g.width):
        raise ValueError(
            f"semantic map shape {classes.shape} does not match graph {(g.height, g.width)}"
        )
    if c_sem < 0:
        raise ValueError("c_sem must be non-negative")
    if c_sem == 0:
        return g
    flat = classes.ravel()
    a, b, weight = g.unsorted()
    weight = weight + np.where(flat[a] != flat[b], float(c_sem), 0.0)
    order = stable_order(weight)
    return SortedPixelGraph(g.width, g.height, a[order], b[order], weight[order], order)
