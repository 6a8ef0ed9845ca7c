"""Bipartite region graph between consecutive segmentations and best-match maps.

For a region r_i of the previous segmentation and r_j of the current one, the
dissimilarity is

    w_ij = (|r_i| + |r_j|) * d(c_i, c_j) / |r_i ∩ r_j| + a_ij

where d is the centroid distance, the overlap is counted after translating r_j
so that the two centroids coincide, and a_ij is the RGB distance between mean
colors. Pairs with no aligned overlap get no edge.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .fhseg import Segmentation


class MatchEdge(NamedTuple):
    src: int  # label in the previous segmentation
    dst: int  # label in the current independent segmentation
    weight: float


@dataclass
class Matching:
    best_fwd: dict[int, int] = field(default_factory=dict)  # current -> previous
    best_bwd: dict[int, int] = field(default_factory=dict)  # previous -> current
    fwd_weight: dict[int, float] = field(default_factory=dict)
    bwd_weight: dict[int, float] = field(default_factory=dict)


def _round_shift(v: float) -> int:
    # half away from zero, symmetric under negation
    return int(math.copysign(math.floor(abs(v) + 0.5), v))


def aligned_overlap(mask_i: np.ndarray, mask_j: np.ndarray) -> int:
    """Pixels shared by region i and region j after moving j's centroid onto i's.

    The translation is rounded to whole pixels.
    """
    yi, xi = np.nonzero(mask_i)
    yj, xj = np.nonzero(mask_j)
    if len(xi) == 0 or len(xj) == 0:
        return 0
    tx = _round_shift(xi.mean() - xj.mean())
    ty = _round_shift(yi.mean() - yj.mean())
    a = set(zip(xi.tolist(), yi.tolist()))
    b = {(x + tx, y + ty) for x, y in zip(xj.tolist(), yj.tolist())}
    return len(a & b)


def match_weight(
    size_i: int,
    size_j: int,
    centroid_i,
    centroid_j,
    color_i,
    color_j,
    overlap: int,
) -> float:
    if overlap <= 0:
        raise ValueError("regions without aligned overlap are not comparable")
    d = math.dist(centroid_i, centroid_j)
    appearance = math.dist(color_i, color_j)
    return (size_i + size_j) * d / overlap + appearance


@njit(cache=True)
def _overlap_kernel(prev_index, cur_order, cur_starts, rows_i, rows_j, shifts):
    h, w = prev_index.shape
    out = np.zeros(rows_i.shape[0], np.int64)
    for p in range(rows_i.shape[0]):
        i = rows_i[p]
        j = rows_j[p]
        tx = shifts[p, 0]
        ty = shifts[p, 1]
        count = 0
        for q in range(cur_starts[j], cur_starts[j + 1]):
            pix = cur_order[q]
            y = pix // w + ty
            x = pix % w + tx
            if 0 <= y < h and 0 <= x < w and prev_index[y, x] == i:
                count += 1
        out[p] = count
    return out


def candidate_pairs(prev: Segmentation, cur: Segmentation, radius: float) -> list[tuple[int, int]]:
    """Table-row pairs (prev, cur) with centroid distance <= radius, via grid binning."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    cell = float(radius)
    bins: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, (x, y) in enumerate(prev.centroids.tolist()):
        bins[(int(x // cell), int(y // cell))].append(i)
    r2 = radius * radius
    pairs = []
    pc = prev.centroids
    for j, (x, y) in enumerate(cur.centroids.tolist()):
        gx, gy = int(x // cell), int(y // cell)
        for bx in (gx - 1, gx, gx + 1):
            for by in (gy - 1, gy, gy + 1):
                for i in bins.get((bx, by), ()):
                    dx = pc[i, 0] - x
                    dy = pc[i, 1] - y
                    if dx * dx + dy * dy <= r2:
                        pairs.append((i, j))
    pairs.sort()
    return pairs


def build_match_graph(prev: Segmentation, cur: Segmentation, radius: float) -> list[MatchEdge]:
    if prev.labels.shape != cur.labels.shape:
        raise ValueError("segmentations differ in size")
    pairs = candidate_pairs(prev, cur, radius)
    if not pairs:
        return []
    rows = np.array(pairs, dtype=np.int64)
    ri, rj = rows[:, 0], rows[:, 1]
    delta = prev.centroids[ri] - cur.centroids[rj]
    shifts = np.sign(delta) * np.floor(np.abs(delta) + 0.5)
    order, starts = cur.members
    overlap = _overlap_kernel(prev.index, order, starts, ri, rj, shifts.astype(np.int64))
    keep = overlap > 0
    ri, rj, overlap = ri[keep], rj[keep], overlap[keep]
    d = np.hypot(*(prev.centroids[ri] - cur.centroids[rj]).T)
    dc = prev.mean_colors[ri] - cur.mean_colors[rj]
    appearance = np.sqrt((dc * dc).sum(axis=1))
    weight = (prev.sizes[ri] + cur.sizes[rj]) * d / overlap + appearance
    src = prev.region_labels[ri].tolist()
    dst = cur.region_labels[rj].tolist()
    return [MatchEdge(s, t, w) for s, t, w in zip(src, dst, weight.tolist())]


def compute_best_matches(edges: list[MatchEdge]) -> Matching:
    """Per-side argmin over incident edges; ties go to the smaller partner label."""
    m = Matching()
    for e in edges:
        cur = m.fwd_weight.get(e.dst)
        if cur is None or (e.weight, e.src) < (cur, m.best_fwd[e.dst]):
            m.best_fwd[e.dst] = e.src
            m.fwd_weight[e.dst] = e.weight
        cur = m.bwd_weight.get(e.src)
        if cur is None or (e.weight, e.dst) < (cur, m.best_bwd[e.src]):
            m.best_bwd[e.src] = e.dst
            m.bwd_weight[e.src] = e.weight
    return m


def match_segmentations(prev: Segmentation, cur: Segmentation, radius: float) -> Matching:
    return compute_best_matches(build_match_graph(prev, cur, radius))
