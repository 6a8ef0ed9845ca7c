"""Seed maps for the relabeling step, derived from region matches.

Each region s' of the new independent segmentation falls in exactly one case,
with M(s') the previous regions whose best match is s':

1. one previous region, and it is also s''s best match: copy its label.
2. several previous regions: paste them, translated as a group onto s',
   and keep the pixels that land inside s'.
3. no match in either direction: fresh label.
4. anything else (s' is a fragment of a larger previous region): fresh label
   when s' is small, otherwise the label of its best match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fhseg import Segmentation
from .regionmatch import Matching

UNSEEDED = -1

CROSS = ndimage.generate_binary_structure(2, 1)


@dataclass
class LabelAllocator:
    """Stream-global source of never-reused labels."""

    next_label: int = 0

    def allocate(self, n: int = 1) -> int:
        """Reserve ``n`` consecutive labels and return the first."""
        if n < 0:
            raise ValueError("cannot allocate a negative number of labels")
        first = self.next_label
        self.next_label += n
        return first


@dataclass
class MarkerMap:
    seed: np.ndarray  # (H, W) int64, UNSEEDED where no seed
    cases: dict[int, int] = field(default_factory=dict)  # independent-region label -> case
    fresh: list[int] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.seed.shape[1]

    @property
    def height(self) -> int:
        return self.seed.shape[0]

    @property
    def n_seeded(self) -> int:
        return int(np.count_nonzero(self.seed != UNSEEDED))


def classify_region(label: int, matching: Matching, matched_by: dict[int, list[int]]) -> int:
    m = matched_by.get(label, [])
    fwd = matching.best_fwd.get(label)
    if len(m) == 1 and fwd == m[0]:
        return 1
    if len(m) >= 2:
        return 2
    if not m and fwd is None:
        return 3
    return 4


def generate_markers(
    matching: Matching,
    prev: Segmentation,
    cur_ind: Segmentation,
    alloc: LabelAllocator,
    theta_new: int,
) -> MarkerMap:
    matched_by: dict[int, list[int]] = {}
    for s, s_new in sorted(matching.best_bwd.items()):
        matched_by.setdefault(s_new, []).append(s)

    n = cur_ind.n_regions
    region_seed = np.full(n, UNSEEDED, np.int64)
    cases: dict[int, int] = {}
    fresh: list[int] = []
    group_rows: list[int] = []
    for row, label in enumerate(cur_ind.region_labels.tolist()):
        case = classify_region(label, matching, matched_by)
        cases[label] = case
        if case == 1:
            region_seed[row] = matched_by[label][0]
        elif case == 2:
            group_rows.append(row)
        elif case == 3 or cur_ind.sizes[row] < theta_new:
            region_seed[row] = alloc.allocate()
            fresh.append(int(region_seed[row]))
        else:
            region_seed[row] = matching.best_fwd[label]

    seed = region_seed[cur_ind.index]
    h, w = seed.shape
    flat_seed = seed.reshape(-1)
    flat_index = cur_ind.index.reshape(-1)
    for row in group_rows:
        group = matched_by[int(cur_ind.region_labels[row])]
        prow = np.array([prev.row_of(s) for s in group])
        sizes = prev.sizes[prow]
        anchor = (prev.centroids[prow] * sizes[:, None]).sum(axis=0) / sizes.sum()
        delta = cur_ind.centroids[row] - anchor
        tx, ty = (int(v) for v in np.sign(delta) * np.floor(np.abs(delta) + 0.5))
        for s, pr in zip(group, prow):
            pix = prev.pixels_of_row(int(pr))
            y = pix // w + ty
            x = pix % w + tx
            ok = (y >= 0) & (y < h) & (x >= 0) & (x < w)
            dst = y[ok] * w + x[ok]
            dst = dst[flat_index[dst] == row]
            flat_seed[dst] = s
    return MarkerMap(seed, cases, fresh)


@dataclass
class SafetyReport:
    passed: bool
    disagreement: float  # conflicting seeded pixels / all seeded pixels
    dominant: dict[int, int]  # region label -> dominant seed label (regions with seeds)
    dominance: dict[int, float]  # region label -> dominant share of its seeded pixels
    flagged: set[int]


def safety_check(markers: MarkerMap, cur_ind: Segmentation, tau_safe: float) -> SafetyReport:
    """Compare the seed map against the independent segmentation.

    Passes when at most ``tau_safe`` of the seeded pixels disagree with the
    dominant seed of their region. Regions whose dominant share is below
    ``1 - tau_safe`` are flagged. An empty seed map fails and flags everything.
    """
    if markers.seed.shape != cur_ind.labels.shape:
        raise ValueError("marker map and segmentation differ in size")
    seeded = markers.seed.ravel() != UNSEEDED
    total = int(seeded.sum())
    if total == 0:
        return SafetyReport(False, 1.0, {}, {}, set(cur_ind.region_labels.tolist()))
    rows = cur_ind.index.ravel()[seeded]
    seeds = markers.seed.ravel()[seeded]
    order = np.lexsort((seeds, rows))
    rows, seeds = rows[order], seeds[order]
    brk = np.flatnonzero((np.diff(rows) != 0) | (np.diff(seeds) != 0)) + 1
    starts = np.concatenate([[0], brk])
    counts = np.diff(np.concatenate([starts, [len(rows)]]))
    run_rows = rows[starts]
    run_seeds = seeds[starts]
    dominant: dict[int, int] = {}
    best: dict[int, int] = {}
    seeded_in: dict[int, int] = {}
    for r, s, c in zip(run_rows.tolist(), run_seeds.tolist(), counts.tolist()):
        seeded_in[r] = seeded_in.get(r, 0) + c
        # runs are in ascending seed order, so strict > keeps the smaller label on ties
        if c > best.get(r, 0):
            best[r] = c
            dominant[r] = s
    conflicts = sum(seeded_in[r] - best[r] for r in seeded_in)
    disagreement = conflicts / total
    labels = cur_ind.region_labels
    dominance = {int(labels[r]): best[r] / seeded_in[r] for r in seeded_in}
    flagged = {lab for lab, share in dominance.items() if share < 1.0 - tau_safe}
    return SafetyReport(
        disagreement <= tau_safe,
        disagreement,
        {int(labels[r]): s for r, s in dominant.items()},
        dominance,
        flagged,
    )


def _nearest_pixel(mask: np.ndarray, cx: float, cy: float) -> tuple[int, int]:
    ys, xs = np.nonzero(mask)
    i = int(np.argmin((xs - cx) ** 2 + (ys - cy) ** 2))
    return int(ys[i]), int(xs[i])


def erode_correct(
    markers: MarkerMap,
    cur_ind: Segmentation,
    report: SafetyReport,
    iterations: int,
    alloc: LabelAllocator,
) -> MarkerMap:
    """Reseed each flagged region with its eroded mask under its dominant label.

    Erosion uses a 3x3 cross; the image border does not erode. If a region
    erodes away, its pixel closest to the centroid is seeded instead.
    """
    if report.passed or not report.flagged:
        return markers
    seed = markers.seed.copy()
    fresh = list(markers.fresh)
    h, w = seed.shape
    for label in sorted(report.flagged):
        row = cur_ind.row_of(label)
        x0, y0, x1, y1 = (int(v) for v in cur_ind.bboxes[row])
        # one pixel of context so interior boundaries erode
        ya, yb = max(y0 - 1, 0), min(y1 + 2, h)
        xa, xb = max(x0 - 1, 0), min(x1 + 2, w)
        region = cur_ind.index[ya:yb, xa:xb] == row
        if iterations > 0:
            core = ndimage.binary_erosion(region, CROSS, iterations=iterations, border_value=1)
        else:
            core = region
        if not core.any():
            core = np.zeros_like(region)
            cy, cx = cur_ind.centroids[row, 1] - ya, cur_ind.centroids[row, 0] - xa
            core[_nearest_pixel(region, cx, cy)] = True
        lab = report.dominant.get(label)
        if lab is None:
            lab = alloc.allocate()
            fresh.append(lab)
        window = seed[ya:yb, xa:xb]
        window[region] = UNSEEDED
        window[core] = lab
    return MarkerMap(seed, dict(markers.cases), fresh)
