"""Causal stream processing: per-frame pipeline, region flow, semantic smoothing."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fhseg import Segmentation, forest_to_segmentation, remove_small_regions, segment_fh
from .imageio import Frame, gaussian_smooth, load_pgm
from .markers import (
    LabelAllocator,
    MarkerMap,
    SafetyReport,
    erode_correct,
    generate_markers,
    safety_check,
)
from .msf import msf_label
from .pixelgraph import add_semantic_contour_bonus, build_graph
from .regionmatch import Matching, match_segmentations

logger = logging.getLogger(__name__)


class StreamError(RuntimeError):
    pass


@dataclass
class StreamParams:
    k: float = 200.0
    delta: int = 400
    sigma: float = 0.5
    radius_frac: float = 0.1
    tau_safe: float = 0.3
    erode_iters: int = 2
    theta_new: int | None = None  # None: same as delta
    c_sem: float = 50.0
    flow_max_frac: float = 0.1

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if self.delta < 0 or self.sigma < 0:
            raise ValueError("delta and sigma must be non-negative")
        for name in ("radius_frac", "flow_max_frac", "tau_safe"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.erode_iters < 0 or self.c_sem < 0:
            raise ValueError("erode_iters and c_sem must be non-negative")

    @property
    def min_new_region(self) -> int:
        return self.delta if self.theta_new is None else self.theta_new

    def radius(self, width: int, height: int) -> float:
        return self.radius_frac * math.hypot(width, height)

    def flow_max(self, width: int, height: int) -> float:
        return self.flow_max_frac * math.hypot(width, height)


@dataclass
class SemanticMap:
    """Per-pixel class ids, with optional class names and per-class scores (H, W, C)."""

    classes: np.ndarray
    names: dict[int, str] | None = None
    scores: np.ndarray | None = None

    def __post_init__(self):
        self.classes = np.asarray(self.classes, dtype=np.int64)
        if self.classes.ndim != 2:
            raise ValueError("semantic map must be 2-D")
        if self.classes.size and self.classes.min() < 0:
            raise ValueError("class ids must be non-negative")
        if self.names is not None:
            unknown = set(np.unique(self.classes).tolist()) - set(self.names)
            if unknown:
                raise ValueError(f"class ids {sorted(unknown)} are not in the legend")

    def hard(self) -> np.ndarray:
        """Class per pixel; with scores, the argmax class."""
        if self.scores is not None:
            return np.argmax(self.scores, axis=-1).astype(np.int64)
        return self.classes


def load_legend(path) -> dict[int, str]:
    names = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cid, _, name = line.partition(",")
        names[int(cid)] = name.strip()
    return names


def load_semantic_map(path, legend: dict[int, str] | None = None) -> SemanticMap:
    return SemanticMap(load_pgm(path), legend)


@dataclass
class FlowMap:
    labels: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    valid: np.ndarray

    @classmethod
    def empty(cls) -> "FlowMap":
        return cls(np.zeros(0, np.int64), np.zeros(0), np.zeros(0), np.zeros(0, bool))

    def rows(self):
        return zip(self.labels.tolist(), self.dx.tolist(), self.dy.tolist(), self.valid.tolist())

    def get(self, label: int) -> tuple[float, float, bool]:
        i = int(np.searchsorted(self.labels, label))
        if i >= len(self.labels) or self.labels[i] != label:
            raise KeyError(label)
        return float(self.dx[i]), float(self.dy[i]), bool(self.valid[i])

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.dx, self.dy)


def compute_flow(prev: Segmentation, cur: Segmentation) -> FlowMap:
    """Centroid displacement of every current region whose label existed before."""
    labels = cur.region_labels
    pos = np.searchsorted(prev.region_labels, labels)
    pos_c = np.minimum(pos, prev.n_regions - 1)
    valid = (pos < prev.n_regions) & (prev.region_labels[pos_c] == labels)
    d = np.where(valid[:, None], cur.centroids - prev.centroids[pos_c], 0.0)
    return FlowMap(labels.copy(), d[:, 0].copy(), d[:, 1].copy(), valid)


def region_votes(seg: Segmentation, sem: SemanticMap) -> np.ndarray:
    """Majority class per table row of ``seg``; ties go to the smaller class id."""
    hard = sem.hard()
    if hard.shape != seg.labels.shape:
        raise ValueError("semantic map does not match the segmentation size")
    n_cls = int(hard.max()) + 1
    votes = np.bincount(
        seg.index.ravel() * n_cls + hard.ravel(), minlength=seg.n_regions * n_cls
    ).reshape(seg.n_regions, n_cls)
    return np.argmax(votes, axis=1)


def smooth_region_classes(
    cur: Segmentation,
    flow: FlowMap,
    prev_sem: dict[int, int],
    sem_pred: SemanticMap,
    flow_max: float,
) -> dict[int, int]:
    """Class per current region: inherited when tracked with plausible motion, else voted."""
    voted = region_votes(cur, sem_pred)
    out = {}
    mag = flow.magnitude()
    for row, label in enumerate(cur.region_labels.tolist()):
        if flow.valid[row] and mag[row] <= flow_max and label in prev_sem:
            out[label] = prev_sem[label]
        else:
            out[label] = int(voted[row])
    return out


def render_region_classes(seg: Segmentation, classes: dict[int, int], names=None) -> SemanticMap:
    table = np.array([classes[lab] for lab in seg.region_labels.tolist()], dtype=np.int64)
    return SemanticMap(table[seg.index], names)


def propagate_semantics(
    cur: Segmentation,
    flow: FlowMap,
    prev_sem: dict[int, int],
    sem_pred: SemanticMap,
    flow_max: float,
) -> SemanticMap:
    classes = smooth_region_classes(cur, flow, prev_sem, sem_pred, flow_max)
    return render_region_classes(cur, classes, sem_pred.names)


@dataclass
class StreamState:
    params: StreamParams = field(default_factory=StreamParams)
    prev: Segmentation | None = None
    allocator: LabelAllocator = field(default_factory=LabelAllocator)
    prev_sem: dict[int, int] | None = None
    shape: tuple[int, int] | None = None
    t: int = 0


@dataclass
class FrameResult:
    t: int
    segmentation: Segmentation
    independent: Segmentation
    flow: FlowMap
    semantics: SemanticMap | None
    matching: Matching | None = None
    markers: MarkerMap | None = None
    safety: SafetyReport | None = None
    fresh: list[int] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


class _Stopwatch:
    def __init__(self):
        self.ms: dict[str, float] = {}
        self._t = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.ms[stage] = self.ms.get(stage, 0.0) + (now - self._t) * 1e3
        self._t = now


def process_frame(
    state: StreamState, frame: Frame, sem_pred: SemanticMap | None = None
) -> FrameResult:
    """Segment ``frame`` consistently with the stream so far and advance ``state``."""
    p = state.params
    if state.shape is None:
        state.shape = frame.shape
    elif frame.shape != state.shape:
        raise StreamError(f"frame size changed from {state.shape} to {frame.shape} at t={state.t}")
    if sem_pred is not None and sem_pred.classes.shape != frame.shape:
        raise StreamError("semantic prediction does not match the frame size")
    h, w = frame.shape
    sw = _Stopwatch()

    smoothed = gaussian_smooth(frame, p.sigma)
    sw.lap("smooth")
    g = build_graph(smoothed)
    if sem_pred is not None and p.c_sem > 0:
        g = add_semantic_contour_bonus(g, sem_pred.hard(), p.c_sem)
    sw.lap("graph")
    forest = remove_small_regions(segment_fh(g, p.k), g, p.delta)
    sw.lap("fh")

    alloc = state.allocator
    result_kw: dict = {}
    if state.prev is None:
        base = alloc.next_label
        seg = forest_to_segmentation(forest, smoothed, base=base)
        alloc.allocate(seg.n_regions)
        independent = seg
        flow = FlowMap.empty()
        fresh = list(range(base, base + seg.n_regions))
        sw.lap("regions")
    else:
        independent = forest_to_segmentation(forest, smoothed, base=0)
        sw.lap("regions")
        matching = match_segmentations(state.prev, independent, p.radius(w, h))
        sw.lap("match")
        markers = generate_markers(matching, state.prev, independent, alloc, p.min_new_region)
        report = safety_check(markers, independent, p.tau_safe)
        if not report.passed:
            logger.debug("t=%d safety check failed (%.3f), eroding", state.t, report.disagreement)
            markers = erode_correct(markers, independent, report, p.erode_iters, alloc)
        sw.lap("markers")
        labeling = msf_label(g, markers, alloc)
        sw.lap("msf")
        seg = Segmentation(labeling.labels, smoothed.pixels)
        sw.lap("regions")
        flow = compute_flow(state.prev, seg)
        fresh = markers.fresh + labeling.fresh
        result_kw = dict(matching=matching, markers=markers, safety=report)
    sw.lap("flow")

    semantics = None
    if sem_pred is not None:
        if state.prev_sem is None or state.prev is None:
            voted = region_votes(seg, sem_pred)
            classes = dict(zip(seg.region_labels.tolist(), voted.tolist()))
        else:
            classes = smooth_region_classes(seg, flow, state.prev_sem, sem_pred, p.flow_max(w, h))
        semantics = render_region_classes(seg, classes, sem_pred.names)
        # entries of vanished labels are dropped here
        state.prev_sem = classes
    else:
        state.prev_sem = None
    sw.lap("semantics")

    result = FrameResult(
        state.t, seg, independent, flow, semantics, fresh=fresh, timings=sw.ms, **result_kw
    )
    state.prev = seg
    state.t += 1
    return result


def run_stream(frames, params: StreamParams | None = None, semantics=None):
    """Process an iterable of frames (and optional aligned predictions) in order."""
    state = StreamState(params or StreamParams())
    sems = iter(semantics) if semantics is not None else None
    for frame in frames:
        sem = next(sems) if sems is not None else None
        yield process_frame(state, frame, sem)
