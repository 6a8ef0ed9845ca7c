"""Synthetic scenes with known motion, plus independent oracles for tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imageio import Frame


@dataclass
class Shape:
    """A moving rectangle or disk. Position is the top-left corner (rect) or center (disk)."""

    kind: str
    x: float
    y: float
    color: tuple[float, float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    w: float = 0.0
    h: float = 0.0
    radius: float = 0.0
    exiting: bool = False

    def extent(self, t: int) -> tuple[float, float, float, float]:
        ox = self.x + self.velocity[0] * t
        oy = self.y + self.velocity[1] * t
        if self.kind == "disk":
            return ox - self.radius, oy - self.radius, ox + self.radius, oy + self.radius
        return ox, oy, ox + self.w, oy + self.h

    def mask(self, t: int, width: int, height: int) -> np.ndarray:
        ox = self.x + self.velocity[0] * t
        oy = self.y + self.velocity[1] * t
        ys, xs = np.mgrid[0:height, 0:width]
        if self.kind == "rect":
            return (xs >= ox) & (xs < ox + self.w) & (ys >= oy) & (ys < oy + self.h)
        if self.kind == "disk":
            return (xs - ox) ** 2 + (ys - oy) ** 2 <= self.radius**2
        raise ValueError(f"unknown shape kind {self.kind!r}")


@dataclass
class SceneSpec:
    width: int
    height: int
    background: tuple[float, float, float] = (40.0, 40.0, 40.0)
    shapes: list[Shape] = field(default_factory=list)
    noise: float = 0.0
    frames: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.width < 2 or self.height < 2 or self.frames < 1:
            raise ValueError("scene must be at least 2x2 with one frame")
        for i, s in enumerate(self.shapes):
            if s.exiting:
                continue
            # linear motion: the extremes are at the first and last frame
            for t in (0, self.frames - 1):
                x0, y0, x1, y1 = s.extent(t)
                if x0 < 0 or y0 < 0 or x1 > self.width or y1 > self.height:
                    raise ValueError(f"shape {i} leaves the canvas at t={t}; mark it exiting")

    def to_text(self) -> str:
        lines = [
            f"width = {self.width}",
            f"height = {self.height}",
            f"background = {_fmt_tuple(self.background)}",
            f"noise = {self.noise!r}",
            f"frames = {self.frames}",
            f"seed = {self.seed}",
        ]
        for s in self.shapes:
            parts = [f"shape = {s.kind}", f"x={s.x!r}", f"y={s.y!r}"]
            if s.kind == "rect":
                parts += [f"w={s.w!r}", f"h={s.h!r}"]
            else:
                parts.append(f"radius={s.radius!r}")
            parts += [
                f"color={_fmt_tuple(s.color)}",
                f"vx={s.velocity[0]!r}",
                f"vy={s.velocity[1]!r}",
            ]
            if s.exiting:
                parts.append("exiting=1")
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SceneSpec":
        kv: dict[str, str] = {}
        shapes: list[Shape] = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "shape":
                kind, *attrs = value.split()
                a = dict(item.split("=", 1) for item in attrs)
                shapes.append(
                    Shape(
                        kind=kind,
                        x=float(a["x"]),
                        y=float(a["y"]),
                        w=float(a.get("w", 0)),
                        h=float(a.get("h", 0)),
                        radius=float(a.get("radius", 0)),
                        color=_parse_tuple(a["color"]),
                        velocity=(float(a.get("vx", 0)), float(a.get("vy", 0))),
                        exiting=a.get("exiting", "0") == "1",
                    )
                )
            else:
                kv[key] = value
        return cls(
            width=int(kv["width"]),
            height=int(kv["height"]),
            background=_parse_tuple(kv.get("background", "40,40,40")),
            shapes=shapes,
            noise=float(kv.get("noise", 0)),
            frames=int(kv.get("frames", 10)),
            seed=int(kv.get("seed", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_text(Path(path).read_text())


def _fmt_tuple(t) -> str:
    return ",".join(repr(float(v)) for v in t)


def _parse_tuple(s: str) -> tuple[float, float, float]:
    return tuple(float(v) for v in s.split(","))


@dataclass
class RenderedScene:
    frames: list[Frame]
    gt_labels: list[np.ndarray]
    # per frame t >= 1: shape id -> (dx, dy) from t-1 to t
    gt_flow: list[dict[int, tuple[float, float]]]


def render_scene(spec: SceneSpec) -> RenderedScene:
    """Render frames, ground-truth label maps (0 = background, i+1 = shape i) and flow."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    frames, gts, flows = [], [], []
    for t in range(spec.frames):
        img = np.empty((spec.height, spec.width, 3), np.float64)
        img[:] = spec.background
        gt = np.zeros((spec.height, spec.width), np.int64)
        for i, s in enumerate(spec.shapes):
            m = s.mask(t, spec.width, spec.height)
            img[m] = s.color
            gt[m] = i + 1
        if spec.noise > 0:
            img += rng.uniform(-spec.noise, spec.noise, size=img.shape)
        img = np.clip(np.rint(img), 0, 255)
        frames.append(Frame(img))
        gts.append(gt)
        present = set(np.unique(gt).tolist())
        flows.append(
            {}
            if t == 0
            else {i + 1: tuple(map(float, s.velocity)) for i, s in enumerate(spec.shapes) if i + 1 in present}
        )
    return RenderedScene(frames, gts, flows)


def translating_square_scene(
    width: int = 96,
    height: int = 64,
    side: int = 20,
    velocity: tuple[float, float] = (3.0, 0.0),
    frames: int = 10,
    noise: float = 5.0,
    seed: int = 0,
) -> SceneSpec:
    """A single bright square crossing a dark background."""
    return SceneSpec(
        width=width,
        height=height,
        background=(40.0, 60.0, 90.0),
        shapes=[
            Shape(
                "rect",
                x=8.0,
                y=float((height - side) // 2),
                w=float(side),
                h=float(side),
                color=(230.0, 180.0, 60.0),
                velocity=velocity,
            )
        ],
        noise=noise,
        frames=frames,
        seed=seed,
    )


# --- independent FH oracle -------------------------------------------------------

def _naive_edges(pixels: np.ndarray) -> list[tuple[float, int, int]]:
    h, w = pixels.shape[:2]
    edges = []
    for y in range(h):
        for x in range(w):
            for dy, dx in ((0, 1), (1, 0), (1, 1), (1, -1)):
                ny, nx = y + dy, x + dx
                if ny >= h or nx < 0 or nx >= w:
                    continue
                p, q = pixels[y, x], pixels[ny, nx]
                dr, dg, db = float(p[0] - q[0]), float(p[1] - q[1]), float(p[2] - q[2])
                edges.append((math.sqrt(dr * dr + dg * dg + db * db), y * w + x, ny * w + nx))
    # list.sort is stable: ties keep generation order
    edges.sort(key=lambda e: e[0])
    return edges


def naive_merge_ok(weight: float, int_x: float, size_x: int, int_y: float, size_y: int, k: float) -> bool:
    return weight <= min(int_x + k / size_x, int_y + k / size_y)


def naive_fh(frame: Frame, k: float, delta: int) -> frozenset[frozenset[int]]:
    """Explicit region sets, re-evaluating the merge predicate per edge. O(E*V)."""
    pixels = frame.pixels
    n = pixels.shape[0] * pixels.shape[1]
    region_of = list(range(n))
    members: dict[int, set[int]] = {i: {i} for i in range(n)}
    internal: dict[int, float] = {i: 0.0 for i in range(n)}
    edges = _naive_edges(pixels)

    def merge(x: int, y: int) -> int:
        keep, gone = (x, y) if x < y else (y, x)
        members[keep] = members[keep] | members.pop(gone)
        for p in members[keep]:
            region_of[p] = keep
        internal.pop(gone)
        return keep

    for wgt, p, q in edges:
        x, y = region_of[p], region_of[q]
        if x == y:
            continue
        if naive_merge_ok(wgt, internal[x], len(members[x]), internal[y], len(members[y]), k):
            r = merge(x, y)
            internal[r] = wgt
    for _, p, q in edges:
        x, y = region_of[p], region_of[q]
        if x != y and (len(members[x]) < delta or len(members[y]) < delta):
            merge(x, y)
    return frozenset(frozenset(s) for s in members.values())


# --- semantic flicker ------------------------------------------------------------------

def flicker_labels(
    gt_sem: list[np.ndarray],
    error_rate: float,
    seed: int,
    regions: list[np.ndarray] | None = None,
    n_classes: int | None = None,
    start: int = 0,
) -> list[np.ndarray]:
    """Per frame, flip each region's class with probability ``error_rate``.

    ``regions`` are the ground-truth region maps (defaults to the class maps).
    A flipped region takes a different class drawn uniformly. Frames before
    ``start`` are returned unchanged.
    """
    rng = np.random.default_rng(seed)
    if n_classes is None:
        n_classes = max(int(np.max(m)) for m in gt_sem) + 1
    n_classes = max(n_classes, 2)
    out = []
    for t, sem in enumerate(gt_sem):
        sem = np.asarray(sem, dtype=np.int64)
        reg = sem if regions is None else np.asarray(regions[t])
        ids = np.unique(reg)
        flips = rng.random(len(ids)) < error_rate
        shifts = rng.integers(1, n_classes, size=len(ids))
        noisy = sem.copy()
        if t >= start and error_rate > 0:
            for rid, flip, shift in zip(ids, flips, shifts):
                if flip:
                    m = reg == rid
                    noisy[m] = (sem[m] + shift) % n_classes
        out.append(noisy)
    return out


def busy_scene(width: int, height: int, frames: int = 10, n_shapes: int = 12, seed: int = 0) -> SceneSpec:
    """Random rectangles and disks drifting over a noisy background (benchmark input)."""
    rng = np.random.default_rng(seed)
    shapes = []
    span = max(frames - 1, 1)
    for _ in range(n_shapes):
        vx, vy = rng.uniform(-3, 3, size=2)
        color = tuple(float(c) for c in rng.integers(0, 256, size=3))
        if rng.random() < 0.5:
            w, h = (float(v) for v in rng.integers(width // 12, width // 4, size=2))
            x = rng.uniform(max(0, -vx * span), width - w - max(0, vx * span))
            y = rng.uniform(max(0, -vy * span), height - h - max(0, vy * span))
            shapes.append(Shape("rect", float(x), float(y), color, (float(vx), float(vy)), w=w, h=h))
        else:
            r = float(rng.integers(height // 16, height // 6))
            x = rng.uniform(r + max(0, -vx * span), width - r - max(0, vx * span))
            y = rng.uniform(r + max(0, -vy * span), height - r - max(0, vy * span))
            shapes.append(Shape("disk", float(x), float(y), color, (float(vx), float(vy)), radius=r))
    return SceneSpec(width, height, (70.0, 90.0, 110.0), shapes, noise=6.0, frames=frames, seed=seed)


def random_seeded_graph(rng: np.random.Generator, max_nodes: int = 8, n_seeds: int = 2):
    """Connected random graph with distinct integer weights, sorted ascending, plus a seed vector.

    Returns ``(EdgeGraph, seeds)``; seeds hold labels ``0..n_seeds-1`` on distinct nodes.
    """
    from .msf import EdgeGraph

    n = int(rng.integers(max(n_seeds, 3), max_nodes + 1))
    pairs = {(int(rng.integers(0, v)), v) for v in range(1, n)}  # random spanning tree
    all_pairs = [(a, b) for b in range(n) for a in range(b)]
    for a, b in all_pairs:
        if rng.random() < 0.35:
            pairs.add((a, b))
    pairs = sorted(pairs)
    ranks = rng.permutation(len(pairs)) + 1
    g = EdgeGraph.from_edges(n, [(a, b, float(r)) for (a, b), r in zip(pairs, ranks)]).sorted()
    seeds = np.full(n, -1, np.int64)
    seeds[rng.choice(n, size=n_seeds, replace=False)] = np.arange(n_seeds)
    return g, seeds
