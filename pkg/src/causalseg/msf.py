"""Seeded minimum spanning forest labeling and a brute-force energy oracle.

The labeling scans edges in the order already computed for the frame and
grows seeded components with union-find; an edge joining two components
that carry different labels is never contracted (it lies on the cut).

The oracle evaluates

    E(x) = sum_edges s_ij^p |x_i - x_j|^q + unary

with similarities s_ij = omega_max - w_ij and hard seeds (infinite unary
penalty on any violated seed), and minimizes it by enumeration. For large p
and distinct weights its minimizer is the forest cut above.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .markers import UNSEEDED, LabelAllocator, MarkerMap

MAX_ORACLE_NODES = 10
MAX_ORACLE_LABELS = 3


@dataclass(frozen=True)
class EdgeGraph:
    """Plain weighted graph; the MSF scan needs ``weight`` non-decreasing."""

    n_nodes: int
    a: np.ndarray
    b: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "EdgeGraph":
        arr = list(edges)
        a = np.array([e[0] for e in arr], dtype=np.int64)
        b = np.array([e[1] for e in arr], dtype=np.int64)
        w = np.array([e[2] for e in arr], dtype=np.float64)
        return cls(n_nodes, a, b, w)

    def sorted(self) -> "EdgeGraph":
        order = np.argsort(self.weight, kind="stable")
        return EdgeGraph(self.n_nodes, self.a[order], self.b[order], self.weight[order])


@dataclass
class SeededLabeling:
    labels: np.ndarray
    from_seed: np.ndarray  # True where the label was a seed, False where propagated
    fresh: list[int]


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
def _msf_kernel(n, a, b, seeds, fresh_base):
    parent = np.arange(n)
    size = np.ones(n, np.int64)
    label = seeds.copy()
    for e in range(a.shape[0]):
        ra = _find(parent, a[e])
        rb = _find(parent, b[e])
        if ra == rb:
            continue
        la = label[ra]
        lb = label[rb]
        if la >= 0 and lb >= 0 and la != lb:
            continue
        known = la if la >= 0 else lb
        if size[ra] > size[rb] or (size[ra] == size[rb] and ra < rb):
            parent[rb] = ra
            size[ra] += size[rb]
            label[ra] = known
        else:
            parent[ra] = rb
            size[rb] += size[ra]
            label[rb] = known
    out = np.empty(n, np.int64)
    nxt = fresh_base
    for i in range(n):
        r = _find(parent, i)
        if label[r] < 0:
            # component without any seed
            label[r] = nxt
            nxt += 1
        out[i] = label[r]
    return out, nxt - fresh_base


def msf_on_edges(g, seeds: np.ndarray, alloc: LabelAllocator | None = None) -> SeededLabeling:
    """Seeded MSF over any graph whose edges are already in ascending order."""
    seeds = np.ascontiguousarray(seeds, dtype=np.int64).ravel()
    if seeds.shape[0] != g.n_nodes:
        raise ValueError("seed map size does not match the graph")
    seeded = seeds != UNSEEDED
    if not seeded.any():
        raise ValueError("seeded labeling needs at least one seed")
    if np.any(seeds[seeded] < 0):
        raise ValueError("seed labels must be non-negative")
    if np.any(np.diff(g.weight) < 0):
        raise ValueError("graph edges are not in ascending order")
    base = alloc.next_label if alloc is not None else int(seeds.max()) + 1
    labels, n_fresh = _msf_kernel(g.n_nodes, g.a, g.b, seeds, base)
    if alloc is not None:
        alloc.allocate(n_fresh)
    return SeededLabeling(labels, seeded, list(range(base, base + n_fresh)))


def msf_label(g, markers: MarkerMap | np.ndarray, alloc: LabelAllocator | None = None) -> SeededLabeling:
    """Label every pixel of ``g`` from the seeds, reusing the graph's stored edge order.

    Returns per-pixel labels shaped like the seed map.
    """
    seed = markers.seed if isinstance(markers, MarkerMap) else np.asarray(markers)
    res = msf_on_edges(g, seed, alloc)
    shape = seed.shape
    return SeededLabeling(res.labels.reshape(shape), res.from_seed.reshape(shape), res.fresh)


def cut_edges(g, labels: np.ndarray) -> set[tuple[int, int]]:
    lab = np.asarray(labels).ravel()
    return {
        (int(min(p, q)), int(max(p, q)))
        for p, q in zip(g.a.tolist(), g.b.tolist())
        if lab[p] != lab[q]
    }


# --- energy oracle -----------------------------------------------------------------

@dataclass(frozen=True)
class EnergyParams:
    p: float = 20.0
    q: float = 1.0
    omega_max: float | None = None  # defaults to the graph's largest weight + 1

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if self.q < 1:
            raise ValueError("q must be >= 1")

    def similarity(self, weight: np.ndarray) -> np.ndarray:
        # +1 keeps the heaviest edge's similarity positive, so cutting it is not free
        top = float(np.max(weight)) + 1.0 if self.omega_max is None else self.omega_max
        return top - np.asarray(weight, dtype=np.float64)


def _exact(params: EnergyParams) -> bool:
    return float(params.p).is_integer() and float(params.q).is_integer()


def _edge_factors(g, params: EnergyParams) -> list:
    """Per-edge s_ij^p. Exact rationals for integer exponents: at p = 20 a float sum
    silently drops the small terms and reports spurious ties."""
    sim = params.similarity(g.weight)
    if _exact(params):
        return [Fraction(float(s)) ** int(params.p) for s in sim.tolist()]
    return (sim**params.p).tolist()


def _pairwise(x, g, factors, params: EnergyParams):
    total = 0
    q = int(params.q) if _exact(params) else params.q
    for f, a, b in zip(factors, g.a.tolist(), g.b.tolist()):
        d = abs(x[a] - x[b])
        if d:
            total += f * d**q
    return total


def energy(x, g, seeds, params: EnergyParams) -> float:
    """Pairwise smoothness on similarity weights plus the hard-seed unary term.

    Returns ``math.inf`` when ``x`` disagrees with any seed.
    """
    x = np.asarray(x).ravel()
    seeds = np.asarray(seeds).ravel()
    seeded = seeds != UNSEEDED
    if np.any(x[seeded] != seeds[seeded]):
        return math.inf
    return float(_pairwise(x.tolist(), g, _edge_factors(g, params), params))


class BruteForceResult(NamedTuple):
    labeling: np.ndarray
    energy: float
    ties: int  # other labelings reaching the same minimum


def brute_force_argmin(g, seeds, params: EnergyParams) -> BruteForceResult:
    """Minimize ``energy`` over every seed-consistent labeling of a small graph."""
    seeds = np.asarray(seeds, dtype=np.int64).ravel()
    if g.n_nodes > MAX_ORACLE_NODES:
        raise ValueError(f"oracle refuses graphs above {MAX_ORACLE_NODES} nodes")
    alphabet = sorted(set(seeds[seeds != UNSEEDED].tolist()))
    if not alphabet:
        raise ValueError("oracle needs at least one seed")
    if len(alphabet) > MAX_ORACLE_LABELS:
        raise ValueError(f"oracle refuses more than {MAX_ORACLE_LABELS} seed labels")
    free = np.flatnonzero(seeds == UNSEEDED).tolist()
    factors = _edge_factors(g, params)
    best_e, best_x, ties = None, None, 0
    x = seeds.tolist()
    for combo in itertools.product(alphabet, repeat=len(free)):
        for i, v in zip(free, combo):
            x[i] = v
        e = _pairwise(x, g, factors, params)
        if best_e is None or e < best_e:
            best_e, best_x, ties = e, list(x), 0
        elif e == best_e:
            ties += 1
    return BruteForceResult(np.array(best_x, dtype=np.int64), float(best_e), ties)
