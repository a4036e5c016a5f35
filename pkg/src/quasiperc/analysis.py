"""Geometry of stable clusters: chain convexity, boundary gons, fortresses, gon counting."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .dynamics import TWO_NEIGHBOUR, Configuration, RuleSpec, arc_mask
from .errors import IndeterminateError, InvalidInputError, MarginError
from .graph import AdjacencyGraph, chain_index, edge_neighbours, vertex_neighbours

log = logging.getLogger(__name__)

YES, NO, INDETERMINATE = "yes", "no", "indeterminate"


@dataclass
class ChainGon:
    cycle: tuple
    segments: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.cycle)

    @property
    def sides(self) -> int:
        return len(self.segments)

    def is_2d_gon(self, d: int) -> bool:
        return self.sides <= 2 * d

    def is_convex(self, d: int) -> bool:
        runs = defaultdict(int)
        for fam, _, _ in self.segments:
            runs[fam] += 1
        return self.sides <= 2 * d and all(k <= 2 for k in runs.values())

    def to_dict(self) -> dict:
        return {"cycle": list(self.cycle), "segments": [list(s) for s in self.segments]}


def _arc_family(graph: AdjacencyGraph, u: int, v: int) -> int:
    a, b = graph.indptr[u], graph.indptr[u + 1]
    k = a + int(np.searchsorted(graph.indices[a:b], v))
    if k >= b or graph.indices[k] != v:
        raise InvalidInputError(f"tiles {u} and {v} are not adjacent")
    return int(graph.family[k])


def segment_decomposition(graph: AdjacencyGraph, cycle: Sequence[int]) -> list[tuple]:
    """Maximal runs of equal shared-edge family around a tile cycle.

    Each run ``(family, i, j)`` covers cycle tiles i..j (indices mod length),
    consecutive runs overlapping in one tile.
    """
    n = len(cycle)
    fams = [_arc_family(graph, cycle[k], cycle[(k + 1) % n]) for k in range(n)]
    starts = [k for k in range(n) if fams[k] != fams[k - 1]]
    if not starts:
        return [(fams[0], 0, 0)]
    out = []
    for a, k in enumerate(starts):
        nxt = starts[(a + 1) % len(starts)]
        out.append((fams[k], k, nxt % n))
    return out


def make_gon(graph: AdjacencyGraph, cycle: Sequence[int]) -> ChainGon:
    return ChainGon(tuple(int(c) for c in cycle), segment_decomposition(graph, cycle))


def validate_gon(graph: AdjacencyGraph, gon: ChainGon) -> list[str]:
    """Problems with a gon as a chain polygon: distinctness, closure, chords, cover."""
    cyc = list(gon.cycle)
    n = len(cyc)
    nbrs = graph.neighbour_sets
    errs = []
    if len(set(cyc)) != n:
        errs.append("repeated tile")
    for k in range(n):
        if cyc[(k + 1) % n] not in nbrs[cyc[k]]:
            errs.append(f"tiles {cyc[k]} and {cyc[(k + 1) % n]} not adjacent")
    for a in range(n):
        for b in range(a + 2, n):
            if a == 0 and b == n - 1:
                continue
            if cyc[b] in nbrs[cyc[a]]:
                errs.append(f"chord between {cyc[a]} and {cyc[b]}")
    if graph.is_rhombus and n >= 3:
        covered = set()
        for _, i, j in gon.segments:
            k = i
            covered.add(k)
            while k != j:
                k = (k + 1) % n
                covered.add(k)
        if len(covered) != n:
            errs.append("segments do not cover the cycle")
    return errs


@dataclass
class ClusterReport:
    tiles: tuple
    touches_boundary: bool
    chain_convex: str = INDETERMINATE
    witness: dict | None = None
    boundary_segments: int | None = None
    enclosing_gon: ChainGon | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tiles": list(self.tiles), "touches_boundary": self.touches_boundary,
                "chain_convex": self.chain_convex, "witness": self.witness,
                "boundary_segments": self.boundary_segments,
                "enclosing_gon": None if self.enclosing_gon is None else self.enclosing_gon.to_dict(),
                "notes": list(self.notes)}


def _vertex_csr(graph: AdjacencyGraph) -> csr_matrix:
    m = graph.__dict__.get("_vertex_csr")
    if m is None:
        va = graph.vertex_adjacency
        rows = np.repeat(np.arange(len(graph)), [len(s) for s in va])
        cols = np.fromiter((v for s in va for v in sorted(s)), dtype=np.int64, count=len(rows))
        m = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(graph), len(graph)))
        graph._vertex_csr = m
    return m


def clusters(config: Configuration, connectivity: str = "edge") -> list[list[int]]:
    """Connected components of infected tiles, ordered by smallest member."""
    g = config.graph
    on = np.flatnonzero(config.state)
    if not on.size:
        return []
    if connectivity == "edge":
        A = g.csr_matrix
    elif connectivity == "vertex":
        A = _vertex_csr(g)
    else:
        raise InvalidInputError(f"connectivity must be 'edge' or 'vertex', not {connectivity!r}")
    sub = A[on][:, on]
    k, lab = connected_components(sub, directed=False)
    groups = [[] for _ in range(k)]
    for t, c in zip(on.tolist(), lab.tolist()):
        groups[c].append(t)
    return sorted(groups, key=lambda grp: grp[0])


def _touches(graph: AdjacencyGraph, tiles: Iterable[int]) -> bool:
    interior = graph.interior
    return any(not interior[t] for t in tiles)


def check_chain_convex(graph: AdjacencyGraph, S: Iterable[int], margin: int = 2) -> ClusterReport:
    """Test both chain-convexity conditions on every chain meeting S or its vertex boundary."""
    graph.require_rhombus("chain convexity")
    S = set(int(s) for s in S)
    if not S:
        raise InvalidInputError("empty tile set")
    vn = vertex_neighbours(graph, S)
    en = edge_neighbours(graph, S)
    rep = ClusterReport(tuple(sorted(S)), _touches(graph, S | vn))
    if rep.touches_boundary:
        rep.notes.append("cluster or its vertex boundary reaches the patch edge")
        return rep
    idx = chain_index(graph)
    per_chain: dict = defaultdict(lambda: ([], [], []))
    for group, tiles in enumerate((S, vn, en)):
        for t in tiles:
            for slot in (0, 1):
                per_chain[int(idx.chain_of[t, slot])][group].append(int(idx.pos_of[t, slot]))
    truncated = False
    for cid in sorted(per_chain):
        sp, vp, ep = (sorted(x) for x in per_chain[cid])
        length = len(idx.chains[cid])
        lo = min(sp + vp)
        hi = max(sp + vp)
        if lo - margin < 0 or hi + margin > length - 1:
            truncated = True
            continue
        fam = idx.chains[cid].family
        if sp and sp[-1] - sp[0] + 1 != len(sp):
            rep.chain_convex = NO
            rep.witness = {"chain": cid, "family": fam, "item": 1, "cluster_positions": sp}
            return rep
        if len(vp) >= 2:
            i, j = vp[0], vp[-1]
            if not sp:
                ok = set(range(i + 1, j)) <= set(ep)
            else:
                ok = len(vp) == 2 and ep == [i, j] and sp == list(range(i + 1, j))
            if not ok:
                rep.chain_convex = NO
                rep.witness = {"chain": cid, "family": fam, "item": 2, "cluster_positions": sp,
                               "vertex_neighbour_positions": vp, "edge_neighbour_positions": ep}
                return rep
    rep.chain_convex = INDETERMINATE if truncated else YES
    if truncated:
        rep.notes.append(f"a relevant chain ends within {margin} tiles of its inspected window")
    return rep


def _order_cycle(graph: AdjacencyGraph, ring: set) -> list[int] | None:
    """Order ``ring`` as an induced cycle, counter-clockwise; None if it is not one."""
    nbrs = graph.neighbour_sets
    if len(ring) < 3:
        return None
    inner = {t: [u for u in nbrs[t] if u in ring] for t in ring}
    if any(len(v) != 2 for v in inner.values()):
        return None
    start = min(ring)
    order = [start]
    prev, cur = start, min(inner[start])
    while cur != start:
        order.append(cur)
        a, b = inner[cur]
        prev, cur = cur, (b if a == prev else a)
        if len(order) > len(ring):
            return None
    if len(order) != len(ring):
        return None
    pts = graph.positions[order]
    area = np.sum(pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1])
    if area < 0:
        order = [order[0]] + order[:0:-1]
    return order


def boundary_decomposition(graph: AdjacencyGraph, S: Iterable[int], margin: int = 2) -> ClusterReport:
    """Chain-convexity verdict plus the exterior tile boundary as a chain gon."""
    rep = check_chain_convex(graph, S, margin)
    if rep.touches_boundary:
        return rep
    ring = vertex_neighbours(graph, rep.tiles)
    order = _order_cycle(graph, ring)
    if order is None:
        rep.notes.append("vertex boundary is not an induced cycle")
        return rep
    gon = make_gon(graph, order)
    rep.enclosing_gon = gon
    rep.boundary_segments = gon.sides
    if rep.chain_convex == YES and gon.sides > 2 * graph.patch.d:
        rep.notes.append(f"boundary has {gon.sides} segments > 2d")
    return rep


def is_fortress(graph: AdjacencyGraph, R: Iterable[int], rule: RuleSpec = TWO_NEIGHBOUR) -> bool:
    """Every tile of R has at most m-1 counted neighbours outside R."""
    R = set(int(r) for r in R)
    if not R:
        raise InvalidInputError("empty tile set")
    if _touches(graph, R):
        raise IndeterminateError("fortress candidate reaches the patch edge")
    counted = _counted_lists(graph, rule)
    return all(sum(1 for v in counted[t] if v not in R) <= rule.m - 1 for t in R)


def _counted_lists(graph: AdjacencyGraph, rule: RuleSpec) -> list[list[int]]:
    cache = graph.__dict__.setdefault("_counted", {})
    key = (rule.m, rule.allowed)
    if key not in cache:
        mask = arc_mask(graph, rule)
        cache[key] = [graph.indices[a:b][mask[a:b]].tolist()
                      for a, b in zip(graph.indptr[:-1], graph.indptr[1:])]
    return cache[key]


@dataclass
class FortressSearch:
    fortresses: list
    sets_visited: int
    seeds_used: list
    skipped: list

    def to_dict(self) -> dict:
        return {"fortresses": [list(f) for f in self.fortresses], "sets_visited": self.sets_visited,
                "seeds_used": list(self.seeds_used), "skipped": list(self.skipped)}


def connected_sets(graph: AdjacencyGraph, root: int, kmax: int, forbidden: Iterable[int] = ()):
    """Yield every connected node set containing ``root`` (size <= kmax) exactly once.

    Extension-set scheme: a candidate joins only through the exclusive
    neighbourhood of the newest node, and ``forbidden`` nodes never enter.
    """
    adj = graph.adjacency
    ext0 = [u for u in adj[root] if u not in forbidden]
    blocked0 = set(forbidden) | {root} | set(adj[root])
    sub = [root]

    def rec(ext, blocked):
        yield tuple(sub)
        if len(sub) == kmax:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            new = [u for u in adj[w] if u not in blocked]
            sub.append(w)
            yield from rec(ext + new, blocked | set(adj[w]))
            sub.pop()

    yield from rec(ext0, blocked0)


def fortress_search(graph: AdjacencyGraph, seeds: Iterable[int], kmax: int = 8,
                    rule: RuleSpec = TWO_NEIGHBOUR) -> FortressSearch:
    """All fortresses of size <= kmax that contain at least one seed."""
    if kmax < 1:
        raise InvalidInputError("kmax must be >= 1")
    counted = _counted_lists(graph, rule)
    interior = graph.interior
    limit = rule.m - 1
    found, used, skipped = [], [], []
    done: set = set()
    visited = 0
    for seed in seeds:
        seed = int(seed)
        if seed in done:
            continue
        ball = graph.bfs_distances([seed], limit=kmax)
        if not all(interior[t] for t in ball):
            skipped.append(seed)
            log.warning("seed %d skipped: its radius-%d ball reaches the patch edge", seed, kmax)
            continue
        for R in connected_sets(graph, seed, kmax, forbidden=done):
            visited += 1
            Rs = set(R)
            if all(sum(1 for v in counted[t] if v not in Rs) <= limit for t in R):
                found.append(tuple(sorted(R)))
        done.add(seed)
        used.append(seed)
    found.sort(key=lambda f: (len(f), f))
    return FortressSearch(found, visited, used, skipped)


@dataclass
class GonCensus:
    tile: int
    n_max: int
    counts: dict
    counts_2d: dict
    counts_convex: dict
    gons: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        key = lambda d: {str(k): v for k, v in sorted(d.items())}
        return {"tile": self.tile, "n_max": self.n_max, "counts": key(self.counts),
                "counts_2d": key(self.counts_2d), "counts_convex": key(self.counts_convex)}


def winding_number(points: np.ndarray, center: np.ndarray, tol: float = 1e-9) -> int:
    rel = points - center
    if np.min(np.hypot(rel[:, 0], rel[:, 1])) < tol:
        raise InvalidInputError("winding centre lies on the polyline")
    nxt = np.roll(rel, -1, axis=0)
    ang = np.arctan2(rel[:, 0] * nxt[:, 1] - rel[:, 1] * nxt[:, 0], np.sum(rel * nxt, axis=1))
    w = ang.sum() / (2 * math.pi)
    if abs(w - round(w)) > 1e-6:
        raise InvalidInputError(f"winding number {w} is not close to an integer")
    return int(round(w))


def _segment_hits_ray(p, q, origin, direction) -> bool:
    # solve origin + s*direction = p + u*(q-p), s > 0, 0 <= u <= 1
    d = q - p
    den = direction[0] * (-d[1]) + direction[1] * d[0]
    if abs(den) < 1e-15:
        return False
    r = p - origin
    s = (r[0] * (-d[1]) + r[1] * d[0]) / den
    u = (direction[0] * r[1] - direction[1] * r[0]) / den
    return s > 0 and 0 <= u <= 1


def enumerate_enclosing_gons(graph: AdjacencyGraph, t: int, n_max: int, keep: bool = False) -> GonCensus:
    """Count chordless tile cycles of length <= n_max winding around tile ``t``.

    Every enclosing cycle crosses a fixed ray from t; each is generated once,
    from its lowest-numbered crossing edge, by a chordless-path search pruned
    with graph distances.
    """
    graph.require_rhombus("gon enumeration")
    ball = graph.bfs_distances([t], limit=n_max)
    if not all(graph.interior[u] for u in ball):
        raise MarginError(f"tile {t} needs an interior ball of radius {n_max}")
    nodes = set(ball) - {t}
    pos = graph.positions
    c = pos[t]
    others = pos[sorted(nodes)] - c
    psi = 0.1234567
    for _ in range(50):
        direction = np.array([math.cos(psi), math.sin(psi)])
        off = np.abs(others[:, 0] * direction[1] - others[:, 1] * direction[0])
        if off.min() > 1e-6:
            break
        psi += 0.0731
    adj = graph.adjacency
    crossing = []
    for u in sorted(nodes):
        for v in adj[u]:
            if v > u and v in nodes and _segment_hits_ray(pos[u], pos[v], c, direction):
                crossing.append((u, v))
    d = graph.patch.d
    counts, counts_2d, counts_convex = defaultdict(int), defaultdict(int), defaultdict(int)
    gons = []
    n_total = len(graph)
    adjcount = np.zeros(n_total, dtype=np.int64)
    in_path = np.zeros(n_total, dtype=bool)
    forbidden: set = set()
    for a, b in crossing:
        dist_a = graph.bfs_distances([a], allowed=nodes)
        path = [a, b]
        in_path[a] = in_path[b] = True
        for x in adj[a]:
            adjcount[x] += 1
        for x in adj[b]:
            adjcount[x] += 1
        found = []

        def close(cycle):
            pts = pos[cycle]
            if winding_number(pts, c) != 0:
                found.append(tuple(cycle))

        def rec():
            u = path[-1]
            L = len(path)
            for v in adj[u]:
                if v not in nodes or in_path[v]:
                    continue
                e = (u, v) if u < v else (v, u)
                if e in forbidden:
                    continue
                dv = dist_a.get(v)
                if dv is None or L + dv > n_max:
                    continue
                if a in graph.neighbour_sets[v]:
                    ce = (a, v) if a < v else (v, a)
                    if adjcount[v] == 2 and ce not in forbidden:
                        close(path + [v])
                    continue
                if adjcount[v] != 1:
                    continue
                path.append(v)
                in_path[v] = True
                for x in adj[v]:
                    adjcount[x] += 1
                rec()
                for x in adj[v]:
                    adjcount[x] -= 1
                in_path[v] = False
                path.pop()

        rec()
        for x in adj[a]:
            adjcount[x] -= 1
        for x in adj[b]:
            adjcount[x] -= 1
        in_path[a] = in_path[b] = False
        forbidden.add((a, b))
        for cyc in found:
            gon = make_gon(graph, cyc)
            n = gon.length
            counts[n] += 1
            if gon.is_2d_gon(d):
                counts_2d[n] += 1
            if gon.is_convex(d):
                counts_convex[n] += 1
            if keep:
                gons.append(gon)
    return GonCensus(t, n_max, dict(counts), dict(counts_2d), dict(counts_convex), gons)


def tile_shape_constants(basis, families: Iterable[tuple] | None = None) -> tuple[float, float]:
    """(max tile diameter, min tile area) for unit rhombi over the given family pairs."""
    e = basis.vectors
    if families is None:
        families = [(i, j) for i in range(basis.N) for j in range(i + 1, basis.N)]
    diam, area = 0.0, math.inf
    for i, j in families:
        cosang = abs(float(e[i] @ e[j]))
        alpha = math.acos(min(1.0, cosang))  # acute angle
        diam = max(diam, 2 * math.cos(alpha / 2))
        area = min(area, math.sin(alpha))
    return diam, area


def q_bound(basis, n: int, families: Iterable[tuple] | None = None) -> float:
    """Polynomial bound pi D^2 / A * n^(2d+2) on convex chain 2d-gons of length n."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    D, A = tile_shape_constants(basis, families)
    return math.pi * D * D / A * float(n) ** (2 * basis.N + 2)


# --- square grid with a hole ----------------------------------------------------

RECTANGLE, L_HEXAGON, BOUNDARY, OTHER = "rectangle", "L-hexagon", "infinite/boundary", "other"
_AXIS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def _is_rectangle(cells: set) -> bool:
    if not cells:
        return False
    xs = [x for x, _ in cells]
    ys = [y for _, y in cells]
    return len(cells) == (max(xs) - min(xs) + 1) * (max(ys) - min(ys) + 1)


def _half_plane(axis_cell):
    x, y = axis_cell
    if x:
        return lambda c: c[0] * x > 0
    return lambda c: c[1] * y > 0


def classify_hole_grid_cluster(graph: AdjacencyGraph, S: Iterable[int]) -> dict:
    """Shape class of a stable cluster on the grid with a hole at the origin.

    The origin is adjoined when at least three axis neighbours belong to the
    cluster; with exactly two the cluster is split into the two half-planes
    containing them.
    """
    S = set(int(s) for s in S)
    if not S:
        raise InvalidInputError("empty tile set")
    cells = {graph.names[s][1:] for s in S}
    if _touches(graph, S | edge_neighbours(graph, S)):
        return {"shape": BOUNDARY, "regular": None}
    axis = [a for a in _AXIS if a in cells]
    if len(axis) != 2:
        filled = cells | {(0, 0)} if len(axis) >= 3 else cells
        shape = RECTANGLE if _is_rectangle(filled) else OTHER
        return {"shape": shape, "regular": True, "adjoined_origin": len(axis) >= 3}
    h1, h2 = _half_plane(axis[0]), _half_plane(axis[1])
    p1 = {c for c in cells if h1(c)}
    p2 = {c for c in cells if h2(c)}
    if p1 | p2 != cells or not (_is_rectangle(p1) and _is_rectangle(p2)):
        return {"shape": OTHER, "regular": False}
    if _is_rectangle(cells):
        return {"shape": RECTANGLE, "regular": False}
    xs = [x for x, _ in cells]
    ys = [y for _, y in cells]
    box = {(x, y) for x in range(min(xs), max(xs) + 1) for y in range(min(ys), max(ys) + 1)}
    gap = box - cells
    corners = {(min(xs), min(ys)), (min(xs), max(ys)), (max(xs), min(ys)), (max(xs), max(ys))}
    if _is_rectangle(gap) and len(gap & corners) == 1:
        return {"shape": L_HEXAGON, "regular": False}
    return {"shape": OTHER, "regular": False}
