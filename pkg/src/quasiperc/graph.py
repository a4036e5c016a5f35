"""Labelled adjacency (dual) graphs of tilings, chains and chain crossing checks.

Arcs carry ``(family, sign)``: the shared edge has direction ``e_family`` and
the neighbour's barycenter lies on the ``sign`` side of ``e_family^perp``
(``e`` rotated by +90 degrees).  Generic graphs (quadrilateral tilings built
by hand) carry the synthetic label ``(-1, 0)`` and are rejected by every
chain-based operation.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import InvalidPatchError, UnsupportedRuleError, WrongFamilyError

if TYPE_CHECKING:
    from .multigrid import TilingPatch

SYNTHETIC = -1


class AdjacencyGraph:
    """CSR adjacency with per-arc labels; immutable after construction."""

    def __init__(self, kind, indptr, indices, family, sign, interior, *, patch=None,
                 positions=None, polygons=None, names=None, label="", provenance=None,
                 missing=None):
        self.kind = kind
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.family = np.asarray(family, dtype=np.int64)
        self.sign = np.asarray(sign, dtype=np.int64)
        self.interior = np.asarray(interior, dtype=bool)
        self.patch = patch
        self.positions = None if positions is None else np.asarray(positions, dtype=float)
        self.polygons = polygons
        self.names = names
        self.label = label or kind
        self.provenance = dict(provenance or {})
        # labels of absent neighbours across unshared edges, per node
        self.missing = missing
        for arr in (self.indptr, self.indices, self.family, self.sign, self.interior):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n, edges, *, interior=None, names=None, positions=None, polygons=None,
                   label="generic", provenance=None) -> "AdjacencyGraph":
        adj = [[] for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise ValueError("self loops are not allowed")
            adj[u].append(v)
            adj[v].append(u)
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in adj])
        indices = np.array([v for a in adj for v in sorted(a)], dtype=np.int64)
        m = len(indices)
        if interior is None:
            interior = np.ones(n, dtype=bool)
        missing = [[(SYNTHETIC, 0)] * max(0, 4 - len(a)) for a in adj]
        return cls("generic", indptr, indices, np.full(m, SYNTHETIC), np.zeros(m, dtype=np.int64),
                   interior, positions=positions, polygons=polygons, names=names, label=label,
                   provenance=provenance, missing=missing)

    def __len__(self):
        return len(self.indptr) - 1

    @property
    def n(self) -> int:
        return len(self)

    @property
    def is_rhombus(self) -> bool:
        return self.kind == "rhombus"

    def require_rhombus(self, what: str = "operation") -> None:
        if not self.is_rhombus:
            raise UnsupportedRuleError(f"{what} needs a rhombus graph, got {self.label!r}")

    def neighbours(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def arcs(self, u: int):
        """(neighbour, family, sign) triples leaving ``u``."""
        a, b = self.indptr[u], self.indptr[u + 1]
        return list(zip(self.indices[a:b].tolist(), self.family[a:b].tolist(), self.sign[a:b].tolist()))

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def adjacency(self) -> list[list[int]]:
        return [self.indices[self.indptr[u]:self.indptr[u + 1]].tolist() for u in range(len(self))]

    @cached_property
    def neighbour_sets(self) -> list[frozenset]:
        return [frozenset(a) for a in self.adjacency]

    @cached_property
    def node_lookup(self) -> dict:
        return {nm: k for k, nm in enumerate(self.names or [])}

    def node_id(self, name) -> int:
        return self.node_lookup[tuple(name) if isinstance(name, list) else name]

    def edge_list(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(len(self)) for v in self.adjacency[u] if u < v]

    @cached_property
    def vertex_adjacency(self) -> list[frozenset]:
        """Tiles sharing at least one corner, excluding the tile itself."""
        n = len(self)
        groups: dict = defaultdict(set)
        if self.patch is not None:
            for key, ts in self.patch.vertex_index.items():
                groups[key].update(ts)
        elif self.polygons is not None:
            for u, poly in enumerate(self.polygons):
                for x, y in np.asarray(poly):
                    groups[(round(float(x) * 1e6), round(float(y) * 1e6))].add(u)
        else:
            return self.neighbour_sets
        out = [set() for _ in range(n)]
        for ts in groups.values():
            for u in ts:
                out[u].update(ts)
        for u in range(n):
            out[u].discard(u)
            out[u].update(self.adjacency[u])
        return [frozenset(s) for s in out]

    @cached_property
    def csr_matrix(self):
        from scipy.sparse import csr_matrix
        n = len(self)
        return csr_matrix((np.ones(len(self.indices), dtype=np.int32), self.indices, self.indptr), shape=(n, n))

    def bfs_distances(self, sources: Iterable[int], limit: int | None = None,
                      allowed: set | None = None) -> dict[int, int]:
        from collections import deque
        dist = {}
        q = deque()
        for s in sources:
            dist[s] = 0
            q.append(s)
        adj = self.adjacency
        while q:
            u = q.popleft()
            du = dist[u]
            if limit is not None and du >= limit:
                continue
            for v in adj[u]:
                if v not in dist and (allowed is None or v in allowed):
                    dist[v] = du + 1
                    q.append(v)
        return dist

    def central_node(self) -> int:
        pos = self.positions
        return int(np.argmin(np.hypot(pos[:, 0], pos[:, 1])))

    def to_dict(self) -> dict:
        if self.is_rhombus:
            return self.patch.to_dict()
        return {
            "format": "quasiperc.graph",
            "version": 1,
            "kind": "generic",
            "label": self.label,
            "names": [list(nm) for nm in self.names] if self.names else None,
            "edges": [list(e) for e in self.edge_list()],
            "interior": self.interior.astype(int).tolist(),
            "positions": None if self.positions is None else np.round(self.positions, 9).tolist(),
            "polygons": None if self.polygons is None else [np.round(p, 9).tolist() for p in self.polygons],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AdjacencyGraph":
        names = [tuple(nm) for nm in doc["names"]] if doc.get("names") else None
        n = len(doc["interior"])
        polys = doc.get("polygons")
        return cls.from_edges(
            n, [tuple(e) for e in doc["edges"]], interior=np.array(doc["interior"], dtype=bool), names=names,
            positions=None if doc.get("positions") is None else np.array(doc["positions"]),
            polygons=None if polys is None else [np.array(p) for p in polys],
            label=doc.get("label", "generic"), provenance=doc.get("provenance"))


def build_adjacency(patch: "TilingPatch") -> AdjacencyGraph:
    """Labelled symmetric dual graph of a rhombus patch."""
    seen = {}
    for t in patch.tiles:
        key = (t.families, t.lines)
        if key in seen:
            raise InvalidPatchError(f"tile {t.id} duplicates tile {seen[key]}")
        seen[key] = t.id
    n = len(patch)
    normals = patch.basis.normals
    bary = patch.barycenters
    vectors = patch.basis.vectors
    adj = [[] for _ in range(n)]
    missing = [[] for _ in range(n)]
    for (start, m), ts in patch.edge_index.items():
        if len(ts) > 2:
            raise InvalidPatchError(f"edge {(start, m)} is shared by {len(ts)} tiles")
        if len(ts) == 2:
            u, v = ts
            s = 1 if float((bary[v] - bary[u]) @ normals[m]) > 0 else -1
            adj[u].append((v, m, s))
            adj[v].append((u, m, -s))
        else:
            (u,) = ts
            mid = np.asarray(start, dtype=float) @ vectors + 0.5 * vectors[m]
            s = 1 if float((mid - bary[u]) @ normals[m]) > 0 else -1
            missing[u].append((m, s))
    indptr = np.zeros(n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(a) for a in adj])
    arcs = [arc for a in adj for arc in sorted(a)]
    indices = np.array([a[0] for a in arcs], dtype=np.int64)
    family = np.array([a[1] for a in arcs], dtype=np.int64)
    sign = np.array([a[2] for a in arcs], dtype=np.int64)
    label = patch.provenance.get("kind", "rhombus")
    return AdjacencyGraph("rhombus", indptr, indices, family, sign, patch.interior.copy(), patch=patch,
                          positions=bary, polygons=None, label=label, provenance=patch.provenance,
                          missing=missing)


@dataclass
class Chain:
    family: int
    tiles: list
    normal: np.ndarray = field(repr=False)
    truncated: tuple = (True, True)
    line: int | None = None

    def __len__(self):
        return len(self.tiles)

    def to_dict(self) -> dict:
        return {"family": self.family, "line": self.line, "tiles": list(self.tiles),
                "truncated": list(self.truncated)}


def _step(graph: AdjacencyGraph, u: int, m: int, s: int):
    a, b = graph.indptr[u], graph.indptr[u + 1]
    for k in range(a, b):
        if graph.family[k] == m and graph.sign[k] == s:
            return int(graph.indices[k])
    return None


def chain_through(graph: AdjacencyGraph, tile: int, m: int) -> Chain:
    """Maximal chain segment of edge family ``m`` through ``tile``, ordered along e_m^perp."""
    graph.require_rhombus("chain extraction")
    patch = graph.patch
    fams = patch.tiles[tile].families
    if m not in fams:
        raise WrongFamilyError(f"tile {tile} has families {fams}, not {m}")
    back = []
    u = tile
    while (u := _step(graph, u, m, -1)) is not None:
        back.append(u)
    fwd = []
    u = tile
    while (u := _step(graph, u, m, 1)) is not None:
        fwd.append(u)
    tiles = back[::-1] + [tile] + fwd
    interior = graph.interior
    line = patch.tiles[tile].lines[fams.index(m)]
    return Chain(m, tiles, patch.basis.normals[m].copy(),
                 (not bool(interior[tiles[0]]), not bool(interior[tiles[-1]])), int(line))


class ChainIndex:
    """All chains of a rhombus graph plus per-tile (chain id, position) lookup.

    ``slot`` 0/1 refers to the tile's first/second family.
    """

    def __init__(self, graph: AdjacencyGraph):
        graph.require_rhombus("chain indexing")
        self.graph = graph
        n = len(graph)
        fams = graph.patch.families
        self.chain_of = np.full((n, 2), -1, dtype=np.int64)
        self.pos_of = np.full((n, 2), -1, dtype=np.int64)
        self.chains: list[Chain] = []
        for t in range(n):
            for slot in (0, 1):
                if self.chain_of[t, slot] >= 0:
                    continue
                ch = chain_through(graph, t, int(fams[t, slot]))
                cid = len(self.chains)
                self.chains.append(ch)
                for p, u in enumerate(ch.tiles):
                    s = 0 if fams[u, 0] == ch.family else 1
                    if self.chain_of[u, s] >= 0:
                        raise InvalidPatchError(f"tile {u} lies on two chains of family {ch.family}")
                    self.chain_of[u, s] = cid
                    self.pos_of[u, s] = p

    def chain_and_pos(self, tile: int, family: int):
        s = 0 if self.graph.patch.families[tile, 0] == family else 1
        return int(self.chain_of[tile, s]), int(self.pos_of[tile, s])


def chain_index(graph: AdjacencyGraph) -> ChainIndex:
    idx = getattr(graph, "_chain_index", None)
    if idx is None:
        idx = ChainIndex(graph)
        graph._chain_index = idx
    return idx


def all_chains(graph: AdjacencyGraph) -> list[Chain]:
    if len(graph) == 0:
        return []
    return list(chain_index(graph).chains)


@dataclass
class CrossingReport:
    chains: int
    crossings: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_chain_crossing(graph: AdjacencyGraph, chains: Sequence[Chain] | None = None) -> CrossingReport:
    """Distinct chains share at most one tile, carrying exactly their two families;
    same-family chains never share a tile."""
    graph.require_rhombus("chain crossing check")
    chains = all_chains(graph) if chains is None else list(chains)
    fams = graph.patch.families
    membership = defaultdict(list)
    for cid, ch in enumerate(chains):
        for t in ch.tiles:
            membership[t].append(cid)
    violations = []
    pair_count = Counter()
    for t, cids in membership.items():
        if len(cids) != 2:
            violations.append({"kind": "membership", "tile": int(t), "chains": cids})
        for a in range(len(cids)):
            for b in range(a + 1, len(cids)):
                c1, c2 = sorted((cids[a], cids[b]))
                pair_count[(c1, c2)] += 1
                f1, f2 = chains[c1].family, chains[c2].family
                if f1 == f2:
                    violations.append({"kind": "same-family", "tile": int(t), "chains": [c1, c2]})
                elif {f1, f2} != {int(fams[t, 0]), int(fams[t, 1])}:
                    violations.append({"kind": "families", "tile": int(t), "chains": [c1, c2]})
    for (c1, c2), k in pair_count.items():
        if k > 1:
            violations.append({"kind": "multiple-crossing", "chains": [c1, c2], "shared": k})
    return CrossingReport(len(chains), sum(pair_count.values()), violations)


def theta_violations(graph: AdjacencyGraph, chains: Sequence[Chain] | None = None,
                     tol: float = 1e-9) -> list[dict]:
    """Chain steps whose barycenter displacement along the chain normal is below theta."""
    graph.require_rhombus("monotonicity check")
    chains = all_chains(graph) if chains is None else chains
    theta = graph.patch.basis.theta
    bary = graph.patch.barycenters
    out = []
    for cid, ch in enumerate(chains):
        if len(ch.tiles) < 2:
            continue
        steps = np.diff(bary[ch.tiles], axis=0) @ ch.normal
        bad = np.nonzero(steps < theta - tol)[0]
        for k in bad:
            out.append({"chain": cid, "step": int(k), "projection": float(steps[k])})
    return out


def vertex_neighbours(graph: AdjacencyGraph, S: Iterable[int]) -> set[int]:
    """Tiles outside S sharing at least one vertex with a tile of S."""
    S = set(S)
    vadj = graph.vertex_adjacency
    out = set()
    for s in S:
        out |= vadj[s]
    return out - S


def edge_neighbours(graph: AdjacencyGraph, S: Iterable[int]) -> set[int]:
    S = set(S)
    adj = graph.adjacency
    out = set()
    for s in S:
        out.update(adj[s])
    return out - S
