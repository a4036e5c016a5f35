"""Rhombus tilings as duals of multigrids (de Bruijn construction).

A multigrid is ``N`` families of parallel lines ``<x, e_m> = k + gamma_m``.
Every intersection of two lines of families ``i < j`` becomes one rhombus
tile with edge directions ``e_i`` and ``e_j``.  Tile vertices are integer
vectors ``K`` of length ``N`` embedded as ``sum_m K_m e_m``; all combinatorial
identity (vertices, edges, adjacency) is decided on those integer keys.

Besides the plain multigrid patches this module builds the two bespoke
structures used for the counter-examples: the sparse-family "band" tiling
with its three-tile cube, and the square grid with the origin replaced by a
five-cell quadrilateral fortress (plus the grid with a hole).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateBandError,
    DegenerateBasisError,
    InvalidBasisError,
    InvalidPatchError,
    SingularGridError,
)
from .graph import AdjacencyGraph

SINGULAR_TOL = 1e-9
PENROSE_OFFSETS = (0.13, 0.27, 0.04, 0.35, 0.21)
# Families 3, 4 dense; one line each for families 0, 1, 2 placed so that the
# three sparse lines cut a small triangle inside a single (3, 4) grid cell.
BAND_OFFSETS = (0.05, -0.06, 0.04, 0.5 + 0.0731, 0.5 - 0.0419)
BAND_SPARSE_LINES = {0: 0, 1: 0, 2: 0}


@dataclass(frozen=True, eq=False)
class DirectionBasis:
    N: int
    phi: float
    gammas: tuple
    vectors: np.ndarray = field(repr=False)
    theta: float = 0.0
    penrose: bool = False

    @property
    def d(self) -> int:
        return self.N

    @property
    def normals(self) -> np.ndarray:
        """``e_m`` rotated by +90 degrees; fixes every sign convention."""
        return np.column_stack([-self.vectors[:, 1], self.vectors[:, 0]])

    def embed(self, keys) -> np.ndarray:
        return np.asarray(keys, dtype=float) @ self.vectors

    def to_dict(self) -> dict:
        return {"N": self.N, "phi": self.phi, "gammas": list(self.gammas)}

    def __eq__(self, other):
        if not isinstance(other, DirectionBasis):
            return NotImplemented
        return (self.N, self.phi, tuple(self.gammas)) == (other.N, other.phi, tuple(other.gammas))

    def __hash__(self):
        return hash((self.N, self.phi, tuple(self.gammas)))


def canonical_angles(N: int, phi: float = 0.0) -> np.ndarray:
    # even N would make e_j and e_{j+N/2} collinear at 2*pi*j/N
    step = 2 * math.pi / N if N % 2 else math.pi / N
    return phi + step * np.arange(N)


def uniform_monotonicity_constant(vectors: np.ndarray) -> float:
    """min over i != j of |<e_i, e_j^perp>|."""
    perp = np.column_stack([-vectors[:, 1], vectors[:, 0]])
    g = np.abs(vectors @ perp.T)
    np.fill_diagonal(g, np.inf)
    return float(g.min())


def build_basis(N: int, phi: float = 0.0, gammas: Sequence[float] | None = None,
                penrose: bool = False, angles: Sequence[float] | None = None) -> DirectionBasis:
    """Unit directions, offsets and the monotonicity constant theta.

    With ``penrose=True`` the offsets must sum to an integer; this is checked,
    never enforced by adjusting the offsets.
    """
    if N < 2:
        raise InvalidBasisError(f"need at least 2 line families, got N={N}")
    if gammas is None:
        gammas = [0.0] * N
    gammas = tuple(float(g) for g in gammas)
    if len(gammas) != N:
        raise InvalidBasisError(f"expected {N} offsets, got {len(gammas)}")
    ang = canonical_angles(N, phi) if angles is None else np.asarray(angles, dtype=float)
    vectors = np.column_stack([np.cos(ang), np.sin(ang)])
    cross = vectors[:, 0][:, None] * vectors[:, 1][None, :] - vectors[:, 1][:, None] * vectors[:, 0][None, :]
    np.fill_diagonal(cross, 1.0)
    if np.any(np.abs(cross) < 1e-12):
        i, j = np.argwhere(np.abs(cross) < 1e-12)[0]
        raise DegenerateBasisError(f"directions {i} and {j} are collinear")
    if penrose:
        s = sum(gammas)
        if abs(s - round(s)) > 1e-9:
            raise InvalidBasisError(f"Penrose offsets must sum to an integer, got {s!r}")
    return DirectionBasis(N, float(phi), gammas, vectors, uniform_monotonicity_constant(vectors), penrose)


def penrose_basis(gammas: Sequence[float] = PENROSE_OFFSETS, phi: float = 0.0) -> DirectionBasis:
    return build_basis(5, phi, gammas, penrose=True)


@dataclass(frozen=True)
class Tile:
    id: int
    families: tuple
    lines: tuple
    base: tuple

    def vertices(self) -> list[tuple]:
        """The four vertex keys in cyclic order."""
        i, j = self.families
        b = list(self.base)
        v1 = list(b)
        v1[i] += 1
        v2 = list(v1)
        v2[j] += 1
        v3 = list(b)
        v3[j] += 1
        return [tuple(b), tuple(v1), tuple(v2), tuple(v3)]

    def edges(self) -> list[tuple]:
        """Edge keys ``(start vertex, family)``; the edge runs to start + u_family."""
        i, j = self.families
        b = self.base
        bi = list(b)
        bi[i] += 1
        bj = list(b)
        bj[j] += 1
        return [(b, i), (tuple(bj), i), (b, j), (tuple(bi), j)]


class TilingPatch:
    """Finite patch of a multigrid dual tiling.

    ``edge_index`` is keyed by ``(start_key, family)``: the edge from vertex
    ``start_key`` to ``start_key + u_family``.  Instances are treated as
    immutable once built.
    """

    def __init__(self, basis: DirectionBasis, tiles: Sequence[Tile], provenance: dict | None = None):
        self.basis = basis
        self.tiles = list(tiles)
        self.provenance = dict(provenance or {})
        n = len(self.tiles)
        N = basis.N
        self.families = np.array([t.families for t in self.tiles], dtype=np.int64).reshape(n, 2)
        self.lines = np.array([t.lines for t in self.tiles], dtype=np.int64).reshape(n, 2)
        self.bases = np.array([t.base for t in self.tiles], dtype=np.int64).reshape(n, N)
        e = basis.vectors
        self.barycenters = (self.bases @ e + 0.5 * (e[self.families[:, 0]] + e[self.families[:, 1]])
                            if n else np.zeros((0, 2)))
        self.vertex_index: dict[tuple, list[int]] = {}
        self.edge_index: dict[tuple, list[int]] = {}
        for t in self.tiles:
            for v in t.vertices():
                self.vertex_index.setdefault(v, []).append(t.id)
            for ed in t.edges():
                self.edge_index.setdefault(ed, []).append(t.id)
        self.interior = np.array(
            [all(len(self.edge_index[ed]) == 2 for ed in t.edges()) for t in self.tiles], dtype=bool)

    def __len__(self):
        return len(self.tiles)

    @property
    def d(self) -> int:
        return self.basis.N

    def identity(self, tid: int) -> tuple:
        t = self.tiles[tid]
        return (t.families, t.lines)

    def polygon(self, tid: int) -> np.ndarray:
        return self.basis.embed(self.tiles[tid].vertices())

    def polygons(self) -> np.ndarray:
        """(n, 4, 2) array of embedded tile corners."""
        n = len(self)
        if not n:
            return np.zeros((0, 4, 2))
        e = self.basis.vectors
        p0 = self.bases @ e
        ei = e[self.families[:, 0]]
        ej = e[self.families[:, 1]]
        return np.stack([p0, p0 + ei, p0 + ei + ej, p0 + ej], axis=1)

    def validate(self) -> None:
        seen = {}
        for t in self.tiles:
            key = (t.families, t.lines)
            if key in seen:
                raise InvalidPatchError(f"tiles {seen[key]} and {t.id} share identity {key}")
            seen[key] = t.id
        for ed, ts in self.edge_index.items():
            if len(ts) > 2:
                raise InvalidPatchError(f"edge {ed} is shared by {len(ts)} tiles {ts}")

    def to_dict(self) -> dict:
        return {
            "format": "quasiperc.patch",
            "version": 1,
            "kind": "rhombus",
            "basis": self.basis.to_dict(),
            "tiles": [[t.families[0], t.families[1], t.lines[0], t.lines[1], list(t.base)]
                      for t in self.tiles],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TilingPatch":
        b = doc["basis"]
        basis = build_basis(int(b["N"]), float(b["phi"]), b["gammas"])
        tiles = [Tile(k, (int(r[0]), int(r[1])), (int(r[2]), int(r[3])), tuple(int(x) for x in r[4]))
                 for k, r in enumerate(doc["tiles"])]
        return cls(basis, tiles, doc.get("provenance"))


def _line_range(gamma: float, radius: float) -> np.ndarray:
    lo = math.ceil(-radius - gamma)
    hi = math.floor(radius - gamma)
    return np.arange(lo, hi + 1, dtype=np.int64)


def _multigrid_tiles(basis: DirectionBasis, radius: float, line_sets: dict) -> list[tuple]:
    """Raw tile records ``(i, j, k_i, k_j, base)`` for lines crossing in the disk.

    ``line_sets[m]`` is ``None`` for a dense family (every integer line) or a
    tuple holding the single line index of a sparse family.
    """
    N = basis.N
    e = basis.vectors
    g = np.asarray(basis.gammas)
    lines = {m: (_line_range(g[m], radius) if line_sets.get(m) is None
                 else np.asarray(line_sets[m], dtype=np.int64))
             for m in range(N)}
    records = []
    for i in range(N):
        for j in range(i + 1, N):
            ki, kj = np.meshgrid(lines[i], lines[j], indexing="ij")
            ki = ki.ravel()
            kj = kj.ravel()
            if not ki.size:
                continue
            M = np.array([e[i], e[j]])
            rhs = np.column_stack([ki + g[i], kj + g[j]])
            P = np.linalg.solve(M, rhs.T).T
            keep = np.hypot(P[:, 0], P[:, 1]) <= radius
            ki, kj, P = ki[keep], kj[keep], P[keep]
            if not ki.size:
                continue
            K = np.empty((ki.size, N), dtype=np.int64)
            K[:, i] = ki
            K[:, j] = kj
            for m in range(N):
                if m in (i, j):
                    continue
                v = P @ e[m] - g[m]
                sparse = line_sets.get(m)
                if sparse is None:
                    near = np.rint(v)
                    bad = np.abs(v - near) < SINGULAR_TOL
                    K[:, m] = np.ceil(v).astype(np.int64)
                else:
                    (k0,) = sparse
                    near = np.full_like(v, k0)
                    bad = np.abs(v - k0) < SINGULAR_TOL
                    K[:, m] = k0 + (v > k0)
                if bad.any():
                    r = int(np.argmax(bad))
                    raise SingularGridError([(i, int(ki[r])), (j, int(kj[r])), (m, int(near[r]))],
                                            point=tuple(P[r]))
            for r in range(ki.size):
                records.append((i, j, int(ki[r]), int(kj[r]), tuple(int(x) for x in K[r])))
    records.sort(key=lambda rec: rec[:4])
    return records


def _patch_from_records(basis, records, provenance) -> TilingPatch:
    tiles = [Tile(k, (r[0], r[1]), (r[2], r[3]), r[4]) for k, r in enumerate(records)]
    return TilingPatch(basis, tiles, provenance)


def generate_patch(basis: DirectionBasis, radius: float) -> TilingPatch:
    """All tiles whose generating intersection lies within ``radius`` of the origin.

    Raises SingularGridError when three lines meet within 1e-9.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    records = _multigrid_tiles(basis, radius, {})
    s = sum(basis.gammas)
    prov = {"kind": "multigrid", "radius": float(radius), "gammas": list(basis.gammas),
            "sum_rule": bool(abs(s - round(s)) < 1e-9)}
    patch = _patch_from_records(basis, records, prov)
    patch.validate()
    return patch


def band_basis(gammas: Sequence[float] = BAND_OFFSETS) -> DirectionBasis:
    return build_basis(5, 0.0, gammas)


def _intersection(basis, a, ka, b, kb):
    e = basis.vectors
    M = np.array([e[a], e[b]])
    det = float(np.linalg.det(M))
    if abs(det) < 1e-12:
        raise DegenerateBandError(f"sparse lines of families {a} and {b} are parallel")
    return np.linalg.solve(M, [ka + basis.gammas[a], kb + basis.gammas[b]])


def generate_band_tiling(basis: DirectionBasis | None = None, sparse_lines: dict | None = None,
                         radius: float = 12.0) -> TilingPatch:
    """Five-direction tiling with one line in each of families 0, 1, 2.

    Away from the three sparse lines every tile has directions e_3, e_4.  The
    three pairwise crossings of the sparse lines give the only tiles with
    both families in {0, 1, 2}: a hexagonal "cube" of three rhombi.
    """
    basis = basis or band_basis()
    sparse_lines = dict(BAND_SPARSE_LINES if sparse_lines is None else sparse_lines)
    if basis.N != 5:
        raise DegenerateBandError("band tiling needs a 5-direction basis")
    if sorted(sparse_lines) != [0, 1, 2]:
        raise DegenerateBandError("families 0, 1 and 2 each need exactly one line")
    p01 = _intersection(basis, 0, sparse_lines[0], 1, sparse_lines[1])
    p02 = _intersection(basis, 0, sparse_lines[0], 2, sparse_lines[2])
    p12 = _intersection(basis, 1, sparse_lines[1], 2, sparse_lines[2])
    area = 0.5 * abs((p02[0] - p01[0]) * (p12[1] - p01[1]) - (p02[1] - p01[1]) * (p12[0] - p01[0]))
    if area < 1e-9:
        raise DegenerateBandError("sparse lines are concurrent")
    corners = np.array([p01, p02, p12])
    if np.hypot(corners[:, 0], corners[:, 1]).max() >= radius:
        raise DegenerateBandError("sparse triangle is not inside the window")
    # a dense line through the triangle would separate the cube tiles
    for m in (3, 4):
        v = corners @ basis.vectors[m] - basis.gammas[m]
        if np.floor(v.min()) != np.floor(v.max()) or np.any(np.abs(v - np.rint(v)) < SINGULAR_TOL):
            raise DegenerateBandError(f"a family-{m} line crosses the sparse triangle")
    line_sets = {m: (int(k),) for m, k in sparse_lines.items()}
    records = _multigrid_tiles(basis, radius, line_sets)
    prov = {"kind": "band", "radius": float(radius), "gammas": list(basis.gammas),
            "sparse_lines": {str(k): int(v) for k, v in sorted(sparse_lines.items())}}
    patch = _patch_from_records(basis, records, prov)
    patch.validate()
    return patch


def cube_tiles(patch: TilingPatch) -> list[int]:
    """Tiles whose two families are both sparse (0, 1, 2) in a band tiling."""
    return [t.id for t in patch.tiles if t.families[1] <= 2]


# --- quadrilateral structures (generic graphs) -------------------------------

FORTRESS_NODES = ("T_N", "T_E", "T_S", "T_W", "C")


def _square(x, y, h=0.5):
    return np.array([[x - h, y - h], [x + h, y - h], [x + h, y + h], [x - h, y + h]])


def _window_cells(half_size: int, skip_origin: bool) -> list[tuple]:
    return [(x, y) for y in range(-half_size, half_size + 1) for x in range(-half_size, half_size + 1)
            if not (skip_origin and x == 0 and y == 0)]


def grid_with_hole(half_size: int) -> AdjacencyGraph:
    """Square grid on ``[-h, h]^2`` with the origin cell removed."""
    if half_size < 1:
        raise ValueError("half_size must be >= 1")
    cells = _window_cells(half_size, skip_origin=True)
    index = {c: k for k, c in enumerate(cells)}
    edges = []
    for (x, y), k in index.items():
        for nb in ((x + 1, y), (x, y + 1)):
            if nb in index:
                edges.append((k, index[nb]))
    interior = [max(abs(x), abs(y)) < half_size for x, y in cells]
    return AdjacencyGraph.from_edges(
        len(cells), edges, interior=interior, names=[("cell", x, y) for x, y in cells],
        positions=np.array(cells, dtype=float), polygons=[_square(x, y) for x, y in cells],
        label="grid-hole", provenance={"kind": "grid-hole", "half_size": half_size})


def generate_fortress_grid(half_size: int) -> AdjacencyGraph:
    """Square grid whose origin cell is four trapezoids around a small square.

    Each trapezoid touches the central square, its two cyclic neighbours and
    exactly one grid cell outside the origin cell.
    """
    if half_size < 2:
        raise ValueError("half_size must be >= 2")
    cells = _window_cells(half_size, skip_origin=True)
    n_cells = len(cells)
    index = {c: k for k, c in enumerate(cells)}
    fort = {name: n_cells + k for k, name in enumerate(FORTRESS_NODES)}
    edges = []
    for (x, y), k in index.items():
        for nb in ((x + 1, y), (x, y + 1)):
            if nb in index:
                edges.append((k, index[nb]))
    ring = ["T_N", "T_E", "T_S", "T_W"]
    for a, name in enumerate(ring):
        edges.append((fort["C"], fort[name]))
        edges.append((fort[name], fort[ring[(a + 1) % 4]]))
    edges += [(fort["T_N"], index[(0, 1)]), (fort["T_E"], index[(1, 0)]),
              (fort["T_S"], index[(0, -1)]), (fort["T_W"], index[(-1, 0)])]
    h, s = 0.5, 0.2
    outer = {"T_N": [(-h, h), (h, h), (s, s), (-s, s)],
             "T_E": [(h, h), (h, -h), (s, -s), (s, s)],
             "T_S": [(h, -h), (-h, -h), (-s, -s), (s, -s)],
             "T_W": [(-h, -h), (-h, h), (-s, s), (-s, -s)],
             "C": [(-s, -s), (s, -s), (s, s), (-s, s)]}
    polys = [_square(x, y) for x, y in cells] + [np.array(outer[nm], dtype=float) for nm in FORTRESS_NODES]
    positions = np.array(cells + [tuple(np.mean(outer[nm], axis=0)) for nm in FORTRESS_NODES], dtype=float)
    interior = [max(abs(x), abs(y)) < half_size for x, y in cells] + [True] * 5
    names = [("cell", x, y) for x, y in cells] + [("fortress", nm) for nm in FORTRESS_NODES]
    return AdjacencyGraph.from_edges(
        n_cells + 5, edges, interior=interior, names=names, positions=positions, polygons=polys,
        label="fortress-grid", provenance={"kind": "fortress-grid", "half_size": half_size})


def fortress_nodes(graph: AdjacencyGraph) -> list[int]:
    return [graph.node_id(("fortress", nm)) for nm in FORTRESS_NODES]


def square_grid_patch(radius: float, gammas: Iterable[float] = (0.5, 0.5)) -> TilingPatch:
    return generate_patch(build_basis(2, 0.0, list(gammas)), radius)


# --- named structures -------------------------------------------------------------

STRUCTURE_KINDS = ("penrose", "grid", "ngrid:N", "band", "fortress-grid", "grid-hole")


def build_graph(kind: str, radius: float, offsets: Sequence[float] | None = None) -> AdjacencyGraph:
    """Adjacency graph of a named structure; ``radius`` is the half size for grids of cells."""
    from .graph import build_adjacency

    if kind == "penrose":
        return build_adjacency(generate_patch(penrose_basis(offsets or PENROSE_OFFSETS), radius))
    if kind == "grid":
        return build_adjacency(square_grid_patch(radius, offsets or (0.5, 0.5)))
    if kind.startswith("ngrid:"):
        N = int(kind.split(":", 1)[1])
        gam = offsets or [(0.1 + 0.6180339887 * k) % 1.0 for k in range(N)]
        return build_adjacency(generate_patch(build_basis(N, 0.0, gam), radius))
    if kind == "band":
        return build_adjacency(generate_band_tiling(band_basis(offsets or BAND_OFFSETS), radius=radius))
    if kind == "fortress-grid":
        return generate_fortress_grid(int(radius))
    if kind == "grid-hole":
        return grid_with_hole(int(radius))
    raise ValueError(f"unknown structure kind {kind!r}; expected one of {', '.join(STRUCTURE_KINDS)}")


def load_graph(doc: dict) -> AdjacencyGraph:
    """Graph from a serialized patch (rhombus) or graph (generic) document."""
    from .graph import build_adjacency

    fmt = doc.get("format")
    if fmt == "quasiperc.patch":
        return build_adjacency(TilingPatch.from_dict(doc))
    if fmt == "quasiperc.graph":
        return AdjacencyGraph.from_dict(doc)
    raise InvalidPatchError(f"unrecognised document format {fmt!r}")
