import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasiperc.errors import (
    DegenerateBandError,
    DegenerateBasisError,
    InvalidBasisError,
    SingularGridError,
)
from quasiperc.multigrid import (
    FORTRESS_NODES,
    TilingPatch,
    band_basis,
    build_basis,
    build_graph,
    cube_tiles,
    fortress_nodes,
    generate_band_tiling,
    generate_fortress_grid,
    generate_patch,
    grid_with_hole,
    penrose_basis,
)


def corner_angles(poly):
    out = []
    for k in range(4):
        a, b, c = poly[k - 1], poly[k], poly[(k + 1) % 4]
        u, v = a - b, c - b
        out.append(math.acos(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1, 1)))
    return out


def test_basis_rejects_too_few_families():
    with pytest.raises(InvalidBasisError):
        build_basis(1)


def test_basis_rejects_collinear_directions():
    with pytest.raises(DegenerateBasisError):
        build_basis(3, angles=[0.0, math.pi, 1.0])


def test_penrose_sum_rule_is_checked_not_repaired():
    with pytest.raises(InvalidBasisError):
        penrose_basis([0.1, 0.1, 0.1, 0.1, 0.1])
    b = penrose_basis([0.1, 0.2, 0.3, 0.15, 0.25])
    assert b.gammas == (0.1, 0.2, 0.3, 0.15, 0.25)


@pytest.mark.parametrize("N, theta", [(2, 1.0), (4, math.sin(math.pi / 4)), (5, math.sin(math.pi / 5))])
def test_monotonicity_constant(N, theta):
    # smallest |sin| of the angle between two distinct directions
    assert build_basis(N, gammas=[0.1] * N).theta == pytest.approx(theta, abs=1e-12)


def test_singular_grid_names_three_lines():
    with pytest.raises(SingularGridError) as info:
        generate_patch(penrose_basis([0, 0, 0, 0, 0]), 5)
    assert len(info.value.lines) == 3
    assert len({f for f, _ in info.value.lines}) == 3


def test_equal_fifth_offsets_are_regular():
    p = generate_patch(penrose_basis([0.2] * 5), 12)
    assert len(p) > 0


def test_tile_identity_unique(penrose10):
    patch = penrose10.patch
    keys = [(t.families, t.lines) for t in patch.tiles]
    assert len(set(keys)) == len(keys)


def test_penrose_has_two_rhombus_shapes(penrose10):
    shapes = Counter()
    for poly in penrose10.patch.polygons():
        shapes[tuple(sorted(round(math.degrees(a)) for a in corner_angles(poly)))] += 1
    assert set(shapes) == {(36, 36, 144, 144), (72, 72, 108, 108)}


@pytest.mark.parametrize("kind, radius", [("penrose", 9), ("ngrid:4", 7), ("ngrid:7", 5), ("grid", 6)])
def test_angles_close_around_inner_vertices(kind, radius):
    """Tiles meeting at an inner vertex fill exactly 2*pi: no gaps, no overlaps."""
    g = build_graph(kind, radius)
    patch = g.patch
    e = patch.basis.vectors
    polys = patch.polygons()
    # the dual embedding scales the window by about N/2
    inner = 0.5 * patch.basis.N / 2 * radius
    checked = 0
    for key, tiles in patch.vertex_index.items():
        pos = np.asarray(key, float) @ e
        if np.hypot(*pos) > inner:
            continue
        total = 0.0
        for t in tiles:
            verts = [tuple(v) for v in patch.tiles[t].vertices()]
            total += corner_angles(polys[t])[verts.index(key)]
        assert total == pytest.approx(2 * math.pi, abs=1e-9)
        checked += 1
    assert checked > 20


def test_edges_shared_by_at_most_two(penrose10):
    assert max(len(v) for v in penrose10.patch.edge_index.values()) == 2


def test_patch_roundtrip(penrose10):
    doc = penrose10.patch.to_dict()
    back = TilingPatch.from_dict(doc)
    assert back.to_dict() == doc
    np.testing.assert_array_equal(back.bases, penrose10.patch.bases)


def test_generation_is_deterministic():
    a = generate_patch(penrose_basis(), 6).to_dict()
    b = generate_patch(penrose_basis(), 6).to_dict()
    assert a == b


@given(st.integers(3, 7), st.lists(st.floats(0.01, 0.99), min_size=7, max_size=7))
@settings(max_examples=25, deadline=None)
def test_random_multigrids_are_valid(N, offs):
    try:
        patch = generate_patch(build_basis(N, gammas=offs[:N]), 3.5)
    except SingularGridError:
        return
    patch.validate()
    assert set(map(len, patch.edge_index.values())) <= {1, 2}


def test_band_cube(band):
    cube = cube_tiles(band.patch)
    assert len(cube) == 3
    fams = sorted(tuple(band.patch.tiles[t].families) for t in cube)
    assert fams == [(0, 1), (0, 2), (1, 2)]
    for a in cube:
        assert set(cube) - {a} <= set(band.adjacency[a])


def test_band_sparse_families_have_one_line(band):
    fams = band.patch.families
    lines = band.patch.lines
    for slot in (0, 1):
        sparse = fams[:, slot] <= 2
        assert set(lines[sparse, slot].tolist()) == {0}
    pairs = Counter(tuple(f) for f in fams.tolist())
    assert pairs[(0, 1)] == pairs[(0, 2)] == pairs[(1, 2)] == 1


def test_band_rejects_concurrent_sparse_lines():
    with pytest.raises(DegenerateBandError):
        generate_band_tiling(band_basis((0.0, 0.0, 0.0, 0.37, 0.41)))


def test_band_rejects_dense_line_through_cube():
    with pytest.raises(DegenerateBandError):
        generate_band_tiling(band_basis((0.05, -0.06, 0.04, 0.0, 0.5)))


def test_fortress_grid_structure(fortress_grid):
    g = fortress_grid
    h = 6
    assert len(g) == (2 * h + 1) ** 2 - 1 + 5
    fort = fortress_nodes(g)
    for node, name in zip(fort, FORTRESS_NODES):
        assert g.degree[node] == 4
        outside = [v for v in g.adjacency[node] if v not in fort]
        assert len(outside) == (0 if name == "C" else 1)
    assert ("cell", 0, 1) in [g.names[v] for v in g.adjacency[fort[0]]]


def test_fortress_grid_needs_room():
    with pytest.raises(ValueError):
        generate_fortress_grid(1)


def test_grid_with_hole(hole_grid):
    g = hole_grid
    assert len(g) == 13 ** 2 - 1
    for cell in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert g.degree[g.node_id(("cell",) + cell)] == 3
    with pytest.raises(ValueError):
        grid_with_hole(0)
