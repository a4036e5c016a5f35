import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasiperc.errors import SingularGridError, UnsupportedRuleError, WrongFamilyError
from quasiperc.graph import (
    AdjacencyGraph,
    all_chains,
    build_adjacency,
    chain_index,
    chain_through,
    edge_neighbours,
    theta_violations,
    verify_chain_crossing,
    vertex_neighbours,
)
from quasiperc.multigrid import build_basis, generate_patch


def arc_table(g):
    out = {}
    for u in range(len(g)):
        for v, m, s in g.arcs(u):
            out[(u, v)] = (m, s)
    return out


@pytest.mark.parametrize("name", ["penrose10", "grid8", "ngrid4", "band"])
def test_arcs_symmetric_with_opposite_signs(name, request):
    g = request.getfixturevalue(name)
    arcs = arc_table(g)
    for (u, v), (m, s) in arcs.items():
        assert arcs[(v, u)] == (m, -s)
        assert s in (-1, 1)


def test_signs_match_barycenter_side(penrose10):
    g = penrose10
    normals = g.patch.basis.normals
    bary = g.patch.barycenters
    for (u, v), (m, s) in arc_table(g).items():
        assert np.sign((bary[v] - bary[u]) @ normals[m]) == s


def test_shared_edge_family_is_common_family(penrose10):
    fams = penrose10.patch.families
    for (u, v), (m, _) in arc_table(penrose10).items():
        assert m in fams[u] and m in fams[v]


def test_interior_tiles_have_four_neighbours(penrose10):
    g = penrose10
    assert np.all(g.degree[g.interior] == 4)
    assert np.all(g.degree <= 4)


def test_grid_chain_is_a_row(grid8):
    g = grid8
    t = g.central_node()
    ch = chain_through(g, t, 0)
    fams = g.patch.families
    lines = g.patch.lines
    slot = [0 if fams[u, 0] == 0 else 1 for u in ch.tiles]
    assert {int(lines[u, s]) for u, s in zip(ch.tiles, slot)} == {ch.line}
    proj = g.positions[ch.tiles] @ ch.normal
    assert np.all(np.diff(proj) > 0)
    assert ch.truncated == (True, True)


def test_chain_rejects_foreign_family(penrose10):
    t = 0
    fams = set(penrose10.patch.families[t].tolist())
    other = next(m for m in range(5) if m not in fams)
    with pytest.raises(WrongFamilyError):
        chain_through(penrose10, t, other)


@pytest.mark.parametrize("name", ["penrose15", "grid8", "ngrid4"])
def test_chains_cross_once_and_turn_monotonically(name, request):
    g = request.getfixturevalue(name)
    chains = all_chains(g)
    assert verify_chain_crossing(g, chains).ok
    assert theta_violations(g, chains) == []


def test_every_tile_on_two_chains(penrose15):
    idx = chain_index(penrose15)
    assert np.all(idx.chain_of >= 0)
    assert np.all(idx.chain_of[:, 0] != idx.chain_of[:, 1])


@given(st.sampled_from([3, 4, 6, 7]), st.lists(st.floats(0.01, 0.99), min_size=7, max_size=7))
@settings(max_examples=15, deadline=None)
def test_chain_properties_on_random_multigrids(N, offs):
    try:
        g = build_adjacency(generate_patch(build_basis(N, gammas=offs[:N]), 4.0))
    except SingularGridError:
        return
    chains = all_chains(g)
    assert verify_chain_crossing(g, chains).ok
    assert theta_violations(g, chains) == []


def test_neighbourhoods_of_grid_cell(grid8):
    t = grid8.central_node()
    assert len(edge_neighbours(grid8, [t])) == 4
    assert len(vertex_neighbours(grid8, [t])) == 8


def test_generic_graph_roundtrip(fortress_grid):
    doc = fortress_grid.to_dict()
    back = AdjacencyGraph.from_dict(doc)
    assert back.edge_list() == fortress_grid.edge_list()
    assert back.names == fortress_grid.names
    assert back.label == "fortress-grid"


def test_generic_graph_rejects_chain_ops(fortress_grid):
    with pytest.raises(UnsupportedRuleError):
        chain_through(fortress_grid, 0, 0)


def test_vertex_adjacency_contains_edge_adjacency(penrose10):
    for u in range(len(penrose10)):
        assert set(penrose10.adjacency[u]) <= penrose10.vertex_adjacency[u]
