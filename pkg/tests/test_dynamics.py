import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quasiperc.dynamics import (
    F3,
    TWO_NEIGHBOUR,
    Configuration,
    RuleSpec,
    decode_rle,
    encode_rle,
    fixpoint,
    fixpoint_oracle,
    is_stable,
    step,
)
from quasiperc.errors import InvalidInputError, UnsupportedRuleError
from quasiperc.multigrid import cube_tiles, fortress_nodes

GRAPHS = ["penrose10", "grid8", "ngrid4", "band", "fortress_grid", "hole_grid"]


def test_rule_parsing():
    assert RuleSpec.parse("m3").m == 3
    assert RuleSpec.parse("F3") is F3
    r = RuleSpec.parse("directed:0+,1-,2+,3,4")
    assert r.allowed == F3.allowed and r.m == 2
    assert RuleSpec.parse("directed:3@m1").m == 1
    assert RuleSpec.parse(str(RuleSpec(2, frozenset({(0, 1), (2, -1)})))).allowed == {(0, 1), (2, -1)}
    with pytest.raises(InvalidInputError):
        RuleSpec.parse("m")
    with pytest.raises(InvalidInputError):
        RuleSpec(0)


@given(st.lists(st.integers(0, 1), max_size=200))
def test_rle_roundtrip(bits):
    assert decode_rle(encode_rle(bits)).tolist() == bits


def test_rle_format():
    assert encode_rle([0, 0, 0, 0, 0, 1, 1]) == "0x5,1x2"


def test_two_diagonal_cells_fill_square(grid8):
    g = grid8
    c = g.central_node()
    x, y = g.positions[c]
    where = {tuple(np.round(p, 6)): k for k, p in enumerate(g.positions)}
    a, b = c, where[(round(x + 1, 6), round(y + 1, 6))]
    out, rounds = fixpoint(Configuration.from_set(g, [a, b]))
    assert rounds == 1
    assert out.state.sum() == 4


def _random_configs(g, count, seed, policy="open"):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        p = rng.uniform(0.0, 0.35)
        yield Configuration(g, (rng.random(len(g)) < p).astype(np.uint8), policy)


@pytest.mark.parametrize("name", GRAPHS)
@pytest.mark.parametrize("policy", ["open", "infected"])
def test_worklist_matches_oracle(name, policy, request):
    g = request.getfixturevalue(name)
    rules = [TWO_NEIGHBOUR, RuleSpec(3)] + ([F3] if g.is_rhombus else [])
    for k, c in enumerate(_random_configs(g, 40, 2 * GRAPHS.index(name) + (policy == "infected"), policy)):
        rule = rules[k % len(rules)]
        fast, r1 = fixpoint(c, rule)
        slow, r2 = fixpoint_oracle(c, rule)
        assert np.array_equal(fast.state, slow.state)
        assert r1 == r2
        assert is_stable(fast, rule)


def test_times_record_round_of_infection(penrose10):
    c = next(_random_configs(penrose10, 1, 3))
    out, rounds = fixpoint(c)
    cur = c
    for r in range(1, rounds + 1):
        nxt = step(cur)
        newly = np.flatnonzero(nxt.state & ~cur.state)
        assert np.all(out.times[newly] == r)
        cur = nxt
    assert np.all(out.times[c.state == 1] == 0)
    assert np.all(out.times[out.state == 0] == -1)


@pytest.mark.parametrize("name", ["penrose10", "band", "fortress_grid"])
def test_freezing_and_monotone(name, request):
    g = request.getfixturevalue(name)
    rng = np.random.default_rng(11)
    for _ in range(30):
        u = rng.random(len(g))
        lo = Configuration(g, (u < 0.08).astype(np.uint8))
        hi = Configuration(g, (u < 0.16).astype(np.uint8))
        assert np.all(step(lo).state >= lo.state)
        flo, _ = fixpoint(lo)
        fhi, _ = fixpoint(hi)
        assert np.all(fhi.state >= flo.state)


def test_vertex_star_survives_three_neighbour_rule(penrose10):
    g = penrose10
    patch = g.patch
    for key, tiles in patch.vertex_index.items():
        if len(tiles) >= 3 and all(g.interior[t] for t in tiles):
            break
    x = np.ones(len(g), dtype=np.uint8)
    x[tiles] = 0
    out, _ = fixpoint(Configuration(g, x), RuleSpec(3))
    assert np.all(out.state[tiles] == 0)
    out2, _ = fixpoint(Configuration(g, x))
    assert np.all(out2.state == 1)


def test_cube_resists_partially_directed_rule(band):
    cube = cube_tiles(band.patch)
    x = np.ones(len(band), dtype=np.uint8)
    x[cube] = 0
    out, _ = fixpoint(Configuration(band, x), F3)
    assert np.all(out.state[cube] == 0)
    out, _ = fixpoint(Configuration(band, x), TWO_NEIGHBOUR)
    assert np.all(out.state[cube] == 1)


@pytest.mark.parametrize("seeded", range(3))
def test_disarmed_cube_is_invaded(band, seeded):
    """Any single infected cube tile plus infected surroundings infects the cube."""
    cube = cube_tiles(band.patch)
    x = np.ones(len(band), dtype=np.uint8)
    x[cube] = 0
    x[cube[seeded]] = 1
    out, _ = fixpoint(Configuration(band, x), F3)
    assert np.all(out.state[cube] == 1)


def test_fortress_resists_two_neighbour_rule(fortress_grid):
    fort = fortress_nodes(fortress_grid)
    x = np.ones(len(fortress_grid), dtype=np.uint8)
    x[fort] = 0
    out, _ = fixpoint(Configuration(fortress_grid, x))
    assert np.all(out.state[fort] == 0)
    for k in fort:
        y = x.copy()
        y[k] = 1
        out, _ = fixpoint(Configuration(fortress_grid, y))
        assert np.all(out.state == 1)


def test_directed_rule_needs_labels(fortress_grid):
    with pytest.raises(UnsupportedRuleError):
        fixpoint(Configuration.zeros(fortress_grid), F3)


def test_infected_boundary_fills_empty_grid(grid8):
    out, rounds = fixpoint(Configuration.zeros(grid8, "infected"))
    assert out.state.all() and rounds > 0
    out, rounds = fixpoint(Configuration.zeros(grid8, "open"))
    assert not out.state.any() and rounds == 0


def test_state_shape_checked(grid8):
    with pytest.raises(InvalidInputError):
        Configuration(grid8, np.zeros(3))
    with pytest.raises(InvalidInputError):
        Configuration(grid8, np.zeros(len(grid8)), "sticky")
