"""Acceptance criteria; each prints one PASS/FAIL line in the terminal summary."""

import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from quasiperc import cli
from quasiperc.analysis import (
    NO,
    boundary_decomposition,
    clusters,
    enumerate_enclosing_gons,
    fortress_search,
    is_fortress,
    q_bound,
)
from quasiperc.dynamics import F3, TWO_NEIGHBOUR, Configuration, RuleSpec, fixpoint, fixpoint_oracle, step
from quasiperc.multigrid import build_graph, cube_tiles
from quasiperc.percolation import Criterion, ExperimentSpec, MeasureSpec, monte_carlo, sample, sweep, zero_cylinder_decay
from quasiperc.verify import interior_sample

pytestmark = pytest.mark.acceptance


def record(num: int, ok: bool, text: str, t0: float) -> None:
    ACCEPTANCE_LINES.append(f"[{num:02d}] {'PASS' if ok else 'FAIL'} {text} ({time.perf_counter() - t0:.1f}s)")
    assert ok, text


def invasion(graph: dict, rule: str, p: float, criterion: str, trials: int = 2000, seed: int = 1):
    spec = ExperimentSpec(graph=graph, rule=rule, measure=MeasureSpec("bernoulli", p), trials=trials,
                          seed=seed, criterion=Criterion(criterion))
    est, _ = monte_carlo(spec)
    return est


def test_01_fortress_grid_exact_value():
    t0 = time.perf_counter()
    parts, ok = [], True
    for p in (0.2, 0.5):
        est = invasion({"kind": "fortress-grid", "radius": 64}, "m2", p, "fortress-ball")
        exact = 1 - (1 - p) ** 5
        ok &= abs(est.estimate - exact) <= 0.03
        parts.append(f"p={p}: {est.estimate:.4f} vs {exact:.5f}")
    record(1, ok, "fortress grid invasion = 1-(1-p)^5 within 0.03; " + "; ".join(parts), t0)


def test_02_band_cube_is_the_only_fortress():
    t0 = time.perf_counter()
    g = build_graph("band", 24)
    cube = set(cube_tiles(g.patch))
    fam = g.patch.families
    band_tiles = [t for t in range(len(g)) if fam[t].min() <= 2]
    near = list(g.bfs_distances(sorted(cube), limit=10))
    fs = fortress_search(g, sorted(set(band_tiles) | set(near)), 8, F3)
    ok = is_fortress(g, sorted(cube), F3) and bool(fs.fortresses) and all(cube <= set(f) for f in fs.fortresses)
    record(2, ok, f"F3 band: cube {sorted(cube)} is a fortress; {len(fs.fortresses)} fortresses found from "
                  f"{len(fs.seeds_used)} seeds, all contain the cube", t0)


def test_03_band_cube_invasion_value():
    t0 = time.perf_counter()
    parts, ok = [], True
    for p in (0.3, 0.6):
        est = invasion({"kind": "band", "radius": 20}, "F3", p, "cube")
        exact = 1 - (1 - p) ** 3
        ok &= abs(est.estimate - exact) <= 0.03
        parts.append(f"p={p}: {est.estimate:.4f} vs {exact:.4f}")
    record(3, ok, "cube invasion = 1-(1-p)^3 within 0.03; " + "; ".join(parts), t0)


def test_04_no_fortress_on_rhombus_tilings():
    t0 = time.perf_counter()
    parts, ok = [], True
    for kind, radius in (("penrose", 16), ("ngrid:4", 14), ("grid", 14)):
        g = build_graph(kind, radius)
        seeds = interior_sample(g, 60, 8)
        fs = fortress_search(g, seeds, 8, TWO_NEIGHBOUR)
        ok &= len(fs.seeds_used) >= 50 and not fs.fortresses
        parts.append(f"{kind}: {len(fs.seeds_used)} seeds, {fs.sets_visited} sets, {len(fs.fortresses)} fortresses")
    record(4, ok, "m=2 kmax=8 finds no fortress; " + "; ".join(parts), t0)


def test_05_stable_cluster_geometry():
    t0 = time.perf_counter()
    g = build_graph("penrose", 30)
    measure = MeasureSpec("bernoulli", 0.05)
    verdicts = {"yes": 0, "no": 0, "indeterminate": 0}
    max_sides, over, interior_clusters, trials = 0, 0, 0, 500
    for k in range(trials):
        final, _ = fixpoint(sample(measure, g, (2024, k)))
        for S in clusters(final, "vertex"):
            rep = boundary_decomposition(g, S)
            if rep.touches_boundary:
                continue
            interior_clusters += 1
            verdicts[rep.chain_convex] += 1
            if rep.boundary_segments is not None:
                max_sides = max(max_sides, rep.boundary_segments)
                over += rep.boundary_segments > 10
    ok = verdicts[NO] == 0 and over == 0 and interior_clusters > 0
    record(5, ok, f"{trials} trials, {interior_clusters} interior clusters, verdicts {verdicts}, "
                  f"max sides {max_sides} (limit 10)", t0)


def test_06_gon_counting_bound():
    t0 = time.perf_counter()
    g = build_graph("penrose", 24)
    tiles = interior_sample(g, 10, 12)
    basis = g.patch.basis
    worst, ok = 0.0, len(tiles) >= 10
    for t in tiles:
        for n, c in enumerate_enclosing_gons(g, t, 12).counts_convex.items():
            ok &= c <= q_bound(basis, n)
            worst = max(worst, c / q_bound(basis, n))
    grid = build_graph("grid", 16)
    grid_counts = {}
    for t in interior_sample(grid, 3, 12):
        for n, c in enumerate_enclosing_gons(grid, t, 12).counts_convex.items():
            ok &= c <= 2 * math.pi * n ** 6
            grid_counts[n] = max(grid_counts.get(n, 0), c)
    ok &= q_bound(basis, 1) == pytest.approx(19.34, abs=0.01)
    record(6, ok, f"{len(tiles)} Penrose tiles, max count/Q(n) = {worst:.2e}; grid max counts {grid_counts} "
                  f"<= 2*pi*n^6", t0)


ORACLE_KINDS = [("penrose", 10), ("grid", 8), ("ngrid:4", 8), ("band", 14), ("fortress-grid", 6), ("grid-hole", 6)]


def test_07_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    per_kind, ok = 200, True
    for kind, radius in ORACLE_KINDS:
        g = build_graph(kind, radius)
        rules = [TWO_NEIGHBOUR, RuleSpec(3)] + ([F3] if g.is_rhombus else [])
        for k in range(per_kind):
            x = (rng.random(len(g)) < rng.uniform(0, 0.35)).astype(np.uint8)
            c = Configuration(g, x, "infected" if k % 4 == 3 else "open")
            rule = rules[k % len(rules)]
            fast, r1 = fixpoint(c, rule)
            slow, r2 = fixpoint_oracle(c, rule)
            ok &= r1 == r2 and np.array_equal(fast.state, slow.state) and np.array_equal(fast.times, slow.times)
    record(7, ok, f"worklist == synchronous oracle on {per_kind} configurations x {len(ORACLE_KINDS)} kinds", t0)


def test_08_freezing_and_monotone():
    t0 = time.perf_counter()
    rng = np.random.default_rng(88)
    pairs, ok = 0, True
    for kind, radius in (("penrose", 10), ("band", 14), ("ngrid:4", 8), ("fortress-grid", 6)):
        g = build_graph(kind, radius)
        for _ in range(60):
            u = rng.random(len(g))
            p = rng.uniform(0, 0.2)
            lo = Configuration(g, (u < p).astype(np.uint8))
            hi = Configuration(g, (u < p + rng.uniform(0, 0.2)).astype(np.uint8))
            ok &= bool(np.all(step(lo).state >= lo.state) and np.all(step(hi).state >= hi.state))
            ok &= bool(np.all(fixpoint(hi)[0].state >= fixpoint(lo)[0].state))
            pairs += 1
    record(8, ok and pairs >= 200, f"step(c) >= c and order preserved on {pairs} coupled pairs", t0)


def test_09_finite_size_trend():
    t0 = time.perf_counter()
    freqs = {}
    for r in (20, 30, 40):
        freqs[r] = invasion({"kind": "penrose", "radius": r}, "m2", 0.1, "central-ball", trials=200, seed=9).estimate
    radii = sorted(freqs)
    monotone = all(freqs[a] <= freqs[b] for a, b in zip(radii, radii[1:]))
    reached = [r for r in radii if freqs[r] >= 0.95]
    spec = ExperimentSpec(graph={"kind": "penrose", "radius": 20}, measure=MeasureSpec("bernoulli", 0.0),
                          trials=100, seed=9)
    ps = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.15]
    ests, by_p = sweep(spec, ps, coupled=True)
    coupled = all(by_p[i][k].final_fraction <= by_p[i + 1][k].final_fraction
                  for i in range(len(ps) - 1) for k in range(spec.trials))
    coupled &= all(a.estimate <= b.estimate for a, b in zip(ests, ests[1:]))
    ok = monotone and bool(reached) and coupled
    at = "radius 40" if freqs[40] >= 0.95 else f"smallest radius {reached[0] if reached else None}"
    record(9, ok, f"central-ball invasion at p=0.1 {freqs}, >= 0.95 at {at}; coupled sweep monotone={coupled}", t0)


def test_10_zero_cylinder_decay():
    t0 = time.perf_counter()
    g = build_graph("penrose", 15)
    bern = zero_cylinder_decay(g, MeasureSpec("bernoulli", 0.2), [1, 2, 4, 6, 8, 10], 50_000, seed=10)
    nmax = zero_cylinder_decay(g, MeasureSpec("neighbourhood_max", 0.1), [1, 2, 4, 6, 8, 10], 50_000, seed=11)
    ok = bern.p_value > 0.01 and nmax.slope < 0
    record(10, ok, f"bernoulli chi2 p-value {bern.p_value:.3f} (> 0.01); neighbourhood_max log-slope "
                   f"{nmax.slope:.3f} (< 0)", t0)


def test_11_vertex_star_obstacle_for_m3():
    t0 = time.perf_counter()
    ok, parts = True, []
    for kind, radius in (("penrose", 10), ("ngrid:4", 8), ("grid", 8), ("band", 14)):
        g = build_graph(kind, radius)
        stars = [ts for ts in g.patch.vertex_index.values() if len(ts) >= 3 and all(g.interior[t] for t in ts)]
        survived = 0
        for tiles in stars[:25]:
            x = np.ones(len(g), dtype=np.uint8)
            x[list(tiles)] = 0
            out, _ = fixpoint(Configuration(g, x), RuleSpec(3))
            survived += bool(np.all(out.state[list(tiles)] == 0))
        ok &= survived == min(25, len(stars)) > 0
        parts.append(f"{kind} {survived}/{min(25, len(stars))}")
    record(11, ok, "m=3 vertex stars of 0s survive: " + ", ".join(parts), t0)


def test_12_mc_deterministic_across_threads(tmp_path, capsys):
    t0 = time.perf_counter()
    exp = tmp_path / "exp.json"
    exp.write_text(json.dumps({"graph": {"kind": "penrose", "radius": 12}, "rule": "m2",
                               "measure": "bernoulli:0.06", "trials": 64, "seed": 12}))
    outs = []
    for th in ("1", "8"):
        csv = tmp_path / f"t{th}.csv"
        code = cli.main(["mc", "--experiment", str(exp), "--threads", th, "--csv", str(csv)])
        outs.append((code, capsys.readouterr().out.encode(), csv.read_bytes()))
    ok = outs[0] == outs[1] and outs[0][0] == 0
    record(12, ok, "quasiperc mc JSON and CSV byte-identical for --threads 1 and 8", t0)
