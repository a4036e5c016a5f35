"""Consistency-check suites run by ``quasiperc verify``.

Each check yields a record with status ``pass``, ``fail``, ``indeterminate``
or ``skipped: generic graph``; only ``fail`` makes a report fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    INDETERMINATE,
    NO,
    boundary_decomposition,
    clusters,
    enumerate_enclosing_gons,
    fortress_search,
    q_bound,
    validate_gon,
)
from .dynamics import TWO_NEIGHBOUR, fixpoint
from .errors import MarginError
from .graph import AdjacencyGraph, theta_violations, verify_chain_crossing, vertex_neighbours
from .percolation import MeasureSpec, sample

SUITES = ("geometry", "stability", "counting")
PASS, FAIL, INDET, SKIPPED = "pass", "fail", "indeterminate", "skipped: generic graph"


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["status"] != FAIL for c in self.checks)

    @property
    def violations(self) -> list:
        return [c for c in self.checks if c["status"] == FAIL]

    def add(self, check: str, status: str, **details):
        self.checks.append({"check": check, "status": status, **details})

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.checks, "violations": self.violations}


def interior_sample(graph: AdjacencyGraph, k: int, margin: int) -> list[int]:
    """Up to ``k`` tiles, nearest the centre first, whose ``margin``-ball is interior."""
    order = np.argsort(np.hypot(graph.positions[:, 0], graph.positions[:, 1]), kind="stable")
    out = []
    for t in order.tolist():
        if len(out) >= k:
            break
        ball = graph.bfs_distances([t], limit=margin)
        if all(graph.interior[u] for u in ball):
            out.append(t)
    return out


def geometry_suite(graph: AdjacencyGraph, report: VerifyReport, kmax: int = 6, samples: int = 10) -> None:
    names = ("chain crossing", "theta monotonicity", "fortress absence")
    if not graph.is_rhombus:
        for nm in names:
            report.add(nm, SKIPPED)
        return
    cr = verify_chain_crossing(graph)
    report.add(names[0], PASS if cr.ok else FAIL, chains=cr.chains, crossings=cr.crossings,
               examples=cr.violations[:5])
    tv = theta_violations(graph)
    report.add(names[1], PASS if not tv else FAIL, theta=graph.patch.basis.theta, examples=tv[:5])
    seeds = interior_sample(graph, samples, kmax)
    if not seeds:
        report.add(names[2], INDET, reason="no seed with an interior search ball")
        return
    fs = fortress_search(graph, seeds, kmax, TWO_NEIGHBOUR)
    report.add(names[2], PASS if not fs.fortresses else FAIL, kmax=kmax, seeds=len(fs.seeds_used),
               sets_visited=fs.sets_visited, fortresses=[list(f) for f in fs.fortresses[:5]])


def stability_suite(graph: AdjacencyGraph, report: VerifyReport, samples: int = 10, p: float = 0.05,
                    seed: int = 0) -> None:
    names = ("stable clusters chain convex", "stable cluster boundary sides", "stable cluster boundary zeros")
    if not graph.is_rhombus:
        for nm in names:
            report.add(nm, SKIPPED)
        return
    d = graph.patch.d
    counts = {"yes": 0, "no": 0, "indeterminate": 0}
    side_fail, zero_fail, max_sides = [], [], 0
    measure = MeasureSpec("bernoulli", p)
    for k in range(samples):
        final, _ = fixpoint(sample(measure, graph, (seed, k)))
        for S in clusters(final, "vertex"):
            rep = boundary_decomposition(graph, S)
            counts[rep.chain_convex] += 1
            if rep.chain_convex == NO:
                report.add(names[0], FAIL, trial=k, cluster=list(rep.tiles), witness=rep.witness)
            if rep.touches_boundary:
                continue
            if rep.boundary_segments is not None:
                max_sides = max(max_sides, rep.boundary_segments)
                if rep.chain_convex != INDETERMINATE and rep.boundary_segments > 2 * d:
                    side_fail.append({"trial": k, "cluster": list(rep.tiles), "sides": rep.boundary_segments})
            ring = vertex_neighbours(graph, S)
            if any(final.state[t] for t in ring):
                zero_fail.append({"trial": k, "cluster": list(rep.tiles)})
    if counts["no"] == 0:
        report.add(names[0], PASS, verdicts=counts)
    report.add(names[1], PASS if not side_fail else FAIL, max_sides=max_sides, limit=2 * d, examples=side_fail[:5])
    report.add(names[2], PASS if not zero_fail else FAIL, examples=zero_fail[:5])


def counting_suite(graph: AdjacencyGraph, report: VerifyReport, n_max: int = 10, samples: int = 3,
                   validate_on: AdjacencyGraph | None = None) -> None:
    """Gon counts against Q(n), and every enumerated gon re-validated (optionally on another graph)."""
    names = ("gon counting bound", "gon validity")
    if not graph.is_rhombus:
        for nm in names:
            report.add(nm, SKIPPED)
        return
    tiles = interior_sample(graph, samples, n_max)
    if not tiles:
        for nm in names:
            report.add(nm, INDET, reason=f"no tile with an interior radius-{n_max} ball")
        return
    basis = graph.patch.basis
    over, invalid, totals = [], [], {}
    check_graph = validate_on if validate_on is not None else graph
    for t in tiles:
        try:
            census = enumerate_enclosing_gons(graph, t, n_max, keep=True)
        except MarginError:
            continue
        for n, c in census.counts_convex.items():
            if c > q_bound(basis, n):
                over.append({"tile": t, "n": n, "count": c, "bound": q_bound(basis, n)})
        for n, c in census.counts.items():
            totals[n] = totals.get(n, 0) + c
        for gon in census.gons:
            errs = validate_gon(check_graph, gon)
            if errs:
                invalid.append({"tile": t, "cycle": list(gon.cycle), "errors": errs})
    report.add(names[0], PASS if not over else FAIL, tiles=tiles, n_max=n_max,
               counts={str(k): v for k, v in sorted(totals.items())}, examples=over[:5])
    report.add(names[1], PASS if not invalid else FAIL, examples=invalid[:5])


def run_suites(graph: AdjacencyGraph, suite: str = "all", kmax: int = 6, samples: int = 10,
               n_max: int = 10, seed: int = 0) -> VerifyReport:
    chosen = SUITES if suite == "all" else (suite,)
    if any(s not in SUITES for s in chosen):
        raise ValueError(f"unknown suite {suite!r}")
    rep = VerifyReport()
    if "geometry" in chosen:
        geometry_suite(graph, rep, kmax=kmax, samples=samples)
    if "stability" in chosen:
        stability_suite(graph, rep, samples=samples, seed=seed)
    if "counting" in chosen:
        counting_suite(graph, rep, n_max=n_max, samples=max(1, min(samples, 3)))
    return rep
