"""Measures, Monte Carlo trials, invasion criteria and cylinder statistics.

Randomness contract: trial ``k`` of an experiment with master seed ``s`` uses
``Generator(Philox(SeedSequence([s, k])))`` and draws one uniform per tile in
tile-id order, so tile ``t`` of trial ``k`` always sees the same uniform no
matter how trials are scheduled.  Bernoulli(p) sets ``x_t = [u_t < p]``; the
neighbourhood-max measure thresholds the same uniforms at ``q`` to get seeds.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .analysis import enumerate_enclosing_gons
from .dynamics import Configuration, RuleSpec, engine_for
from .errors import InvalidInputError
from .graph import AdjacencyGraph, edge_neighbours
from .multigrid import build_graph, cube_tiles, fortress_nodes

Z95 = float(stats.norm.ppf(0.975))


@dataclass(frozen=True)
class MeasureSpec:
    kind: str = "bernoulli"
    param: float = 0.5

    def __post_init__(self):
        if self.kind not in ("bernoulli", "neighbourhood_max"):
            raise InvalidInputError(f"unknown measure {self.kind!r}")
        if not 0.0 <= self.param <= 1.0:
            raise InvalidInputError(f"measure parameter {self.param} outside [0, 1]")

    def __str__(self):
        return f"{self.kind}:{self.param:g}"

    def with_param(self, value: float) -> "MeasureSpec":
        return MeasureSpec(self.kind, float(value))

    @classmethod
    def parse(cls, text) -> "MeasureSpec":
        """``bernoulli:0.3`` / ``neighbourhood_max:0.2`` or a dict with kind and p (or q)."""
        if isinstance(text, dict):
            kind = text.get("kind", "bernoulli")
            val = text.get("p", text.get("q", text.get("param")))
            return cls(kind, float(val))
        try:
            kind, val = str(text).split(":")
            return cls(kind.strip(), float(val))
        except ValueError as exc:
            raise InvalidInputError(f"bad measure {text!r}") from exc

    def one_probability(self, closed_size: int = 1) -> float:
        """Marginal P(x_t = 1) for a tile whose closed neighbourhood has ``closed_size`` tiles."""
        if self.kind == "bernoulli":
            return self.param
        return 1.0 - (1.0 - self.param) ** closed_size


def trial_stream(master: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master), int(trial)])))


def uniforms(graph: AdjacencyGraph, master: int, trial: int) -> np.ndarray:
    return trial_stream(master, trial).random(len(graph))


def _closed_max(graph: AdjacencyGraph, seeds: np.ndarray) -> np.ndarray:
    x = seeds.copy()
    tails = np.repeat(np.arange(len(graph)), graph.degree)
    np.maximum.at(x, tails, seeds[graph.indices])
    return x


def from_uniforms(measure: MeasureSpec, graph: AdjacencyGraph, u: np.ndarray) -> np.ndarray:
    y = (u < measure.param).astype(np.uint8)
    if measure.kind == "neighbourhood_max":
        return _closed_max(graph, y)
    return y


def sample(measure: MeasureSpec, graph: AdjacencyGraph, rng, boundary_policy: str = "open") -> Configuration:
    """Draw a configuration; ``rng`` is a Generator or a ``(master, trial)`` pair."""
    if isinstance(rng, tuple):
        rng = trial_stream(*rng)
    u = rng.random(len(graph))
    return Configuration(graph, from_uniforms(measure, graph, u), boundary_policy)


# --- invasion criteria ----------------------------------------------------------

CRITERIA = ("central-ball", "full-patch", "target-set", "fortress-ball", "cube")


@dataclass(frozen=True)
class Criterion:
    """Finite-patch invasion event: every tile of a resolved target set is infected."""

    kind: str = "central-ball"
    radius: int | None = None
    tiles: tuple | None = None

    def __post_init__(self):
        if self.kind not in CRITERIA:
            raise InvalidInputError(f"unknown criterion {self.kind!r}")
        if self.kind == "target-set" and not self.tiles:
            raise InvalidInputError("target-set criterion needs tiles")

    @classmethod
    def parse(cls, obj) -> "Criterion":
        if obj is None:
            return cls()
        if isinstance(obj, str):
            return cls(obj)
        tiles = obj.get("tiles")
        return cls(obj.get("kind", "central-ball"), obj.get("radius"),
                   None if tiles is None else tuple(int(t) for t in tiles))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "radius": self.radius, "tiles": None if self.tiles is None else list(self.tiles)}


@dataclass
class ResolvedCriterion:
    target: np.ndarray
    obstacle: np.ndarray | None
    center: int | None
    radius: int | None


def central_ball(graph: AdjacencyGraph, radius: int | None = None, center: int | None = None):
    """Tiles within ``radius`` of the tile nearest the origin; default radius is half its eccentricity."""
    c = graph.central_node() if center is None else center
    if radius is None:
        radius = max(graph.bfs_distances([c]).values()) // 2
    ball = graph.bfs_distances([c], limit=radius)
    return c, int(radius), np.array(sorted(ball), dtype=np.int64)


def resolve_criterion(graph: AdjacencyGraph, crit: Criterion) -> ResolvedCriterion:
    if crit.kind == "full-patch":
        return ResolvedCriterion(np.arange(len(graph)), None, None, None)
    if crit.kind == "target-set":
        t = np.array(sorted(crit.tiles), dtype=np.int64)
        if t.min() < 0 or t.max() >= len(graph):
            raise InvalidInputError("target tile outside the graph")
        return ResolvedCriterion(t, t, None, None)
    if crit.kind == "cube":
        graph.require_rhombus("cube criterion")
        cube = np.array(cube_tiles(graph.patch), dtype=np.int64)
        if not cube.size:
            raise InvalidInputError("graph has no cube tiles")
        return ResolvedCriterion(cube, cube, None, None)
    if crit.kind == "fortress-ball":
        fort = np.array(fortress_nodes(graph), dtype=np.int64)
        c, r, ball = central_ball(graph, crit.radius, center=int(fort[-1]))
        return ResolvedCriterion(np.union1d(ball, fort), fort, c, r)
    c, r, ball = central_ball(graph, crit.radius)
    return ResolvedCriterion(ball, None, c, r)


# --- experiments ----------------------------------------------------------------


@dataclass
class ExperimentSpec:
    graph: dict
    rule: str = "m2"
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    trials: int = 100
    seed: int = 0
    criterion: Criterion = field(default_factory=Criterion)
    boundary_policy: str = "open"
    p_values: list | None = None
    coupled: bool = True

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if "kind" not in self.graph:
            raise InvalidInputError("graph section needs a kind")
        RuleSpec.parse(self.rule)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        try:
            return cls(graph=dict(doc["graph"]), rule=doc.get("rule", "m2"),
                       measure=MeasureSpec.parse(doc.get("measure", "bernoulli:0.5")),
                       trials=int(doc.get("trials", 100)), seed=int(doc.get("seed", 0)),
                       criterion=Criterion.parse(doc.get("criterion")),
                       boundary_policy=doc.get("boundary_policy", "open"),
                       p_values=doc.get("p_values"), coupled=bool(doc.get("coupled", True)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"invalid experiment: {exc}") from exc

    def to_dict(self) -> dict:
        d = {"graph": self.graph, "rule": self.rule, "measure": str(self.measure), "trials": self.trials,
             "seed": self.seed, "criterion": self.criterion.to_dict(), "boundary_policy": self.boundary_policy}
        if self.p_values is not None:
            d["p_values"] = list(self.p_values)
            d["coupled"] = self.coupled
        return d

    def build(self) -> AdjacencyGraph:
        g = self.graph
        return build_graph(g["kind"], float(g.get("radius", 10)), g.get("offsets"))


@dataclass
class TrialStats:
    trial: int
    invaded: bool
    rounds: int
    initial_fraction: float
    final_fraction: float
    clusters: int
    largest_cluster: int
    obstacle_hit: bool | None = None
    histogram: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("histogram")
        return d


@dataclass
class Estimate:
    successes: int
    trials: int
    estimate: float
    low: float
    high: float
    mean_rounds: float = float("nan")
    param: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    ph = successes / trials
    den = 1 + z * z / trials
    mid = (ph + z * z / (2 * trials)) / den
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / den
    # the bounds at k = 0 and k = n are exactly 0 and 1; avoid rounding inside the point estimate
    lo = 0.0 if successes == 0 else max(0.0, mid - half)
    hi = 1.0 if successes == trials else min(1.0, mid + half)
    return lo, hi


def estimate_from(flags: Sequence[bool], rounds: Sequence[int] | None = None, param=None) -> Estimate:
    k, n = int(sum(bool(f) for f in flags)), len(flags)
    lo, hi = wilson_interval(k, n)
    mr = float(np.mean(rounds)) if rounds is not None and len(rounds) else float("nan")
    return Estimate(k, n, k / n if n else float("nan"), lo, hi, mr, param)


class Experiment:
    """An ExperimentSpec bound to its graph, rule and resolved criterion."""

    def __init__(self, spec: ExperimentSpec, graph: AdjacencyGraph | None = None):
        self.spec = spec
        self.graph = graph if graph is not None else spec.build()
        self.rule = RuleSpec.parse(spec.rule)
        self.engine = engine_for(self.graph, self.rule, spec.boundary_policy)
        self.criterion = resolve_criterion(self.graph, spec.criterion)

    def evaluate(self, trial: int, x0: np.ndarray) -> TrialStats:
        final, _, rounds = self.engine.run(x0)
        crit = self.criterion
        invaded = bool(final[crit.target].all())
        on = np.flatnonzero(final)
        if on.size:
            sub = self.graph.csr_matrix[on][:, on]
            _, lab = connected_components(sub, directed=False)
            sizes = np.bincount(lab)
        else:
            sizes = np.zeros(0, dtype=np.int64)
        hist = {int(s): int(c) for s, c in zip(*np.unique(sizes, return_counts=True))}
        hit = None if crit.obstacle is None else bool(x0[crit.obstacle].any())
        n = len(self.graph)
        return TrialStats(trial, invaded, rounds, float(x0.sum()) / n, float(final.sum()) / n,
                          int(sizes.size), int(sizes.max(initial=0)), hit, hist)

    def run_trial(self, trial: int) -> TrialStats:
        u = uniforms(self.graph, self.spec.seed, trial)
        return self.evaluate(trial, from_uniforms(self.spec.measure, self.graph, u))


def run_trial(spec: ExperimentSpec | Experiment, trial_index: int) -> TrialStats:
    exp = spec if isinstance(spec, Experiment) else Experiment(spec)
    return exp.run_trial(trial_index)


def default_threads() -> int:
    return max(1, int(os.environ.get("QUASIPERC_THREADS", "1")))


def _map_trials(fn: Callable, n: int, threads: int | None) -> list:
    threads = threads or default_threads()
    if threads == 1:
        return [fn(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def summarize(stats: Sequence[TrialStats], param=None) -> Estimate:
    est = estimate_from([s.invaded for s in stats], [s.rounds for s in stats], param)
    hits = [s.obstacle_hit for s in stats if s.obstacle_hit is not None]
    if hits:
        # finite-size correction: obstacle disarmed but the target was still not invaded, or vice versa
        est.extra["obstacle_hit_frequency"] = sum(hits) / len(hits)
        est.extra["correction"] = est.extra["obstacle_hit_frequency"] - est.estimate
    est.extra["mean_final_fraction"] = float(np.mean([s.final_fraction for s in stats]))
    return est


def monte_carlo(spec: ExperimentSpec | Experiment, threads: int | None = None) -> tuple[Estimate, list[TrialStats]]:
    """Invasion probability with a 95% Wilson interval, plus the per-trial records in trial order."""
    exp = spec if isinstance(spec, Experiment) else Experiment(spec)
    stats_ = _map_trials(exp.run_trial, exp.spec.trials, threads)
    return summarize(stats_, exp.spec.measure.param), stats_


def sweep(spec: ExperimentSpec | Experiment, p_values: Sequence[float], coupled: bool = True,
          threads: int | None = None) -> tuple[list[Estimate], list[list[TrialStats]]]:
    """Invasion estimates along ascending parameter values.

    Coupled sweeps reuse one uniform per tile per trial for every value, so
    per-trial outcomes (and estimates) are monotone exactly.  Uncoupled sweeps
    give value ``a`` the seed ``master + a``.
    """
    exp = spec if isinstance(spec, Experiment) else Experiment(spec)
    ps = [float(p) for p in p_values]
    if any(b < a for a, b in zip(ps, ps[1:])):
        raise InvalidInputError("p_values must be ascending")
    g, measure, seed = exp.graph, exp.spec.measure, exp.spec.seed

    def one(trial):
        rows = []
        u = uniforms(g, seed, trial) if coupled else None
        for a, p in enumerate(ps):
            uu = u if coupled else uniforms(g, seed + a, trial)
            rows.append(exp.evaluate(trial, from_uniforms(measure.with_param(p), g, uu)))
        return rows

    per_trial = _map_trials(one, exp.spec.trials, threads)
    by_p = [[per_trial[k][a] for k in range(len(per_trial))] for a in range(len(ps))]
    return [summarize(rows, p) for rows, p in zip(by_p, ps)], by_p


# --- cylinder statistics ----------------------------------------------------------


def _sample_local(graph: AdjacencyGraph, measure: MeasureSpec, tiles: Sequence[int], trials: int,
                  rng: np.random.Generator, chunk: int = 100_000):
    """Yield boolean blocks (rows = samples) of the configuration restricted to ``tiles``."""
    tiles = list(tiles)
    if measure.kind == "bernoulli":
        support = tiles
        gather = None
    else:
        support = sorted(set(tiles) | edge_neighbours(graph, tiles))
        where = {t: k for k, t in enumerate(support)}
        gather = [[where[t]] + [where[v] for v in graph.adjacency[t]] for t in tiles]
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        seeds = rng.random((m, len(support))) < measure.param
        if gather is None:
            yield seeds
        else:
            yield np.column_stack([seeds[:, cols].any(axis=1) for cols in gather]) if tiles else seeds[:, :0]
        done += m


def random_connected_domain(graph: AdjacencyGraph, size: int, rng: np.random.Generator,
                            start: int | None = None) -> list[int]:
    """Grow a connected interior tile set of ``size`` tiles by random frontier additions."""
    interior = np.flatnonzero(graph.interior)
    if size == 0:
        return []
    for _ in range(100):
        s = int(rng.choice(interior)) if start is None else start
        dom, front = [s], set(v for v in graph.adjacency[s] if graph.interior[v])
        members = {s}
        while len(dom) < size and front:
            v = sorted(front)[int(rng.integers(len(front)))]
            front.discard(v)
            dom.append(v)
            members.add(v)
            front |= {w for w in graph.adjacency[v] if graph.interior[w] and w not in members}
        if len(dom) == size:
            return dom
    raise InvalidInputError(f"could not grow a connected interior domain of size {size}")


def exact_zero_cylinder(graph: AdjacencyGraph, measure: MeasureSpec, domain: Sequence[int]) -> float:
    """mu([0^D]): (1-p)^|D| for Bernoulli, (1-q)^|D u N(D)| for the neighbourhood max."""
    if measure.kind == "bernoulli":
        return (1.0 - measure.param) ** len(domain)
    return (1.0 - measure.param) ** len(set(domain) | edge_neighbours(graph, domain))


@dataclass
class DecayReport:
    sizes: list
    frequencies: list
    exact: list
    slope: float
    chi2: float | None
    p_value: float | None
    trials: int

    def to_dict(self) -> dict:
        return asdict(self)


def zero_cylinder_decay(graph: AdjacencyGraph, measure: MeasureSpec, sizes: Sequence[int], trials: int,
                        seed: int = 0) -> DecayReport:
    """Empirical mu([0^D]) over random connected domains of each size, with a log-linear fit.

    The chi-square statistic compares zero-cylinder counts with their exact
    expectation (one degree of freedom per size with a non-degenerate law).
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0xDECA])))
    freqs, exact = [], []
    chi2 = 0.0
    dof = 0
    for n in sizes:
        if n > int(graph.interior.sum()):
            raise InvalidInputError(f"domain size {n} exceeds the patch")
        dom = random_connected_domain(graph, n, rng)
        hits = 0
        for block in _sample_local(graph, measure, dom, trials, rng):
            hits += int((~block.any(axis=1)).sum())
        f = hits / trials
        e = exact_zero_cylinder(graph, measure, dom)
        freqs.append(f)
        exact.append(e)
        if 0 < e < 1:
            exp_hits = trials * e
            chi2 += (hits - exp_hits) ** 2 / (trials * e * (1 - e))
            dof += 1
    mask = [k for k, f in enumerate(freqs) if f > 0]
    slope = float("nan")
    if len(mask) >= 2:
        slope = float(np.polyfit([sizes[k] for k in mask], np.log([freqs[k] for k in mask]), 1)[0])
    pval = float(stats.chi2.sf(chi2, dof)) if dof else None
    return DecayReport(list(sizes), freqs, exact, slope, chi2 if dof else None, pval, trials)


Event = tuple  # ("all", tiles) or ("atleast", k, tiles)


def _event_value(event: Event, block: np.ndarray, cols: list[int]) -> np.ndarray:
    sub = block[:, cols]
    if event[0] == "all":
        return sub.all(axis=1)
    if event[0] == "atleast":
        return sub.sum(axis=1) >= int(event[1])
    raise InvalidInputError(f"unknown event {event[0]!r}")


def _event_tiles(event: Event) -> list[int]:
    return list(event[1] if event[0] == "all" else event[2])


@dataclass
class CorrelationReport:
    pairs: list

    @property
    def ok(self) -> bool:
        return not any(p["significant_negative"] for p in self.pairs)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "pairs": self.pairs}


def positive_correlation_check(graph: AdjacencyGraph, measure: MeasureSpec, event_pairs: Iterable[tuple],
                               trials: int, seed: int = 0, z_crit: float = 3.0) -> CorrelationReport:
    """Estimate mu(X and Y) - mu(X) mu(Y) for upward-closed events; flag values below -z_crit sigma."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0xC0FF])))
    out = []
    for X, Y in event_pairs:
        tx, ty = _event_tiles(X), _event_tiles(Y)
        tiles = sorted(set(tx) | set(ty))
        where = {t: k for k, t in enumerate(tiles)}
        cx, cy = [where[t] for t in tx], [where[t] for t in ty]
        nx = ny = nxy = 0
        for block in _sample_local(graph, measure, tiles, trials, rng):
            vx, vy = _event_value(X, block, cx), _event_value(Y, block, cy)
            nx += int(vx.sum())
            ny += int(vy.sum())
            nxy += int((vx & vy).sum())
        px, py, pxy = nx / trials, ny / trials, nxy / trials
        diff = pxy - px * py
        # delta-method standard error of the plug-in covariance
        var = (pxy * (1 - pxy) + (py ** 2) * px * (1 - px) + (px ** 2) * py * (1 - py)) / trials
        sigma = math.sqrt(max(var, 1e-300))
        out.append({"x": list(X[:-1]) + [list(tx)], "y": list(Y[:-1]) + [list(ty)], "mu_x": px, "mu_y": py,
                    "mu_xy": pxy, "difference": diff, "sigma": sigma,
                    "significant_negative": bool(diff < -z_crit * sigma)})
    return CorrelationReport(out)


def enclosure_probability(graph: AdjacencyGraph, t: int, n: int, measure: MeasureSpec, trials: int,
                          seed: int = 0) -> Estimate:
    """mu(E_{t,<=n}): x_t = 0, or some chain 2d-gon of length <= n around t is all 0.

    This restricts to gons of length <= n, so it is a lower bound on the full
    enclosure probability.
    """
    census = enumerate_enclosing_gons(graph, t, n, keep=True)
    d = graph.patch.d
    gons = [g.cycle for g in census.gons if g.is_2d_gon(d)]
    tiles = sorted({t} | {u for cyc in gons for u in cyc})
    where = {u: k for k, u in enumerate(tiles)}
    cols = [[where[u] for u in cyc] for cyc in gons]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(t), int(n)])))
    hits = 0
    for block in _sample_local(graph, measure, tiles, trials, rng):
        enc = ~block[:, where[t]]
        for c in cols:
            enc |= ~block[:, c].any(axis=1)
        hits += int(enc.sum())
    lo, hi = wilson_interval(hits, trials)
    return Estimate(hits, trials, hits / trials, lo, hi, param=measure.param,
                    extra={"gons": len(gons), "restricted_to_length": n})


# --- serialization --------------------------------------------------------------

CSV_FIELDS = ("trial", "invaded", "rounds", "initial_fraction", "final_fraction", "clusters",
              "largest_cluster", "obstacle_hit")


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def trials_csv(stats_: Sequence[TrialStats], param: float | None = None) -> str:
    buf = io.StringIO()
    fields = (("p",) if param is not None else ()) + CSV_FIELDS
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for s in stats_:
        row = s.row()
        w.writerow(([repr(float(param))] if param is not None else []) + [_fmt(row[f]) for f in CSV_FIELDS])
    return buf.getvalue()


def sweep_csv(estimates: Sequence[Estimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("p", "successes", "trials", "estimate", "low", "high", "mean_rounds"))
    for e in estimates:
        w.writerow([repr(float(e.param)), e.successes, e.trials, repr(e.estimate), repr(e.low), repr(e.high),
                    repr(e.mean_rounds)])
    return buf.getvalue()


def summary_json(spec: ExperimentSpec, estimates, analytic: float | None = None, runtime: float | None = None) -> str:
    doc = {"experiment": spec.to_dict(), "seed": spec.seed,
           "rng": "numpy Philox keyed by SeedSequence([seed, trial]); one uniform per tile in id order"}
    if isinstance(estimates, Estimate):
        doc["estimate"] = estimates.to_dict()
    else:
        doc["estimates"] = [e.to_dict() for e in estimates]
    if analytic is not None:
        doc["analytic"] = analytic
    if runtime is not None:
        doc["runtime_s"] = runtime
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
