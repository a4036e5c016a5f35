"""Bootstrap cellular automata: m-neighbour and partially directed contamination.

The synchronous map ``step`` is the reference semantics.  ``fixpoint`` is a
worklist engine (numba) that reproduces it exactly, including the number of
synchronous rounds, in time proportional to the number of arcs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import InvalidInputError, UnsupportedRuleError
from .graph import AdjacencyGraph

BOUNDARY_POLICIES = ("open", "infected")


@dataclass(frozen=True)
class RuleSpec:
    """Threshold ``m`` and the optional set of counted ``(family, sign)`` directions.

    A neighbour ``t'`` of ``t`` counts when the arc ``t -> t'`` carries a label
    in ``allowed``; ``allowed=None`` counts every neighbour.
    """

    m: int = 2
    allowed: frozenset | None = None
    name: str = ""

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInputError("threshold m must be >= 1")
        if self.allowed is not None and not self.allowed:
            raise InvalidInputError("directed rule needs a non-empty direction set")

    @property
    def directed(self) -> bool:
        return self.allowed is not None

    def __str__(self):
        if self.name:
            return self.name
        if not self.directed:
            return f"m{self.m}"
        parts = ",".join(f"{f}{'+' if s > 0 else '-'}" for f, s in sorted(self.allowed))
        return f"directed:{parts}" + (f"@m{self.m}" if self.m != 2 else "")

    @classmethod
    def parse(cls, text: str) -> "RuleSpec":
        """``m2``, ``m3``, ``F3`` or ``directed:0+,1-,2+,3,4[@m2]`` (bare family = both signs)."""
        text = text.strip()
        if text.upper() == "F3":
            return F3
        if text.startswith("m") and text[1:].isdigit():
            return cls(int(text[1:]))
        if text.startswith("directed:"):
            body = text[len("directed:"):]
            m = 2
            if "@m" in body:
                body, mm = body.split("@m")
                m = int(mm)
            allowed = set()
            for tok in filter(None, (x.strip() for x in body.split(","))):
                if tok[-1] in "+-":
                    allowed.add((int(tok[:-1]), 1 if tok[-1] == "+" else -1))
                else:
                    allowed.update({(int(tok), 1), (int(tok), -1)})
            return cls(m, frozenset(allowed))
        raise InvalidInputError(f"unknown rule {text!r}")


TWO_NEIGHBOUR = RuleSpec(2, None, "m2")
# counted directions +e0^perp, -e1^perp, +e2^perp, both senses of e3^perp, e4^perp
F3 = RuleSpec(2, frozenset({(0, 1), (1, -1), (2, 1), (3, 1), (3, -1), (4, 1), (4, -1)}), "F3")


@dataclass
class Configuration:
    graph: AdjacencyGraph
    state: np.ndarray
    boundary_policy: str = "open"
    times: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.uint8)
        if self.state.shape != (len(self.graph),):
            raise InvalidInputError(f"state has shape {self.state.shape}, graph has {len(self.graph)} tiles")
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise InvalidInputError(f"unknown boundary policy {self.boundary_policy!r}")

    @classmethod
    def zeros(cls, graph, boundary_policy="open"):
        return cls(graph, np.zeros(len(graph), dtype=np.uint8), boundary_policy)

    @classmethod
    def ones(cls, graph, boundary_policy="open"):
        return cls(graph, np.ones(len(graph), dtype=np.uint8), boundary_policy)

    @classmethod
    def from_set(cls, graph, infected, boundary_policy="open"):
        s = np.zeros(len(graph), dtype=np.uint8)
        s[list(infected)] = 1
        return cls(graph, s, boundary_policy)

    def with_state(self, state) -> "Configuration":
        return Configuration(self.graph, state, self.boundary_policy)

    def infected(self) -> np.ndarray:
        return np.flatnonzero(self.state)

    def in_cylinder(self, pattern: dict) -> bool:
        """Membership in the cylinder fixing ``pattern`` (tile -> 0/1)."""
        return all(int(self.state[t]) == int(q) for t, q in pattern.items())

    def to_rle(self) -> str:
        return encode_rle(self.state)


def encode_rle(bits) -> str:
    """Run-length bit string, e.g. ``0x5,1x2`` for 0000011."""
    bits = np.asarray(bits, dtype=np.uint8)
    if not bits.size:
        return ""
    cuts = np.flatnonzero(np.diff(bits)) + 1
    starts = np.concatenate([[0], cuts])
    lens = np.diff(np.concatenate([starts, [bits.size]]))
    return ",".join(f"{int(bits[s])}x{int(k)}" for s, k in zip(starts, lens))


def decode_rle(text: str) -> np.ndarray:
    if not text:
        return np.zeros(0, dtype=np.uint8)
    parts = [tok.split("x") for tok in text.split(",")]
    return np.concatenate([np.full(int(k), int(b), dtype=np.uint8) for b, k in parts])


def _check(graph: AdjacencyGraph, rule: RuleSpec) -> None:
    if rule.directed and not graph.is_rhombus:
        raise UnsupportedRuleError(f"directed rule {rule} needs direction labels; {graph.label!r} has none")


def _allowed_table(graph: AdjacencyGraph, rule: RuleSpec) -> np.ndarray:
    nfam = int(graph.family.max(initial=0)) + 1
    if rule.allowed:
        nfam = max(nfam, max(f for f, _ in rule.allowed) + 1)
    table = np.zeros((max(nfam, 1), 3), dtype=bool)
    for f, s in rule.allowed:
        table[f, s + 1] = True
    return table


def arc_mask(graph: AdjacencyGraph, rule: RuleSpec) -> np.ndarray:
    """Per-arc flag: does the arc's tail count its head under ``rule``?"""
    _check(graph, rule)
    if not rule.directed:
        return np.ones(len(graph.indices), dtype=bool)
    return _allowed_table(graph, rule)[graph.family, graph.sign + 1]


def virtual_counts(graph: AdjacencyGraph, rule: RuleSpec, policy: str) -> np.ndarray:
    """Infected virtual neighbours beyond the patch edge (infected policy only)."""
    n = len(graph)
    if policy == "open":
        return np.zeros(n, dtype=np.int32)
    out = np.zeros(n, dtype=np.int32)
    for u in range(n):
        miss = graph.missing[u] if graph.missing is not None else []
        if rule.directed:
            out[u] = sum(1 for lab in miss if lab in rule.allowed)
        else:
            out[u] = len(miss)
    return out


def _tail_of_arcs(graph: AdjacencyGraph) -> np.ndarray:
    return np.repeat(np.arange(len(graph)), graph.degree)


def step(config: Configuration, rule: RuleSpec = TWO_NEIGHBOUR) -> Configuration:
    """One synchronous application of the rule."""
    g = config.graph
    mask = arc_mask(g, rule)
    x = config.state
    tails = _tail_of_arcs(g)[mask]
    heads = g.indices[mask]
    cnt = np.bincount(tails, weights=x[heads], minlength=len(g)).astype(np.int64)
    cnt += virtual_counts(g, rule, config.boundary_policy)
    new = (x.astype(bool) | (cnt >= rule.m)).astype(np.uint8)
    return config.with_state(new)


def fixpoint_oracle(config: Configuration, rule: RuleSpec = TWO_NEIGHBOUR) -> tuple[Configuration, int]:
    """Iterate ``step`` until nothing changes; returns (limit with times, changing rounds)."""
    cur = config
    times = np.where(config.state == 1, 0, -1).astype(np.int64)
    rounds = 0
    while True:
        nxt = step(cur, rule)
        newly = nxt.state & ~cur.state
        if not newly.any():
            return Configuration(cur.graph, cur.state, cur.boundary_policy, times), rounds
        rounds += 1
        times[newly.astype(bool)] = rounds
        cur = nxt


class Engine:
    """Precomputed influence lists for one (graph, rule, boundary policy)."""

    def __init__(self, graph: AdjacencyGraph, rule: RuleSpec = TWO_NEIGHBOUR, boundary_policy: str = "open"):
        self.graph = graph
        self.rule = rule
        self.boundary_policy = boundary_policy
        mask = arc_mask(graph, rule)
        tails = _tail_of_arcs(graph)
        # infection of arc head h raises the count of tail t when t counts h
        heads = graph.indices[mask]
        tails = tails[mask]
        order = np.argsort(heads, kind="stable")
        self.indices = tails[order].astype(np.int64)
        self.indptr = np.zeros(len(graph) + 1, dtype=np.int64)
        np.cumsum(np.bincount(heads, minlength=len(graph)), out=self.indptr[1:])
        self.extra = virtual_counts(graph, rule, boundary_policy)

    def run(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
        """Returns (limit state, infection round per tile or -1, rounds)."""
        s = np.array(state, dtype=np.uint8, copy=True)
        times = np.where(s > 0, 0, -1).astype(np.int64)
        rounds = _worklist(self.indptr, self.indices, self.rule.m, s, self.extra, times)
        return s, times, int(rounds)


def engine_for(graph: AdjacencyGraph, rule: RuleSpec, boundary_policy: str = "open") -> Engine:
    cache = graph.__dict__.setdefault("_engines", {})
    key = (rule.m, rule.allowed, boundary_policy)
    if key not in cache:
        cache[key] = Engine(graph, rule, boundary_policy)
    return cache[key]


def fixpoint(config: Configuration, rule: RuleSpec = TWO_NEIGHBOUR) -> tuple[Configuration, int]:
    """Limit configuration and the number of synchronous rounds it takes."""
    eng = engine_for(config.graph, rule, config.boundary_policy)
    s, times, rounds = eng.run(config.state)
    out = config.with_state(s)
    out.times = times
    return out, rounds


def is_stable(config: Configuration, rule: RuleSpec = TWO_NEIGHBOUR) -> bool:
    return bool(np.array_equal(step(config, rule).state, config.state))


@numba.njit(cache=True, nogil=True)
def _worklist(indptr, indices, m, state, extra, times):
    n = state.shape[0]
    count = extra.astype(np.int64)
    for u in range(n):
        if state[u]:
            for k in range(indptr[u], indptr[u + 1]):
                count[indices[k]] += 1
    queued = np.zeros(n, dtype=np.bool_)
    cur = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    size = 0
    for v in range(n):
        if state[v] == 0 and count[v] >= m:
            queued[v] = True
            cur[size] = v
            size += 1
    rounds = 0
    while size > 0:
        rounds += 1
        for a in range(size):
            state[cur[a]] = 1
            times[cur[a]] = rounds
        nsize = 0
        for a in range(size):
            v = cur[a]
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if state[w] == 0 and not queued[w]:
                    count[w] += 1
                    if count[w] >= m:
                        queued[w] = True
                        nxt[nsize] = w
                        nsize += 1
        cur, nxt = nxt, cur
        size = nsize
    return rounds
