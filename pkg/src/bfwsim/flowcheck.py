"""Flow along oriented paths and post-hoc auditors for BFW traces.

The flow of an oriented edge ``(u, v)`` is +1 when ``u`` beeps while ``v``
waits, -1 in the mirrored situation, and 0 otherwise; a path's flow is the
sum over its edges. The auditors check, on recorded traces, the
deterministic facts that BFW guarantees from an all-waiting start with at
least one leader:

* ``conservation``: a path's flow changes between rounds only by
  ``[first vertex beeps] - [last vertex beeps]``;
* ``ohm``: a path's flow equals the difference of the cumulative beep
  counts of its endpoints;
* ``lipschitz``: beep counts of two nodes differ by at most their distance;
* ``traveling_beep``: if ``u`` has beeped more than ``v`` at round t, then
  ``v`` beeps in some round of ``(t, t + dist(u, v)]``;
* ``elimination``: a node in ``NB`` at round t >= 1 has a neighbour whose
  count at t-1 exceeds its own by exactly one;
* ``leader_count``: the number of leaders never increases and never hits 0;
* ``transitions``: the one-round W/B/F implications of the state machine.

All auditors are pure functions of the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bfw import BEEPING, FROZEN, NB, PHASE, WAITING
from .engine import Configuration, RunTrace
from .graph import DistanceTable, Graph

MAX_LISTED_ROUNDS = 100


class InvalidPathError(ValueError):
    pass


class TraceWindowError(ValueError):
    """The trace lacks the dense snapshots an auditor needs."""


@dataclass(frozen=True, eq=False)
class OrientedPath:
    """Vertex sequence of an oriented path; vertices may repeat."""

    vertices: np.ndarray

    @classmethod
    def through(cls, g: Graph, vertices) -> OrientedPath:
        vs = np.asarray(vertices, dtype=np.intp)
        if vs.ndim != 1 or vs.size < 2:
            raise InvalidPathError("a path needs at least one edge")
        for a, b in zip(vs[:-1], vs[1:]):
            if not g.has_edge(int(a), int(b)):
                raise InvalidPathError(f"({a}, {b}) is not an edge")
        vs.setflags(write=False)
        return cls(vs)

    @property
    def length(self) -> int:
        return self.vertices.size - 1

    @property
    def start(self) -> int:
        return int(self.vertices[0])

    @property
    def end(self) -> int:
        return int(self.vertices[-1])

    def reversed(self) -> OrientedPath:
        return OrientedPath(self.vertices[::-1].copy())


def edge_flow(g: Graph, cfg: Configuration, u: int, v: int) -> int:
    if not g.has_edge(u, v):
        raise InvalidPathError(f"({u}, {v}) is not an edge")
    pu, pv = PHASE[cfg.state[u]], PHASE[cfg.state[v]]
    if pu == BEEPING and pv == WAITING:
        return 1
    if pu == WAITING and pv == BEEPING:
        return -1
    return 0


def path_flow(cfg: Configuration, path: OrientedPath) -> int:
    return int(_flows(cfg.state[None, :], path)[0])


def _flows(states: np.ndarray, path: OrientedPath) -> np.ndarray:
    """Flow along ``path`` for every row of a (rounds, n) state array."""
    ph = PHASE[states]
    a, b = path.vertices[:-1], path.vertices[1:]
    pa, pb = ph[:, a], ph[:, b]
    f = ((pa == BEEPING) & (pb == WAITING)).astype(np.int64)
    f -= (pa == WAITING) & (pb == BEEPING)
    return f.sum(axis=1)


@dataclass
class FlowReport:
    """Counts of checked obligations for one lemma.

    ``violating_rounds`` lists (up to ``MAX_LISTED_ROUNDS``) the rounds with
    at least one violation; ``first_violation`` carries the context of the
    earliest one.
    """

    lemma: str
    checked: int = 0
    violated: int = 0
    indeterminate: int = 0
    first_violation: dict | None = None
    violating_rounds: list[int] = field(default_factory=list)

    @property
    def passed(self) -> int:
        return self.checked - self.violated - self.indeterminate

    @property
    def ok(self) -> bool:
        return self.violated == 0

    def _record(self, rounds, context_for):
        rounds = sorted(set(int(r) for r in rounds))
        if not rounds:
            return
        if self.first_violation is None or rounds[0] < self.first_violation["round"]:
            self.first_violation = {"lemma": self.lemma, "round": rounds[0], **context_for(rounds[0])}
        merged = sorted(set(self.violating_rounds) | set(rounds))
        self.violating_rounds = merged[:MAX_LISTED_ROUNDS]

    def merge(self, other: FlowReport) -> FlowReport:
        if other.lemma != self.lemma:
            raise ValueError("cannot merge reports of different lemmas")
        out = FlowReport(self.lemma, self.checked + other.checked,
                         self.violated + other.violated,
                         self.indeterminate + other.indeterminate)
        firsts = [f for f in (self.first_violation, other.first_violation) if f]
        out.first_violation = min(firsts, key=lambda f: f["round"]) if firsts else None
        out.violating_rounds = sorted(set(self.violating_rounds) | set(other.violating_rounds))[:MAX_LISTED_ROUNDS]
        return out

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "checked": self.checked,
            "passed": self.passed,
            "violated": self.violated,
            "indeterminate": self.indeterminate,
            "first_violation": self.first_violation,
            "violating_rounds": self.violating_rounds,
        }


def _require_dense(trace: RunTrace, lemma: str):
    if not trace.is_dense:
        raise TraceWindowError(f"{lemma} audit needs a snapshot for every round")


def _states_repr(trace: RunTrace, idx: int, nodes) -> dict:
    decode = trace.protocol.states
    return {int(v): decode[int(trace.states[idx, v])] for v in nodes}


def audit_conservation(trace: RunTrace, path: OrientedPath) -> FlowReport:
    _require_dense(trace, "conservation")
    rep = FlowReport("conservation")
    flow = _flows(trace.states, path)
    beep = PHASE[trace.states] == BEEPING
    s, e = path.start, path.end
    expected = flow[:-1] + beep[1:, s].astype(np.int64) - beep[1:, e]
    bad = np.flatnonzero(flow[1:] != expected) + 1
    rep.checked = flow.size - 1
    rep.violated = bad.size

    def ctx(t):
        return {"path": path.vertices.tolist(), "flow": int(flow[t]), "flow_prev": int(flow[t - 1]),
                "start_beeps": bool(beep[t, s]), "end_beeps": bool(beep[t, e]),
                "expected": int(expected[t - 1])}

    rep._record(trace.rounds[bad], ctx)
    return rep


def audit_ohm(trace: RunTrace, path: OrientedPath) -> FlowReport:
    rep = FlowReport("ohm")
    flow = _flows(trace.states, path)
    nb = trace.snapshot_beeps
    diff = nb[:, path.start] - nb[:, path.end]
    bad = np.flatnonzero(flow != diff)
    rep.checked = flow.size
    rep.violated = bad.size
    pos = {int(t): i for i, t in enumerate(trace.rounds)}

    def ctx(t):
        i = pos[t]
        return {"path": path.vertices.tolist(), "flow": int(flow[i]),
                "start_count": int(nb[i, path.start]), "end_count": int(nb[i, path.end])}

    rep._record(trace.rounds[bad], ctx)
    return rep


def audit_lipschitz(trace: RunTrace, dist: DistanceTable, chunk: int = 256) -> FlowReport:
    rep = FlowReport("lipschitz")
    n = trace.graph.n
    iu, ju = np.triu_indices(n, k=1)
    d = dist.dist[iu, ju]
    nb = trace.snapshot_beeps
    bad_rounds = []
    first = None
    for lo in range(0, nb.shape[0], chunk):
        block = nb[lo:lo + chunk]
        gap = np.abs(block[:, iu] - block[:, ju])
        viol = gap > d
        rep.checked += viol.size
        rep.violated += int(viol.sum())
        rows = np.flatnonzero(viol.any(axis=1))
        if rows.size and first is None:
            r = rows[0]
            k = np.flatnonzero(viol[r])[0]
            first = (lo + r, int(iu[k]), int(ju[k]), int(gap[r, k]), int(d[k]))
        bad_rounds.extend(trace.rounds[lo + rows].tolist())

    def ctx(t):
        i, u, v, gap, dd = first
        return {"u": u, "v": v, "count_gap": gap, "distance": dd}

    rep._record(bad_rounds, ctx)
    return rep


def _next_beep(beeping: np.ndarray) -> np.ndarray:
    """``out[t, v]`` = first round s > t with ``v`` beeping, else a large sentinel."""
    R, n = beeping.shape
    sentinel = np.iinfo(np.int64).max // 4
    out = np.full((R, n), sentinel, dtype=np.int64)
    nxt = np.full(n, sentinel, dtype=np.int64)
    for t in range(R - 2, -1, -1):
        nxt = np.where(beeping[t + 1], t + 1, nxt)
        out[t] = nxt
    return out


def audit_traveling_beep(trace: RunTrace, dist: DistanceTable) -> FlowReport:
    """Obligations whose deadline falls past the last round and are still
    open are counted as indeterminate, never as violations."""
    _require_dense(trace, "traveling_beep")
    rep = FlowReport("traveling_beep")
    beeping = PHASE[trace.states] == BEEPING
    nxt = _next_beep(beeping)
    last = int(trace.rounds[-1])
    nb = trace.snapshot_beeps
    D = dist.dist
    bad_rounds = []
    first = None
    for t in range(nb.shape[0]):
        owes = nb[t][:, None] > nb[t][None, :]  # (u, v): u ahead of v
        if not owes.any():
            continue
        deadline = t + D
        met = nxt[t][None, :] <= deadline
        open_ = owes & ~met
        late = open_ & (deadline <= last)
        rep.checked += int(owes.sum())
        rep.indeterminate += int((open_ & ~late).sum())
        nviol = int(late.sum())
        if nviol:
            rep.violated += nviol
            bad_rounds.append(t)
            if first is None:
                u, v = map(int, np.argwhere(late)[0])
                first = {"u": u, "v": v, "count_u": int(nb[t, u]), "count_v": int(nb[t, v]),
                         "deadline": int(deadline[u, v])}
    rep._record(bad_rounds, lambda t: first)
    return rep


def audit_elimination(trace: RunTrace) -> FlowReport:
    _require_dense(trace, "elimination")
    rep = FlowReport("elimination")
    src, dst = trace.graph.arcs
    nb = trace.snapshot_beeps
    n = trace.graph.n
    bad_rounds = []
    first = None
    for t in range(1, nb.shape[0]):
        entering = np.flatnonzero(trace.states[t] == NB)
        if entering.size == 0:
            continue
        prev = nb[t - 1]
        has_witness = np.zeros(n, dtype=bool)
        hit = prev[dst] == prev[src] + 1  # arc u->v with v one beep ahead of u
        has_witness[src[hit]] = True
        missing = entering[~has_witness[entering]]
        rep.checked += entering.size
        if missing.size:
            rep.violated += missing.size
            bad_rounds.append(t)
            if first is None:
                u = int(missing[0])
                first = {"u": u, "count_u": int(prev[u]),
                         "neighbour_counts": {int(v): int(prev[v]) for v in trace.graph.adjacency[u]}}
    rep._record(bad_rounds, lambda t: first)
    return rep


def audit_leader_count(trace: RunTrace) -> FlowReport:
    rep = FlowReport("leader_count")
    lc = trace.leader_counts
    rep.checked = lc.size
    bad = np.flatnonzero(lc < 1).tolist()
    bad += (np.flatnonzero(np.diff(lc) > 0) + 1).tolist()
    rep.violated = len(set(bad))
    rep._record(bad, lambda t: {"leaders": int(lc[t]), "leaders_prev": int(lc[t - 1]) if t else None})
    return rep


def audit_transitions(trace: RunTrace) -> FlowReport:
    """One-round implications between consecutive rounds, per node and edge."""
    _require_dense(trace, "transitions")
    rep = FlowReport("transitions")
    ph = PHASE[trace.states]
    W, B, F = ph == WAITING, ph == BEEPING, ph == FROZEN
    nbeep_next = trace.states[1:] == NB
    src, dst = trace.graph.arcs
    prev, cur = slice(None, -1), slice(1, None)
    node_bad = (
        (W[prev] & F[cur])          # waiting never freezes next
        | (B[prev] & ~F[cur])       # a beep is always followed by a frozen round
        | (F[prev] & ~W[cur])       # frozen is always followed by waiting
        | (B[cur] & ~W[prev])       # beeping was preceded by waiting
        | (F[cur] & ~B[prev])       # frozen was preceded by beeping
    )
    # a non-leader beeping now had a beeping neighbour in the previous round
    nbr_beeped = np.zeros_like(W[prev])
    rows, cols = np.nonzero(B[prev][:, src])
    nbr_beeped[rows, dst[cols]] = True
    node_bad |= nbeep_next & ~nbr_beeped
    # beeper next to a waiter forces the waiter into NB next round
    edge_bad = B[prev][:, src] & W[prev][:, dst] & ~nbeep_next[:, dst]
    # frozen next to a waiter: the waiter was frozen the round before
    edge_bad |= F[cur][:, src] & W[cur][:, dst] & ~F[prev][:, dst]
    rep.checked = node_bad.size + edge_bad.size
    rep.violated = int(node_bad.sum() + edge_bad.sum())
    bad = np.flatnonzero(node_bad.any(axis=1) | edge_bad.any(axis=1)) + 1

    def ctx(t):
        nodes = np.flatnonzero(node_bad[t - 1])
        if nodes.size == 0:
            k = np.flatnonzero(edge_bad[t - 1])[0]
            nodes = [src[k], dst[k]]
        return {"nodes": [int(v) for v in nodes[:8]], "before": _states_repr(trace, t - 1, nodes[:8]),
                "after": _states_repr(trace, t, nodes[:8])}

    rep._record(trace.rounds[bad], ctx)
    return rep


# -- path sampling ----------------------------------------------------------

def shortest_path(g: Graph, dist: DistanceTable, u: int, v: int) -> OrientedPath:
    """A shortest path from ``u`` to ``v`` (smallest-index neighbour at each hop)."""
    if u == v:
        raise InvalidPathError("a path needs at least one edge")
    seq = [u]
    cur = u
    while cur != v:
        cur = next(w for w in g.adjacency[cur] if dist.dist[w, v] == dist.dist[cur, v] - 1)
        seq.append(cur)
    return OrientedPath.through(g, seq)


def random_walk(g: Graph, start: int, length: int, rng: np.random.Generator) -> OrientedPath:
    seq = [start]
    for _ in range(length):
        nbrs = g.adjacency[seq[-1]]
        seq.append(nbrs[rng.integers(len(nbrs))])
    return OrientedPath.through(g, seq)


def sample_paths(g: Graph, dist: DistanceTable, rng: np.random.Generator,
                 pairs: int | None = 20, walks: int = 20) -> list[OrientedPath]:
    """Paths to audit: every edge, a shortest path per sampled pair
    (``pairs=None`` takes all ordered pairs), and random walks of length
    ``1..2D`` which may revisit vertices."""
    if g.n == 1:
        return []
    paths = [OrientedPath.through(g, e) for e in sorted(g.edges)]
    if pairs is None:
        chosen = [(u, v) for u in range(g.n) for v in range(g.n) if u != v]
    else:
        chosen = []
        for _ in range(pairs):
            u, v = rng.choice(g.n, size=2, replace=False)
            chosen.append((int(u), int(v)))
    paths += [shortest_path(g, dist, u, v) for u, v in chosen]
    for _ in range(walks):
        length = int(rng.integers(1, 2 * dist.diameter + 1))
        paths.append(random_walk(g, int(rng.integers(g.n)), length, rng))
    return paths


AUDITS = ("conservation", "ohm", "lipschitz", "traveling_beep", "elimination",
          "leader_count", "transitions")


def audit_suite(trace: RunTrace, dist: DistanceTable, paths: list[OrientedPath] | None = None,
                select=AUDITS, seed: int = 0, pairs: int | None = 20,
                walks: int = 20) -> dict[str, FlowReport]:
    """Run the selected auditors; path audits are merged over all ``paths``."""
    unknown = set(select) - set(AUDITS)
    if unknown:
        raise ValueError(f"unknown audits {sorted(unknown)}")
    if paths is None and ({"conservation", "ohm"} & set(select)):
        paths = sample_paths(trace.graph, dist, np.random.default_rng(seed), pairs, walks)
    out: dict[str, FlowReport] = {}
    for name in select:
        if name in ("conservation", "ohm"):
            fn = audit_conservation if name == "conservation" else audit_ohm
            rep = FlowReport(name)
            for w in paths:
                rep = rep.merge(fn(trace, w))
        elif name == "lipschitz":
            rep = audit_lipschitz(trace, dist)
        elif name == "traveling_beep":
            rep = audit_traveling_beep(trace, dist)
        elif name == "elimination":
            rep = audit_elimination(trace)
        elif name == "leader_count":
            rep = audit_leader_count(trace)
        else:
            rep = audit_transitions(trace)
        out[name] = rep
    return out
