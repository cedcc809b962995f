"""Synchronous beeping-model execution.

A protocol is a probabilistic state machine with a listening set and a
beeping set. In every round each node in a beeping state beeps; a node
*hears* when at least one neighbour beeps. The next state of ``u`` is drawn
from ``delta_heard`` when ``u`` beeps or hears, otherwise from
``delta_quiet``.

Randomness contract: per round, the nodes whose applicable distribution is
not a point mass each consume one uniform draw in ascending node order.
Outcomes are taken in the distribution's declaration order, so for
``{a: p, b: 1 - p}`` a draw below ``p`` selects ``a``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Mapping

import numpy as np

from .graph import Graph, load_edge_list

TRACE_SCHEMA = 1
PROB_TOL = 1e-12

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Seed for trial ``index``: output ``index + 1`` of a SplitMix64 stream at ``master``."""
    return splitmix64((master + (index + 1) * _GOLDEN_GAMMA) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    # PCG64: 128-bit state, period 2**128
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


class ProtocolError(ValueError):
    pass


class TraceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProtocolDefinition:
    """A finite probabilistic beeping protocol.

    Parameters
    ----------
    states : tuple of str
        All state names. Their position is the integer code used in
        configurations.
    beeping : frozenset of str
        States that beep. Every other state listens.
    start : str
        Initial state of every node.
    delta_quiet, delta_heard : mapping
        ``state -> {next_state: probability}``. Beeping states only need
        ``delta_heard``; it is used unconditionally for them.
    leaders : frozenset of str
        States that count as leaders.
    """

    states: tuple[str, ...]
    beeping: frozenset[str]
    start: str
    delta_quiet: Mapping[str, Mapping[str, float]]
    delta_heard: Mapping[str, Mapping[str, float]]
    leaders: frozenset[str]
    name: str = "custom"
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        names = set(self.states)
        if len(names) != len(self.states):
            raise ProtocolError("duplicate state names")
        if not self.beeping <= names or not self.leaders <= names:
            raise ProtocolError("beeping/leader sets must be subsets of the states")
        if self.start not in names:
            raise ProtocolError(f"start state {self.start!r} is not a state")
        for label, table in (("delta_quiet", self.delta_quiet), ("delta_heard", self.delta_heard)):
            for s in self.states:
                if label == "delta_quiet" and s in self.beeping:
                    continue
                if s not in table:
                    raise ProtocolError(f"{label} has no entry for state {s!r}")
            for s, dist in table.items():
                if s not in names:
                    raise ProtocolError(f"{label} mentions unknown state {s!r}")
                _check_distribution(label, s, dist, names)

    @property
    def listening(self) -> frozenset[str]:
        return frozenset(self.states) - self.beeping

    def index(self, state: str) -> int:
        return self.states.index(state)

    def encode(self, names: Iterable[str]) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(self.states)}
        try:
            return np.array([lookup[s] for s in names], dtype=np.uint8)
        except KeyError as exc:
            raise ProtocolError(f"unknown state {exc.args[0]!r}") from None

    def decode(self, codes: np.ndarray) -> list[str]:
        return [self.states[int(c)] for c in codes]

    @cached_property
    def tables(self) -> _Tables:
        return _Tables.build(self)


def _check_distribution(label, state, dist, names):
    total = 0.0
    for target, prob in dist.items():
        if target not in names:
            raise ProtocolError(f"{label}[{state!r}] targets unknown state {target!r}")
        if not 0.0 <= prob <= 1.0:
            raise ProtocolError(f"{label}[{state!r}][{target!r}] = {prob} is not a probability")
        total += prob
    if abs(total - 1.0) > PROB_TOL:
        raise ProtocolError(f"{label}[{state!r}] sums to {total!r}, not 1")


@dataclass(frozen=True)
class _Tables:
    beep: np.ndarray  # (S,) bool
    leader: np.ndarray  # (S,) bool
    det_quiet: np.ndarray  # (S,) next state, -1 when random
    det_heard: np.ndarray
    cum_quiet: np.ndarray  # (S, S) cumulative outcome probabilities
    cum_heard: np.ndarray
    tgt_quiet: np.ndarray  # (S, S) outcome state codes
    tgt_heard: np.ndarray

    @classmethod
    def build(cls, proto: ProtocolDefinition) -> _Tables:
        S = len(proto.states)
        idx = {s: i for i, s in enumerate(proto.states)}

        def compile_table(table):
            det = np.full(S, -1, dtype=np.int16)
            cum = np.ones((S, S))
            tgt = np.zeros((S, S), dtype=np.uint8)
            for s, i in idx.items():
                dist = table.get(s)
                if dist is None:  # beeping state, never consulted
                    dist = proto.delta_heard[s]
                outcomes = [(idx[t], pr) for t, pr in dist.items() if pr > 0.0]
                if len(outcomes) == 1:
                    det[i] = outcomes[0][0]
                c = np.cumsum([pr for _, pr in outcomes])
                c[-1] = 1.0
                cum[i, : len(c)] = c
                tgt[i, : len(c)] = [t for t, _ in outcomes]
                tgt[i, len(c):] = outcomes[-1][0]
            return det, cum, tgt

        dq, cq, tq = compile_table(proto.delta_quiet)
        dh, ch, th = compile_table(proto.delta_heard)
        beep = np.array([s in proto.beeping for s in proto.states])
        leader = np.array([s in proto.leaders for s in proto.states])
        return cls(beep, leader, dq, dh, cq, ch, tq, th)

    def advance(self, state: np.ndarray, src: np.ndarray, dst: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
        beep = self.beep[state]
        heard = np.zeros(state.size, dtype=bool)
        heard[dst[beep[src]]] = True
        use_heard = heard | beep
        nxt = np.where(use_heard, self.det_heard[state], self.det_quiet[state])
        rand = np.flatnonzero(nxt < 0)
        if rand.size:
            u = rng.random(rand.size)
            s = state[rand]
            h = use_heard[rand, None]
            cum = np.where(h, self.cum_heard[s], self.cum_quiet[s])
            tgt = np.where(h, self.tgt_heard[s], self.tgt_quiet[s])
            pick = (u[:, None] >= cum).sum(axis=1)
            nxt[rand] = tgt[np.arange(rand.size), pick]
        return nxt.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Configuration:
    """Node states (codes into ``ProtocolDefinition.states``) at a given round."""

    round: int
    state: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.round == other.round and np.array_equal(self.state, other.state)


def initial_configuration(g: Graph, proto: ProtocolDefinition) -> Configuration:
    return Configuration(0, np.full(g.n, proto.index(proto.start), dtype=np.uint8))


def step(g: Graph, proto: ProtocolDefinition, cfg: Configuration,
         rng: np.random.Generator) -> Configuration:
    """Advance ``cfg`` by one synchronous round."""
    if cfg.state.shape != (g.n,):
        raise ValueError(f"configuration has {cfg.state.size} nodes, graph has {g.n}")
    src, dst = g.arcs
    nxt = proto.tables.advance(np.asarray(cfg.state, dtype=np.uint8), src, dst, rng)
    return Configuration(cfg.round + 1, nxt)


@dataclass(frozen=True)
class TraceOptions:
    """What :func:`run` keeps.

    ``snapshot_every=k`` stores the configuration of every k-th round
    (0 stores none). ``beep_history`` keeps the dense per-round beep
    counters; final counters and the leader-count history are always kept.
    """

    snapshot_every: int = 1
    beep_history: bool = True

    def __post_init__(self):
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")


SUMMARY_ONLY = TraceOptions(snapshot_every=0, beep_history=False)

STOP_CONDITIONS = ("single_leader", "fixed_rounds")


@dataclass(eq=False)
class RunTrace:
    graph: Graph
    protocol: ProtocolDefinition
    seed: int | None
    rounds: np.ndarray  # (R,) round index of each snapshot
    states: np.ndarray  # (R, n) state codes
    snapshot_beeps: np.ndarray  # (R, n) cumulative beeps at each snapshot round
    beep_history: np.ndarray | None  # (T+1, n) or None
    final_beeps: np.ndarray
    leader_counts: np.ndarray  # (T+1,)
    convergence_round: int | None
    rounds_executed: int
    stop: str = "single_leader"
    snapshot_every: int = 1

    @property
    def converged(self) -> bool:
        return self.convergence_round is not None

    @property
    def outcome(self) -> str:
        if self.stop == "single_leader":
            return "converged" if self.converged else "capped"
        return "completed"

    @property
    def is_dense(self) -> bool:
        r = self.rounds
        return r.size == self.rounds_executed + 1 and bool(np.all(r == np.arange(r.size)))

    @property
    def snapshots(self) -> list[Configuration]:
        return [Configuration(int(t), s) for t, s in zip(self.rounds, self.states)]

    def configuration(self, t: int) -> Configuration:
        pos = np.searchsorted(self.rounds, t)
        if pos >= self.rounds.size or self.rounds[pos] != t:
            raise TraceError(f"round {t} was not recorded")
        return Configuration(t, self.states[pos])

    def leader_nodes(self, t: int | None = None) -> np.ndarray:
        cfg = self.configuration(self.rounds[-1] if t is None else t)
        return np.flatnonzero(self.protocol.tables.leader[cfg.state])


def run(g: Graph, proto: ProtocolDefinition, seed: int, max_rounds: int,
        stop: str = "single_leader", record: TraceOptions = TraceOptions(),
        initial: Configuration | None = None) -> RunTrace:
    """Iterate :func:`step` from the all-start configuration.

    Stops at the first round with exactly one leader (``single_leader``) or
    after ``max_rounds`` rounds. A ``single_leader`` run that hits the cap
    comes back with ``outcome == "capped"`` and ``convergence_round=None``.
    ``initial`` overrides the start configuration (round must be 0).
    """
    if max_rounds < 0:
        raise ValueError("max_rounds must be >= 0")
    if stop not in STOP_CONDITIONS:
        raise ValueError(f"stop must be one of {STOP_CONDITIONS}")
    cfg = initial if initial is not None else initial_configuration(g, proto)
    if cfg.round != 0 or cfg.state.shape != (g.n,):
        raise ValueError("initial configuration must be at round 0 and cover every node")

    tab = proto.tables
    rng = make_rng(seed)
    src, dst = g.arcs
    k = record.snapshot_every
    state = np.array(cfg.state, dtype=np.uint8)
    beeps = tab.beep[state].astype(np.int64)

    snap_rounds, snap_states, snap_beeps = [], [], []
    history = [beeps.copy()] if record.beep_history else None
    if k:
        snap_rounds.append(0)
        snap_states.append(state)
        snap_beeps.append(beeps.copy())
    leader_counts = [int(tab.leader[state].sum())]
    converged_at = 0 if leader_counts[0] == 1 else None

    t = 0
    while t < max_rounds:
        if stop == "single_leader" and converged_at is not None:
            break
        state = tab.advance(state, src, dst, rng)
        t += 1
        beeps += tab.beep[state]
        lc = int(tab.leader[state].sum())
        leader_counts.append(lc)
        if converged_at is None and lc == 1:
            converged_at = t
        if history is not None:
            history.append(beeps.copy())
        if k and t % k == 0:
            snap_rounds.append(t)
            snap_states.append(state)
            snap_beeps.append(beeps.copy())

    if k and snap_rounds[-1] != t:
        snap_rounds.append(t)
        snap_states.append(state)
        snap_beeps.append(beeps.copy())

    n = g.n
    return RunTrace(
        graph=g,
        protocol=proto,
        seed=seed,
        rounds=np.array(snap_rounds, dtype=np.int64),
        states=np.array(snap_states, dtype=np.uint8).reshape(-1, n),
        snapshot_beeps=np.array(snap_beeps, dtype=np.int64).reshape(-1, n),
        beep_history=None if history is None else np.array(history, dtype=np.int64),
        final_beeps=beeps,
        leader_counts=np.array(leader_counts, dtype=np.int64),
        convergence_round=converged_at,
        rounds_executed=t,
        stop=stop,
        snapshot_every=k,
    )


# -- JSON-lines trace files -------------------------------------------------

def write_trace(trace: RunTrace, fh: IO[str]) -> None:
    """Write a header, one record per snapshot, and a footer."""
    proto = trace.protocol
    header = {
        "type": "header",
        "schema": TRACE_SCHEMA,
        "graph": trace.graph.spec,
        "n": trace.graph.n,
        "edges": [list(e) for e in sorted(trace.graph.edges)],
        "protocol": {"name": proto.name, **proto.params},
        "seed": trace.seed,
        "stop": trace.stop,
        "snapshot_every": trace.snapshot_every,
    }
    fh.write(json.dumps(header) + "\n")
    for t, s, b in zip(trace.rounds, trace.states, trace.snapshot_beeps):
        rec = {
            "t": int(t),
            "states": proto.decode(s),
            "beeps": b.tolist(),
            "leaders": int(trace.leader_counts[t]),
        }
        fh.write(json.dumps(rec) + "\n")
    footer = {
        "type": "footer",
        "rounds_executed": trace.rounds_executed,
        "convergence_round": trace.convergence_round,
        "outcome": trace.outcome,
        "leader_counts": trace.leader_counts.tolist(),
        "final_beeps": trace.final_beeps.tolist(),
    }
    fh.write(json.dumps(footer) + "\n")


def read_header(fh: IO[str]) -> dict:
    header = json.loads(fh.readline())
    if header.get("type") != "header":
        raise TraceError("first line of a trace must be the header record")
    if header.get("schema") != TRACE_SCHEMA:
        raise TraceError(f"unsupported trace schema {header.get('schema')!r}")
    return header


def read_trace(fh: IO[str], protocol: ProtocolDefinition, header: dict | None = None) -> RunTrace:
    """Load a trace written by :func:`write_trace`.

    ``header`` may be passed when the caller already consumed it with
    :func:`read_header` (to pick the protocol, say).
    """
    if header is None:
        header = read_header(fh)
    n = header["n"]
    text = "\n".join(f"{u} {v}" for u, v in header["edges"])
    if n == 1:
        text = "# n 1"
    g = load_edge_list(text, spec=header.get("graph"))
    if g.n != n:
        raise TraceError(f"header says n={n} but edges give {g.n} nodes")

    rounds, states, beeps = [], [], []
    footer = None
    for lineno, line in enumerate(fh, 2):
        if not line.strip():
            continue
        rec = json.loads(line)
        if rec.get("type") == "footer":
            footer = rec
            continue
        try:
            rounds.append(int(rec["t"]))
            states.append(protocol.encode(rec["states"]))
            beeps.append(np.array(rec["beeps"], dtype=np.int64))
        except (KeyError, TypeError) as exc:
            raise TraceError(f"line {lineno}: malformed record ({exc})") from None
        if states[-1].size != n or beeps[-1].size != n:
            raise TraceError(f"line {lineno}: record does not cover {n} nodes")
    if not rounds:
        raise TraceError("trace has no round records")

    states_arr = np.array(states, dtype=np.uint8)
    beeps_arr = np.array(beeps, dtype=np.int64)
    rounds_arr = np.array(rounds, dtype=np.int64)
    executed = footer["rounds_executed"] if footer else int(rounds_arr[-1])
    dense = rounds_arr.size == executed + 1 and np.all(rounds_arr == np.arange(rounds_arr.size))
    if footer:
        leader_counts = np.array(footer["leader_counts"], dtype=np.int64)
        converged_at = footer["convergence_round"]
    else:
        leader_counts = protocol.tables.leader[states_arr].sum(axis=1)
        hits = np.flatnonzero(leader_counts == 1)
        converged_at = int(hits[0]) if hits.size else None
    return RunTrace(
        graph=g,
        protocol=protocol,
        seed=header.get("seed"),
        rounds=rounds_arr,
        states=states_arr,
        snapshot_beeps=beeps_arr,
        beep_history=beeps_arr.copy() if dense else None,
        final_beeps=beeps_arr[-1].copy(),
        leader_counts=leader_counts,
        convergence_round=converged_at,
        rounds_executed=executed,
        stop=header.get("stop", "single_leader"),
        snapshot_every=header.get("snapshot_every", 1),
    )
