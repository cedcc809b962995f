"""Monte-Carlo convergence-time experiments.

:func:`sweep` runs BFW from the all-leader start on one graph per size and
records the first round with a single leader. :func:`two_leader_probe`
starts a path with leaders only at its two ends. Both derive one seed per
trial from a master seed, so results do not depend on worker count or
completion order.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats

from .bfw import LW, NW, BfwParams, bfw_protocol
from .engine import SUMMARY_ONLY, Configuration, TraceOptions, derive_seed, run
from .flowcheck import audit_suite
from .graph import distances, generate

CSV_SCHEMA = 1
CSV_COLUMNS = ("family", "n", "D", "p_mode", "p", "trial", "seed", "converged",
               "convergence_round", "rounds_executed")
FAMILIES = ("path", "cycle", "clique", "grid", "tree", "gnp")


def family_descriptor(family: str, n: int, seed: int) -> str:
    """Generator descriptor for ``family`` at size ``n``.

    ``grid`` needs a perfect square ``n``; ``tree`` and ``gnp:<p>`` draw
    their graph from a seed derived from the master seed and ``n``.
    """
    kind, _, arg = family.partition(":")
    if kind not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    gseed = derive_seed(seed, 1_000_000 + n)
    if kind in ("path", "cycle", "clique"):
        return f"{kind}:{n}"
    if kind == "grid":
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError(f"grid sizes must be perfect squares, got {n}")
        return f"grid:{side}x{side}"
    if kind == "tree":
        return f"tree:{n}:{gseed}"
    if not arg:
        raise ValueError("gnp family needs an edge probability, e.g. gnp:0.1")
    return f"gnp:{n}:{arg}:{gseed}"


def round_cap(n: int, D: int, mode: str, multiplier: float = 50) -> int:
    """``multiplier * D^2 * ceil(log2 n)`` (uniform) or ``... * D * ...`` (tuned)."""
    logn = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    scale = D * D if mode == "uniform" else D
    return int(math.ceil(multiplier * max(scale, 1) * logn))


@dataclass(frozen=True)
class SweepSpec:
    family: str
    sizes: tuple[int, ...]
    p: float = 0.5
    mode: str = "uniform"
    trials: int = 100
    seed: int = 0
    cap_multiplier: float = 50
    out: str | None = None
    threads: int = 1
    audit: bool = False
    audit_sample: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or list(sizes) != sorted(sizes):
            raise ValueError("sizes must be non-empty and ascending")
        object.__setattr__(self, "sizes", sizes)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.cap_multiplier < 1:
            raise ValueError("cap multiplier must be >= 1")
        if self.mode not in ("uniform", "diameter_tuned"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "uniform":
            BfwParams(self.p)


@dataclass(frozen=True)
class TrialRecord:
    family: str
    n: int
    D: int
    p_mode: str
    p: float
    trial: int
    seed: int
    converged: bool
    convergence_round: int | None
    rounds_executed: int
    audit_violations: tuple[str, ...] = ()

    def csv_row(self) -> list:
        return [self.family, self.n, self.D, self.p_mode, repr(self.p), self.trial, self.seed,
                int(self.converged), "" if self.convergence_round is None else self.convergence_round,
                self.rounds_executed]


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    stderr: float
    ci95: tuple[float, float]

    def to_json(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
                "ci95": list(self.ci95), "residuals": self.residuals.tolist()}


def fit_loglog(points) -> LogLogFit:
    """Ordinary least squares of ``log y`` on ``log x``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least three (x, y) points")
    if np.any(pts <= 0):
        raise ValueError("log-log fit needs positive x and y")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise ValueError("degenerate x values: all equal")
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    dof = lx.size - 2
    sxx = np.sum((lx - lx.mean()) ** 2)
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else 0.0
    half = stats.t.ppf(0.975, dof) * stderr if dof > 0 else float("nan")
    return LogLogFit(float(slope), float(intercept), resid, stderr, (slope - half, slope + half))


@dataclass(frozen=True)
class SizeSummary:
    n: int
    D: int
    p: float
    trials: int
    nonconverged: int
    median: float | None
    mean: float | None
    p95: float | None


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list[TrialRecord]
    summaries: list[SizeSummary]
    fit: LogLogFit | None
    csv_text: str = field(repr=False, default="")

    @property
    def nonconverged(self) -> int:
        return sum(s.nonconverged for s in self.summaries)

    @property
    def audit_failures(self) -> list[TrialRecord]:
        return [r for r in self.records if r.audit_violations]

    def summary_json(self) -> dict:
        return {
            "schema": CSV_SCHEMA,
            "family": self.spec.family,
            "mode": self.spec.mode,
            "trials": self.spec.trials,
            "seed": self.spec.seed,
            "cap_multiplier": self.spec.cap_multiplier,
            "sizes": [asdict(s) for s in self.summaries],
            "nonconverged": self.nonconverged,
            "fit": None if self.fit is None else self.fit.to_json(),
        }


@lru_cache(maxsize=64)
def _graph_and_diameter(descriptor: str):
    g = generate(descriptor)
    return g, distances(g)


def _audit_trace(trace, dist, seed) -> tuple[str, ...]:
    reports = audit_suite(trace, dist, seed=seed)
    return tuple(name for name, rep in reports.items() if not rep.ok)


def _run_trial(task) -> TrialRecord:
    family, descriptor, mode, p, trial, seed, cap, audit, start = task
    g, dist = _graph_and_diameter(descriptor)
    D = dist.diameter
    params = BfwParams.tuned(D) if mode == "diameter_tuned" else BfwParams(p)
    proto = bfw_protocol(params)
    initial = None
    if start == "two_leaders":
        state = np.full(g.n, NW, dtype=np.uint8)
        state[[0, g.n - 1]] = LW
        initial = Configuration(0, state)
    record = TraceOptions() if audit else SUMMARY_ONLY
    trace = run(g, proto, seed, cap, stop="single_leader", record=record, initial=initial)
    violations = _audit_trace(trace, dist, seed) if audit else ()
    return TrialRecord(family, g.n, D, mode, params.p, trial, seed, trace.converged,
                       trace.convergence_round, trace.rounds_executed, violations)


def _execute(tasks, threads: int) -> list[TrialRecord]:
    if threads <= 1 or len(tasks) <= 1:
        return [_run_trial(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_run_trial, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _summarize(records: list[TrialRecord]) -> SizeSummary:
    conv = np.array([r.convergence_round for r in records if r.converged], dtype=float)
    first = records[0]
    return SizeSummary(
        n=first.n, D=first.D, p=first.p, trials=len(records),
        nonconverged=sum(not r.converged for r in records),
        median=float(np.median(conv)) if conv.size else None,
        mean=float(conv.mean()) if conv.size else None,
        p95=float(np.percentile(conv, 95)) if conv.size else None,
    )


def render_csv(records: list[TrialRecord], timestamp: str | None = None) -> str:
    """CSV text; the first line is a comment with schema and timestamp."""
    stamp = timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    buf = io.StringIO()
    buf.write(f"# bfwsim sweep schema={CSV_SCHEMA} generated={stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def sweep(spec: SweepSpec) -> SweepResult:
    """Run every (size, trial) of ``spec``; capped trials count as non-convergent."""
    tasks = []
    for si, n in enumerate(spec.sizes):
        descriptor = family_descriptor(spec.family, n, spec.seed)
        g, dist = _graph_and_diameter(descriptor)
        cap = round_cap(g.n, dist.diameter, spec.mode, spec.cap_multiplier)
        for trial in range(spec.trials):
            audit = spec.audit or trial < spec.audit_sample
            seed = derive_seed(spec.seed, si * spec.trials + trial)
            tasks.append((spec.family, descriptor, spec.mode, spec.p, trial, seed, cap, audit, "all"))
    records = _execute(tasks, spec.threads)

    by_size = [records[i * spec.trials:(i + 1) * spec.trials] for i in range(len(spec.sizes))]
    summaries = [_summarize(rs) for rs in by_size]
    pts = [(s.n, s.median) for s in summaries if s.median and s.median > 0]
    fit = fit_loglog(pts) if len(pts) >= 3 else None
    result = SweepResult(spec, records, summaries, fit, render_csv(records))
    if spec.out:
        write_outputs(result, spec.out)
    return result


def write_outputs(result: SweepResult, csv_path: str) -> str:
    """Write the CSV and a ``<stem>.summary.json`` next to it; returns the JSON path."""
    os.makedirs(os.path.dirname(os.path.abspath(csv_path)), exist_ok=True)
    with open(csv_path, "w") as fh:
        fh.write(result.csv_text)
    json_path = os.path.splitext(csv_path)[0] + ".summary.json"
    with open(json_path, "w") as fh:
        json.dump(result.summary_json(), fh, indent=2)
    return json_path


@dataclass
class ProbeResult:
    records: list[TrialRecord]
    summaries: list[SizeSummary]
    fit: LogLogFit | None

    def to_json(self) -> dict:
        return {"schema": CSV_SCHEMA, "D": [s.D for s in self.summaries],
                "sizes": [asdict(s) for s in self.summaries],
                "fit": None if self.fit is None else self.fit.to_json()}


def two_leader_probe(D_list, trials: int, seed: int, p: float = 0.5,
                     cap_multiplier: float = 50, threads: int = 1,
                     audit: bool = False) -> ProbeResult:
    """Elimination time with exactly two leaders at the ends of a path of length ``D``.

    Every other node starts in ``NW``. The reported time is the first round
    with a single leader; the fit is of median time against ``D``.
    """
    D_list = sorted(int(d) for d in D_list)
    if not D_list or D_list[0] < 1:
        raise ValueError("path lengths must be >= 1")
    tasks = []
    for di, D in enumerate(D_list):
        descriptor = f"path:{D + 1}"
        cap = round_cap(D + 1, D, "uniform", cap_multiplier)
        for trial in range(trials):
            tasks.append(("path", descriptor, "uniform", p, trial,
                          derive_seed(seed, di * trials + trial), cap, audit, "two_leaders"))
    records = _execute(tasks, threads)
    summaries = [_summarize(records[i * trials:(i + 1) * trials]) for i in range(len(D_list))]
    pts = [(s.D, s.median) for s in summaries if s.median and s.median > 0]
    fit = fit_loglog(pts) if len(pts) >= 3 else None
    return ProbeResult(records, summaries, fit)
