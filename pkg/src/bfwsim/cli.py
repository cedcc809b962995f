"""``bfwsim`` command line.

Exit codes: 0 success, 1 bad usage or input, 2 round cap reached without a
single leader, 3 audit violation. Human-readable lines go to stdout; JSON
and CSV go to ``--out`` (``markov`` and ``graph info`` also print their
small JSON result).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bfw import BfwParams, bfw_protocol, protocol_from_header
from .engine import TraceOptions, read_header, read_trace, run, write_trace
from .flowcheck import AUDITS, audit_suite
from .graph import GraphError, distances, resolve
from .harness import SweepSpec, round_cap, sweep, write_outputs
from .markov import (ChainSpec, anticoncentration_sup, geom_binom_identity, sigma_hitting,
                     simulate_chain, stationary)

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_AUDIT = 0, 1, 2, 3
JSON_SCHEMA = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _p_value(text: str):
    if text == "diam":
        return "diam"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--p takes a float or 'diam', got {text!r}") from None


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for sweeps")
    common.add_argument("--out", default=None, help="file for machine-readable output")
    return common


def _params(p, D: int) -> BfwParams:
    if p == "diam":
        if D < 1:
            raise UsageError("--p diam needs a graph with diameter >= 1")
        return BfwParams.tuned(D)
    if not 0.0 < p <= 1.0:
        raise UsageError(f"--p must lie in (0, 1] or be 'diam', got {p}")
    return BfwParams(p, allow_certain=True)


def _write_json(path: str | None, payload: dict):
    if path:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def _report_audits(reports, out: str | None) -> int:
    bad = False
    for name, rep in reports.items():
        status = "ok" if rep.ok else "VIOLATED"
        line = f"{name}: {status} checked={rep.checked} violated={rep.violated}"
        if rep.indeterminate:
            line += f" indeterminate={rep.indeterminate}"
        if not rep.ok:
            line += f" first_round={rep.first_violation['round']}"
            bad = True
        print(line)
    _write_json(out, {"schema": JSON_SCHEMA, "ok": not bad,
                      "reports": {k: v.to_json() for k, v in reports.items()}})
    return EXIT_AUDIT if bad else EXIT_OK


def cmd_run(args) -> int:
    g = resolve(args.graph)
    dist = distances(g)
    params = _params(args.p, dist.diameter)
    mode = "diameter_tuned" if args.p == "diam" else "uniform"
    cap = args.max_rounds if args.max_rounds is not None else round_cap(g.n, dist.diameter, mode)
    record = TraceOptions(snapshot_every=args.snapshot_every) if (args.trace or args.audit) \
        else TraceOptions(snapshot_every=0, beep_history=False)
    trace = run(g, bfw_protocol(params), args.seed, cap, record=record)
    if args.trace:
        with open(args.trace, "w") as fh:
            write_trace(trace, fh)
    if trace.converged:
        leader = int(np.flatnonzero(_leaders_at_end(trace))[0])
        print(f"converged t={trace.convergence_round} leader={leader}")
        code = EXIT_OK
    else:
        print(f"capped t={trace.rounds_executed} leaders={int(trace.leader_counts[-1])}")
        code = EXIT_CAP
    if args.audit:
        if _report_audits(audit_suite(trace, dist, seed=args.seed), args.out) != EXIT_OK:
            return EXIT_AUDIT
    return code


def _leaders_at_end(trace):
    if trace.states.shape[0]:
        return trace.protocol.tables.leader[trace.states[-1]]
    # summary-only trace: replay is cheap and deterministic
    full = run(trace.graph, trace.protocol, trace.seed, trace.rounds_executed,
               stop="fixed_rounds", record=TraceOptions(snapshot_every=trace.rounds_executed or 1,
                                                         beep_history=False))
    return full.protocol.tables.leader[full.states[-1]]


def cmd_sweep(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(","))
    mode = "diameter_tuned" if args.p == "diam" else "uniform"
    spec = SweepSpec(args.family, sizes, p=0.5 if mode != "uniform" else args.p, mode=mode,
                     trials=args.trials, seed=args.seed, cap_multiplier=args.cap_multiplier,
                     threads=args.threads, audit=args.audit, audit_sample=args.audit_sample)
    res = sweep(spec)
    if args.out:
        write_outputs(res, args.out)
    for s in res.summaries:
        print(f"n={s.n} D={s.D} p={s.p:.4g} median={s.median} p95={s.p95} "
              f"nonconverged={s.nonconverged}/{s.trials}")
    if res.fit is not None:
        lo, hi = res.fit.ci95
        print(f"log-log slope={res.fit.slope:.3f} (95% CI {lo:.3f}..{hi:.3f})")
    if res.audit_failures:
        print(f"audit violations in {len(res.audit_failures)} trial(s)")
        return EXIT_AUDIT
    return EXIT_OK if res.nonconverged == 0 else EXIT_CAP


def cmd_verify(args) -> int:
    if args.trace:
        with open(args.trace) as fh:
            header = read_header(fh)
            trace = read_trace(fh, protocol_from_header(header["protocol"]), header=header)
    elif args.graph:
        g = resolve(args.graph)
        D = distances(g).diameter
        trace = run(g, bfw_protocol(_params(args.p, D)), args.seed, args.rounds, stop="fixed_rounds")
    else:
        raise UsageError("verify needs --trace or --graph")
    chosen = [a for a in AUDITS if getattr(args, a)]
    if args.all or not chosen:
        chosen = list(AUDITS)
    dist = distances(trace.graph)
    pairs = None if args.exhaustive else args.pairs
    reports = audit_suite(trace, dist, select=chosen, seed=args.seed, pairs=pairs, walks=args.walks)
    return _report_audits(reports, args.out)


def cmd_markov(args) -> int:
    spec = ChainSpec(args.p, start=getattr(args, "start", "W"))
    payload: dict = {"schema": JSON_SCHEMA, "p": args.p}
    if args.action == "stationary":
        payload["pi"] = stationary(spec).tolist()
    elif args.action == "simulate":
        st = simulate_chain(spec, args.t, args.seed, args.trials)
        payload.update(t=args.t, trials=args.trials, start=spec.start,
                       pi=stationary(spec).tolist(), visit_mean=st.mean.tolist(),
                       visit_var=st.var.tolist(), visit_fraction=st.fractions.tolist())
    elif args.action == "anticonc":
        width = math.ceil(math.sqrt(args.t)) if args.width == "sqrt" else int(args.width)
        est = anticoncentration_sup(spec, args.t, args.seed, args.trials, width)
        payload.update(t=args.t, trials=args.trials, width=width, anticonc_sup=est)
    elif args.action == "sigma":
        sg = sigma_hitting(spec, args.D, args.seed, args.trials, args.cap)
        hits = sg.values[~sg.capped]
        payload.update(D=args.D, trials=args.trials, cap=args.cap, median=sg.median(),
                       mean_hit=float(hits.mean()) if hits.size else None,
                       capped=int(sg.capped.sum()))
    else:
        chk = geom_binom_identity(args.n, args.k, args.p)
        payload.update(n=args.n, k=args.k, lhs=chk.lhs, rhs=chk.rhs, equal=chk.equal,
                       printed_rhs=chk.printed_rhs, printed_equal=chk.printed_equal)
    print(json.dumps(payload))
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_graph(args) -> int:
    g = resolve(args.graph)
    if args.action == "info":
        payload = {"schema": JSON_SCHEMA, "n": g.n, "edges": g.num_edges,
                   "diameter": distances(g).diameter}
        print(json.dumps(payload))
        _write_json(args.out, payload)
    else:
        text = g.to_edge_list()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="bfwsim", description="BFW beeping leader election simulator")
    parser.add_argument("--version", action="version", version=f"bfwsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="simulate one execution")
    p.add_argument("--graph", required=True, help="generator descriptor or edge-list file")
    p.add_argument("--p", type=_p_value, default=0.5)
    p.add_argument("--max-rounds", type=int, default=None)
    p.add_argument("--audit", action="store_true")
    p.add_argument("--trace", default=None, help="write a JSON-lines trace here")
    p.add_argument("--snapshot-every", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="convergence-time sweep over sizes")
    p.add_argument("--family", required=True)
    p.add_argument("--sizes", required=True, help="comma-separated, ascending")
    p.add_argument("--p", type=_p_value, default=0.5)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--cap-multiplier", type=float, default=50)
    p.add_argument("--audit", action="store_true")
    p.add_argument("--audit-sample", type=int, default=0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="audit flow lemmas on a trace")
    p.add_argument("--trace", default=None)
    p.add_argument("--graph", default=None)
    p.add_argument("--p", type=_p_value, default=0.5)
    p.add_argument("--rounds", type=int, default=500)
    p.add_argument("--all", action="store_true")
    for name in AUDITS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, action="store_true")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--walks", type=int, default=20)
    p.add_argument("--exhaustive", action="store_true", help="a shortest path for every pair")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("markov", help="three-state chain experiments")
    msub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    m = msub.add_parser("stationary", parents=[common])
    m.add_argument("--p", type=float, default=0.5)
    m = msub.add_parser("simulate", parents=[common])
    m.add_argument("--p", type=float, default=0.5)
    m.add_argument("--t", type=int, default=10_000)
    m.add_argument("--trials", type=int, default=1000)
    m.add_argument("--start", choices=["W", "B", "F", "stationary"], default="W")
    m = msub.add_parser("anticonc", parents=[common])
    m.add_argument("--p", type=float, default=0.5)
    m.add_argument("--t", type=int, default=10_000)
    m.add_argument("--trials", type=int, default=20_000)
    m.add_argument("--width", default="sqrt", help="integer or 'sqrt' for ceil(sqrt(t))")
    m = msub.add_parser("sigma", parents=[common])
    m.add_argument("--p", type=float, default=0.5)
    m.add_argument("--D", type=int, required=True)
    m.add_argument("--trials", type=int, default=1000)
    m.add_argument("--cap", type=int, default=1_000_000)
    m = msub.add_parser("identity", parents=[common])
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--k", type=int, required=True)
    m.add_argument("--p", type=float, default=0.5)
    p.set_defaults(func=cmd_markov)

    p = sub.add_parser("graph", help="graph utilities")
    gsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for action in ("info", "export"):
        gp = gsub.add_parser(action, parents=[common])
        gp.add_argument("--graph", required=True)
    p.set_defaults(func=cmd_graph)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, GraphError, ValueError, OSError) as exc:
        print(f"bfwsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
