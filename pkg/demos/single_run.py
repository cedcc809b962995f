"""
One election on a grid
======================

Run BFW from the all-leader start on a 6x6 grid, watch the number of
leaders fall, and check the recorded trace with every auditor.
"""

# %%
# Build the graph and the protocol. ``generate`` understands the same
# descriptors as the command line.
import numpy as np

from bfwsim import BfwParams, audit_suite, bfw_protocol, distances, generate, run

g = generate("grid:6x6")
dist = distances(g)
print(f"n={g.n} edges={g.num_edges} diameter={dist.diameter}")

# %%
# Run until one leader is left. The seed fixes every coin flip.
trace = run(g, bfw_protocol(BfwParams(0.5)), seed=7, max_rounds=100_000)
print(f"outcome={trace.outcome} round={trace.convergence_round} leader={trace.leader_nodes()[0]}")

# %%
# Leaders are only ever removed. Print the rounds at which the count dropped.
lc = trace.leader_counts
drops = np.flatnonzero(np.diff(lc) < 0) + 1
for t in drops[:10]:
    print(f"round {t:5d}: {lc[t - 1]:2d} -> {lc[t]:2d} leaders")
if drops.size > 10:
    print(f"... {drops.size - 10} more drops")

# %%
# Every auditor runs on the stored trace after the fact.
for name, rep in audit_suite(trace, dist, seed=0).items():
    print(f"{name:15s} checked={rep.checked:8d} violated={rep.violated}")

# %%
# A fair coin is essential: with p = 1 two neighbours stay in lock-step
# forever, so the run ends at the cap with both still leaders.
trap = run(generate("path:2"), bfw_protocol(BfwParams(1.0, allow_certain=True)), 0, 1000)
print(f"p=1 on two nodes: {trap.outcome}, leaders at the end = {trap.leader_counts[-1]}")
