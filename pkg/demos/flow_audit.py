"""
Flows along paths and a corrupted trace
=======================================

Flow counts, along an oriented path, the edges where a beep is about to
cross. Its value ties the beep counters of the two ends together. This
script shows the bookkeeping on a short path and then breaks a trace on
purpose to see the auditors fire.
"""

# %%
import dataclasses

import numpy as np

from bfwsim import OrientedPath, bfw_protocol, distances, generate, path_flow, run
from bfwsim.flowcheck import audit_lipschitz, audit_ohm

g = generate("path:6")
trace = run(g, bfw_protocol(), seed=3, max_rounds=40, stop="fixed_rounds")
whole = OrientedPath.through(g, range(6))

# %%
# Flow along the whole path next to the difference of the end counters.
print(" t  states                          flow  N(0)-N(5)")
for cfg, beeps in zip(trace.snapshots[:15], trace.snapshot_beeps[:15]):
    names = " ".join(trace.protocol.states[s] for s in cfg.state)
    print(f"{cfg.round:2d}  {names}  {path_flow(cfg, whole):4d}  {beeps[0] - beeps[5]:9d}")

# %%
# Walks may revisit vertices; the identity still holds.
walk = OrientedPath.through(g, [2, 3, 4, 3, 2, 1])
print("walk audit:", audit_ohm(trace, walk).to_json()["violated"], "violations")

# %%
# Now inflate node 0's counter from round 20 on. Both the flow identity and
# the distance bound notice, at the corrupted round.
beeps = trace.snapshot_beeps.copy()
beeps[20:, 0] += 2
bad = dataclasses.replace(trace, snapshot_beeps=beeps)
for rep in (audit_ohm(bad, whole), audit_lipschitz(bad, distances(g))):
    print(rep.lemma, "first violation:", rep.first_violation)
