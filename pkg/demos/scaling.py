"""
Convergence time against size
=============================

Sweep paths of growing length with a fixed coin and with the coin tuned to
the diameter, then fit the growth exponent of the median on a log-log
scale. A fixed coin should give an exponent near 2 and the tuned coin one
near 1. Cliques stay at a few rounds per doubling.
"""

# %%
from bfwsim import SweepSpec, sweep, two_leader_probe

sizes = (8, 16, 32, 64)
fixed = sweep(SweepSpec("path", sizes, p=0.5, trials=40, seed=1))
tuned = sweep(SweepSpec("path", sizes, mode="diameter_tuned", trials=40, seed=1))

# %%
print("   n   median(p=1/2)  median(p=1/(D+1))")
for a, b in zip(fixed.summaries, tuned.summaries):
    print(f"{a.n:4d}  {a.median:13.1f}  {b.median:17.1f}")
print(f"exponent with p=1/2:     {fixed.fit.slope:.2f}  (95% CI {fixed.fit.ci95[0]:.2f}..{fixed.fit.ci95[1]:.2f})")
print(f"exponent with tuned p:   {tuned.fit.slope:.2f}  (95% CI {tuned.fit.ci95[0]:.2f}..{tuned.fit.ci95[1]:.2f})")

# %%
# With D = 1 every node hears every beep.
clique = sweep(SweepSpec("clique", (4, 8, 16, 32, 64), trials=100, seed=1))
print("clique medians:", [s.median for s in clique.summaries])

# %%
# Two leaders at the ends of a path and nothing else: how long until one
# of them is gone?
probe = two_leader_probe([2, 4, 8, 16, 32], trials=60, seed=1)
print("two-leader medians:", [s.median for s in probe.summaries])
print(f"exponent in D: {probe.fit.slope:.2f}")

# %%
# The CSV carries one row per trial and reruns reproduce it exactly.
print(fixed.csv_text.splitlines()[1])
print(fixed.csv_text.splitlines()[2])
