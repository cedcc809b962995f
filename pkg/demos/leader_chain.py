"""
The chain of an undisturbed leader
==================================

A leader that hears nothing moves W -> B -> F -> W, leaving W with
probability p. We look at its stationary law, at how its beep count
spreads, at how long two independent leaders take to drift apart by D
beeps, and at the tail of a sum of geometric waiting times.
"""

# %%
import math

import numpy as np

from bfwsim import ChainSpec, anticoncentration_sup, geom_binom_identity, sigma_hitting, stationary
from bfwsim.markov import expected_visits, sigma_decay_rate, sigma_survival_exact, simulate_chain

spec = ChainSpec(0.5)
print("stationary law (W, B, F):", stationary(spec))

# %%
# Beep counts after t rounds: mean near t/4 and a spread that grows
# like sqrt(t).
for t in (100, 1000, 10_000):
    st = simulate_chain(spec, t, seed=0, trials=4000)
    exact = expected_visits(spec, t)[1]
    print(f"t={t:6d}  mean N_t(B)={st.mean[1]:8.1f} (exact {exact:8.1f})  sd={math.sqrt(st.var[1]):6.1f}")

# %%
# Largest probability mass in a window of 2w+1 consecutive counts, for a
# few widths, at t = 10^4. The spread is about 18, so the mass approaches 1
# long before w reaches sqrt(t) = 100.
for w in (0, 5, 10, 20, 40, 100):
    print(f"w={w:3d}  window mass {anticoncentration_sup(spec, 10_000, 1, 4000, w):.3f}")

# %%
# Time until two independent leaders differ by more than D beeps. The
# Monte-Carlo survival curve matches the exact one from a transfer matrix.
D = 4
sg = sigma_hitting(spec, D, seed=2, trials=5000, cap=10**6)
ks = np.array([1, 2, 4, 8])
print("median sigma:", sg.median())
print("P(sigma > k D^2) simulated:", np.round(sg.survival(ks * D * D), 4))
print("P(sigma > k D^2) exact:    ", np.round(sigma_survival_exact(spec, D, ks * D * D), 4))
print(f"asymptotic log-survival slope per unit k: {sigma_decay_rate(spec, D):.4f}")

# %%
# The sum of n geometric waiting times (support 1, 2, ...) reaches k exactly
# when fewer than n of the first k-1 trials succeed.
for n, k in [(1, 3), (2, 4), (5, 12)]:
    chk = geom_binom_identity(n, k, 0.5)
    print(f"n={n} k={k}: tail {chk.lhs:.6f}  P(Bin(k-1,p)<=n-1) {chk.rhs:.6f}  "
          f"P(Bin(k,p)<=n) {chk.printed_rhs:.6f}")
