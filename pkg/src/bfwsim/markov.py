"""The three-state chain a leader follows while it is not disturbed.

A leader left alone cycles W -> (coin) -> B -> F -> W: from W it beeps
with probability p, a beep is followed by a frozen round, and a frozen
round by waiting again. This module holds the chain's stationary law,
Monte-Carlo visit statistics, the hitting time of a beep-count gap between
two independent copies, and an exact check of the geometric/binomial tail
identity used to bound those counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

STATES = ("W", "B", "F")
W, B, F = 0, 1, 2

# uniforms drawn per chunk when stepping many chains in lock-step
_CHUNK_CELLS = 1 << 20


@dataclass(frozen=True)
class ChainSpec:
    """Transition matrix rows ``W: (1-p, p, 0)``, ``B: (0, 0, 1)``,
    ``F: (1, 0, 0)``. ``start`` is ``"W"``, ``"B"``, ``"F"`` or
    ``"stationary"`` (first state drawn from the stationary law)."""

    p: float = 0.5
    start: str = "W"

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if self.start not in STATES + ("stationary",):
            raise ValueError(f"unknown start {self.start!r}")

    @property
    def matrix(self) -> np.ndarray:
        p = self.p
        return np.array([[1.0 - p, p, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


def stationary(spec: ChainSpec) -> np.ndarray:
    """Stationary law ``(1, p, p) / (2p + 1)`` over ``(W, B, F)``.

    The closed form is checked against ``pi @ P == pi`` before returning.
    """
    p = spec.p
    pi = np.array([1.0, p, p]) / (2.0 * p + 1.0)
    residual = np.max(np.abs(pi @ spec.matrix - pi))
    if residual > 1e-12:
        raise ArithmeticError(f"pi P != pi (residual {residual:.3e}) for p={p}")
    return pi


def expected_visits(spec: ChainSpec, t: int) -> np.ndarray:
    """Exact ``E[N_t(x)]`` for ``x`` in (W, B, F): the sum of the state laws over rounds ``1..t``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if spec.start == "stationary":
        return stationary(spec) * t
    law = np.zeros(3)
    law[STATES.index(spec.start)] = 1.0
    total = np.zeros(3)
    P = spec.matrix
    for _ in range(t):
        total += law
        law = law @ P
    return total


def _initial_states(spec: ChainSpec, size: int, rng: np.random.Generator) -> np.ndarray:
    if spec.start == "stationary":
        return rng.choice(3, size=size, p=stationary(spec)).astype(np.int8)
    return np.full(size, STATES.index(spec.start), dtype=np.int8)


def _advance(state: np.ndarray, u: np.ndarray, p: float) -> np.ndarray:
    return np.where(state == W, (u < p).astype(np.int8), (state + 1) % 3).astype(np.int8)


def _uniform_chunks(rng: np.random.Generator, width: int):
    rows = max(1, _CHUNK_CELLS // max(width, 1))
    while True:
        block = rng.random((rows, width))
        yield from block


@dataclass(frozen=True)
class ChainStats:
    """Visit counts ``N_t(x)`` over ``trials`` independent chains.

    ``counts[i]`` is the (W, B, F) visit histogram of trial ``i`` over
    rounds ``1..t``; each row sums to ``t``.
    """

    spec: ChainSpec
    t: int
    counts: np.ndarray

    @property
    def trials(self) -> int:
        return self.counts.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.counts.mean(axis=0)

    @property
    def var(self) -> np.ndarray:
        return self.counts.var(axis=0, ddof=1) if self.trials > 1 else np.zeros(3)

    @property
    def fractions(self) -> np.ndarray:
        return self.mean / self.t

    @property
    def fraction_stderr(self) -> np.ndarray:
        return np.sqrt(self.var / self.trials) / self.t


def simulate_chain(spec: ChainSpec, t: int, seed: int, trials: int) -> ChainStats:
    """Run ``trials`` chains for rounds ``1..t`` and tally state visits."""
    if t < 1 or trials < 1:
        raise ValueError("t and trials must be >= 1")
    rng = np.random.default_rng(seed)
    state = _initial_states(spec, trials, rng)
    nb = (state == B).astype(np.int64)
    nf = (state == F).astype(np.int64)
    uniforms = _uniform_chunks(rng, trials)
    for _ in range(t - 1):
        state = _advance(state, next(uniforms), spec.p)
        nb += state == B
        nf += state == F
    counts = np.stack([t - nb - nf, nb, nf], axis=1)
    return ChainStats(spec, t, counts)


def max_window_mass(samples: np.ndarray, width: int) -> float:
    """``max_m`` of the fraction of integer samples within ``width`` of ``m``."""
    samples = np.asarray(samples, dtype=np.int64)
    lo = samples.min()
    hist = np.bincount(samples - lo)
    window = 2 * width + 1
    csum = np.concatenate([[0], np.cumsum(hist)])
    # windows clipped at both ends of the support
    right = np.minimum(np.arange(hist.size) + window, hist.size)
    best = np.max(csum[right] - csum[np.arange(hist.size)])
    return float(best / samples.size)


def anticoncentration_sup(spec: ChainSpec, t: int, seed: int, trials: int, width: int,
                          tolerance: float = 0.05) -> float:
    """Estimate ``sup_m P(|N_t(B) - m| <= width)`` from ``trials`` chains.

    The estimate is the largest fraction of simulated ``N_t(B)`` values in
    any window of ``2 * width + 1`` consecutive integers. A binomial
    standard error above ``tolerance`` is refused rather than returned,
    i.e. ``trials`` must be at least ``0.25 / tolerance**2``.
    """
    if width < 0:
        raise ValueError("width must be >= 0")
    needed = math.ceil(0.25 / tolerance**2)
    if trials < needed:
        raise ValueError(f"{trials} trials cannot resolve the estimate to ±{tolerance}; need {needed}")
    stats = simulate_chain(spec, t, seed, trials)
    return max_window_mass(stats.counts[:, B], width)


@dataclass(frozen=True)
class SigmaSamples:
    """First rounds at which two independent chains' beep counts differ by
    more than ``D``; ``-1`` marks trials that reached ``cap`` first."""

    D: int
    cap: int
    values: np.ndarray

    @property
    def capped(self) -> np.ndarray:
        return self.values < 0

    def as_float(self) -> np.ndarray:
        """Values with capped trials as ``inf`` (they exceed every hit)."""
        out = self.values.astype(float)
        out[self.capped] = np.inf
        return out

    def median(self) -> float:
        return float(np.median(self.as_float()))

    def survival(self, thresholds) -> np.ndarray:
        """Empirical ``P(sigma > x)`` for each threshold ``x`` (capped counts as above)."""
        v = self.as_float()
        return np.array([(v > x).mean() for x in thresholds])


def sigma_hitting(spec: ChainSpec, D: int, seed: int, trials: int, cap: int) -> SigmaSamples:
    """Sample the gap-hitting time of two independent chains per trial."""
    if D < 0 or cap < 1 or trials < 1:
        raise ValueError("need D >= 0, cap >= 1, trials >= 1")
    rng = np.random.default_rng(seed)
    values = np.full(trials, -1, dtype=np.int64)
    state = _initial_states(spec, 2 * trials, rng).reshape(trials, 2)
    counts = (state == B).astype(np.int64)
    active = np.arange(trials)
    t = 1
    while True:
        gap = np.abs(counts[:, 0] - counts[:, 1])
        hit = gap > D
        if hit.any():
            values[active[hit]] = t
            keep = ~hit
            active, state, counts = active[keep], state[keep], counts[keep]
        if active.size == 0 or t >= cap:
            break
        u = rng.random(state.shape)
        state = _advance(state, u, spec.p)
        counts += state == B
        t += 1
    return SigmaSamples(D, cap, values)


def first_return_times(spec: ChainSpec, seed: int, trials: int) -> np.ndarray:
    """Rounds for a chain started in B to come back to B."""
    rng = np.random.default_rng(seed)
    state = np.full(trials, B, dtype=np.int8)
    out = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    t = 0
    while active.size:
        state = _advance(state, rng.random(active.size), spec.p)
        t += 1
        back = state == B
        out[active[back]] = t
        active, state = active[~back], state[~back]
    return out


# -- sums of geometric variables ---------------------------------------------

def geometric_tail_table(n_max: int, k_max: int, p: float) -> np.ndarray:
    """``out[n-1, k-1] = P(W_1 + ... + W_n >= k)`` for all ``n <= n_max``, ``k <= k_max``.

    The ``W_i`` are i.i.d. on ``{1, 2, ...}`` with ``P(W = j) = p (1-p)**(j-1)``.
    Dynamic programming over the mass of the partial sums below ``k_max``:
    adding one variable is the recurrence ``m'[s] = (1-p) m'[s-1] + p m[s-1]``.
    """
    if n_max < 1 or k_max < 1:
        raise ValueError("n and k must be >= 1")
    q = 1.0 - p
    mass = np.zeros(k_max)
    mass[0] = 1.0
    out = np.empty((n_max, k_max))
    for i in range(n_max):
        mass = lfilter([0.0, p], [1.0, -q], mass)
        below = np.cumsum(mass)  # below[k-1] = P(sum < k)
        out[i] = np.clip(1.0 - below, 0.0, 1.0)
    return out


def geometric_sum_tail(n: int, k: int, p: float) -> float:
    """``P(W_1 + ... + W_n >= k)``; see :func:`geometric_tail_table`."""
    return float(geometric_tail_table(n, k, p)[n - 1, k - 1])


def binomial_cdf(m: int, trials: int, p: float) -> float:
    """``P(Bin(trials, p) <= m)`` by direct summation of the mass."""
    if m < 0:
        return 0.0
    if m >= trials:
        return 1.0
    q = 1.0 - p
    total = 0.0
    for j in range(m + 1):
        total += math.exp(math.lgamma(trials + 1) - math.lgamma(j + 1) - math.lgamma(trials - j + 1)
                          + j * math.log(p) + (trials - j) * math.log(q))
    return min(total, 1.0)


@dataclass(frozen=True)
class IdentityCheck:
    """Geometric tail against the binomial form ``P(Bin(k-1, p) <= n-1)``.

    ``printed_rhs`` is the unshifted form ``P(Bin(k, p) <= n)`` for
    comparison. Iterating yields ``(lhs, rhs, equal)``.
    """

    n: int
    k: int
    p: float
    lhs: float
    rhs: float
    equal: bool
    printed_rhs: float
    printed_equal: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.equal))


def geom_binom_identity(n: int, k: int, p: float, tol: float = 1e-10) -> IdentityCheck:
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lhs = geometric_sum_tail(n, k, p)
    rhs = binomial_cdf(n - 1, k - 1, p)
    printed = binomial_cdf(n, k, p)
    return IdentityCheck(n, k, p, lhs, rhs, abs(lhs - rhs) <= tol, printed, abs(lhs - printed) <= tol)


# -- exact gap-hitting law ---------------------------------------------------

def _gap_transfer(spec: ChainSpec, D: int) -> np.ndarray:
    """Sub-stochastic kernel on (state_u, state_v, gap) with ``|gap| <= D``."""
    P = spec.matrix
    size = 2 * D + 1
    M = np.zeros((9 * size, 9 * size))
    for a in range(3):
        for b in range(3):
            for gi in range(size):
                row = (3 * a + b) * size + gi
                for a2 in range(3):
                    for b2 in range(3):
                        pr = P[a, a2] * P[b, b2]
                        if pr == 0.0:
                            continue
                        g2 = gi - D + (a2 == B) - (b2 == B)
                        if abs(g2) <= D:
                            M[row, (3 * a2 + b2) * size + g2 + D] += pr
    return M


def sigma_survival_exact(spec: ChainSpec, D: int, times) -> np.ndarray:
    """Exact ``P(sigma > t)`` for two chains started per ``spec.start``
    (W, B or F; not stationary), by powers of the gap transfer kernel."""
    if spec.start == "stationary":
        raise ValueError("exact survival needs a fixed start state")
    s0 = STATES.index(spec.start)
    size = 2 * D + 1
    M = _gap_transfer(spec, D)
    vec = np.zeros(M.shape[0])
    # both chains start in the same state, so the gap starts at 0
    vec[(3 * s0 + s0) * size + D] = 1.0
    times = np.asarray(times, dtype=np.int64)
    out = np.empty(times.size)
    t = 1
    for i in np.argsort(times):
        target = max(int(times[i]), 1)
        while t < target:
            vec = vec @ M
            t += 1
        out[i] = vec.sum()
    return out


def sigma_decay_rate(spec: ChainSpec, D: int) -> float:
    """Asymptotic slope of ``log P(sigma > k D^2)`` per unit ``k``."""
    lam = np.max(np.abs(np.linalg.eigvals(_gap_transfer(spec, D))))
    return float(D * D * np.log(lam))
