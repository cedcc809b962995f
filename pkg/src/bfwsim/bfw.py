"""The six-state Beeping/Frozen/Waiting leader-election protocol.

State tokens: ``L``/``N`` for leader/non-leader, then ``W``aiting,
``B``eeping or ``F``rozen. Every node starts in ``LW``. A waiting leader
that hears nothing beeps next round with probability ``p``; a waiting node
that hears a beep becomes ``NB`` (a leader doing so is eliminated); every
beep is followed by exactly one frozen round.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .engine import ProtocolDefinition

STATES = ("LW", "LB", "LF", "NW", "NB", "NF")
LW, LB, LF, NW, NB, NF = range(6)

WAITING, BEEPING, FROZEN = 0, 1, 2
# phase of each state code (W/B/F regardless of leadership)
PHASE = np.array([WAITING, BEEPING, FROZEN, WAITING, BEEPING, FROZEN], dtype=np.int8)
IS_LEADER = np.array([True, True, True, False, False, False])


@dataclass(frozen=True)
class BfwParams:
    """Beep probability, either fixed or tuned to the diameter as 1/(D+1).

    ``p = 1`` makes the protocol deterministic, which can never break the
    symmetry of two identical leaders; it is only accepted with
    ``allow_certain=True``.
    """

    p: float = 0.5
    mode: str = "uniform"
    diameter: int | None = None
    allow_certain: bool = False

    def __post_init__(self):
        if self.mode == "uniform":
            upper_ok = self.p < 1.0 or (self.allow_certain and self.p == 1.0)
            if not (0.0 < self.p and upper_ok):
                raise ValueError(f"p must lie in (0, 1), got {self.p}")
        elif self.mode == "diameter_tuned":
            D = self.diameter
            if D is None or int(D) != D or D < 1:
                raise ValueError("diameter_tuned mode needs a positive integer diameter")
            object.__setattr__(self, "p", 1.0 / (D + 1))
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def tuned(cls, diameter: int) -> BfwParams:
        return cls(mode="diameter_tuned", diameter=diameter)

    @property
    def p_exact(self) -> Fraction:
        if self.mode == "diameter_tuned":
            return Fraction(1, self.diameter + 1)
        return Fraction(self.p)


def bfw_protocol(params: BfwParams = BfwParams()) -> ProtocolDefinition:
    p = params.p
    quiet = {
        # listed beep-first so that a uniform draw below p means "beep"
        "LW": {"LB": p, "LW": 1.0 - p},
        "LF": {"LW": 1.0},
        "NW": {"NW": 1.0},
        "NF": {"NW": 1.0},
    }
    heard = {
        "LW": {"NB": 1.0},
        "LB": {"LF": 1.0},
        "LF": {"LW": 1.0},
        "NW": {"NB": 1.0},
        "NB": {"NF": 1.0},
        "NF": {"NW": 1.0},
    }
    proto_params = {"p": p, "mode": params.mode}
    if params.diameter is not None:
        proto_params["diameter"] = params.diameter
    return ProtocolDefinition(
        states=STATES,
        beeping=frozenset({"LB", "NB"}),
        start="LW",
        delta_quiet=quiet,
        delta_heard=heard,
        leaders=frozenset({"LW", "LB", "LF"}),
        name="bfw",
        params=proto_params,
    )


def protocol_from_header(meta: dict) -> ProtocolDefinition:
    """Rebuild the protocol described in a trace header."""
    if meta.get("name") != "bfw":
        raise ValueError(f"unsupported protocol {meta.get('name')!r}")
    if meta.get("mode") == "diameter_tuned":
        return bfw_protocol(BfwParams.tuned(int(meta["diameter"])))
    p = float(meta["p"])
    return bfw_protocol(BfwParams(p=p, allow_certain=p == 1.0))


def is_leader(state: str | int) -> bool:
    if isinstance(state, str):
        return state in ("LW", "LB", "LF")
    return bool(IS_LEADER[state])
