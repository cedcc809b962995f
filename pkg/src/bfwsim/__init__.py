"""Simulate and audit BFW leader election in the beeping model."""

__version__ = "0.1.0"

from .bfw import BfwParams, bfw_protocol, is_leader, protocol_from_header
from .engine import (Configuration, ProtocolDefinition, RunTrace, TraceOptions, derive_seed,
                     initial_configuration, read_header, read_trace, run, step, write_trace)
from .flowcheck import AUDITS, FlowReport, OrientedPath, audit_suite, edge_flow, path_flow
from .graph import Graph, distances, generate, load_edge_list, resolve
from .harness import SweepSpec, fit_loglog, sweep, two_leader_probe
from .markov import (ChainSpec, anticoncentration_sup, geom_binom_identity, sigma_hitting,
                     simulate_chain, stationary)

__all__ = [
    "AUDITS", "BfwParams", "ChainSpec", "Configuration", "FlowReport", "Graph", "OrientedPath",
    "ProtocolDefinition", "RunTrace", "SweepSpec", "TraceOptions", "anticoncentration_sup",
    "audit_suite", "bfw_protocol", "derive_seed", "distances", "edge_flow", "fit_loglog",
    "generate", "geom_binom_identity", "initial_configuration", "is_leader", "load_edge_list",
    "path_flow", "protocol_from_header", "read_header", "read_trace", "resolve", "run",
    "sigma_hitting", "simulate_chain", "stationary", "step", "sweep", "two_leader_probe",
    "write_trace",
]
