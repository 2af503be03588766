"""meshnc: packet-level simulation of XOR network coding in wireless meshes.

Four link-layer forwarding protocols over the same deterministic engine:
plain store-and-forward, knowledge-gated inter-flow XOR coding, positional
opportunistic coding with native-packet helpers, and flexible opportunistic
coding where non-intended receivers may also decode and forward coded
frames on the intended forwarder's behalf.
"""
from .channel import ChannelParams, Topology, frame_loss_probability, neighbors, sample_reception
from .coding import (
    NeighborKnowledge,
    TimerParams,
    bend_mixable,
    cope_select,
    eligibility_failure,
    flexonc_eligible,
    helper_hold_time,
    priority_index,
    priority_list,
    sender_timeout,
)
from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .core import (
    Ack,
    CodedComponent,
    CodedPacket,
    CodingError,
    Frame,
    NativePacket,
    NodeId,
    PayloadId,
    Protocol,
    decodable,
    decode,
    encode,
    xor_payloads,
)
from .engine import Simulation, cbr_source, mac_grant, make_payload, run, throughput
from .node import Metrics, NodeState
from .params import Flow, Scenario, SimParams
from .routing import (
    ForwardingTables,
    RoutingError,
    build_forwarding_tables,
    neighbor_next_hop,
    next_hop,
    second_next_hop,
)
from .scenarios import build_topology, default_flows, grid_id
from .sweep import gain_table, run_sweep

__version__ = "0.1.0"

__all__ = [
    "Ack", "ChannelParams", "CodedComponent", "CodedPacket", "CodingError",
    "ConfigError", "Flow", "ForwardingTables", "Frame", "Metrics",
    "NativePacket", "NeighborKnowledge", "NodeId", "NodeState", "PayloadId",
    "Protocol", "RoutingError", "Scenario", "ScenarioConfig", "SimParams",
    "Simulation", "TimerParams", "bend_mixable", "build_forwarding_tables",
    "build_topology", "cbr_source", "cope_select", "decodable", "decode",
    "default_flows", "eligibility_failure", "encode", "flexonc_eligible",
    "frame_loss_probability", "gain_table", "grid_id", "helper_hold_time",
    "load_config", "mac_grant", "make_payload", "neighbor_next_hop",
    "neighbors", "next_hop", "parse_config", "priority_index",
    "priority_list", "run", "run_sweep", "sample_reception",
    "second_next_hop", "sender_timeout", "throughput", "xor_payloads",
]
