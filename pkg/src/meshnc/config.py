"""Flat key=value scenario configuration files.

Format: one `key = value` per line, `#` comments, repeated `flow = ...` and
`node = ...` lines. Unknown keys and malformed values are rejected with the
offending line number.

Example::

    topology = eight_node
    protocols = plain,cope,bend,flexonc
    bers = 2e-6, 2e-5, 5e-5, 8e-5, 1e-4, 2e-4
    seeds = 1,2,3,4,5
    flow = 0,4,0.07,150
    flow = 4,0,0.07,150
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .channel import Topology
from .core import Protocol
from .params import Flow, Scenario, SimParams
from .routing import RoutingError, build_forwarding_tables, next_hop
from .scenarios import TOPOLOGY_KINDS, build_topology, default_flows

DEFAULT_BERS = (2e-6, 2e-5, 5e-5, 8e-5, 1e-4, 2e-4)
DEFAULT_SEEDS = (1, 2, 3, 4, 5)

_FLOAT_PARAMS = {
    "ack_slot", "base_timeout", "data_rate", "pool_ttl", "pairing_hold",
    "drain_grace", "range", "ack_stagger", "turnaround", "slot_time",
}
_INT_PARAMS = {"payload_size", "retry_limit", "queue_cap", "ack_cache_cap",
               "max_cope_components"}


class ConfigError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class ScenarioConfig:
    name: str = "custom"
    topology_kind: str | None = None
    explicit_nodes: dict[int, tuple[float, float]] = field(default_factory=dict)
    range_m: float = 250.0
    protocols: tuple[Protocol, ...] = tuple(Protocol)
    bers: tuple[float, ...] = DEFAULT_BERS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    flows: tuple[Flow, ...] = ()
    params: SimParams = field(default_factory=SimParams)

    def topology(self) -> Topology:
        if self.explicit_nodes:
            return Topology(self.explicit_nodes, self.range_m)
        return build_topology(self.topology_kind or "eight_node")

    def resolved_flows(self) -> tuple[Flow, ...]:
        if self.flows:
            return self.flows
        if self.topology_kind is None:
            raise ValueError("explicit topologies need explicit flow lines")
        return tuple(default_flows(self.topology_kind))

    def scenario(self, protocol: Protocol, ber: float) -> Scenario:
        return Scenario(
            name=self.name,
            topology=self.topology(),
            protocol=protocol,
            ber=ber,
            flows=self.resolved_flows(),
            params=self.params,
        )


def _parse_protocol(token: str, line_no: int) -> Protocol:
    try:
        return Protocol[token.strip().upper()]
    except KeyError:
        raise ConfigError(line_no, f"unknown protocol {token.strip()!r}") from None


def parse_config(text: str, name: str = "custom") -> ScenarioConfig:
    cfg = ScenarioConfig(name=name)
    flows: list[Flow] = []
    nodes: dict[int, tuple[float, float]] = {}
    timer_overrides: dict[str, float] = {}
    param_overrides: dict[str, object] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line_no, f"expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        try:
            if key == "topology":
                if value not in TOPOLOGY_KINDS:
                    raise ConfigError(
                        line_no,
                        f"topology must be one of {TOPOLOGY_KINDS}, got {value!r}")
                cfg.topology_kind = value
            elif key == "node":
                nid_s, x_s, y_s = (v.strip() for v in value.split(","))
                nid = int(nid_s)
                if nid in nodes:
                    raise ConfigError(line_no, f"duplicate node id {nid}")
                nodes[nid] = (float(x_s), float(y_s))
            elif key == "flow":
                src, dst, interval, duration = (v.strip() for v in value.split(","))
                flows.append(Flow(int(src), int(dst), float(interval),
                                  float(duration)))
            elif key == "protocol":
                cfg.protocols = (_parse_protocol(value, line_no),)
            elif key == "protocols":
                cfg.protocols = tuple(_parse_protocol(v, line_no)
                                      for v in value.split(","))
            elif key in ("ber", "bers"):
                bers = tuple(float(v) for v in value.split(","))
                for b in bers:
                    if not 0.0 <= b < 1.0:
                        raise ConfigError(line_no, f"ber must be in [0,1): {b}")
                cfg.bers = bers
            elif key in ("seed", "seeds"):
                cfg.seeds = tuple(int(v) for v in value.split(","))
            elif key in _FLOAT_PARAMS:
                v = float(value)
                if v <= 0:
                    raise ConfigError(line_no, f"{key} must be positive")
                if key in ("ack_slot", "base_timeout"):
                    timer_overrides[key] = v
                elif key == "range":
                    cfg.range_m = v
                else:
                    param_overrides[key] = v
            elif key in _INT_PARAMS:
                iv = int(value)
                if iv < 0:
                    raise ConfigError(line_no, f"{key} must be non-negative")
                param_overrides[key] = iv
            elif key == "name":
                cfg.name = value
            else:
                raise ConfigError(line_no, f"unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(line_no, f"bad value for {key!r}: {exc}") from None

    if nodes and cfg.topology_kind:
        raise ConfigError(1, "give either 'topology' or explicit 'node' lines, not both")
    cfg.explicit_nodes = nodes
    if flows:
        cfg.flows = tuple(flows)
    if param_overrides:
        cfg.params = replace(cfg.params, **param_overrides)
    if timer_overrides:
        cfg.params = cfg.params.with_timers(**timer_overrides)
    if cfg.topology_kind is None and not nodes:
        raise ConfigError(1, "config needs a 'topology' or explicit 'node' lines")
    if cfg.topology_kind is None and not cfg.flows:
        raise ConfigError(1, "explicit topologies need explicit 'flow' lines")
    validate_config(cfg)
    return cfg


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = cfgname_from_path(path)
    return parse_config(text, name=name)


def cfgname_from_path(path: str) -> str:
    import os
    stem = os.path.splitext(os.path.basename(path))[0]
    return stem or "custom"


def validate_config(cfg: ScenarioConfig) -> None:
    """Reject flows between missing or mutually unreachable endpoints."""
    topo = cfg.topology()
    tables = build_forwarding_tables(topo)
    for fl in cfg.resolved_flows():
        if fl.src not in topo or fl.dst not in topo:
            raise ValueError(f"flow endpoint not in topology: {fl}")
        if fl.src == fl.dst:
            raise ValueError(f"flow source equals destination: {fl}")
        try:
            next_hop(tables, fl.src, fl.dst)
        except RoutingError:
            raise ValueError(
                f"no route between flow endpoints {fl.src} and {fl.dst}"
            ) from None
