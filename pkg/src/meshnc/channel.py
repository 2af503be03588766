"""Geometry, neighbor derivation and BER-driven broadcast reception."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .core import Frame, NodeId


class Topology:
    """Static node positions with a fixed reception disk.

    Adjacency is precomputed once; positions never change during a run.
    """

    def __init__(self, positions: dict[NodeId, tuple[float, float]],
                 range_m: float = 250.0):
        if range_m <= 0:
            raise ValueError("range must be positive")
        self.positions = dict(positions)
        self.range_m = range_m
        self._adj: dict[NodeId, frozenset[NodeId]] = {}
        self._sorted_adj: dict[NodeId, tuple[NodeId, ...]] = {}
        ids = sorted(self.positions)
        for n in ids:
            xn, yn = self.positions[n]
            near = [
                m for m in ids
                if m != n and math.dist((xn, yn), self.positions[m]) <= range_m
            ]
            self._adj[n] = frozenset(near)
            self._sorted_adj[n] = tuple(near)

    def __contains__(self, n: NodeId) -> bool:
        return n in self.positions

    def nodes(self) -> list[NodeId]:
        return sorted(self.positions)

    def adjacency(self) -> dict[NodeId, frozenset[NodeId]]:
        return dict(self._adj)

    def sorted_neighbors(self, n: NodeId) -> tuple[NodeId, ...]:
        return self._sorted_adj[n]


@dataclass(frozen=True)
class ChannelParams:
    ber: float
    data_rate: float = 1_000_000.0

    def __post_init__(self):
        if not 0.0 <= self.ber < 1.0:
            raise ValueError(f"ber must be in [0,1), got {self.ber}")
        if self.data_rate <= 0:
            raise ValueError("data rate must be positive")


def neighbors(topo: Topology, n: NodeId) -> frozenset[NodeId]:
    """All nodes within reception range of `n` (excluding `n` itself)."""
    if n not in topo:
        raise KeyError(f"unknown node {n}")
    return topo._adj[n]


def frame_loss_probability(ber: float, bits: int) -> float:
    """Probability that at least one of `bits` independent bits is corrupted."""
    if bits < 1:
        raise ValueError("frame must contain at least one bit")
    return 1.0 - (1.0 - ber) ** bits


def sample_reception(frame: Frame, topo: Topology, params: ChannelParams,
                     rng: random.Random) -> set[NodeId]:
    """Draw the set of neighbors that receive a broadcast frame intact.

    Each neighbor succeeds independently with probability (1-ber)^bits; draws
    are consumed in ascending NodeId order so runs are reproducible.
    """
    sender = frame.transmitter
    if sender not in topo:
        raise KeyError(f"unknown sender {sender}")
    p_ok = (1.0 - params.ber) ** frame.bits
    return {m for m in topo._sorted_adj[sender] if rng.random() < p_ok}
