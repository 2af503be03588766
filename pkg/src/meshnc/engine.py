"""Deterministic discrete-event scheduler, MAC arbitration and metrics.

The medium is arbitrated as a single contention domain: whenever it is free,
every node with a serviceable queue draws a random backoff and the earliest
draw transmits. Losers defer and re-contend, so hidden terminals never
overlap in normal operation; only an exact backoff tie puts two frames on
the air together, in which case any receiver in range of more than one
transmitter gets nothing. Reception at each neighbor is an independent
Bernoulli draw from the bit-error model. ACKs bypass contention: the grant
machinery locks data out of the window right after a data frame in which its
receivers acknowledge, one staggered slot per coded component.

Identical (scenario, seed) pairs replay identical event sequences: the heap
orders events by (time, sequence number), receivers are visited in ascending
node id, and a single random stream is consumed in event order.
"""
from __future__ import annotations

import heapq
import random
from collections import deque
from typing import Optional

from .channel import ChannelParams, sample_reception
from .core import Ack, Frame, NativePacket, PayloadId, Protocol
from .node import Metrics, NodeState, SendAck, StartTimer, TxIntent, TIMER_WAKEUP
from .params import Scenario
from .routing import build_forwarding_tables, next_hop

E_TRAFFIC = 0
E_GRANT = 1
E_FRAME_END = 2
E_ACK_TX = 3
E_ACK_END = 4
E_TIMER = 5
E_WAKEUP = 6

MAX_EVENTS = 100_000_000


class SchedulerOverflow(RuntimeError):
    pass


def make_payload(pid: PayloadId, size: int) -> bytes:
    """Deterministic per-datagram pattern so destinations can verify bytes."""
    base = (pid.flow * 2654435761 + pid.seq * 40503 + 0x9E3779B9) & 0xFFFFFFFF
    word = base.to_bytes(4, "big")
    reps = size // 4 + 1
    return (word * reps)[:size]


def cbr_source(flow_index: int, interval: float, duration: float) -> list[tuple[float, int]]:
    """Datagram emission times of one constant-rate source: k*interval < duration."""
    out = []
    k = 0
    while True:
        t = k * interval
        if t >= duration:
            break
        out.append((t, k))
        k += 1
    return out


def mac_grant(contenders: list[int], now: float, rng: random.Random,
              slot_time: float, cw: int) -> tuple[list[int], float]:
    """Resolve one contention round.

    Each contender (visited in the given order) draws a uniform backoff in
    [0, cw) slots; the minimum draw transmits at now + backoff. An exact tie
    puts every tied contender on the air simultaneously — a collision.
    Backoff is continuous, so ties only occur under rigged random streams.
    """
    draws = [rng.random() * cw for _ in contenders]
    best = min(draws)
    winners = [c for c, d in zip(contenders, draws) if d == best]
    return winners, now + best * slot_time


def throughput(metrics: Metrics, duration: float) -> tuple[dict[int, float], float]:
    """Delivered payload bits per second, per flow and aggregate."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    per_flow = {
        flow: metrics.delivered_bytes[flow] * 8.0 / duration
        for flow in sorted(metrics.delivered_bytes)
    }
    return per_flow, sum(per_flow.values())


class Simulation:
    def __init__(self, scenario: Scenario, seed: int):
        self.sc = scenario
        self.params = scenario.params
        self.topo = scenario.topology
        self.chan = ChannelParams(scenario.ber, self.params.data_rate)
        self.rng = random.Random(seed)
        self.tables = build_forwarding_tables(self.topo)
        adj = self.topo.adjacency()
        self.nbrs = adj.__getitem__
        self._adj = adj
        self.metrics = Metrics()
        self.node_order = self.topo.nodes()
        size = self.params.payload_size
        check = lambda pid: make_payload(pid, size)  # noqa: E731
        self.nodes = {
            n: NodeState(n, scenario.protocol, self.params, self.tables,
                         self.nbrs, self.metrics, payload_check=check)
            for n in self.node_order
        }
        self._validate_flows()

        self._heap: list[tuple] = []
        self._seq = 0
        self.now = 0.0
        self.busy_until = 0.0
        self.lockout_until = 0.0
        self._grant_at: Optional[float] = None
        # ACKs that came due while the medium was busy; they transmit ahead
        # of any data grant as soon as the air frees (SIFS-style priority).
        self._ack_backlog: deque = deque()

    def _validate_flows(self) -> None:
        for fl in self.sc.flows:
            if fl.src not in self.topo or fl.dst not in self.topo:
                raise ValueError(f"flow endpoint missing from topology: {fl}")
            if fl.src == fl.dst:
                raise ValueError(f"flow may not target its own source: {fl}")
            next_hop(self.tables, fl.src, fl.dst)  # raises when unreachable

    # ------------------------------------------------------------- plumbing

    def _schedule(self, t: float, kind: int, a=None, b=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, a, b))

    def _maybe_grant(self) -> None:
        if self._grant_at is not None:
            return
        g = max(self.now, self.busy_until, self.lockout_until)
        self._grant_at = g
        self._schedule(g, E_GRANT)

    def _apply(self, nid: int, actions) -> None:
        for act in actions:
            if type(act) is SendAck:
                due = self.now + self.params.turnaround + act.extra_delay
                self._schedule(due, E_ACK_TX, nid, act.ack)
            elif type(act) is StartTimer:
                if act.kind == TIMER_WAKEUP:
                    self._schedule(act.at, E_WAKEUP, nid)
                else:
                    self._schedule(act.at, E_TIMER, nid, (act.kind, act.key))

    def _ack_window(self, intent: TxIntent) -> float:
        # Trailing turnaround keeps the next data grant strictly after the
        # last in-window ACK has been processed by its receivers.
        p = self.params
        n = intent.n_components
        return (2 * p.turnaround + (n - 1) * p.ack_stagger
                + (14 * 8) / p.data_rate)

    # ------------------------------------------------------------------ run

    def run(self) -> Metrics:
        for i, fl in enumerate(self.sc.flows):
            if fl.duration > 0.0:
                self._schedule(0.0, E_TRAFFIC, i, 0)
        horizon = self.sc.duration + self.params.drain_grace

        heap = self._heap
        events = 0
        while heap:
            t, _, kind, a, b = heapq.heappop(heap)
            if t > horizon:
                break
            if t < self.now:
                raise AssertionError(f"causality violation: {t} < {self.now}")
            self.now = t
            events += 1
            if events > MAX_EVENTS:
                raise SchedulerOverflow(
                    f"more than {MAX_EVENTS} events at t={t:.6f}; "
                    "likely a runaway timer loop"
                )
            if kind == E_GRANT:
                self._on_grant()
            elif kind == E_FRAME_END:
                self._on_frame_end(a, b)
            elif kind == E_ACK_TX:
                self._on_ack_tx(a, b)
            elif kind == E_ACK_END:
                self._on_ack_end(a, b)
            elif kind == E_TIMER:
                node = self.nodes[a]
                self._apply(a, node.on_timer(b[0], b[1], t))
                if node.ready(t):
                    self._maybe_grant()
            elif kind == E_WAKEUP:
                if self.nodes[a].ready(t):
                    self._maybe_grant()
            elif kind == E_TRAFFIC:
                self._on_traffic(a, b)
        self.metrics.events = events
        return self.metrics

    # -------------------------------------------------------------- events

    def _on_traffic(self, flow_index: int, k: int) -> None:
        fl = self.sc.flows[flow_index]
        pid = PayloadId(flow_index, k)
        payload = make_payload(pid, self.params.payload_size)
        nh = next_hop(self.tables, fl.src, fl.dst)
        pkt = NativePacket(id=pid, src=fl.src, dst=fl.dst, prev_hop=fl.src,
                           next_hop=nh, payload=payload)
        self.metrics.generated_count[flow_index] += 1
        self.metrics.generated_bytes[flow_index] += len(payload)
        node = self.nodes[fl.src]
        if node.enqueue_source(pkt, self.now) and node.ready(self.now):
            self._maybe_grant()
        t_next = (k + 1) * fl.interval
        if t_next < fl.duration:
            self._schedule(t_next, E_TRAFFIC, flow_index, k + 1)

    def _flush_ack_backlog(self) -> None:
        if self._ack_backlog and self.busy_until <= self.now + 1e-15:
            nid, ack = self._ack_backlog.popleft()
            self._transmit_ack(nid, ack)

    def _on_grant(self) -> None:
        self._grant_at = None
        self._flush_ack_backlog()
        gate = max(self.busy_until, self.lockout_until)
        if self.now < gate - 1e-15:
            self._maybe_grant()
            return
        contenders = [n for n in self.node_order if self.nodes[n].ready(self.now)]
        if not contenders:
            return
        winners, start = mac_grant(contenders, self.now, self.rng,
                                   self.params.slot_time, self.params.cw)
        intents: list[tuple[int, TxIntent]] = []
        for w in winners:
            intent = self.nodes[w].select_transmission(start)
            if intent is not None:
                intents.append((w, intent))
        if not intents:
            return
        m = self.metrics
        for w, intent in intents:
            air = intent.frame.bits / self.params.data_rate
            end = start + air
            m.tx_data += 1
            if intent.n_components > 1:
                m.tx_coded += 1
            m.retx += intent.retx_count
            others = tuple(x for x, _ in intents if x != w)
            self._schedule(end, E_FRAME_END, (w, intent), others)
            if end > self.busy_until:
                self.busy_until = end
            lock = end + self._ack_window(intent)
            if lock > self.lockout_until:
                self.lockout_until = lock
        if len(contenders) > len(intents):
            self._maybe_grant()

    def _on_frame_end(self, tx: tuple[int, TxIntent], others: tuple[int, ...],
                      ) -> None:
        w, intent = tx
        node = self.nodes[w]
        self._apply(w, node.after_transmit(intent, self.now))

        receivers = sample_reception(intent.frame, self.topo, self.chan, self.rng)
        if others:
            # A receiver in range of any other simultaneous transmitter hears
            # only garbage; the colliding transmitters themselves hear nothing.
            receivers -= set(others)
            receivers = {r for r in receivers
                         if not any(r in self._adj[o] for o in others)}
        any_ready = node.ready(self.now)
        for r in sorted(receivers):
            rnode = self.nodes[r]
            self._apply(r, rnode.on_data_frame(intent.frame, self.now))
            any_ready = any_ready or rnode.ready(self.now)
        self._flush_ack_backlog()
        if any_ready:
            self._maybe_grant()

    def _transmit_ack(self, nid: int, ack: Ack) -> None:
        frame = self.nodes[nid].build_ack_frame(ack)
        air = frame.bits / self.params.data_rate
        self.busy_until = self.now + air
        self._schedule(self.now + air, E_ACK_END, nid, frame)

    def _on_ack_tx(self, nid: int, ack: Ack) -> None:
        if self.busy_until > self.now + 1e-15:
            self._ack_backlog.append((nid, ack))
            return
        self._transmit_ack(nid, ack)

    def _on_ack_end(self, nid: int, frame: Frame) -> None:
        receivers = sample_reception(frame, self.topo, self.chan, self.rng)
        ack = frame.body
        any_ready = False
        for r in sorted(receivers):
            rnode = self.nodes[r]
            self._apply(r, rnode.on_ack(ack, frame.reception_report, self.now))
            any_ready = any_ready or rnode.ready(self.now)
        self._flush_ack_backlog()
        if any_ready:
            self._maybe_grant()


def run(scenario: Scenario, seed: int) -> Metrics:
    """Execute one deterministic run; equal inputs give equal metrics."""
    return Simulation(scenario, seed).run()
