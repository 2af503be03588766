"""Per-node protocol state machine.

One NodeState instance per node per run, driven by the event engine through
four entry points: on_data_frame, on_ack, on_timer and select_transmission.
Handlers return lightweight actions (ACKs to send, timers to arm); the
engine owns the clock and the medium, the node owns queues, the decode pool,
pending-retransmission records, helper timers and duplicate suppression.

Frame reception walks the receiver-side flowchart: the intended forwarder of
a native or decodable coded packet admits it, ACKs and progresses it; an
overhearing node caches the payload, and under the opportunistic protocols
may arm a hold timer to take over forwarding if nobody closer to the route
acknowledges first. Plain mode reduces to bare store-and-forward with ACKs.
"""
from __future__ import annotations

from collections import Counter, OrderedDict, deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .coding import (
    NeighborFn,
    NeighborKnowledge,
    bend_mixable,
    cope_select,
    flexonc_eligible,
    helper_hold_time,
    priority_index,
    sender_timeout,
)
from .core import (
    Ack,
    CodedPacket,
    Frame,
    NativePacket,
    NodeId,
    PayloadId,
    Protocol,
    ack_frame_bits,
    data_frame_bits,
    decodable,
    decode,
    encode,
)
from .params import SimParams
from .routing import ForwardingTables, RoutingError, neighbor_next_hop, next_hop

TIMER_PENDING = 0
TIMER_HELPER = 1
TIMER_WAKEUP = 2


@dataclass(slots=True)
class SendAck:
    ack: Ack
    extra_delay: float = 0.0


@dataclass(slots=True)
class StartTimer:
    kind: int
    key: object
    at: float


Action = object


@dataclass(slots=True)
class QueueEntry:
    pkt: NativePacket
    eligible_at: float
    retx: bool = False
    onward: Optional[NodeId] = None  # redirect target for overheard packets


@dataclass(slots=True)
class MixEntry:
    coded: CodedPacket
    natives: tuple[NativePacket, ...]
    retx_count: int


@dataclass(slots=True)
class PendingEntry:
    pkt: NativePacket
    deadline: float
    coded: bool


@dataclass(slots=True)
class HelperEntry:
    coded: bool
    pkt: Optional[NativePacket]  # decoded native (coded case); q2 holds the native case
    frame_sender: NodeId
    intended: NodeId
    onward: NodeId
    fire_at: float
    index: int


@dataclass
class Metrics:
    """Counters of one run; delivered/generated maps are keyed by flow index."""
    generated_count: Counter = field(default_factory=Counter)
    generated_bytes: Counter = field(default_factory=Counter)
    delivered_count: Counter = field(default_factory=Counter)
    delivered_bytes: Counter = field(default_factory=Counter)
    tx_data: int = 0
    tx_coded: int = 0
    retx: int = 0
    dups_suppressed: int = 0
    duplicate_deliveries: int = 0
    helper_forwards: int = 0
    corrupted: int = 0
    drops: Counter = field(default_factory=Counter)
    events: int = 0


@dataclass(slots=True)
class TxIntent:
    """One granted transmission: the frame plus sender-side bookkeeping."""
    frame: Frame
    natives: tuple[NativePacket, ...]
    retx_count: int

    @property
    def n_components(self) -> int:
        return len(self.natives)


class NodeState:
    def __init__(self, node_id: NodeId, protocol: Protocol, params: SimParams,
                 tables: ForwardingTables, nbrs: NeighborFn, metrics: Metrics,
                 payload_check: Callable[[PayloadId], bytes] | None = None):
        self.node_id = node_id
        self.protocol = protocol
        self.params = params
        self.tables = tables
        self.nbrs = nbrs
        self.metrics = metrics
        self.payload_check = payload_check
        self.deg = max(1, len(nbrs(node_id)))

        self.q1: deque[QueueEntry] = deque()
        self.q2: deque[QueueEntry] = deque()
        self.mixing_q: deque[MixEntry] = deque()
        self._queued: set[PayloadId] = set()
        self.pool: OrderedDict[PayloadId, tuple[bytes, float]] = OrderedDict()
        self.recent_rx: deque[PayloadId] = deque(maxlen=8)
        self.ack_cache: deque[tuple[NodeId, PayloadId]] = deque()
        self._acked_by: dict[PayloadId, set[NodeId]] = {}
        self.pending: dict[PayloadId, PendingEntry] = {}
        self.retries: dict[PayloadId, int] = {}
        self.helper_timers: dict[PayloadId, HelperEntry] = {}
        self.delivered: set[PayloadId] = set()
        self.knowledge = NeighborKnowledge(cap=params.knowledge_cap)
        self._serve_mix_next = False

    # ------------------------------------------------------------------ utils

    def _pool_add(self, pid: PayloadId, payload: bytes, now: float) -> None:
        pool = self.pool
        pool[pid] = (payload, now)
        pool.move_to_end(pid)
        floor = now - self.params.pool_ttl
        while pool:
            old_pid, (_, stamp) = next(iter(pool.items()))
            if stamp >= floor:
                break
            pool.popitem(last=False)

    def pool_payloads(self) -> dict[PayloadId, bytes]:
        return {pid: data for pid, (data, _) in self.pool.items()}

    class _PoolView:
        __slots__ = ("_pool",)

        def __init__(self, pool):
            self._pool = pool

        def __contains__(self, pid):
            return pid in self._pool

        def get(self, pid, default=None):
            entry = self._pool.get(pid)
            return entry[0] if entry is not None else default

    def _pool_view(self):
        return NodeState._PoolView(self.pool)

    def _note_received(self, pid: PayloadId) -> None:
        if pid in self.recent_rx:
            self.recent_rx.remove(pid)
        self.recent_rx.append(pid)

    def _ack_cache_add(self, sender: NodeId, pid: PayloadId) -> None:
        self.ack_cache.append((sender, pid))
        self._acked_by.setdefault(pid, set()).add(sender)
        if len(self.ack_cache) > self.params.ack_cache_cap:
            old_sender, old_pid = self.ack_cache.popleft()
            remaining = any(
                s == old_sender and p == old_pid for s, p in self.ack_cache
            )
            if not remaining:
                senders = self._acked_by.get(old_pid)
                if senders is not None:
                    senders.discard(old_sender)
                    if not senders:
                        del self._acked_by[old_pid]

    def _make_ack(self, pid: PayloadId) -> Ack:
        ack = Ack(ack_sender=self.node_id, payload=pid)
        self._ack_cache_add(self.node_id, pid)
        return ack

    def build_ack_frame(self, ack: Ack) -> Frame:
        return Frame(body=ack, reception_report=tuple(self.recent_rx),
                     bits=ack_frame_bits())

    def _in_custody(self, pid: PayloadId) -> bool:
        return (pid in self._queued or pid in self.pending
                or pid in self.helper_timers or pid in self.delivered)

    def _deliver(self, pkt: NativePacket) -> None:
        if self.payload_check is not None:
            if pkt.payload != self.payload_check(pkt.id):
                self.metrics.corrupted += 1
                return
        self.delivered.add(pkt.id)
        self.metrics.delivered_count[pkt.id.flow] += 1
        self.metrics.delivered_bytes[pkt.id.flow] += len(pkt.payload)

    # ----------------------------------------------------------- duplicates

    def admit_packet(self, pkt: NativePacket) -> bool:
        """False when the packet demonstrably already progressed downstream.

        A cached ACK counts only when its sender is the packet's next hop,
        or a neighbor of that hop that sits strictly closer to the
        destination than this node does. The distance test keeps routine
        receipt ACKs from upstream holders (which are often also neighbors
        of the next hop) from masquerading as delivery evidence.
        """
        if pkt.dst == self.node_id and pkt.id in self.delivered:
            return False
        senders = self._acked_by.get(pkt.id)
        if senders:
            nh = pkt.next_hop
            hood = self.nbrs(nh)
            if nh in senders:
                return False
            try:
                my_dist = self.tables.hop_count(self.node_id, pkt.dst)
            except RoutingError:
                my_dist = None
            for s in senders:
                if s == pkt.prev_hop or s not in hood:
                    continue
                if my_dist is None:
                    return False
                try:
                    if self.tables.hop_count(s, pkt.dst) < my_dist:
                        return False
                except RoutingError:
                    continue
        return True

    # -------------------------------------------------------------- ingress

    def enqueue_source(self, pkt: NativePacket, now: float) -> bool:
        if len(self.q1) >= self.params.queue_cap:
            self.metrics.drops["queue_overflow"] += 1
            return False
        self.q1.append(QueueEntry(pkt, eligible_at=now))
        self._queued.add(pkt.id)
        return True

    def on_data_frame(self, frame: Frame, now: float) -> list[Action]:
        body = frame.body
        if isinstance(body, NativePacket):
            return self._on_native(body, frame, now)
        if isinstance(body, CodedPacket):
            return self._on_coded(body, frame, now)
        self.metrics.drops["malformed"] += 1
        return []

    def _learn_from(self, transmitter: NodeId, frame: Frame, now: float) -> None:
        know = self.knowledge
        know.merge(transmitter, frame.reception_report, now)

    def _harvest_components(self, c: CodedPacket, now: float) -> None:
        """Peel every decodable component into the pool. Overheard coded
        traffic would otherwise starve downstream decoding: a payload that
        only ever crossed the air inside XORs leaves no pool entries behind."""
        pool = self._pool_view()
        for comp in c.components:
            if comp.id in self.pool:
                continue
            if decodable(c, pool, comp):
                native = decode(c, pool, comp)
                if native is not None:
                    self._pool_add(native.id, native.payload, now)
                    self._note_received(native.id)

    def _cede_custody(self, pid: PayloadId) -> None:
        """Another node was heard transmitting this payload: it owns the
        retransmission responsibility now, so our pending record retires."""
        if pid in self.pending:
            del self.pending[pid]
            self.retries.pop(pid, None)

    def _refresh_helper(self, pid: PayloadId, now: float,
                        actions: list[Action]) -> None:
        """A fresh transmission restarts the receiver-side race: push the
        hold window out so the new intended forwarder's ACK can beat us."""
        entry = self.helper_timers.get(pid)
        if entry is None:
            return
        fire = now + helper_hold_time(entry.index, self.params.timers)
        if fire > entry.fire_at:
            entry.fire_at = fire
            actions.append(StartTimer(TIMER_HELPER, pid, fire))

    def _on_native(self, p: NativePacket, frame: Frame, now: float) -> list[Action]:
        actions: list[Action] = []
        proto = self.protocol
        tx = p.prev_hop
        self._cede_custody(p.id)
        self._refresh_helper(p.id, now, actions)
        if proto != Protocol.PLAIN:
            self._learn_from(tx, frame, now)
            self._pool_add(p.id, p.payload, now)
            self._note_received(p.id)
            # Broadcast inference: every neighbor of the transmitter heard
            # this too unless the channel said otherwise; being wrong under
            # loss reproduces the optimistic coding decisions of the real
            # protocols.
            know = self.knowledge
            know.add(tx, p.id, now)
            for m in self.nbrs(tx):
                if m != self.node_id:
                    know.add(m, p.id, now)

        if p.next_hop == self.node_id:
            if not self.admit_packet(p) or p.id in self._queued:
                self.metrics.dups_suppressed += 1
                actions.append(SendAck(self._make_ack(p.id)))
                return actions
            if p.dst == self.node_id:
                self._deliver(p)
                actions.append(SendAck(self._make_ack(p.id)))
                return actions
            if len(self.q1) >= self.params.queue_cap:
                # The frame itself was received fine, so acknowledge it;
                # retrying into a full queue would only burn airtime.
                self.metrics.drops["queue_overflow"] += 1
                actions.append(SendAck(self._make_ack(p.id)))
                return actions
            onward_hop = next_hop(self.tables, self.node_id, p.dst)
            queued = replace(p, next_hop=onward_hop, second_next_hop=None)
            eligible = now if proto == Protocol.PLAIN else now + self.params.pairing_hold
            self.q1.append(QueueEntry(queued, eligible_at=eligible))
            self._queued.add(p.id)
            actions.append(SendAck(self._make_ack(p.id)))
            if eligible > now:
                actions.append(StartTimer(TIMER_WAKEUP, None, eligible))
            return actions

        # Overhearing path.
        if proto in (Protocol.BEND, Protocol.FLEXONC):
            self._consider_native_helping(p, tx, now, actions)
        return actions

    def _consider_native_helping(self, p: NativePacket, tx: NodeId, now: float,
                                 actions: list[Action]) -> None:
        if self._in_custody(p.id) or not self.admit_packet(p):
            return
        my_nbrs = self.nbrs(self.node_id)
        if p.next_hop not in my_nbrs:
            return
        if self.protocol == Protocol.BEND:
            onward = p.second_next_hop
        else:
            try:
                onward = (p.dst if p.next_hop == p.dst
                          else neighbor_next_hop(self.tables, self.node_id,
                                                 p.next_hop, p.dst))
            except RoutingError:
                onward = None
        if onward is None or (onward != p.next_hop and onward not in my_nbrs):
            return
        if len(self.q2) >= self.params.queue_cap:
            self.metrics.drops["q2_overflow"] += 1
            return
        self.q2.append(QueueEntry(p, eligible_at=now, onward=onward))
        self._queued.add(p.id)
        index = priority_index(self.node_id, tx, p.next_hop, self.nbrs)
        fire = now + helper_hold_time(index, self.params.timers)
        self.helper_timers[p.id] = HelperEntry(
            coded=False, pkt=None, frame_sender=tx, intended=p.next_hop,
            onward=onward, fire_at=fire, index=index,
        )
        actions.append(StartTimer(TIMER_HELPER, p.id, fire))

    def _on_coded(self, c: CodedPacket, frame: Frame, now: float) -> list[Action]:
        actions: list[Action] = []
        proto = self.protocol
        for comp in c.components:
            self._cede_custody(comp.id)
            self._refresh_helper(comp.id, now, actions)
        if proto != Protocol.PLAIN:
            self._learn_from(c.sender, frame, now)
            know = self.knowledge
            for comp in c.components:
                know.add(c.sender, comp.id, now)
            self._harvest_components(c, now)

        mine = None
        my_index = 0
        for i, comp in enumerate(c.components):
            if comp.intended_next_hop == self.node_id:
                mine, my_index = comp, i
                break

        if mine is not None:
            pool = self._pool_view()
            native = decode(c, pool, mine)
            if native is None:
                self.metrics.drops["undecodable"] += 1
                return actions  # silent; the sender discovers via timeout
            self._pool_add(native.id, native.payload, now)
            self._note_received(native.id)
            stagger = my_index * self.params.ack_stagger
            if not self.admit_packet(native) or native.id in self._queued:
                self.metrics.dups_suppressed += 1
                actions.append(SendAck(self._make_ack(native.id), stagger))
                return actions
            if native.dst == self.node_id:
                self._deliver(native)
                actions.append(SendAck(self._make_ack(native.id), stagger))
                return actions
            if len(self.q1) >= self.params.queue_cap:
                self.metrics.drops["queue_overflow"] += 1
                actions.append(SendAck(self._make_ack(native.id), stagger))
                return actions
            onward_hop = next_hop(self.tables, self.node_id, native.dst)
            queued = replace(native, next_hop=onward_hop)
            self.q1.append(QueueEntry(queued, eligible_at=now + self.params.pairing_hold))
            self._queued.add(native.id)
            actions.append(SendAck(self._make_ack(native.id), stagger))
            actions.append(StartTimer(TIMER_WAKEUP, None, now + self.params.pairing_hold))
            return actions

        if proto != Protocol.FLEXONC:
            self.metrics.drops["non_intended_coded"] += 1
            return actions

        comp = flexonc_eligible(self.node_id, c, self.tables, self.nbrs,
                                self._pool_view())
        if comp is None or self._in_custody(comp.id):
            self.metrics.drops["non_intended_coded"] += 1
            return actions
        native = decode(c, self._pool_view(), comp)
        if native is None:
            self.metrics.drops["non_intended_coded"] += 1
            return actions
        probe = replace(native, prev_hop=c.sender, next_hop=comp.intended_next_hop)
        if not self.admit_packet(probe):
            self.metrics.drops["non_intended_coded"] += 1
            return actions
        onward = (comp.dst if comp.intended_next_hop == comp.dst
                  else neighbor_next_hop(self.tables, self.node_id,
                                         comp.intended_next_hop, comp.dst))
        index = priority_index(self.node_id, c.sender, comp.intended_next_hop,
                               self.nbrs)
        fire = now + helper_hold_time(index, self.params.timers)
        self.helper_timers[comp.id] = HelperEntry(
            coded=True, pkt=native, frame_sender=c.sender,
            intended=comp.intended_next_hop, onward=onward, fire_at=fire,
            index=index,
        )
        actions.append(StartTimer(TIMER_HELPER, comp.id, fire))
        return actions

    # ----------------------------------------------------------------- acks

    def on_ack(self, ack: Ack, report: tuple[PayloadId, ...], now: float,
               ) -> list[Action]:
        sender = ack.ack_sender
        pid = ack.payload
        if self.protocol != Protocol.PLAIN:
            know = self.knowledge
            know.merge(sender, report, now)
            know.add(sender, pid, now)
        sender_hood = self.nbrs(sender)

        entry = self.pending.get(pid)
        if entry is not None:
            nh = entry.pkt.next_hop
            if nh == sender or nh in sender_hood:
                del self.pending[pid]
                self.retries.pop(pid, None)

        if pid in self._queued:
            self._drop_buffered_on_ack(pid, sender, sender_hood)

        helper = self.helper_timers.get(pid)
        if helper is not None:
            cancel = sender == helper.intended or helper.intended in sender_hood
            if not cancel:
                try:
                    cancel = priority_index(sender, helper.frame_sender,
                                            helper.intended, self.nbrs) < helper.index
                except ValueError:
                    cancel = False
            if cancel:
                del self.helper_timers[pid]

        self._ack_cache_add(sender, pid)
        return []

    def _drop_buffered_on_ack(self, pid: PayloadId, sender: NodeId,
                              sender_hood: frozenset[NodeId]) -> None:
        def covered(nh: NodeId) -> bool:
            return nh == sender or nh in sender_hood

        dropped = False
        for q in (self.q1, self.q2):
            keep = [e for e in q
                    if not (e.pkt.id == pid and covered(e.pkt.next_hop))]
            if len(keep) != len(q):
                dropped = True
                q.clear()
                q.extend(keep)
        new_mix: deque[MixEntry] = deque()
        survivors: list[NativePacket] = []
        for m in self.mixing_q:
            hit = any(n.id == pid and covered(n.next_hop) for n in m.natives)
            if not hit:
                new_mix.append(m)
                continue
            dropped = True
            survivors.extend(n for n in m.natives if n.id != pid)
        if dropped:
            self.mixing_q = new_mix
            self._rebuild_queued()
            # Unwrap surviving components back into q1 as natives.
            for n in survivors:
                if n.id not in self._queued:
                    self.q1.appendleft(QueueEntry(n, eligible_at=0.0))
                    self._queued.add(n.id)

    def _rebuild_queued(self) -> None:
        ids = {e.pkt.id for e in self.q1}
        ids.update(e.pkt.id for e in self.q2)
        for m in self.mixing_q:
            ids.update(n.id for n in m.natives)
        self._queued = ids

    # --------------------------------------------------------------- timers

    def on_timer(self, kind: int, key, now: float) -> list[Action]:
        if kind == TIMER_PENDING:
            return self._fire_pending(key, now)
        if kind == TIMER_HELPER:
            return self._fire_helper(key, now)
        return []

    def _fire_pending(self, pid: PayloadId, now: float) -> list[Action]:
        entry = self.pending.get(pid)
        if entry is None or entry.deadline > now + 1e-12:
            return []
        del self.pending[pid]
        if pid in self._queued:
            return []  # another copy is already queued here
        left = self.retries.get(pid, 0)
        if left <= 0:
            self.retries.pop(pid, None)
            self.metrics.drops["retries_exhausted"] += 1
            return []
        self.retries[pid] = left - 1
        # Unacked payloads always go back out as natives, at the queue head.
        self.q1.appendleft(QueueEntry(entry.pkt, eligible_at=now, retx=True))
        self._queued.add(pid)
        if len(self.q1) > self.params.queue_cap:
            tail = self.q1.pop()
            self._queued.discard(tail.pkt.id)
            self.metrics.drops["queue_overflow"] += 1
        return []

    def _fire_helper(self, pid: PayloadId, now: float) -> list[Action]:
        entry = self.helper_timers.get(pid)
        if entry is None or entry.fire_at > now + 1e-12:
            return []  # cancelled, or pushed out by a fresher transmission
        del self.helper_timers[pid]
        if pid in self.pending or pid in self.delivered:
            return []
        if entry.coded and pid in self._queued:
            return []
        if entry.coded:
            pkt = entry.pkt
        else:
            pkt = None
            keep = deque()
            for e in self.q2:
                if e.pkt.id == pid and pkt is None:
                    pkt = e.pkt
                else:
                    keep.append(e)
            self.q2 = keep
            if pkt is None:
                return []  # mixed away or dropped since the timer was armed
            self._queued.discard(pid)
        if len(self.q1) >= self.params.queue_cap:
            self.metrics.drops["helper_queue_full"] += 1
            return []
        forwarded = replace(pkt, next_hop=entry.onward, second_next_hop=None)
        # ACK first so other would-be helpers stand down sooner.
        ack = self._make_ack(pid)
        self.metrics.helper_forwards += 1
        actions: list[Action] = [SendAck(ack)]
        partner = self._remix_partner(forwarded)
        if partner is not None:
            natives = (forwarded, partner)
            coded = encode([self._stamp_for_tx(n) for n in natives], self.node_id)
            self.mixing_q.append(MixEntry(coded, natives, retx_count=0))
            self._queued.add(pid)
        else:
            # Taken-over packets queue like any forwarded packet, pairing
            # hold included, so they can still ride coded frames from here.
            eligible = now + self.params.pairing_hold
            self.q1.append(QueueEntry(forwarded, eligible_at=eligible))
            self._queued.add(pid)
            actions.append(StartTimer(TIMER_WAKEUP, None, eligible))
        return actions

    def _remix_partner(self, pkt: NativePacket) -> Optional[NativePacket]:
        """Queue-head remix check used when a helper takes over a packet."""
        if self.q1:
            cand = self.q1[0].pkt
            if (cand.next_hop != pkt.next_hop
                    and bend_mixable(pkt, cand, self.nbrs)
                    and self._pair_evidence(pkt, cand)):
                entry = self.q1.popleft()
                self._queued.discard(entry.pkt.id)
                return entry.pkt
        if self.q2:
            entry = self.q2[0]
            cand = replace(entry.pkt, next_hop=entry.onward)
            if (cand.next_hop != pkt.next_hop
                    and bend_mixable(pkt, cand, self.nbrs)
                    and self._pair_evidence(pkt, cand)):
                self.q2.popleft()
                self._queued.discard(entry.pkt.id)
                self.helper_timers.pop(entry.pkt.id, None)
                return cand
        return None

    # ------------------------------------------------------------- egress

    def ready(self, now: float) -> bool:
        if self.mixing_q:
            return True
        return bool(self.q1) and self.q1[0].eligible_at <= now + 1e-12

    def _stamp_for_tx(self, pkt: NativePacket) -> NativePacket:
        second = None
        if self.protocol == Protocol.BEND:
            second = (pkt.dst if pkt.next_hop == pkt.dst
                      else next_hop(self.tables, pkt.next_hop, pkt.dst))
        return replace(pkt, prev_hop=self.node_id, second_next_hop=second)

    def _build_data_frame(self, body) -> Frame:
        return Frame(body=body, reception_report=tuple(self.recent_rx),
                     bits=data_frame_bits(len(body.payload)))

    def select_transmission(self, now: float) -> Optional[TxIntent]:
        q1_ok = bool(self.q1) and self.q1[0].eligible_at <= now + 1e-12
        if self.mixing_q and (self._serve_mix_next or not q1_ok):
            m = self.mixing_q.popleft()
            for n in m.natives:
                self._queued.discard(n.id)
            self._serve_mix_next = False
            return TxIntent(self._build_data_frame(m.coded), m.natives,
                            m.retx_count)
        if not q1_ok:
            return None
        self._serve_mix_next = True

        head_entry = self.q1.popleft()
        self._queued.discard(head_entry.pkt.id)
        head = head_entry.pkt
        proto = self.protocol

        riders: list[QueueEntry] = []
        if proto == Protocol.COPE:
            candidates = [e.pkt for e in self.q1]
            chosen = cope_select(head, candidates, self.knowledge,
                                 self.params.max_cope_components)
            if len(chosen) > 1:
                chosen_ids = {p.id for p in chosen[1:]}
                riders = [e for e in self.q1 if e.pkt.id in chosen_ids]
                keep = [e for e in self.q1 if e.pkt.id not in chosen_ids]
                self.q1.clear()
                self.q1.extend(keep)
                for e in riders:
                    self._queued.discard(e.pkt.id)
        elif proto in (Protocol.BEND, Protocol.FLEXONC):
            rider = self._find_mix_partner(head)
            if rider is not None:
                riders = [rider]

        retx_count = int(head_entry.retx) + sum(int(e.retx) for e in riders)
        natives = [head] + [
            (e.pkt if e.onward is None else replace(e.pkt, next_hop=e.onward))
            for e in riders
        ]
        natives_tx = tuple(self._stamp_for_tx(p) for p in natives)
        if len(natives_tx) > 1:
            coded = encode(natives_tx, self.node_id)
            return TxIntent(self._build_data_frame(coded), natives_tx, retx_count)
        return TxIntent(self._build_data_frame(natives_tx[0]), natives_tx,
                        retx_count)

    def _pair_evidence(self, a: NativePacket, b: NativePacket) -> bool:
        """Each receiver is believed to hold the packet it must peel off."""
        know = self.knowledge
        return know.knows(a.next_hop, b.id) and know.knows(b.next_hop, a.id)

    def _find_mix_partner(self, head: NativePacket) -> Optional[QueueEntry]:
        for i, e in enumerate(self.q1):
            if e.pkt.next_hop == head.next_hop:
                continue
            if (bend_mixable(head, e.pkt, self.nbrs)
                    and self._pair_evidence(head, e.pkt)):
                del self.q1[i]
                self._queued.discard(e.pkt.id)
                return e
        for i, e in enumerate(self.q2):
            if e.onward is None or e.onward == head.next_hop:
                continue
            cand = replace(e.pkt, next_hop=e.onward)
            if (bend_mixable(head, cand, self.nbrs)
                    and self._pair_evidence(head, cand)):
                del self.q2[i]
                self._queued.discard(e.pkt.id)
                self.helper_timers.pop(e.pkt.id, None)
                return e
        return None

    def after_transmit(self, intent: TxIntent, end: float) -> list[Action]:
        """Arm pending-ACK records once the frame has left the air."""
        deadline = end + sender_timeout(self.protocol, intent.n_components,
                                        self.deg, self.params.timers)
        actions: list[Action] = []
        for native in intent.natives:
            self.pending[native.id] = PendingEntry(
                pkt=native, deadline=deadline, coded=intent.n_components > 1)
            self.retries.setdefault(native.id, self.params.retry_limit)
            actions.append(StartTimer(TIMER_PENDING, native.id, deadline))
            if self.protocol != Protocol.PLAIN:
                self._pool_add(native.id, native.payload, end)
        return actions
