"""Receiver/sender state machine: admission, ACK handling, timers, egress."""
import pytest

from meshnc import (
    Ack,
    CodedPacket,
    Frame,
    Metrics,
    NativePacket,
    PayloadId,
    Protocol,
    SimParams,
    build_forwarding_tables,
    build_topology,
    encode,
)
from meshnc.core import data_frame_bits
from meshnc.node import (
    NodeState,
    QueueEntry,
    SendAck,
    StartTimer,
    TIMER_HELPER,
    TIMER_PENDING,
)

PARAMS = SimParams()
SLOT = PARAMS.timers.ack_slot


@pytest.fixture(scope="module")
def ctx():
    topo = build_topology("eight_node")
    tables = build_forwarding_tables(topo)
    return topo, tables, topo.adjacency().__getitem__


def make_node(ctx, node_id, protocol, params=PARAMS):
    _, tables, nbrs = ctx
    return NodeState(node_id, protocol, params, tables, nbrs, Metrics())


def native(flow, seq, *, src, dst, prev, nxt, payload=b"\xaa" * 8, second=None):
    return NativePacket(id=PayloadId(flow, seq), src=src, dst=dst,
                        prev_hop=prev, next_hop=nxt, payload=payload,
                        second_next_hop=second)


def data_frame(body):
    if isinstance(body, CodedPacket):
        bits = data_frame_bits(len(body.payload))
    else:
        bits = data_frame_bits(len(body.payload))
    return Frame(body=body, reception_report=(), bits=bits)


def example_pair(payload_a=b"\x11" * 8, payload_b=b"\x22" * 8):
    """Forward packet (0->4 route, currently 1->2) and reverse packet
    (4->0 route, currently 1->0), the canonical mixable pair at node 1."""
    fwd = native(0, 7, src=0, dst=4, prev=0, nxt=2, payload=payload_a)
    rev = native(1, 7, src=4, dst=0, prev=2, nxt=0, payload=payload_b)
    return fwd, rev


def seed_pair_evidence(node, fwd, rev):
    """What broadcast inference would have recorded had the packets arrived
    over the air: each previous hop (still) holds what it sent."""
    node.knowledge.add(fwd.prev_hop, fwd.id)
    node.knowledge.add(rev.prev_hop, rev.id)


def acks_of(actions):
    return [a for a in actions if isinstance(a, SendAck)]


def timers_of(actions, kind=None):
    return [a for a in actions if isinstance(a, StartTimer)
            and (kind is None or a.kind == kind)]


class TestCodedReception:
    def test_intended_forwarder_decodes_acks_and_progresses(self, ctx):
        node = make_node(ctx, 2, Protocol.FLEXONC)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        node._pool_add(rev.id, rev.payload, 0.0)
        actions = node.on_data_frame(data_frame(coded), now=1.0)
        sent = acks_of(actions)
        assert len(sent) == 1
        assert sent[0].ack == Ack(ack_sender=2, payload=fwd.id)
        assert len(node.q1) == 1
        queued = node.q1[0].pkt
        assert queued.next_hop == 3
        assert queued.payload == fwd.payload

    def test_undecodable_is_silent(self, ctx):
        node = make_node(ctx, 2, Protocol.FLEXONC)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        actions = node.on_data_frame(data_frame(coded), now=1.0)
        assert acks_of(actions) == []
        assert node.metrics.drops["undecodable"] == 1

    def test_non_intended_bend_drops(self, ctx):
        node = make_node(ctx, 6, Protocol.BEND)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        node._pool_add(rev.id, rev.payload, 0.0)
        actions = node.on_data_frame(data_frame(coded), now=1.0)
        assert acks_of(actions) == []
        assert timers_of(actions) == []
        assert node.metrics.drops["non_intended_coded"] == 1

    def test_non_intended_flexonc_arms_helper_at_priority_slot(self, ctx):
        node = make_node(ctx, 6, Protocol.FLEXONC)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        node._pool_add(rev.id, rev.payload, 0.0)
        actions = node.on_data_frame(data_frame(coded), now=1.0)
        assert acks_of(actions) == []  # no immediate transmission
        (timer,) = timers_of(actions, TIMER_HELPER)
        # Priority list of sender 1 with intended 2: [2, 0, 5, 6] -> index 3.
        assert timer.at == pytest.approx(1.0 + 3 * SLOT)
        assert node.helper_timers[fwd.id].onward == 3

    def test_others_never_ack_coded(self, ctx):
        node = make_node(ctx, 5, Protocol.FLEXONC)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        actions = node.on_data_frame(data_frame(coded), now=1.0)
        assert acks_of(actions) == []


class TestAckHandling:
    def test_partial_pending_clear(self, ctx):
        node = make_node(ctx, 1, Protocol.BEND)
        fwd, rev = example_pair()
        node.q1.append(QueueEntry(fwd, 0.0))
        node.q1.append(QueueEntry(rev, 0.0))
        node._queued.update({fwd.id, rev.id})
        seed_pair_evidence(node, fwd, rev)
        intent = node.select_transmission(now=1.0)
        assert intent.n_components == 2
        node.after_transmit(intent, end=1.01)
        assert set(node.pending) == {fwd.id, rev.id}
        node.on_ack(Ack(2, fwd.id), (), now=1.011)
        assert set(node.pending) == {rev.id}

    def test_helper_cancelled_by_higher_priority_ack(self, ctx):
        node = make_node(ctx, 6, Protocol.FLEXONC)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        node._pool_add(rev.id, rev.payload, 0.0)
        node.on_data_frame(data_frame(coded), now=1.0)
        assert fwd.id in node.helper_timers
        node.on_ack(Ack(2, fwd.id), (), now=1.001)  # intended has index 0
        assert fwd.id not in node.helper_timers

    def test_buffered_drop_when_acker_neighbors_next_hop(self, ctx):
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 9, src=0, dst=4, prev=1, nxt=3)
        node.q1.append(QueueEntry(pkt, 0.0))
        node._queued.add(pkt.id)
        # Node 7 neighbors 3, so its ACK means the payload is downstream.
        node.on_ack(Ack(7, pkt.id), (), now=2.0)
        assert len(node.q1) == 0
        assert pkt.id not in node._queued

    def test_unrelated_ack_preserves_buffer(self, ctx):
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 9, src=0, dst=4, prev=1, nxt=3)
        node.q1.append(QueueEntry(pkt, 0.0))
        node._queued.add(pkt.id)
        node.on_ack(Ack(5, pkt.id), (), now=2.0)  # 5 is not near node 3
        assert len(node.q1) == 1

    def test_ack_cache_bounded(self, ctx):
        node = make_node(ctx, 2, Protocol.PLAIN)
        for seq in range(200):
            node._ack_cache_add(3, PayloadId(0, seq))
        assert len(node.ack_cache) == PARAMS.ack_cache_cap


class TestTimerHandling:
    def test_helper_fire_acks_then_forwards(self, ctx):
        node = make_node(ctx, 6, Protocol.FLEXONC)
        fwd, rev = example_pair()
        coded = encode([fwd, rev], sender=1)
        node._pool_add(rev.id, rev.payload, 0.0)
        (timer,) = timers_of(node.on_data_frame(data_frame(coded), 1.0),
                             TIMER_HELPER)
        actions = node.on_timer(TIMER_HELPER, fwd.id, now=timer.at)
        (ack,) = acks_of(actions)
        assert ack.ack == Ack(6, fwd.id)
        assert node.metrics.helper_forwards == 1
        assert len(node.q1) == 1
        assert node.q1[0].pkt.next_hop == 3  # next hop from node 2 toward 4
        assert node.q1[0].pkt.payload == fwd.payload

    def test_exhausted_retries_drop(self, ctx):
        node = make_node(ctx, 1, Protocol.PLAIN)
        pkt = native(0, 3, src=0, dst=4, prev=1, nxt=2)
        node.q1.append(QueueEntry(pkt, 0.0))
        node._queued.add(pkt.id)
        now = 0.0
        retx_flags = 0
        for _ in range(PARAMS.retry_limit + 1):
            intent = node.select_transmission(now)
            assert intent is not None
            retx_flags += intent.retx_count
            node.after_transmit(intent, now + 0.008)
            deadline = node.pending[pkt.id].deadline
            node.on_timer(TIMER_PENDING, pkt.id, deadline)
            now = deadline
        assert node.metrics.drops["retries_exhausted"] == 1
        assert not node.q1 and pkt.id not in node.pending
        assert retx_flags == PARAMS.retry_limit

    def test_coded_timeout_retransmits_only_unacked_component_native(self, ctx):
        # Trace-level oracle for the three-node exchange: mix two packets,
        # ACK one, time the other out, and inspect the retransmitted frame.
        node = make_node(ctx, 1, Protocol.BEND)
        fwd, rev = example_pair()
        node.q1.append(QueueEntry(fwd, 0.0))
        node.q1.append(QueueEntry(rev, 0.0))
        node._queued.update({fwd.id, rev.id})
        seed_pair_evidence(node, fwd, rev)
        intent = node.select_transmission(0.0)
        assert isinstance(intent.frame.body, CodedPacket)
        node.after_transmit(intent, end=0.009)
        node.on_ack(Ack(2, fwd.id), (), now=0.010)
        deadline = node.pending[rev.id].deadline
        node.on_timer(TIMER_PENDING, rev.id, deadline)
        retx = node.select_transmission(deadline)
        assert isinstance(retx.frame.body, NativePacket)
        assert retx.frame.body.id == rev.id
        assert retx.retx_count == 1

    def test_stale_pending_timer_is_ignored(self, ctx):
        node = make_node(ctx, 1, Protocol.PLAIN)
        pkt = native(0, 3, src=0, dst=4, prev=1, nxt=2)
        node.q1.append(QueueEntry(pkt, 0.0))
        node._queued.add(pkt.id)
        intent = node.select_transmission(0.0)
        node.after_transmit(intent, end=0.009)
        deadline = node.pending[pkt.id].deadline
        node.on_timer(TIMER_PENDING, pkt.id, deadline - 0.001)  # early
        assert pkt.id in node.pending


class TestAdmission:
    def test_cached_next_hop_ack_blocks(self, ctx):
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 5, src=0, dst=4, prev=1, nxt=3)
        node._ack_cache_add(3, pkt.id)
        assert node.admit_packet(pkt) is False

    def test_empty_cache_admits(self, ctx):
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 5, src=0, dst=4, prev=1, nxt=3)
        assert node.admit_packet(pkt) is True

    def test_downstream_neighbor_ack_blocks(self, ctx):
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 5, src=0, dst=4, prev=1, nxt=3)
        node._ack_cache_add(7, pkt.id)  # 7 neighbors 3 and is closer to 4
        assert node.admit_packet(pkt) is False

    def test_upstream_receipt_ack_does_not_block(self, ctx):
        # Node 1 acked this payload when receiving it one hop upstream; its
        # ACK must not be read as downstream-delivery evidence at node 2.
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 5, src=0, dst=4, prev=1, nxt=2)
        node._ack_cache_add(1, pkt.id)
        assert node.admit_packet(pkt) is True

    def test_delivered_guard(self, ctx):
        node = make_node(ctx, 4, Protocol.PLAIN)
        pkt = native(0, 5, src=0, dst=4, prev=3, nxt=4)
        node.delivered.add(pkt.id)
        assert node.admit_packet(pkt) is False


class TestSelectTransmission:
    def test_mixable_pair_becomes_coded_with_next_hop_list(self, ctx):
        node = make_node(ctx, 1, Protocol.BEND)
        fwd, rev = example_pair()
        node.q1.append(QueueEntry(fwd, 0.0))
        node.q1.append(QueueEntry(rev, 0.0))
        node._queued.update({fwd.id, rev.id})
        seed_pair_evidence(node, fwd, rev)
        intent = node.select_transmission(0.0)
        body = intent.frame.body
        assert isinstance(body, CodedPacket)
        assert {c.intended_next_hop for c in body.components} == {0, 2}
        assert body.sender == 1

    def test_empty_queues_yield_none(self, ctx):
        node = make_node(ctx, 1, Protocol.BEND)
        assert node.select_transmission(0.0) is None
        assert node.ready(0.0) is False

    def test_unpaired_head_goes_native(self, ctx):
        node = make_node(ctx, 1, Protocol.BEND)
        fwd, _ = example_pair()
        node.q1.append(QueueEntry(fwd, 0.0))
        node._queued.add(fwd.id)
        intent = node.select_transmission(0.0)
        body = intent.frame.body
        assert isinstance(body, NativePacket)
        assert body.prev_hop == 1
        # Outgoing bend natives carry the hop after the next hop.
        assert body.second_next_hop == 3

    def test_plain_never_pairs(self, ctx):
        node = make_node(ctx, 1, Protocol.PLAIN)
        fwd, rev = example_pair()
        node.q1.append(QueueEntry(fwd, 0.0))
        node.q1.append(QueueEntry(rev, 0.0))
        node._queued.update({fwd.id, rev.id})
        intent = node.select_transmission(0.0)
        assert isinstance(intent.frame.body, NativePacket)

    def test_pairing_hold_defers_readiness(self, ctx):
        node = make_node(ctx, 2, Protocol.BEND)
        pkt = native(0, 1, src=0, dst=4, prev=1, nxt=2)
        node.on_data_frame(data_frame(pkt), now=5.0)
        assert node.ready(5.0) is False
        assert node.ready(5.0 + PARAMS.pairing_hold) is True

    def test_flexonc_natives_carry_no_second_next_hop(self, ctx):
        node = make_node(ctx, 1, Protocol.FLEXONC)
        fwd, _ = example_pair()
        node.q1.append(QueueEntry(fwd, 0.0))
        node._queued.add(fwd.id)
        intent = node.select_transmission(0.0)
        assert intent.frame.body.second_next_hop is None


class TestNativeHelping:
    def overhear(self, node, now=1.0):
        # Node 5 overhears the uplink 0 -> 1 (destination 4, onward hop 2).
        pkt = native(0, 2, src=0, dst=4, prev=0, nxt=1,
                     second=2 if node.protocol == Protocol.BEND else None)
        return pkt, node.on_data_frame(data_frame(pkt), now=now)

    @pytest.mark.parametrize("proto", [Protocol.BEND, Protocol.FLEXONC])
    def test_overhearer_arms_native_helper(self, ctx, proto):
        node = make_node(ctx, 5, proto)
        pkt, actions = self.overhear(node)
        (timer,) = timers_of(actions, TIMER_HELPER)
        # Priority list of sender 0 with intended 1: [1, 5] -> index 1.
        assert timer.at == pytest.approx(1.0 + 1 * SLOT)
        assert len(node.q2) == 1
        assert node.helper_timers[pkt.id].onward == 2

    def test_native_helper_fire_redirects_to_onward_hop(self, ctx):
        node = make_node(ctx, 5, Protocol.BEND)
        pkt, actions = self.overhear(node)
        (timer,) = timers_of(actions, TIMER_HELPER)
        fired = node.on_timer(TIMER_HELPER, pkt.id, timer.at)
        (ack,) = acks_of(fired)
        assert ack.ack == Ack(5, pkt.id)
        assert node.q1[0].pkt.next_hop == 2
        assert not node.q2

    def test_intended_ack_cancels_native_helper(self, ctx):
        node = make_node(ctx, 5, Protocol.FLEXONC)
        pkt, _ = self.overhear(node)
        node.on_ack(Ack(1, pkt.id), (), now=1.0001)
        assert pkt.id not in node.helper_timers
        assert not node.q2  # buffered copy dropped as well

    def test_plain_and_cope_do_not_help(self, ctx):
        for proto in (Protocol.PLAIN, Protocol.COPE):
            node = make_node(ctx, 5, proto)
            pkt, actions = self.overhear(node)
            assert timers_of(actions) == []
            assert not node.q2

    def test_fresh_transmission_pushes_helper_out(self, ctx):
        node = make_node(ctx, 5, Protocol.BEND)
        pkt, actions = self.overhear(node)
        (t1,) = timers_of(actions, TIMER_HELPER)
        again = node.on_data_frame(data_frame(pkt), now=1.0015)
        (t2,) = timers_of(again, TIMER_HELPER)
        assert t2.at > t1.at
        assert node.on_timer(TIMER_HELPER, pkt.id, t1.at) == []  # stale
        assert pkt.id in node.helper_timers


class TestQueueBounds:
    def test_q1_overflow_acks_then_drops(self, ctx):
        params = SimParams(queue_cap=2)
        node = make_node(ctx, 2, Protocol.BEND, params)
        for seq in range(3):
            pkt = native(0, seq, src=0, dst=4, prev=1, nxt=2)
            actions = node.on_data_frame(data_frame(pkt), now=1.0)
            assert len(acks_of(actions)) == 1
        assert len(node.q1) == 2
        assert node.metrics.drops["queue_overflow"] == 1

    def test_source_overflow_counts(self, ctx):
        params = SimParams(queue_cap=1)
        node = make_node(ctx, 0, Protocol.PLAIN, params)
        a = native(0, 0, src=0, dst=4, prev=0, nxt=1)
        b = native(0, 1, src=0, dst=4, prev=0, nxt=1)
        assert node.enqueue_source(a, 0.0) is True
        assert node.enqueue_source(b, 0.0) is False
        assert node.metrics.drops["queue_overflow"] == 1
