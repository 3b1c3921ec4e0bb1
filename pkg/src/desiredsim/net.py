"""Nodes, ports and packets for the dumbbell topology.

A Port is one transmit direction of a link: a FIFO byte queue, a serializer
running at the link rate, then fixed propagation to the peer node.  The
queue has a hard byte cap as a backstop; the AQM is expected to act long
before it fills.  Serialization time is rounded up to whole microseconds.

Switches run the AQM at both ends of the store-and-forward path: the egress
decision samples the packet's queue wait at dequeue, and the ingress check
consumes pending drop flags armed by recirculated congestion notifications.
Probe packets pick up one telemetry record per switch on their way out.
"""

from collections import deque

from . import aqm
from .telemetry import IntRecord, encode_records, RECORD_BYTES

QUEUE_CAP_BYTES = 2_000_000
MASK32 = 0xFFFFFFFF
MASK48 = 0xFFFFFFFFFFFF


class Packet:
    __slots__ = ("kind", "size", "src", "dst", "seq", "ack_no", "ect", "ce",
                 "cwr", "ece", "payload", "probe_id", "send_time", "int_data",
                 "in_port", "ingress_t", "enq_t", "enq_depth")

    def __init__(self, kind, size, src, dst):
        self.kind = kind
        self.size = size
        self.src = src
        self.dst = dst
        self.seq = 0
        self.ack_no = 0
        self.ect = False
        self.ce = False
        self.cwr = False
        self.ece = False
        self.payload = None
        self.probe_id = 0
        self.send_time = 0
        self.int_data = None
        self.in_port = 0
        self.ingress_t = 0
        self.enq_t = 0
        self.enq_depth = 0


class Port:
    """One transmit direction; `peer_node.on_arrival` fires after the wire."""

    __slots__ = ("engine", "node", "number", "capacity_bps", "prop_us",
                 "peer_node", "peer_port", "queue", "qbytes", "byte_cap",
                 "next_free", "wake_pending", "deq_hook", "tx_packets",
                 "tx_bytes", "tail_drops", "bytes_by_kind")

    def __init__(self, engine, node, number, capacity_bps, prop_us,
                 byte_cap=QUEUE_CAP_BYTES):
        self.engine = engine
        self.node = node
        self.number = number
        self.capacity_bps = int(capacity_bps)
        self.prop_us = int(prop_us)
        self.peer_node = None
        self.peer_port = 0
        self.queue = deque()
        self.qbytes = 0
        self.byte_cap = byte_cap
        self.next_free = 0
        self.wake_pending = False
        self.deq_hook = None
        self.tx_packets = 0
        self.tx_bytes = 0
        self.tail_drops = 0
        self.bytes_by_kind = {}

    def serialization_us(self, nbytes: int) -> int:
        bits = nbytes * 8
        return (bits * 1_000_000 + self.capacity_bps - 1) // self.capacity_bps

    def send(self, pkt: Packet) -> bool:
        engine = self.engine
        now = engine.now
        if not self.queue and now >= self.next_free:
            pkt.enq_t = now
            pkt.enq_depth = 0
            self._transmit(pkt, 0, 0)
            return True
        if self.qbytes + pkt.size > self.byte_cap:
            self.tail_drops += 1
            return False
        pkt.enq_t = now
        pkt.enq_depth = len(self.queue)
        self.queue.append(pkt)
        self.qbytes += pkt.size
        if not self.wake_pending:
            self.wake_pending = True
            engine.schedule(self.next_free, self._wake)
        return True

    def _wake(self) -> None:
        self.wake_pending = False
        pkt = self.queue.popleft()
        self.qbytes -= pkt.size
        wait = self.engine.now - pkt.enq_t
        self._transmit(pkt, wait, len(self.queue))
        if self.queue:
            self.wake_pending = True
            self.engine.schedule(self.next_free, self._wake)

    def _transmit(self, pkt: Packet, wait_us: int, deq_depth: int) -> None:
        if self.deq_hook is not None:
            self.deq_hook(self, pkt, wait_us, deq_depth)
        ser = self.serialization_us(pkt.size)
        self.next_free = self.engine.now + ser
        self.tx_packets += 1
        self.tx_bytes += pkt.size
        kind_bytes = self.bytes_by_kind
        kind_bytes[pkt.kind] = kind_bytes.get(pkt.kind, 0) + pkt.size
        self.engine.schedule(self.next_free + self.prop_us,
                             self.peer_node.on_arrival, pkt, self.peer_port)


class Node:
    def __init__(self, engine, node_id, name):
        self.engine = engine
        self.node_id = node_id
        self.name = name
        self.ports = {}
        self.route = {}
        self._next_port = 1

    def add_port(self, capacity_bps, prop_us, byte_cap=QUEUE_CAP_BYTES) -> Port:
        port = Port(self.engine, self, self._next_port, capacity_bps, prop_us,
                    byte_cap)
        self.ports[port.number] = port
        self._next_port += 1
        return port

    def on_arrival(self, pkt: Packet, in_port: int) -> None:
        raise NotImplementedError


def connect(a: Node, b: Node, capacity_bps, prop_us,
            byte_cap=QUEUE_CAP_BYTES):
    """Full-duplex link: one port on each node, cross-wired."""
    pa = a.add_port(capacity_bps, prop_us, byte_cap)
    pb = b.add_port(capacity_bps, prop_us, byte_cap)
    pa.peer_node, pa.peer_port = b, pb.number
    pb.peer_node, pb.peer_port = a, pa.number
    return pa, pb


class Host(Node):
    """Endpoint with a receive hook installed by the traffic layer."""

    def __init__(self, engine, node_id, name):
        super().__init__(engine, node_id, name)
        self.receive = None
        self.nic = None

    def attach(self, port: Port) -> None:
        self.nic = port

    def on_arrival(self, pkt: Packet, in_port: int) -> None:
        if self.receive is not None:
            self.receive(pkt)


class Switch(Node):
    def __init__(self, engine, node_id, name, switch_id, aqm_state, rng,
                 trace=None):
        super().__init__(engine, node_id, name)
        self.switch_id = switch_id
        self.aqm = aqm_state
        self.rng = rng
        self.trace = trace
        self.forwarded = 0
        self.ingress_dropped = 0
        self.no_route = 0

    def add_port(self, capacity_bps, prop_us, byte_cap=QUEUE_CAP_BYTES) -> Port:
        port = super().add_port(capacity_bps, prop_us, byte_cap)
        port.deq_hook = self.on_dequeue
        return port

    def on_arrival(self, pkt: Packet, in_port: int) -> None:
        out = self.route.get(pkt.dst)
        if out is None:
            self.no_route += 1
            return
        state = self.aqm
        if state is not None and aqm.ingress_should_drop(state, out.number):
            self.ingress_dropped += 1
            return
        pkt.in_port = in_port
        pkt.ingress_t = self.engine.now
        self.forwarded += 1
        out.send(pkt)

    def on_dequeue(self, port: Port, pkt: Packet, wait_us: int,
                   deq_depth: int) -> None:
        state = self.aqm
        if state is not None:
            decision = aqm.egress_decide(state, port.number, wait_us,
                                         pkt.ect, self.rng)
            if decision == aqm.MARK:
                pkt.ce = True
            elif decision == aqm.NOTIFY:
                # clone loops back to ingress and arms one future drop
                self.engine.schedule_in(aqm.RECIRC_DELAY_US,
                                        aqm.arm_ingress_drop, state,
                                        port.number)
            if self.trace is not None:
                self.trace.append((self.engine.now, self.switch_id,
                                   port.number, state.avg[port.number],
                                   round(aqm.red_probability(
                                       state.avg[port.number], state), 6),
                                   decision))
        if pkt.kind == "probe":
            rec = IntRecord(
                switch_id=self.switch_id,
                ingress_port=pkt.in_port,
                egress_port=port.number,
                egress_spec=port.number,
                ingress_tstamp=pkt.ingress_t & MASK48,
                egress_tstamp=self.engine.now & MASK48,
                enq_tstamp=pkt.enq_t & MASK32,
                enq_qdepth=pkt.enq_depth,
                deq_timedelta=wait_us & MASK32,
                deq_qdepth=deq_depth,
            )
            pkt.int_data += encode_records([rec])
            pkt.size += RECORD_BYTES
