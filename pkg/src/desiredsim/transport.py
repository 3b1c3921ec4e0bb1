"""Segment-granular TCP New Reno with optional ECN response.

Sequence numbers count packets, not bytes: packet n carries seq n and an ACK
carries the highest in-order seq seen.  cwnd is a float in packets and may
hold fractional credit; the usable window is floor(cwnd) minus packets in
flight.  Receivers acknowledge every data packet (no delayed ACKs), so each
returning ACK clocks the sender.

Loss recovery follows New Reno: a third duplicate ACK halves ssthresh,
retransmits the first hole and inflates cwnd by 3; further dups inflate by
one; a partial ACK retransmits the next hole and deflates; the ACK covering
`recover` ends recovery at cwnd = ssthresh.  Timeouts collapse to cwnd = 1
with exponential RTO backoff.  An ECE-marked ACK halves the window at most
once per round trip and never triggers a retransmission.
"""

from collections import deque
from math import floor

MSS = 1460
HEADER_BYTES = 40
INITIAL_CWND = 10.0
INITIAL_SSTHRESH = 64.0
MIN_RTO_US = 200_000
MAX_RTO_US = 60_000_000

SLOW_START = "slow-start"
CONG_AVOID = "congestion-avoidance"
FAST_RECOVERY = "fast-recovery"


def packet_count(nbytes: int, mss: int = MSS) -> int:
    return (nbytes + mss - 1) // mss


class TcpReceiver:
    """Cumulative-ACK tracker with CE-to-ECE latching."""

    __slots__ = ("rcv_high", "ooo", "ece_latched", "bytes_received", "dups")

    def __init__(self):
        self.rcv_high = 0
        self.ooo = set()
        self.ece_latched = False
        self.bytes_received = 0
        self.dups = 0

    def on_data(self, seq: int, nbytes: int = 0, ce: bool = False,
                cwr: bool = False):
        """Absorb one data packet; returns (ack_no, ece) for the ACK to send."""
        if cwr:
            self.ece_latched = False
        if ce:
            self.ece_latched = True
        if seq == self.rcv_high + 1:
            self.bytes_received += nbytes
            self.rcv_high += 1
            while self.rcv_high + 1 in self.ooo:
                self.ooo.discard(self.rcv_high + 1)
                self.rcv_high += 1
        elif seq > self.rcv_high:
            if seq in self.ooo:
                self.dups += 1
            else:
                self.ooo.add(seq)
                self.bytes_received += nbytes
        else:
            self.dups += 1
        return self.rcv_high, self.ece_latched


class NewRenoSender:
    """Sender half of one connection.

    `transmit(seq, payload_bytes, cwr, is_rtx)` is supplied by the caller and
    actually puts a packet on the wire.  `engine` may be None for lockstep
    unit tests, in which case no retransmission timer runs.
    """

    __slots__ = ("transmit", "engine", "ecn", "cwnd", "ssthresh", "state",
                 "next_seq", "high_ack", "dup_count", "recover", "pending",
                 "sent_size", "rtt_clock", "srtt", "rttvar", "rto",
                 "rto_deadline", "_timer_ev", "_timer_time", "ecn_hold_seq",
                 "cwr_pending", "sent_new", "sent_rtx", "timeouts",
                 "fast_recoveries", "ecn_backoffs")

    def __init__(self, transmit, engine=None, ecn: bool = False):
        self.transmit = transmit
        self.engine = engine
        self.ecn = ecn
        self.cwnd = INITIAL_CWND
        self.ssthresh = INITIAL_SSTHRESH
        self.state = SLOW_START
        self.next_seq = 1
        self.high_ack = 0
        self.dup_count = 0
        self.recover = 0
        self.pending = deque()     # payload sizes not yet sent
        self.sent_size = {}        # seq -> payload size, unacked
        self.rtt_clock = {}        # seq -> first-send time (Karn: rtx removed)
        self.srtt = None
        self.rttvar = 0.0
        self.rto = 1_000_000
        self.rto_deadline = None
        self._timer_ev = None
        self._timer_time = None
        self.ecn_hold_seq = 0
        self.cwr_pending = False
        self.sent_new = 0
        self.sent_rtx = 0
        self.timeouts = 0
        self.fast_recoveries = 0
        self.ecn_backoffs = 0

    # -- app interface ----------------------------------------------------

    def push_segment(self, nbytes: int) -> int:
        """Queue one application segment; returns the seq of its last packet."""
        n = packet_count(nbytes)
        for _ in range(n - 1):
            self.pending.append(MSS)
        self.pending.append(nbytes - (n - 1) * MSS)
        end_seq = self.next_seq - 1 + len(self.pending)
        self.try_send()
        return end_seq

    def outstanding(self) -> int:
        return self.next_seq - 1 - self.high_ack

    def send_window(self) -> int:
        return max(0, floor(self.cwnd) - self.outstanding())

    def reset_app(self) -> None:
        """Drop queued-but-unsent data (client went away mid-transfer)."""
        self.pending.clear()

    # -- ACK processing ---------------------------------------------------

    def on_ack(self, ack: int, ece: bool = False) -> None:
        if ece and self.ecn and self.high_ack >= self.ecn_hold_seq \
                and self.state != FAST_RECOVERY:
            self.on_congestion("ecn-echo")
        if ack > self.high_ack:
            newly = ack - self.high_ack
            self._take_rtt_sample(ack)
            for seq in range(self.high_ack + 1, ack + 1):
                self.sent_size.pop(seq, None)
                self.rtt_clock.pop(seq, None)
            self.high_ack = ack
            if self.state == FAST_RECOVERY:
                if ack >= self.recover:
                    self.cwnd = self.ssthresh
                    self.state = CONG_AVOID
                    self.dup_count = 0
                else:
                    # partial ACK: first hole is lost too, resend and deflate
                    self._retransmit(ack + 1)
                    self.cwnd = max(self.cwnd - newly + 1.0, 1.0)
            else:
                self.dup_count = 0
                if self.cwnd < self.ssthresh:
                    self.cwnd += 1.0
                else:
                    self.cwnd += 1.0 / self.cwnd
                    self.state = CONG_AVOID
                if ack < self.recover:
                    # still refilling holes left by a timeout: keep the ACK
                    # clock alive by resending the next one immediately
                    self._retransmit(ack + 1)
            self._restart_timer()
        elif ack == self.high_ack and self.outstanding() > 0:
            if self.state == FAST_RECOVERY:
                self.cwnd += 1.0
            else:
                self.dup_count += 1
                if self.dup_count == 3:
                    self.on_congestion("triple-dup")
        self.try_send()

    def on_congestion(self, kind: str) -> None:
        if kind == "triple-dup":
            self.ssthresh = max(self.cwnd / 2.0, 1.0)
            self.cwnd = self.ssthresh + 3.0
            self.state = FAST_RECOVERY
            self.recover = self.next_seq - 1
            self.fast_recoveries += 1
            self._retransmit(self.high_ack + 1)
        elif kind == "timeout":
            self.ssthresh = max(self.cwnd / 2.0, 1.0)
            self.cwnd = 1.0
            self.state = SLOW_START
            self.dup_count = 0
            self.recover = self.next_seq - 1
            self.rto = min(self.rto * 2, MAX_RTO_US)
            self.timeouts += 1
            # Karn: anything in flight may be retransmitted from here on
            self.rtt_clock.clear()
            self._retransmit(self.high_ack + 1)
            self._restart_timer()
        elif kind == "ecn-echo":
            self.ssthresh = max(self.cwnd / 2.0, 1.0)
            self.cwnd = self.ssthresh
            self.state = CONG_AVOID
            self.ecn_hold_seq = self.next_seq
            self.cwr_pending = True
            self.ecn_backoffs += 1
        else:
            raise ValueError(f"unknown congestion signal {kind!r}")

    # -- sending ----------------------------------------------------------

    def try_send(self) -> None:
        while self.pending and floor(self.cwnd) > self.outstanding():
            size = self.pending.popleft()
            seq = self.next_seq
            self.next_seq += 1
            self.sent_size[seq] = size
            self.rtt_clock[seq] = self._now()
            cwr = self.cwr_pending
            self.cwr_pending = False
            self.sent_new += 1
            self.transmit(seq, size, cwr, False)
        if self.outstanding() > 0 and self.rto_deadline is None:
            self._restart_timer()

    def _retransmit(self, seq: int) -> None:
        size = self.sent_size.get(seq)
        if size is None:
            return
        self.rtt_clock.pop(seq, None)
        self.sent_rtx += 1
        self.transmit(seq, size, False, True)
        if self.rto_deadline is None:
            self._restart_timer()

    # -- clock and timer --------------------------------------------------

    def _now(self) -> int:
        return self.engine.now if self.engine is not None else 0

    def _take_rtt_sample(self, ack: int) -> None:
        t0 = self.rtt_clock.get(ack)
        if t0 is None:
            return
        r = self._now() - t0
        if self.srtt is None:
            self.srtt = float(r)
            self.rttvar = r / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - r)
            self.srtt = 0.875 * self.srtt + 0.125 * r
        self.rto = min(MAX_RTO_US, max(MIN_RTO_US, int(self.srtt + 4.0 * self.rttvar)))

    def _restart_timer(self) -> None:
        if self.outstanding() == 0:
            self.rto_deadline = None
            return
        if self.engine is None:
            return
        self.rto_deadline = self.engine.now + self.rto
        if self._timer_time is None or self._timer_time > self.rto_deadline:
            if self._timer_ev is not None:
                self.engine.cancel(self._timer_ev)
            self._timer_time = self.rto_deadline
            self._timer_ev = self.engine.schedule(self.rto_deadline, self._on_timer)

    def _on_timer(self) -> None:
        self._timer_ev = None
        self._timer_time = None
        if self.rto_deadline is None or self.outstanding() == 0:
            return
        if self.engine.now < self.rto_deadline:
            self._timer_time = self.rto_deadline
            self._timer_ev = self.engine.schedule(self.rto_deadline, self._on_timer)
            return
        self.on_congestion("timeout")
        self.try_send()
