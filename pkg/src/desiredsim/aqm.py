"""Egress-measured RED with deferred ingress drops.

The queue signal is the per-packet wait measured at dequeue (time spent in
the egress queue, in microseconds).  It feeds a shift-based moving average

    avg <- (sample + avg) >> 1

which is the alpha = 0.5 EWMA a switch pipeline can compute with one add and
one shift.  The drop ramp is classic RED over that average with
min_th = target and max_th = 2 * target.

Congestion is signalled in two ways:

* ECT packets are CE-marked immediately at egress with probability
  min(1, 2 * sqrt(p)), the square-root coupling that keeps marked flows and
  dropped flows at roughly matched throughput.
* Non-ECT packets are never dropped at egress (the packet at the head of the
  queue has already consumed its queueing).  Instead a notification is
  recirculated to ingress, which drops exactly one future packet headed for
  the same output port.
"""

import math

MIN_TARGET_US = 20_000
MAX_TARGET_US = 70_000
DEFAULT_TARGET_US = 20_000
DEFAULT_MAX_P = 0.1
RECIRC_DELAY_US = 10

PASS = "pass"
MARK = "mark"
NOTIFY = "notify"


def ewma_update(avg: int, sample: int) -> int:
    """One step of the shift EWMA; integer microseconds in, integer out."""
    return (sample + avg) >> 1


class AqmState:
    """Per-switch AQM state.  The average and drop flag are per egress port."""

    __slots__ = ("mode", "target_us", "max_p", "avg", "drop_flag",
                 "notify_count", "mark_count", "ingress_drop_count")

    def __init__(self, mode: str = "fixed", target_us: int = DEFAULT_TARGET_US,
                 max_p: float = DEFAULT_MAX_P):
        if mode not in ("fixed", "dynamic"):
            raise ValueError(f"unknown AQM mode {mode!r}")
        self.mode = mode
        self.target_us = int(target_us)
        self.max_p = max_p
        self.avg = {}        # egress port -> smoothed wait, int us
        self.drop_flag = {}  # egress port -> one pending ingress drop
        self.notify_count = 0
        self.mark_count = 0
        self.ingress_drop_count = 0


def red_probability(avg_us: int, state: AqmState) -> float:
    """RED ramp over the smoothed wait: 0 below target, max_p slope to 2x."""
    min_th = state.target_us
    max_th = 2 * state.target_us
    if avg_us < min_th:
        return 0.0
    if avg_us >= max_th:
        return 1.0
    return state.max_p * (avg_us - min_th) / (max_th - min_th)


def egress_decide(state: AqmState, port: int, wait_us: int, ect: bool, rng) -> str:
    """Update the port average with one dequeue sample and pick an action.

    Returns PASS, MARK (caller sets CE on the departing packet) or NOTIFY
    (caller recirculates a congestion notification).  The departing packet
    itself is always forwarded.
    """
    avg = ewma_update(state.avg.get(port, 0), wait_us)
    state.avg[port] = avg
    p = red_probability(avg, state)
    if p <= 0.0:
        return PASS
    if ect:
        p_mark = min(1.0, 2.0 * math.sqrt(p))
        if rng.random() < p_mark:
            state.mark_count += 1
            return MARK
        return PASS
    if rng.random() < p:
        state.notify_count += 1
        return NOTIFY
    return PASS


def arm_ingress_drop(state: AqmState, port: int) -> None:
    """Deliver a recirculated notification: flag the port for one drop.

    A second notification landing before the drop happens is absorbed (the
    flag is already set); each flag costs at most one packet.
    """
    state.drop_flag[port] = True


def ingress_should_drop(state: AqmState, port: int) -> bool:
    """Consume the port's drop flag.  True means: drop this packet, flag off."""
    if state.drop_flag.get(port):
        state.drop_flag[port] = False
        state.ingress_drop_count += 1
        return True
    return False


def apply_target_delay(state: AqmState, target_us: int) -> None:
    """Retune the target; only dynamic-mode state may move, within bounds."""
    if state.mode != "dynamic":
        raise ValueError("target is immutable in fixed mode")
    if not MIN_TARGET_US <= target_us <= MAX_TARGET_US:
        raise ValueError(f"target {target_us} us outside "
                         f"[{MIN_TARGET_US}, {MAX_TARGET_US}] us")
    state.target_us = int(target_us)
