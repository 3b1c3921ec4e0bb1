"""Background load: a population of video clients driven by a count curve.

The sinusoid keeps between 10 and 40 clients alive over one full period per
run: count(t) = round(base + amp * sin(2*pi*freq*t/duration + phase)), with
half-up rounding so the curve is identical on every platform.  Reconciliation
runs once per second and stops the most recently started clients first.
"""

import math
from dataclasses import dataclass

CONSTANT = "constant"
SINUSOID = "sinusoid"

SIN_BASE = 25.0
SIN_AMPLITUDE = 15.0
SIN_FREQUENCY = 1.0
SIN_PHASE = 25.0
LOW_LOAD = 10
HIGH_LOAD = 40


@dataclass(frozen=True)
class LoadPattern:
    kind: str
    duration_s: int
    n: int = 0
    base: float = SIN_BASE
    amplitude: float = SIN_AMPLITUDE
    frequency: float = SIN_FREQUENCY
    phase: float = SIN_PHASE


def constant_pattern(n: int, duration_s: int) -> LoadPattern:
    return LoadPattern(CONSTANT, duration_s, n=n)


def sinusoid_pattern(duration_s: int) -> LoadPattern:
    return LoadPattern(SINUSOID, duration_s)


def instances_at(t_s: int, pattern: LoadPattern) -> int:
    """Desired client count at second t; never negative."""
    if pattern.kind == CONSTANT:
        return pattern.n
    if pattern.kind == SINUSOID:
        angle = pattern.frequency * 2.0 * math.pi * t_s / pattern.duration_s \
            + pattern.phase
        value = pattern.base + pattern.amplitude * math.sin(angle)
        return max(0, math.floor(value + 0.5))
    raise ValueError(f"unknown load pattern {pattern.kind!r}")


class LoadController:
    """Tracks running client ids and converges them on the desired count."""

    def __init__(self, pattern: LoadPattern, start_fn, stop_fn):
        self.pattern = pattern
        self.start_fn = start_fn
        self.stop_fn = stop_fn
        self.active = []
        self.trace = []

    def reconcile(self, t_s: int) -> tuple:
        """One convergence step; returns (started, stopped) counts."""
        want = instances_at(t_s, self.pattern)
        started = stopped = 0
        while len(self.active) < want:
            self.active.append(self.start_fn())
            started += 1
        while len(self.active) > want:
            self.stop_fn(self.active.pop())
            stopped += 1
        self.trace.append((t_s, want))
        return started, stopped
