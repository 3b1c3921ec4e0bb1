"""In-band telemetry: per-hop record codec and windowed observation frames.

Every probe packet accumulates one 32-byte record per switch it crosses.
Records are packed MSB-first in the field order below; widths are bits.
The ten fields total exactly 256 bits, so records butt against each other
with no padding.
"""

from dataclasses import dataclass

import numpy as np

FIELD_WIDTHS = (
    ("switch_id", 31),
    ("ingress_port", 9),
    ("egress_port", 9),
    ("egress_spec", 9),
    ("ingress_tstamp", 48),
    ("egress_tstamp", 48),
    ("enq_tstamp", 32),
    ("enq_qdepth", 19),
    ("deq_timedelta", 32),
    ("deq_qdepth", 19),
)

RECORD_BITS = sum(w for _, w in FIELD_WIDTHS)
RECORD_BYTES = RECORD_BITS // 8

PROBE_PERIOD_US = 10_000
PROBE_BASE_BYTES = 64

# feature scaling: delays land around 1.0 at 100 ms, depths at 1000 packets
DELAY_NORM_US = 100_000.0
DEPTH_NORM_PKTS = 1000.0

FEATURES_PER_SWITCH = 8
FEATURE_COUNT = 19


@dataclass(slots=True)
class IntRecord:
    switch_id: int = 0
    ingress_port: int = 0
    egress_port: int = 0
    egress_spec: int = 0
    ingress_tstamp: int = 0
    egress_tstamp: int = 0
    enq_tstamp: int = 0
    enq_qdepth: int = 0
    deq_timedelta: int = 0
    deq_qdepth: int = 0


def encode_records(records) -> bytes:
    """Pack records back to back, 32 bytes each, MSB-first field order."""
    out = bytearray()
    for rec in records:
        acc = 0
        for name, width in FIELD_WIDTHS:
            value = getattr(rec, name)
            if not 0 <= value < (1 << width):
                raise ValueError(f"{name}={value} does not fit in {width} bits")
            acc = (acc << width) | value
        out += acc.to_bytes(RECORD_BYTES, "big")
    return bytes(out)


def decode_records(data: bytes):
    """Inverse of encode_records; rejects buffers that are not whole records."""
    if len(data) % RECORD_BYTES != 0:
        raise ValueError(f"telemetry payload of {len(data)} bytes is not a "
                         f"multiple of {RECORD_BYTES}")
    records = []
    for off in range(0, len(data), RECORD_BYTES):
        acc = int.from_bytes(data[off:off + RECORD_BYTES], "big")
        fields = {}
        for name, width in reversed(FIELD_WIDTHS):
            fields[name] = acc & ((1 << width) - 1)
            acc >>= width
        records.append(IntRecord(**fields))
    return records


@dataclass(slots=True)
class ProbeSample:
    """One probe as seen by the sink: identity, timing, decoded hop records."""
    probe_id: int
    send_time: int
    recv_time: int
    records: tuple


@dataclass(slots=True)
class ObservationFrame:
    window_start: int
    window_end: int
    features: np.ndarray
    record_count: int


class ProbeCollector:
    """Sink-side buffer of probes for the current observation window."""

    def __init__(self, keep_all: bool = False):
        self.window = []
        self.all_samples = [] if keep_all else None
        self.received = 0

    def on_probe(self, sample: ProbeSample) -> None:
        self.received += 1
        self.window.append(sample)
        if self.all_samples is not None:
            self.all_samples.append(sample)

    def drain(self):
        samples, self.window = self.window, []
        return samples


def aggregate_observation(samples, window_start: int, window_end: int,
                          switch_ids, target_us: int,
                          expected_probes: int) -> ObservationFrame:
    """Collapse one window of probes into the fixed 19-value feature vector.

    Layout: for each switch in switch_ids order, [mean wait, max wait,
    last wait, mean deq depth, max deq depth, mean enq depth, probe count,
    mean hop latency]; then [mean path latency, probe loss fraction,
    current target].  Waits and latencies are scaled by 100 ms, depths by
    1000 packets, counts by the expected probes per window.
    """
    samples = sorted(samples, key=lambda s: s.probe_id)
    per_switch = {sid: [] for sid in switch_ids}
    path_latencies = []
    record_count = 0
    for sample in samples:
        record_count += len(sample.records)
        for rec in sample.records:
            if rec.switch_id in per_switch:
                per_switch[rec.switch_id].append(rec)
        if sample.records:
            path_latencies.append(sample.records[-1].egress_tstamp
                                  - sample.records[0].ingress_tstamp)

    features = np.zeros(FEATURE_COUNT, dtype=np.float64)
    base = 0
    for sid in switch_ids:
        recs = per_switch[sid]
        if recs:
            waits = [r.deq_timedelta for r in recs]
            deq_depths = [r.deq_qdepth for r in recs]
            enq_depths = [r.enq_qdepth for r in recs]
            hop_lat = [r.egress_tstamp - r.ingress_tstamp for r in recs]
            features[base + 0] = np.mean(waits) / DELAY_NORM_US
            features[base + 1] = max(waits) / DELAY_NORM_US
            features[base + 2] = waits[-1] / DELAY_NORM_US
            features[base + 3] = np.mean(deq_depths) / DEPTH_NORM_PKTS
            features[base + 4] = max(deq_depths) / DEPTH_NORM_PKTS
            features[base + 5] = np.mean(enq_depths) / DEPTH_NORM_PKTS
            features[base + 6] = len(recs) / expected_probes
            features[base + 7] = np.mean(hop_lat) / DELAY_NORM_US
        base += FEATURES_PER_SWITCH

    if path_latencies:
        features[base] = np.mean(path_latencies) / DELAY_NORM_US
    loss = 1.0 - len(samples) / expected_probes
    features[base + 1] = min(1.0, max(0.0, loss))
    features[base + 2] = target_us / DELAY_NORM_US
    return ObservationFrame(window_start, window_end, features, record_count)


def telemetry_csv_rows(samples, hop_count: int):
    """Flatten probes for CSV export: one row per probe, hops side by side."""
    names = [name for name, _ in FIELD_WIDTHS]
    header = ["probe_id", "send_time_us", "recv_time_us", "hops"]
    for i in range(1, hop_count + 1):
        header += [f"hop{i}_{name}" for name in names]
    yield header
    for s in samples:
        row = [s.probe_id, s.send_time, s.recv_time, len(s.records)]
        for i in range(hop_count):
            if i < len(s.records):
                rec = s.records[i]
                row += [getattr(rec, name) for name in names]
            else:
                row += [""] * len(names)
        yield row
