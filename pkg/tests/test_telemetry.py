import numpy as np
import pytest

from desiredsim import telemetry as tm


def oracle_encode(rec):
    """Independent packer: build the literal bit string, then bytes."""
    bits = "".join(format(getattr(rec, name), f"0{width}b")
                   for name, width in tm.FIELD_WIDTHS)
    assert len(bits) == tm.RECORD_BITS
    return int(bits, 2).to_bytes(tm.RECORD_BYTES, "big")


def random_record(rng):
    fields = {name: int(rng.integers(0, 1 << width))
              for name, width in tm.FIELD_WIDTHS}
    return tm.IntRecord(**fields)


class TestRecordCodec:
    def test_widths_sum_to_whole_bytes(self):
        assert tm.RECORD_BITS == 256
        assert tm.RECORD_BYTES == 32

    def test_layout_matches_bit_string_oracle(self):
        rec = tm.IntRecord(switch_id=1, ingress_port=3, egress_port=2,
                           egress_spec=2, ingress_tstamp=123_456_789,
                           egress_tstamp=123_459_000, enq_tstamp=55_555,
                           enq_qdepth=17, deq_timedelta=2_211,
                           deq_qdepth=16)
        assert tm.encode_records([rec]) == oracle_encode(rec)

    def test_lone_switch_id_lands_in_top_word(self):
        # 31 bits of switch_id then 9 of ingress_port: id=1 is bit 1 of
        # the first 32-bit word
        data = tm.encode_records([tm.IntRecord(switch_id=1)])
        assert data[:4] == b"\x00\x00\x00\x02"
        assert data[4:] == bytes(28)

    def test_all_ones_round_trip(self):
        rec = tm.IntRecord(**{name: (1 << width) - 1
                              for name, width in tm.FIELD_WIDTHS})
        data = tm.encode_records([rec])
        assert data == b"\xff" * 32
        assert tm.decode_records(data) == [rec]

    def test_randomized_round_trips(self):
        rng = np.random.default_rng(20_240_817)
        for _ in range(400):
            records = [random_record(rng)
                       for _ in range(int(rng.integers(1, 6)))]
            data = tm.encode_records(records)
            assert len(data) == 32 * len(records)
            assert tm.decode_records(data) == records
            for i, rec in enumerate(records):
                assert data[32 * i:32 * (i + 1)] == oracle_encode(rec)

    def test_oversized_field_rejected(self):
        with pytest.raises(ValueError):
            tm.encode_records([tm.IntRecord(ingress_port=512)])
        with pytest.raises(ValueError):
            tm.encode_records([tm.IntRecord(enq_qdepth=1 << 19)])

    def test_negative_field_rejected(self):
        with pytest.raises(ValueError):
            tm.encode_records([tm.IntRecord(deq_timedelta=-1)])

    def test_ragged_payload_rejected(self):
        good = tm.encode_records([tm.IntRecord(switch_id=2)])
        with pytest.raises(ValueError):
            tm.decode_records(good[:-1])
        with pytest.raises(ValueError):
            tm.decode_records(good + b"\x00")

    def test_empty_payload_decodes_to_no_records(self):
        assert tm.decode_records(b"") == []


class TestProbeCollector:
    def test_drain_empties_window(self):
        col = tm.ProbeCollector()
        a = tm.ProbeSample(1, 0, 10, ())
        b = tm.ProbeSample(2, 5, 15, ())
        col.on_probe(a)
        col.on_probe(b)
        assert col.drain() == [a, b]
        assert col.drain() == []
        assert col.received == 2

    def test_keep_all_retains_history_across_windows(self):
        col = tm.ProbeCollector(keep_all=True)
        for i in range(5):
            col.on_probe(tm.ProbeSample(i, 0, 0, ()))
            col.drain()
        assert len(col.all_samples) == 5


def two_switch_samples():
    rec_b1 = tm.IntRecord(switch_id=1, ingress_tstamp=5000,
                          egress_tstamp=8200, enq_qdepth=7,
                          deq_timedelta=3000, deq_qdepth=9)
    rec_b2 = tm.IntRecord(switch_id=2, ingress_tstamp=8300,
                          egress_tstamp=9000, enq_qdepth=1,
                          deq_timedelta=500, deq_qdepth=2)
    rec_a1 = tm.IntRecord(switch_id=1, ingress_tstamp=100,
                          egress_tstamp=1300, enq_qdepth=3,
                          deq_timedelta=1000, deq_qdepth=5)
    rec_a2 = tm.IntRecord(switch_id=2, ingress_tstamp=1400,
                          egress_tstamp=3600, enq_qdepth=6,
                          deq_timedelta=2000, deq_qdepth=8)
    probe_b = tm.ProbeSample(1, 5000, 9100, (rec_b1, rec_b2))
    probe_a = tm.ProbeSample(2, 100, 3700, (rec_a1, rec_a2))
    return probe_a, probe_b


class TestObservationAggregation:
    def test_hand_computed_window(self):
        probe_a, probe_b = two_switch_samples()
        frame = tm.aggregate_observation([probe_a, probe_b], 0, 40_000,
                                         (1, 2), target_us=30_000,
                                         expected_probes=4)
        # ordered by probe_id: b (waits 3000/500) then a (1000/2000)
        expected = [
            2000 / 1e5, 3000 / 1e5, 1000 / 1e5,    # sw1 waits
            7 / 1e3, 9 / 1e3, 5 / 1e3,             # sw1 depths
            2 / 4, 2200 / 1e5,                     # sw1 count, hop latency
            1250 / 1e5, 2000 / 1e5, 2000 / 1e5,    # sw2 waits
            5 / 1e3, 8 / 1e3, 3.5 / 1e3,           # sw2 depths
            2 / 4, 1450 / 1e5,                     # sw2 count, hop latency
            3750 / 1e5,                            # path latency
            0.5,                                   # probe loss
            30_000 / 1e5,                          # current target
        ]
        assert frame.features.shape == (tm.FEATURE_COUNT,)
        assert np.allclose(frame.features, expected, rtol=0, atol=1e-15)
        assert frame.record_count == 4
        assert frame.window_start == 0 and frame.window_end == 40_000

    def test_insertion_order_does_not_matter(self):
        probe_a, probe_b = two_switch_samples()
        f1 = tm.aggregate_observation([probe_a, probe_b], 0, 1, (1, 2), 30_000, 4)
        f2 = tm.aggregate_observation([probe_b, probe_a], 0, 1, (1, 2), 30_000, 4)
        assert np.array_equal(f1.features, f2.features)

    def test_zeroed_records_leave_switch_features_empty(self):
        # a probe whose hops never stamped anything: switch_id stays 0 and
        # must not be attributed to any real switch
        blank = tm.ProbeSample(1, 0, 100, (tm.IntRecord(), tm.IntRecord()))
        frame = tm.aggregate_observation([blank], 0, 1, (1, 2), 20_000, 4)
        assert np.array_equal(frame.features[:16], np.zeros(16))
        assert frame.features[16] == 0.0          # path latency of 0 - 0
        assert frame.features[17] == 0.75         # 1 - 1/4 lost
        assert frame.features[18] == 0.2

    def test_empty_window_reports_total_loss(self):
        frame = tm.aggregate_observation([], 0, 1, (1, 2), 50_000, 4)
        assert np.array_equal(frame.features[:17], np.zeros(17))
        assert frame.features[17] == 1.0
        assert frame.features[18] == 0.5
        assert frame.record_count == 0

    def test_loss_clamps_when_window_overdelivers(self):
        probe_a, probe_b = two_switch_samples()
        frame = tm.aggregate_observation([probe_a, probe_b], 0, 1, (1, 2),
                                         20_000, expected_probes=1)
        assert frame.features[17] == 0.0


class TestCsvExport:
    def test_rows_flatten_hops_and_pad_missing(self):
        probe_a, _ = two_switch_samples()
        short = tm.ProbeSample(3, 10, 20, (probe_a.records[0],))
        rows = list(tm.telemetry_csv_rows([probe_a, short], hop_count=2))
        header = rows[0]
        assert len(header) == 4 + 2 * len(tm.FIELD_WIDTHS)
        assert header[0] == "probe_id"
        assert header[4] == "hop1_switch_id"
        full, padded = rows[1], rows[2]
        assert full[0] == 2 and full[3] == 2
        assert len(full) == len(header)
        assert padded[3] == 1
        assert padded[-len(tm.FIELD_WIDTHS):] == [""] * len(tm.FIELD_WIDTHS)
