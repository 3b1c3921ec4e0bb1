"""Dumbbell experiment: video server, AQM switches, measured and load clients.

Topology (all links 5 ms propagation):

    server --100M-- sw1 --25M-- sw2 --100M-- measured client
                                   \\--100M-- load client pool (up to 40)

Every client runs the same adaptive player over its own New Reno
connection; requests travel client -> server, segments stream back through
the bottleneck.  Each active client also receives a constant 128 kb/s audio
stream.  Telemetry probes leave the server every probe period, collect one
record per switch, and land at the measured client, whose windows feed the
control loop when the AQM target is agent-tuned.

One simulated second drives: load reconciliation at t, then one playback
tick per active client at t, then (every window) the observation/action
step.  Artifact files are written once at the end of the run.
"""

import csv
import heapq
import json
import os

import numpy as np

from . import aqm
from .agent import ControlLoop
from .config import ExperimentConfig
from .dash import VIDEO_CATALOG, DashPlayer, summarize
from .engine import Engine, US_PER_SEC
from .loadgen import (LoadController, constant_pattern, sinusoid_pattern,
                      LOW_LOAD, HIGH_LOAD)
from .net import Host, Packet, Switch, connect
from .qnet import save_snapshot
from .telemetry import (ProbeCollector, ProbeSample, aggregate_observation,
                        decode_records, telemetry_csv_rows)
from .transport import NewRenoSender, TcpReceiver, packet_count

SERVER_ID = 0
MEASURED_ID = 10
FIRST_LOAD_ID = 11

HEADER_BYTES = 40
REQUEST_BYTES = 64
REQUEST_RETRY_US = 2_000_000
AUDIO_PERIOD_US = 100_000
AUDIO_PAYLOAD = 1600  # 128 kb/s at one packet per 100 ms

CATALOG_INDEX = {rep: i for i, rep in enumerate(VIDEO_CATALOG)}


class ClientSession:
    """Per-client bundle: player and receiver here, sender at the server."""

    __slots__ = ("cid", "node", "player", "receiver", "sender", "active",
                 "req_id", "served_req_id", "downloading", "rep", "nbytes",
                 "expect_end", "seq_base", "req_time", "retry_ev", "audio_ev",
                 "audio_bytes")

    def __init__(self, cid, node):
        self.cid = cid
        self.node = node
        self.player = None
        self.receiver = TcpReceiver()
        self.sender = None
        self.active = True
        self.req_id = 0
        self.served_req_id = 0
        self.downloading = False
        self.rep = None
        self.nbytes = 0
        self.expect_end = 0
        self.seq_base = 0
        self.req_time = 0
        self.retry_ev = None
        self.audio_ev = None
        self.audio_bytes = 0


class Simulation:
    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        self.engine = Engine(cfg.seed)
        self.duration_us = cfg.duration_s * US_PER_SEC
        self.window_us = cfg.window_s * US_PER_SEC
        self.probe_period_us = cfg.probe_period_ms * 1000
        self.expected_probes = self.window_us // self.probe_period_us

        bottleneck = int(cfg.bottleneck_mbps * 1_000_000)
        access = int(cfg.access_mbps * 1_000_000)
        prop = int(cfg.prop_ms * 1000)

        if cfg.mode == "fixed":
            mk_state = lambda: aqm.AqmState("fixed", int(cfg.target_ms * 1000))
        else:
            mk_state = lambda: aqm.AqmState("dynamic",
                                            int(cfg.initial_target_ms * 1000))
        trace1 = [] if cfg.aqm_trace else None
        trace2 = [] if cfg.aqm_trace else None
        self.sw1 = Switch(self.engine, 1, "sw1", 1, mk_state(),
                          self.engine.stream("sw1.aqm"), trace1)
        self.sw2 = Switch(self.engine, 2, "sw2", 2, mk_state(),
                          self.engine.stream("sw2.aqm"), trace2)

        self.server = Host(self.engine, SERVER_ID, "server")
        sp, _ = connect(self.server, self.sw1, access, prop, cfg.queue_cap_bytes)
        self.server.attach(sp)
        self.server.receive = self._server_receive
        connect(self.sw1, self.sw2, bottleneck, prop, cfg.queue_cap_bytes)

        self.hosts = {}
        ids = [MEASURED_ID] + [FIRST_LOAD_ID + i
                               for i in range(cfg.max_load_clients)]
        for cid in ids:
            host = Host(self.engine, cid, f"client{cid}")
            connect(self.sw2, host, access, prop, cfg.queue_cap_bytes)
            host.attach(host.ports[1])
            self.hosts[cid] = host
        for sw in (self.sw1, self.sw2):
            for dst in [SERVER_ID] + ids:
                sw.route[dst] = self._port_toward(sw, dst)

        self.sessions = {}
        self.free_load_ids = [FIRST_LOAD_ID + i
                              for i in range(cfg.max_load_clients)]
        heapq.heapify(self.free_load_ids)

        if cfg.load == "low":
            pattern = constant_pattern(LOW_LOAD, cfg.duration_s)
        elif cfg.load == "high":
            pattern = constant_pattern(HIGH_LOAD, cfg.duration_s)
        else:
            pattern = sinusoid_pattern(cfg.duration_s)
        self.controller = LoadController(pattern, self._start_load_client,
                                         self._stop_load_client)

        self.collector = ProbeCollector(keep_all=cfg.telemetry_dump)
        self.probes_sent = 0
        self.loop = None
        if cfg.mode == "dynamic":
            self.loop = ControlLoop(
                self.engine.stream("agent.init").gen,
                self.engine.stream("agent.action"),
                self.engine.stream("agent.batch"),
                self._apply_target,
                initial_target_us=int(cfg.initial_target_ms * 1000),
                gamma=cfg.gamma, lr=cfg.lr, momentum=cfg.momentum,
                tau=cfg.tau, min_fill=cfg.min_fill,
                batch_size=cfg.batch_size, decay_steps=cfg.decay_steps,
                eps_floor=cfg.eps_floor, capacity=cfg.replay_capacity)

        self.totals = {"sent_new": 0, "sent_rtx": 0, "timeouts": 0,
                       "fast_recoveries": 0, "ecn_backoffs": 0,
                       "delivered_bytes": 0}

        # event order inside one second: reconcile, then player ticks, then
        # (on window boundaries) the observation step, which is scheduled
        # lazily and therefore always sorts after the pre-scheduled ticks
        self.engine.schedule(0, self._start_session, MEASURED_ID)
        for t in range(cfg.duration_s):
            self.engine.schedule(t * US_PER_SEC, self._reconcile, t)
        for t in range(1, cfg.duration_s + 1):
            self.engine.schedule(t * US_PER_SEC, self._tick, t)
        self.engine.schedule(0, self._emit_probe)
        self.engine.schedule(self.window_us, self._window, self.window_us)

    # -- topology helpers ---------------------------------------------------

    def _port_toward(self, sw, dst):
        if sw is self.sw1:
            return sw.ports[1] if dst == SERVER_ID else sw.ports[2]
        if dst == SERVER_ID:
            return sw.ports[1]
        for port in sw.ports.values():
            if port.peer_node.node_id == dst:
                return port
        raise KeyError(dst)

    @property
    def measured(self) -> ClientSession:
        return self.sessions[MEASURED_ID]

    # -- session lifecycle ---------------------------------------------------

    def _start_session(self, cid) -> ClientSession:
        node = self.hosts[cid]
        session = ClientSession(cid, node)
        session.player = DashPlayer(
            request_fn=lambda rep, s=session: self._send_request(s, rep))
        session.sender = NewRenoSender(
            self._make_transmit(cid), engine=self.engine,
            ecn=self.cfg.ecn_dash)
        node.receive = lambda pkt, s=session: self._client_receive(s, pkt)
        self.sessions[cid] = session
        session.audio_ev = self.engine.schedule_in(AUDIO_PERIOD_US,
                                                   self._audio_tick, session)
        session.player.maybe_request()
        return session

    def _start_load_client(self) -> int:
        cid = heapq.heappop(self.free_load_ids)
        self._start_session(cid)
        return cid

    def _stop_load_client(self, cid) -> None:
        session = self.sessions.pop(cid)
        session.active = False
        session.sender.reset_app()
        session.sender.rto_deadline = None
        for ev in (session.retry_ev, session.audio_ev,
                   session.sender._timer_ev):
            if ev is not None:
                self.engine.cancel(ev)
        session.node.receive = None
        self._absorb_counters(session)
        heapq.heappush(self.free_load_ids, cid)

    def _absorb_counters(self, session) -> None:
        s = session.sender
        self.totals["sent_new"] += s.sent_new
        self.totals["sent_rtx"] += s.sent_rtx
        self.totals["timeouts"] += s.timeouts
        self.totals["fast_recoveries"] += s.fast_recoveries
        self.totals["ecn_backoffs"] += s.ecn_backoffs
        self.totals["delivered_bytes"] += session.receiver.bytes_received

    # -- traffic -------------------------------------------------------------

    def _make_transmit(self, cid):
        nic = self.server.nic
        ecn = self.cfg.ecn_dash

        def transmit(seq, size, cwr, is_rtx):
            pkt = Packet("data", size + HEADER_BYTES, SERVER_ID, cid)
            pkt.seq = seq
            pkt.ect = ecn
            pkt.cwr = cwr
            nic.send(pkt)
        return transmit

    def _send_request(self, session, rep) -> None:
        session.req_id += 1
        session.rep = rep
        session.nbytes = rep.segment_bytes
        session.expect_end = session.seq_base + packet_count(session.nbytes)
        session.downloading = True
        session.req_time = self.engine.now
        self._transmit_request(session)

    def _transmit_request(self, session) -> None:
        pkt = Packet("req", REQUEST_BYTES, session.cid, SERVER_ID)
        pkt.payload = (session.req_id, CATALOG_INDEX[session.rep])
        session.node.nic.send(pkt)
        session.retry_ev = self.engine.schedule_in(
            REQUEST_RETRY_US, self._request_retry, session, session.req_id)

    def _request_retry(self, session, req_id) -> None:
        if session.active and session.downloading and session.req_id == req_id:
            self._transmit_request(session)

    def _server_receive(self, pkt: Packet) -> None:
        session = self.sessions.get(pkt.src)
        if session is None or not session.active:
            return
        if pkt.kind == "ack":
            session.sender.on_ack(pkt.ack_no, pkt.ece)
        elif pkt.kind == "req":
            req_id, rep_idx = pkt.payload
            if req_id > session.served_req_id:
                session.served_req_id = req_id
                session.sender.push_segment(VIDEO_CATALOG[rep_idx].segment_bytes)

    def _client_receive(self, session, pkt: Packet) -> None:
        if not session.active:
            return
        if pkt.kind == "data":
            ack_no, ece = session.receiver.on_data(
                pkt.seq, pkt.size - HEADER_BYTES, pkt.ce, pkt.cwr)
            ackpkt = Packet("ack", HEADER_BYTES, session.cid, SERVER_ID)
            ackpkt.ack_no = ack_no
            ackpkt.ece = ece
            session.node.nic.send(ackpkt)
            if session.downloading and ack_no >= session.expect_end:
                session.downloading = False
                session.seq_base = session.expect_end
                if session.retry_ev is not None:
                    self.engine.cancel(session.retry_ev)
                    session.retry_ev = None
                elapsed = self.engine.now - session.req_time
                session.player.on_segment_downloaded(session.rep,
                                                     session.nbytes, elapsed)
        elif pkt.kind == "audio":
            session.audio_bytes += pkt.size
        elif pkt.kind == "probe":
            records = tuple(decode_records(bytes(pkt.int_data)))
            self.collector.on_probe(ProbeSample(pkt.probe_id, pkt.send_time,
                                                self.engine.now, records))

    def _audio_tick(self, session) -> None:
        if not session.active:
            return
        pkt = Packet("audio", AUDIO_PAYLOAD + HEADER_BYTES, SERVER_ID,
                     session.cid)
        self.server.nic.send(pkt)
        session.audio_ev = self.engine.schedule_in(AUDIO_PERIOD_US,
                                                   self._audio_tick, session)

    def _emit_probe(self) -> None:
        pkt = Packet("probe", 64, SERVER_ID, MEASURED_ID)
        pkt.int_data = bytearray()
        pkt.probe_id = self.probes_sent
        pkt.send_time = self.engine.now
        self.probes_sent += 1
        self.server.nic.send(pkt)
        nxt = self.engine.now + self.probe_period_us
        if nxt < self.duration_us:
            self.engine.schedule(nxt, self._emit_probe)

    # -- periodic drivers ----------------------------------------------------

    def _reconcile(self, t_s) -> None:
        self.controller.reconcile(t_s)

    def _tick(self, t_s) -> None:
        for session in list(self.sessions.values()):
            session.player.tick(t_s)

    def _window(self, t_end_us) -> None:
        samples = self.collector.drain()
        if self.loop is not None:
            frame = aggregate_observation(
                samples, t_end_us - self.window_us, t_end_us, (1, 2),
                self.sw1.aqm.target_us, self.expected_probes)
            player = self.measured.player
            self.loop.step(frame.features, player.lbo, player.current_fps(),
                           t_end_us / US_PER_SEC)
        nxt = t_end_us + self.window_us
        if nxt <= self.duration_us:
            self.engine.schedule(nxt, self._window, nxt)

    def _apply_target(self, target_us) -> None:
        aqm.apply_target_delay(self.sw1.aqm, target_us)
        aqm.apply_target_delay(self.sw2.aqm, target_us)

    # -- run and report -------------------------------------------------------

    def run(self) -> dict:
        self.engine.run_until(self.duration_us)
        for session in self.sessions.values():
            self._absorb_counters(session)
        return self._summary()

    def _switch_stats(self, sw) -> dict:
        return {
            "forwarded": sw.forwarded,
            "notifies": sw.aqm.notify_count,
            "marks": sw.aqm.mark_count,
            "ingress_drops": sw.aqm.ingress_drop_count,
            "tail_drops": sum(p.tail_drops for p in sw.ports.values()),
        }

    def _summary(self) -> dict:
        cfg = self.cfg
        measured = self.measured
        qos = summarize(measured.player.rows)
        delivered = measured.receiver.bytes_received
        out = {
            "name": cfg.name,
            "mode": cfg.mode,
            "load": cfg.load,
            "seed": cfg.seed,
            "duration_s": cfg.duration_s,
            "target_ms": (cfg.target_ms if cfg.mode == "fixed"
                          else self.sw1.aqm.target_us / 1000.0),
            "qos": qos,
            "network": {
                "sw1": self._switch_stats(self.sw1),
                "sw2": self._switch_stats(self.sw2),
                "tcp": {k: self.totals[k] for k in
                        ("sent_new", "sent_rtx", "timeouts",
                         "fast_recoveries", "ecn_backoffs")},
                "delivered_bytes": self.totals["delivered_bytes"],
                "measured_goodput_mbps": round(
                    delivered * 8.0 / self.duration_us, 6),
                "probes": {
                    "sent": self.probes_sent,
                    "received": self.collector.received,
                },
            },
        }
        if self.loop is not None:
            rewards = [r[5] for r in self.loop.rows if r[5] != ""]
            out["agent"] = {
                "steps": self.loop.step_idx,
                "updates": self.loop.updates,
                "replay_fill": len(self.loop.buffer),
                "reward_sum": round(sum(rewards), 3),
                "final_target_ms": self.loop.target_us / 1000.0,
            }
        return out


PLAYER_HEADER = ("t_s", "fps", "lbo_s", "resolution", "stalled")
AGENT_HEADER = ("t_s", "step", "epsilon", "action", "target_us", "reward",
                "loss", "buffer_fill", "updates")
LOAD_HEADER = ("t_s", "instances")
AQM_TRACE_HEADER = ("time_us", "switch", "port", "avg_us", "p", "decision")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def run_experiment(cfg: ExperimentConfig, outdir=None) -> dict:
    """Run one arm and write its artifact files; returns the summary dict."""
    sim = Simulation(cfg)
    summary = sim.run()
    if outdir is None:
        outdir = os.path.join(cfg.outdir, cfg.name)
    os.makedirs(outdir, exist_ok=True)

    rows = [(t, fps, lbo, res, int(stalled))
            for t, fps, lbo, res, stalled in sim.measured.player.rows]
    _write_csv(os.path.join(outdir, "player_metrics.csv"), PLAYER_HEADER, rows)
    _write_csv(os.path.join(outdir, "load_trace.csv"), LOAD_HEADER,
               sim.controller.trace)
    if sim.loop is not None:
        _write_csv(os.path.join(outdir, "agent_log.csv"), AGENT_HEADER,
                   sim.loop.rows)
        save_snapshot(os.path.join(outdir, "params.npz"), sim.loop.online)
    if cfg.aqm_trace:
        trace = sorted(sim.sw1.trace + sim.sw2.trace)
        _write_csv(os.path.join(outdir, "aqm_trace.csv"), AQM_TRACE_HEADER,
                   trace)
    if cfg.telemetry_dump:
        rows_iter = telemetry_csv_rows(sim.collector.all_samples, 2)
        header = next(rows_iter)
        _write_csv(os.path.join(outdir, "telemetry.csv"), header, rows_iter)

    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    from .config import save_yaml
    save_yaml(cfg, os.path.join(outdir, "resolved_config.yaml"))
    return summary
