"""Adaptive-bitrate video client: buffer model, hybrid ABR, playback metrics.

Segments are four seconds of media.  The buffer is a queue of (rep, seconds)
chunks capped at 60 s; level-of-buffer-occupancy (lbo) is the queued seconds.
Rate selection runs in one of two modes and hops between them:

* THROUGHPUT: highest bitrate at most 0.9x the smoothed download estimate.
* BOLA: a buffer ladder; engaged once the buffer reaches 10 s, handed back
  when it falls below 10 s while choosing lower than throughput would.

Playback starts (and, after a stall, resumes) once 4 s are buffered.  A tick
consumes one second of media and appends one metric row, so a run of N
seconds yields exactly N rows.
"""

from collections import deque
from dataclasses import dataclass

SEGMENT_SECONDS = 4.0
BUFFER_CAP_S = 60.0
RESUME_THRESHOLD_S = 4.0
MODE_SWITCH_LBO_S = 10.0
THROUGHPUT_SAFETY = 0.9
ESTIMATE_WEIGHT = 0.5
BOLA_HIGH_S = 24.0
BOLA_MID_S = 12.0

MODE_THROUGHPUT = "throughput"
MODE_BOLA = "bola"

AUDIO_BITRATE_KBPS = 128
AUDIO_CHANNEL_KBPS = 64


@dataclass(frozen=True)
class Representation:
    width: int
    height: int
    fps: int
    bitrate_kbps: int
    gop: int

    @property
    def label(self) -> str:
        return f"{self.width}x{self.height}"

    @property
    def segment_bytes(self) -> int:
        # bitrate_kbps * 4 s * 1000 bit/kb / 8 bit per byte
        return self.bitrate_kbps * 500


VIDEO_CATALOG = (
    Representation(426, 240, 18, 280, 72),
    Representation(854, 480, 24, 980, 96),
    Representation(1280, 720, 30, 2080, 120),
)


def throughput_choice(est_kbps: float) -> Representation:
    budget = THROUGHPUT_SAFETY * est_kbps
    best = VIDEO_CATALOG[0]
    for rep in VIDEO_CATALOG:
        if rep.bitrate_kbps <= budget:
            best = rep
    return best


def bola_choice(lbo: float) -> Representation:
    if lbo >= BOLA_HIGH_S:
        return VIDEO_CATALOG[2]
    if lbo >= BOLA_MID_S:
        return VIDEO_CATALOG[1]
    return VIDEO_CATALOG[0]


class DashPlayer:
    """One video client.  `request_fn(rep)` is called to fetch a segment."""

    __slots__ = ("request_fn", "lbo", "chunks", "started", "stalled", "mode",
                 "est_kbps", "rows", "request_pending", "downloads",
                 "stall_events", "discarded_s")

    def __init__(self, request_fn=None):
        self.request_fn = request_fn
        self.lbo = 0.0
        self.chunks = deque()          # [rep, seconds remaining]
        self.started = False
        self.stalled = False
        self.mode = MODE_THROUGHPUT
        self.est_kbps = float(VIDEO_CATALOG[0].bitrate_kbps)
        self.rows = []
        self.request_pending = False
        self.downloads = 0
        self.stall_events = 0
        self.discarded_s = 0.0

    def select_representation(self) -> Representation:
        thr = throughput_choice(self.est_kbps)
        bola = bola_choice(self.lbo)
        if self.mode == MODE_THROUGHPUT:
            if self.lbo >= MODE_SWITCH_LBO_S:
                self.mode = MODE_BOLA
        elif self.lbo < MODE_SWITCH_LBO_S and bola.bitrate_kbps < thr.bitrate_kbps:
            self.mode = MODE_THROUGHPUT
        return bola if self.mode == MODE_BOLA else thr

    def current_fps(self) -> int:
        """Frame rate of the media playing right now; 0 when not playing."""
        if self.started and not self.stalled and self.chunks:
            return self.chunks[0][0].fps
        return 0

    def maybe_request(self) -> None:
        if self.request_pending or self.lbo >= BUFFER_CAP_S:
            return
        rep = self.select_representation()
        self.request_pending = True
        if self.request_fn is not None:
            self.request_fn(rep)

    def on_segment_downloaded(self, rep: Representation, nbytes: int,
                              elapsed_us: int) -> None:
        if elapsed_us > 0:
            inst_kbps = nbytes * 8000.0 / elapsed_us
            self.est_kbps = (1.0 - ESTIMATE_WEIGHT) * self.est_kbps \
                + ESTIMATE_WEIGHT * inst_kbps
        self.downloads += 1
        self.request_pending = False
        keep = min(SEGMENT_SECONDS, BUFFER_CAP_S - self.lbo)
        if keep > 0:
            self.chunks.append([rep, keep])
            self.lbo += keep
        self.discarded_s += SEGMENT_SECONDS - keep
        if (not self.started or self.stalled) and self.lbo >= RESUME_THRESHOLD_S:
            self.started = True
            self.stalled = False
        self.maybe_request()

    def tick(self, t_s: int) -> None:
        """Play one second of media, then log a metric row for second t_s."""
        played = None
        if self.started and not self.stalled:
            need = 1.0
            if self.chunks:
                played = self.chunks[0][0]
            while need > 1e-9 and self.chunks:
                head = self.chunks[0]
                take = min(head[1], need)
                head[1] -= take
                self.lbo -= take
                need -= take
                if head[1] <= 1e-9:
                    self.chunks.popleft()
            if self.lbo < 1e-9:
                self.lbo = 0.0
            if need > 1e-9:
                self.stalled = True
                self.stall_events += 1
                played = None
        self.rows.append((t_s,
                          played.fps if played else 0,
                          round(self.lbo, 6),
                          played.label if played else "",
                          self.stalled))
        self.maybe_request()


def summarize(rows) -> dict:
    """Reduce per-second rows to the headline QoS numbers."""
    if not rows:
        raise ValueError("cannot summarize an empty playback log")
    total = len(rows)
    stalled = sum(1 for r in rows if r[4])
    played = [r for r in rows if r[1] > 0]
    shares = {rep.label: 0.0 for rep in VIDEO_CATALOG}
    if played:
        for r in played:
            shares[r[3]] += 1
        for k in shares:
            shares[k] = 100.0 * shares[k] / len(played)
    first_play = next((r[0] for r in rows if r[1] > 0), None)
    return {
        "seconds": total,
        "rebuffering_pct": 100.0 * stalled / total,
        "mean_fps": sum(r[1] for r in rows) / total,
        "mean_lbo_s": sum(r[2] for r in rows) / total,
        "shares_pct": shares,
        "played_seconds": len(played),
        "first_play_s": first_play,
    }
