"""Joint-state synchronization between the arm emulator and its digital twin.

Three layers:

* wire format  -- fixed 103-byte little-endian frame with a CRC-32 suffix:
  magic(2) | version(1) | seq(u64) | timestamp(f64) | 5x q(f64) |
  5x qdot(f64) | crc32(u32). ``decode(encode(m)) == m`` exactly.
* channel      -- per-message Bernoulli drop plus Gaussian-jittered latency,
  FIFO-clamped unless reordering is enabled; deterministic per seed.
* reconciliation -- the twin applies the highest-sequence delivered message
  directly, then dead-reckons between messages by extrapolating with the
  reported joint velocities, rate-capped per joint and limited to a fixed
  horizon so prediction cannot run away across long gaps.
"""

from __future__ import annotations

import heapq
import math
import struct
import zlib
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeError, MismatchedTraces
from .kinematics import as_joint_vector

WIRE_MAGIC = b"JS"
WIRE_VERSION = 1
_BODY_FORMAT = "<2sBQd5d5d"
_BODY_SIZE = struct.calcsize(_BODY_FORMAT)  # 99
WIRE_SIZE = _BODY_SIZE + 4  # + crc32

EXTRAPOLATION_HORIZON = 0.2  # s

# sub-ns slack when testing message due times, so that accumulated float
# error in tick clocks (k * dt) cannot slip a delivery to the next tick
DELIVERY_SLACK = 1e-9  # s


@dataclass(frozen=True)
class JointStateMsg:
    """One sample of the arm's joint state, as published on the wire."""

    seq: int
    timestamp: float  # s, sim clock of the source
    q: np.ndarray  # (5,) rad
    qdot: np.ndarray  # (5,) rad/s

    def __post_init__(self):
        if not 0 <= self.seq < 2**64:
            raise ValueError("seq must fit an unsigned 64-bit counter")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")
        object.__setattr__(self, "q", as_joint_vector(self.q))
        object.__setattr__(self, "qdot", as_joint_vector(self.qdot))

    def __eq__(self, other):
        if not isinstance(other, JointStateMsg):
            return NotImplemented
        return (
            self.seq == other.seq
            and self.timestamp == other.timestamp
            and np.array_equal(self.q, other.q)
            and np.array_equal(self.qdot, other.qdot)
        )


def encode(msg: JointStateMsg) -> bytes:
    body = struct.pack(
        _BODY_FORMAT, WIRE_MAGIC, WIRE_VERSION, msg.seq, msg.timestamp, *msg.q, *msg.qdot
    )
    return body + struct.pack("<I", zlib.crc32(body))


def decode(buf: bytes) -> JointStateMsg:
    if len(buf) != WIRE_SIZE:
        raise DecodeError(f"frame must be {WIRE_SIZE} bytes, got {len(buf)}")
    body, (crc,) = buf[:_BODY_SIZE], struct.unpack("<I", buf[_BODY_SIZE:])
    if zlib.crc32(body) != crc:
        raise DecodeError("checksum mismatch")
    magic, version, seq, timestamp, *rest = struct.unpack(_BODY_FORMAT, body)
    if magic != WIRE_MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise DecodeError(f"unsupported version {version}")
    try:
        return JointStateMsg(
            seq=seq, timestamp=timestamp, q=np.array(rest[:5]), qdot=np.array(rest[5:])
        )
    except ValueError as exc:
        raise DecodeError(f"invalid payload: {exc}") from exc


# --------------------------------------------------------------------------
# channel simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelModel:
    """Impairment parameters of the simulated link."""

    latency_mean: float = 0.0  # s
    latency_jitter_std: float = 0.0  # s
    drop_probability: float = 0.0
    reorder: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.latency_mean < 0 or self.latency_jitter_std < 0:
            raise ValueError("latency parameters must be >= 0")
        if not 0.0 <= self.drop_probability < 1.0:
            raise ValueError("drop_probability must lie in [0, 1)")


class Channel:
    """Stateful simulator for one direction of a ``ChannelModel`` link."""

    def __init__(self, model: ChannelModel):
        self.model = model
        self._rng = np.random.default_rng(model.rng_seed)
        self._pending: list[tuple[float, int, JointStateMsg]] = []
        self._counter = 0
        self._last_sched = -math.inf
        self._now = -math.inf
        self.sent = 0
        self.dropped = 0
        self.delivered = 0

    def step(self, now: float, inbox: Iterable[JointStateMsg]) -> list[JointStateMsg]:
        """Accept messages sent at ``now``; return those due for delivery.

        Every message consumes one uniform draw (drop decision) and one
        normal draw (jitter) even when the corresponding parameter is zero,
        so rng streams stay aligned across channel configurations.
        """
        if now < self._now:
            raise ValueError("sim clock must be monotone")
        self._now = now

        for msg in inbox:
            self.sent += 1
            u = self._rng.random()
            jitter = self._rng.normal()
            if u < self.model.drop_probability:
                self.dropped += 1
                continue
            latency = max(0.0, self.model.latency_mean + jitter * self.model.latency_jitter_std)
            deliver_at = now + latency
            if not self.model.reorder:
                deliver_at = max(deliver_at, self._last_sched)
                self._last_sched = deliver_at
            heapq.heappush(self._pending, (deliver_at, self._counter, msg))
            self._counter += 1

        out = []
        while self._pending and self._pending[0][0] <= now + DELIVERY_SLACK:
            out.append(heapq.heappop(self._pending)[2])
            self.delivered += 1
        return out


def channel_step(channel: Channel, now: float, inbox: Iterable[JointStateMsg]) -> list[JointStateMsg]:
    return channel.step(now, inbox)


# --------------------------------------------------------------------------
# twin reconciliation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TwinState:
    """Digital-twin estimate of the arm's joint state.

    ``q_base``/``qdot_base`` snapshot the last applied message; the estimate
    is that snapshot extrapolated to the current sim time.
    """

    q_estimate: np.ndarray
    last_seq: int
    last_timestamp: float
    gap_flag: bool
    q_base: np.ndarray
    qdot_base: np.ndarray

    def __post_init__(self):
        for name in ("q_estimate", "q_base", "qdot_base"):
            object.__setattr__(self, name, as_joint_vector(getattr(self, name)))


def twin_initial(q0: np.ndarray) -> TwinState:
    q0 = as_joint_vector(q0)
    return TwinState(
        q_estimate=q0,
        last_seq=0,
        last_timestamp=0.0,
        gap_flag=False,
        q_base=q0.copy(),
        qdot_base=np.zeros(5),
    )


def reconcile(
    twin: TwinState, delivered: Sequence[JointStateMsg], now: float, v_cap: float
) -> TwinState:
    """Fold delivered messages into the twin and extrapolate to ``now``.

    The highest-sequence fresh message is applied as-is (stale or duplicate
    sequences never regress the state); ``gap_flag`` records whether that
    message revealed a sequence discontinuity. Between messages the estimate
    dead-reckons at the reported velocities, clipped to ``v_cap`` per joint,
    over at most ``EXTRAPOLATION_HORIZON`` seconds.
    """
    if v_cap < 0:
        raise ValueError("v_cap must be >= 0")
    best = None
    for msg in delivered:
        if msg.seq > twin.last_seq and (best is None or msg.seq > best.seq):
            best = msg

    last_seq = twin.last_seq
    last_timestamp = twin.last_timestamp
    gap_flag = twin.gap_flag
    q_base = twin.q_base
    qdot_base = twin.qdot_base
    if best is not None:
        gap_flag = best.seq != twin.last_seq + 1
        last_seq = best.seq
        last_timestamp = best.timestamp
        q_base = best.q
        qdot_base = best.qdot

    dt = min(max(now - last_timestamp, 0.0), EXTRAPOLATION_HORIZON)
    q_estimate = q_base + np.clip(qdot_base, -v_cap, v_cap) * dt
    return TwinState(
        q_estimate=q_estimate,
        last_seq=last_seq,
        last_timestamp=last_timestamp,
        gap_flag=gap_flag,
        q_base=q_base,
        qdot_base=qdot_base,
    )


# --------------------------------------------------------------------------
# drift metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    """Time series of joint vectors on the sim clock."""

    times: np.ndarray  # (N,)
    q: np.ndarray  # (N, 5)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if times.ndim != 1 or q.shape != (times.size, 5):
            raise ValueError("trace needs times (N,) and q (N, 5)")
        if times.size == 0:
            raise ValueError("trace must not be empty")
        if np.any(np.diff(times) < 0):
            raise ValueError("trace times must be non-decreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class DriftReport:
    """Twin-vs-physical deviation over the overlapping time window."""

    times: np.ndarray  # (M,)
    per_joint: np.ndarray  # (M, 5) absolute differences
    max_drift: float  # rad, max over time of the max-norm
    mean_drift: float  # rad, mean over time of the max-norm


def drift_report(physical: Trace, twin: Trace) -> DriftReport:
    t0 = max(physical.times[0], twin.times[0])
    t1 = min(physical.times[-1], twin.times[-1])
    if t0 > t1:
        raise MismatchedTraces(
            f"traces do not overlap: [{physical.times[0]}, {physical.times[-1]}] vs "
            f"[{twin.times[0]}, {twin.times[-1]}]"
        )
    mask = (physical.times >= t0) & (physical.times <= t1)
    times = physical.times[mask]
    p = physical.q[mask]
    # twin samples interpolated onto the physical clock; exact at shared stamps
    w = np.column_stack([np.interp(times, twin.times, twin.q[:, j]) for j in range(5)])
    per_joint = np.abs(p - w)
    series = per_joint.max(axis=1)
    return DriftReport(
        times=times,
        per_joint=per_joint,
        max_drift=float(series.max()),
        mean_drift=float(series.mean()),
    )
