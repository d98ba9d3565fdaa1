"""Distributed session over TCP: parties, wire-emulator channel, Eve tap.

Processes exchange fixed-layout frames in lockstep, one clock period at a
time.  The *channel* process stands in for the physical wire: per tick it
receives each party's connected resistance and generator samples, solves
the loop, and returns each party its own end measurements (an attached
Eve receives the midpoint measurements read-only, or may inject current in
invasive mode).  The parties additionally exchange their end measurements
directly over an authenticated *compare* link and verify the wire-model
consistency relations per sample; any deviation raises the alarm.

Frame layout (all little-endian):

* header (22 bytes): magic ``KLJN``, version u8 = 1, role u8
  (0 Alice, 1 Bob, 2 Channel, 3 Eve), session_id u64, bit_index u32,
  block_index u16, count u16;
* sample frame: header, ``count`` float64 samples, crc32 u32 over all
  prior bytes;
* compare frame: header, ``count`` (u_end, i_end) float64 pairs, and a
  32-byte HMAC-SHA256 tag over header plus payload keyed by the pre-shared
  authentication key.

``block_index`` values at or above 0xFF00 are typed frames rather than
plain data blocks: session control (hello/ready/nak/abort/done), the
per-bit resistor metadata a party sends its channel, and the
classification announcement on the compare link.

A sample frame failing its CRC is rejected with a NAK naming the claimed
(bit, block); the sender retransmits from its recent-frame history.  A
compare frame failing its authentication tag is a man-in-the-middle
signal and aborts the session immediately.  Data frames carry monotone
(bit_index, block_index) per sender; receivers reassemble by block index,
so a retransmitted block may arrive late.
"""

from __future__ import annotations

import hashlib
import hmac
import math
import socket
import struct
import time
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .circuit import TraceEnds, solve_ideal, solve_nonideal
from .protocol import (
    AlarmEvent,
    Band,
    SessionConfig,
    alarm_scales,
    check_alarm,
    choice_bit,
    classify_party,
    expected_levels,
    injection_current,
    party_noise,
    warmup_samples,
)

MAGIC = b"KLJN"
VERSION = 1

ROLE_ALICE = 0
ROLE_BOB = 1
ROLE_CHANNEL = 2
ROLE_EVE = 3

CTRL_HELLO = 0xFF00
CTRL_READY = 0xFF01
CTRL_NAK = 0xFF02
CTRL_ABORT = 0xFF03
CTRL_DONE = 0xFF04
CTRL_CLASS = 0xFF05
CTRL_BITMETA = 0xFF06

_SESSION_CTRL = (CTRL_HELLO, CTRL_READY, CTRL_NAK, CTRL_ABORT, CTRL_DONE)

SAMPLE_BLOCK = 512  # float64 samples per data frame (invariant: <= 1024)
COMPARE_BLOCK = 256  # (u, i) pairs per compare frame

_HEADER = struct.Struct("<4sBBQIHH")
TAG_LEN = 32
_HISTORY_LIMIT = 128


class FrameError(Exception):
    """Malformed or corrupted frame (bad magic, version, or CRC)."""

    def __init__(self, msg: str, claimed: tuple[int, int] | None = None):
        super().__init__(msg)
        self.claimed = claimed  # (bit_index, block_index) from the header


class AuthError(Exception):
    """Compare-frame authentication tag failed to verify."""


class SessionAbort(Exception):
    """The peer aborted, timed out, or an alarm stopped the session."""


@dataclass(frozen=True)
class SampleFrame:
    role: int
    session_id: int
    bit_index: int
    block_index: int
    payload: np.ndarray  # float64 samples

    @property
    def is_session_control(self) -> bool:
        return self.block_index in _SESSION_CTRL


@dataclass(frozen=True)
class CompareFrame:
    role: int
    session_id: int
    bit_index: int
    block_index: int
    u: np.ndarray
    i: np.ndarray


def _pack_header(role: int, session_id: int, bit_index: int, block_index: int, count: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, role, session_id, bit_index, block_index, count)


def pack_sample_frame(
    role: int, session_id: int, bit_index: int, block_index: int, payload=None
) -> bytes:
    data = np.asarray(payload if payload is not None else [], dtype="<f8")
    if data.size > 1024:
        raise ValueError("sample frame payload limited to 1024 samples")
    head = _pack_header(role, session_id, bit_index, block_index, data.size)
    body = head + data.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def parse_sample_frame(buf: bytes) -> SampleFrame:
    if len(buf) < _HEADER.size + 4:
        raise FrameError("short frame")
    magic, version, role, session_id, bit_index, block_index, count = _HEADER.unpack(
        buf[: _HEADER.size]
    )
    if magic != MAGIC:
        raise FrameError("bad magic")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    expect = _HEADER.size + 8 * count + 4
    if len(buf) != expect:
        raise FrameError("length mismatch", claimed=(bit_index, block_index))
    (crc,) = struct.unpack("<I", buf[-4:])
    if crc != zlib.crc32(buf[:-4]):
        raise FrameError("bad crc", claimed=(bit_index, block_index))
    payload = np.frombuffer(buf[_HEADER.size : -4], dtype="<f8").astype(float)
    return SampleFrame(role, session_id, bit_index, block_index, payload)


def pack_compare_frame(
    role: int, session_id: int, bit_index: int, block_index: int, u, i, key: bytes
) -> bytes:
    u = np.asarray(u, dtype="<f8")
    i = np.asarray(i, dtype="<f8")
    if u.size != i.size:
        raise ValueError("u and i must pair up")
    pairs = np.empty(2 * u.size, dtype="<f8")
    pairs[0::2] = u
    pairs[1::2] = i
    head = _pack_header(role, session_id, bit_index, block_index, u.size)
    body = head + pairs.tobytes()
    tag = hmac.new(key, body, hashlib.sha256).digest()
    return body + tag


def parse_compare_frame(buf: bytes, key: bytes) -> CompareFrame:
    if len(buf) < _HEADER.size + TAG_LEN:
        raise FrameError("short compare frame")
    magic, version, role, session_id, bit_index, block_index, count = _HEADER.unpack(
        buf[: _HEADER.size]
    )
    if magic != MAGIC or version != VERSION:
        raise FrameError("bad compare header")
    expect = _HEADER.size + 16 * count + TAG_LEN
    if len(buf) != expect:
        raise FrameError("compare length mismatch")
    body, tag = buf[:-TAG_LEN], buf[-TAG_LEN:]
    if not hmac.compare_digest(tag, hmac.new(key, body, hashlib.sha256).digest()):
        raise AuthError("authentication tag mismatch")
    pairs = np.frombuffer(buf[_HEADER.size : -TAG_LEN], dtype="<f8")
    return CompareFrame(
        role,
        session_id,
        bit_index,
        block_index,
        pairs[0::2].astype(float),
        pairs[1::2].astype(float),
    )


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        try:
            chunk = sock.recv(n - got)
        except socket.timeout as e:
            raise SessionAbort("timeout waiting for peer") from e
        if not chunk:
            raise SessionAbort("connection closed by peer")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class SampleLink:
    """Sample-frame link with CRC-checked selective retransmission.

    Recently sent frames are retained keyed by (bit, block); when the
    receiver rejects a corrupted frame it sends a NAK naming the claimed
    identity and the frame is resent.  `corrupt_every`, when set, flips
    one payload byte in every Nth outgoing data frame after the CRC is
    computed (test-only line-noise injection).
    """

    def __init__(self, sock: socket.socket, role: int, session_id: int):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock = sock
        self.role = role
        self.session_id = session_id
        self._history: OrderedDict[tuple[int, int], bytes] = OrderedDict()
        self.corrupt_every: int | None = None
        self._sent_count = 0
        self.retransmissions = 0

    def send(self, bit_index: int, block_index: int, payload=None) -> None:
        buf = pack_sample_frame(self.role, self.session_id, bit_index, block_index, payload)
        self._history[(bit_index, block_index)] = buf
        while len(self._history) > _HISTORY_LIMIT:
            self._history.popitem(last=False)
        self._sent_count += 1
        wire_buf = buf
        if (
            self.corrupt_every
            and payload is not None
            and len(payload) > 0
            and self._sent_count % self.corrupt_every == 0
        ):
            mutated = bytearray(buf)
            mutated[_HEADER.size] ^= 0xFF
            wire_buf = bytes(mutated)
        self.sock.sendall(wire_buf)

    def send_control(self, code: int, bit_index: int = 0) -> None:
        self.send(bit_index, code, None)

    def _read_raw(self) -> SampleFrame:
        head = _recv_exact(self.sock, _HEADER.size)
        magic, version, _, _, bit_index, block_index, count = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise FrameError("bad frame header")
        rest = _recv_exact(self.sock, 8 * count + 4)
        return parse_sample_frame(head + rest)

    def recv(self, max_recoveries: int = 32) -> SampleFrame:
        recoveries = 0
        while True:
            try:
                frame = self._read_raw()
            except FrameError as e:
                recoveries += 1
                if e.claimed is None or recoveries > max_recoveries:
                    raise SessionAbort(f"unrecoverable frame stream: {e}") from e
                bit, block = e.claimed
                self.send(bit, CTRL_NAK, np.array([float(block)]))
                continue
            if frame.block_index == CTRL_NAK:
                bit = frame.bit_index
                block = int(frame.payload[0])
                buf = self._history.get((bit, block))
                if buf is None:
                    raise SessionAbort(f"NAK for unknown frame ({bit}, {block})")
                self.retransmissions += 1
                self.sock.sendall(buf)
                continue
            if frame.block_index == CTRL_ABORT:
                raise SessionAbort("peer aborted the session")
            return frame


class CompareLink:
    """Authenticated compare link; tag failure is a MITM signal, not noise."""

    def __init__(self, sock: socket.socket, role: int, session_id: int, key: bytes):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock = sock
        self.role = role
        self.session_id = session_id
        self.key = key

    def send(self, bit_index: int, block_index: int, u, i) -> None:
        self.sock.sendall(
            pack_compare_frame(self.role, self.session_id, bit_index, block_index, u, i, self.key)
        )

    def recv(self) -> CompareFrame:
        head = _recv_exact(self.sock, _HEADER.size)
        magic, version, _, _, _, _, count = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise FrameError("bad compare header")
        rest = _recv_exact(self.sock, 16 * count + TAG_LEN)
        return parse_compare_frame(head + rest, self.key)


def _send_samples(link: SampleLink, bit_index: int, samples: np.ndarray) -> None:
    for block, start in enumerate(range(0, samples.size, SAMPLE_BLOCK)):
        link.send(bit_index, block, samples[start : start + SAMPLE_BLOCK])


def _recv_samples(link: SampleLink, bit_index: int, n: int) -> np.ndarray:
    """Reassemble one tick's data blocks, tolerating retransmission order."""
    out, _ = _recv_tick(link, bit_index, n, want_meta=False)
    return out


def _recv_tick(
    link: SampleLink, bit_index: int, n: int, want_meta: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Collect one tick's data blocks (and metadata frame, if expected).

    Retransmitted frames may arrive after later ones, so frames are placed
    by block index until the tick is complete, in any order.
    """
    out = np.empty(n)
    n_blocks = -(-n // SAMPLE_BLOCK)
    seen: set[int] = set()
    meta: np.ndarray | None = None
    while len(seen) < n_blocks or (want_meta and meta is None):
        frame = link.recv()
        if frame.is_session_control:
            if frame.block_index == CTRL_DONE:
                raise SessionAbort("peer finished early")
            raise SessionAbort(f"unexpected control frame {frame.block_index:#x}")
        if frame.bit_index != bit_index:
            raise SessionAbort(
                f"lockstep violation: bit {frame.bit_index} != expected {bit_index}"
            )
        if frame.block_index == CTRL_BITMETA:
            if not want_meta:
                raise SessionAbort("unexpected metadata frame")
            meta = frame.payload
            continue
        if frame.block_index >= n_blocks:
            raise SessionAbort(f"unexpected block {frame.block_index}")
        start = frame.block_index * SAMPLE_BLOCK
        out[start : start + frame.payload.size] = frame.payload
        seen.add(frame.block_index)
    return out, meta


def _exchange_compare(
    link: CompareLink, bit_index: int, u: np.ndarray, i: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Block-alternating bidirectional compare-data exchange.

    Sending and receiving strictly alternate per block so at most one
    frame per direction is in flight, which keeps socket buffers bounded
    regardless of the bit-period length.
    """
    n = u.size
    peer_u = np.empty(n)
    peer_i = np.empty(n)
    for block, start in enumerate(range(0, n, COMPARE_BLOCK)):
        sl = slice(start, min(start + COMPARE_BLOCK, n))
        link.send(bit_index, block, u[sl], i[sl])
        frame = link.recv()
        if frame.block_index == CTRL_ABORT:
            raise SessionAbort("peer aborted on compare link")
        if frame.bit_index != bit_index or frame.block_index != block:
            raise SessionAbort("compare lockstep violation")
        ps = frame.block_index * COMPARE_BLOCK
        peer_u[ps : ps + frame.u.size] = frame.u
        peer_i[ps : ps + frame.i.size] = frame.i
    return peer_u, peer_i


_CLASS_CODES = {Band.LOW: 0.0, Band.MIXED: 1.0, Band.HIGH: 2.0, None: 3.0}
_CODE_CLASSES = {0.0: Band.LOW, 1.0: Band.MIXED, 2.0: Band.HIGH, 3.0: None}


@dataclass
class PartyResult:
    """One party's view of a networked session."""

    role: int
    choices: np.ndarray
    sifted_indices: np.ndarray
    shared_key: np.ndarray
    alarms: list[AlarmEvent] = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""


def _connect(addr: tuple[str, int], timeout: float) -> socket.socket:
    # Retry briefly on refusal so peers may start in any order.
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection(addr, timeout=timeout)
            sock.settimeout(timeout)
            return sock
        except ConnectionRefusedError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.05)


def _listen_accept(addr: tuple[str, int], timeout: float, ready_cb=None) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(addr)
    srv.listen(1)
    srv.settimeout(timeout)
    if ready_cb is not None:
        ready_cb(srv.getsockname()[1])
    conn, _ = srv.accept()
    conn.settimeout(timeout)
    srv.close()
    return conn


def run_party(
    role: int,
    channel_addr: tuple[str, int],
    compare_addr: tuple[str, int],
    cfg: SessionConfig,
    auth_key: bytes,
    session_id: int = 0,
    master_seed: int | None = None,
    timeout: float = 5.0,
    abort_on_alarm: bool = True,
    compare_ready_cb=None,
    corrupt_every: int | None = None,
) -> PartyResult:
    """Run Alice (role 0) or Bob (role 1) against a live channel.

    Produces sifted keys bit-identical to :func:`kljn.protocol.run_session`
    with the same seed and parameters.  Alice listens on the compare
    address; Bob connects to it.
    """
    if role not in (ROLE_ALICE, ROLE_BOB):
        raise ValueError("role must be Alice (0) or Bob (1)")
    seed = cfg.noise.seed if master_seed is None else master_seed
    coin_tag = rng.ALICE_COIN if role == ROLE_ALICE else rng.BOB_COIN
    noise_tag = rng.ALICE_NOISE if role == ROLE_ALICE else rng.BOB_NOISE
    m = cfg.noise.samples_per_bit
    levels = expected_levels(cfg.resistors, cfg.noise)
    scale_u, scale_i = alarm_scales(levels)
    warm = warmup_samples(cfg)

    chan = SampleLink(_connect(channel_addr, timeout), role, session_id)
    chan.corrupt_every = corrupt_every
    chan.send_control(CTRL_HELLO)

    # The compare link comes up before the channel READY: the channel only
    # becomes ready once both parties are connected, so waiting for READY
    # first would deadlock against the peer's compare connect.
    if role == ROLE_ALICE:
        comp_sock = _listen_accept(compare_addr, timeout, compare_ready_cb)
    else:
        comp_sock = _connect(compare_addr, timeout)
    comp = CompareLink(comp_sock, role, session_id, auth_key)

    ready = chan.recv()
    if ready.block_index != CTRL_READY:
        raise SessionAbort("channel did not become ready")

    result = PartyResult(
        role=role,
        choices=np.zeros(cfg.n_bits, dtype=np.uint8),
        sifted_indices=np.array([], dtype=np.int64),
        shared_key=np.array([], dtype=np.uint8),
    )
    sifted: list[int] = []
    key_bits: list[int] = []

    try:
        for b in range(cfg.n_bits):
            my_bit = choice_bit(seed, coin_tag, b)
            result.choices[b] = my_bit
            r = cfg.resistors.r_high if my_bit else cfg.resistors.r_low
            u_src = party_noise(cfg.noise, seed, noise_tag, b, r)

            chan.send(b, CTRL_BITMETA, np.array([r]))
            _send_samples(chan, b, u_src)
            ends_flat = _recv_samples(chan, b, 2 * m)
            u_end = ends_flat[0::2]
            i_end = ends_flat[1::2]

            ms_u = float(np.mean(u_end[warm:] ** 2))
            ms_i = float(np.mean(i_end[warm:] ** 2))
            my_class = classify_party(ms_u, ms_i, levels, cfg.decision_stat)

            peer_u, peer_i = _exchange_compare(comp, b, u_end, i_end)
            comp.send(b, CTRL_CLASS, [_CLASS_CODES[my_class]], [0.0])
            class_frame = comp.recv()
            if class_frame.block_index == CTRL_ABORT:
                raise SessionAbort("peer aborted on compare link")
            if class_frame.block_index != CTRL_CLASS:
                raise SessionAbort("expected classification announcement")
            peer_class = _CODE_CLASSES.get(float(class_frame.u[0]))

            if role == ROLE_ALICE:
                ends = TraceEnds(
                    u_end_a=u_end,
                    u_end_b=peer_u,
                    i_a=i_end,
                    i_b=peer_i,
                    u_mid=u_end - i_end * cfg.wire.r_wire / 2.0,
                    dt=cfg.dt,
                )
            else:
                ends = TraceEnds(
                    u_end_a=peer_u,
                    u_end_b=u_end,
                    i_a=peer_i,
                    i_b=i_end,
                    u_mid=peer_u - peer_i * cfg.wire.r_wire / 2.0,
                    dt=cfg.dt,
                )
            events = check_alarm(ends, cfg.wire, cfg.alarm_tol_rel, scale_u, scale_i, b)
            if events:
                result.alarms.extend(events)
                if abort_on_alarm:
                    result.aborted = True
                    result.abort_reason = "model-consistency alarm"
                    chan.send_control(CTRL_ABORT)
                    comp.send(b, CTRL_ABORT, [], [])
                    break

            if my_class == Band.MIXED and peer_class == Band.MIXED:
                sifted.append(b)
                key_bits.append(my_bit if role == ROLE_BOB else 1 - my_bit)
    except AuthError:
        result.aborted = True
        result.abort_reason = "authentication failure (man-in-the-middle)"
        result.alarms.append(AlarmEvent(bit_index=len(sifted), sample_index=0, deviation=math.inf))
        try:
            chan.send_control(CTRL_ABORT)
        except OSError:
            pass
    except SessionAbort as e:
        result.aborted = True
        result.abort_reason = str(e)
    finally:
        chan.sock.close()
        comp.sock.close()

    result.sifted_indices = np.array(sifted, dtype=np.int64)
    result.shared_key = np.array(key_bits, dtype=np.uint8)
    return result


def _accept_roles(
    listen_addr: tuple[str, int],
    expected_roles: set[int],
    session_id: int,
    timeout: float,
    ready_cb,
) -> dict[int, SampleLink]:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(listen_addr)
    srv.listen(len(expected_roles))
    srv.settimeout(timeout)
    if ready_cb is not None:
        ready_cb(srv.getsockname()[1])
    links: dict[int, SampleLink] = {}
    try:
        while set(links) != expected_roles:
            conn, _ = srv.accept()
            conn.settimeout(timeout)
            probe = SampleLink(conn, ROLE_CHANNEL, session_id)
            hello = probe.recv()
            if hello.block_index != CTRL_HELLO or hello.session_id != session_id:
                conn.close()
                continue
            links[hello.role] = probe
    finally:
        srv.close()
    return links


def run_channel(
    listen_addr: tuple[str, int],
    cfg: SessionConfig,
    session_id: int = 0,
    eve_mode: str | None = None,
    timeout: float = 5.0,
    ready_cb=None,
) -> int:
    """Emulate the physical wire for one session; returns ticks served.

    Accepts Alice and Bob (and Eve when `eve_mode` is "tap" or "inject").
    Per tick it solves the loop from the parties' connected resistances
    and source samples and returns each party its own end measurements.
    The parties' resistor metadata never leaves this process.
    """
    if eve_mode is not None and eve_mode not in ("tap", "inject"):
        raise ValueError("eve_mode must be 'tap' or 'inject'")
    expected_roles = {ROLE_ALICE, ROLE_BOB}
    if eve_mode is not None:
        expected_roles.add(ROLE_EVE)
    links = _accept_roles(listen_addr, expected_roles, session_id, timeout, ready_cb)
    for link in links.values():
        link.send_control(CTRL_READY)

    m = cfg.noise.samples_per_bit
    dt = cfg.dt
    served = 0
    try:
        for b in range(cfg.n_bits):
            u_a, meta_a = _recv_tick(links[ROLE_ALICE], b, m, want_meta=True)
            r_a = float(meta_a[0])
            u_b, meta_b = _recv_tick(links[ROLE_BOB], b, m, want_meta=True)
            r_b = float(meta_b[0])

            i_inj = None
            if eve_mode == "inject":
                i_inj = _recv_samples(links[ROLE_EVE], b, m)

            ends = solve_nonideal(u_a, u_b, r_a, r_b, cfg.wire, dt, i_inject=i_inj)

            out_a = np.empty(2 * m)
            out_a[0::2] = ends.u_end_a
            out_a[1::2] = ends.i_a
            _send_samples(links[ROLE_ALICE], b, out_a)

            out_b = np.empty(2 * m)
            out_b[0::2] = ends.u_end_b
            out_b[1::2] = ends.i_b
            _send_samples(links[ROLE_BOB], b, out_b)

            if ROLE_EVE in links:
                tap = np.empty(2 * m)
                tap[0::2] = ends.u_mid
                tap[1::2] = 0.5 * (ends.i_a - ends.i_b)
                _send_samples(links[ROLE_EVE], b, tap)
            served += 1
        for link in links.values():
            link.send_control(CTRL_DONE)
    except (SessionAbort, OSError):
        for link in links.values():
            try:
                link.send_control(CTRL_ABORT)
            except OSError:
                pass
    finally:
        for link in links.values():
            link.sock.close()
    return served


def run_eve(
    channel_addr: tuple[str, int],
    cfg: SessionConfig,
    mode: str = "tap",
    amplitude: float = 0.0,
    session_id: int = 0,
    master_seed: int | None = None,
    waveform: str = "gaussian",
    timeout: float = 5.0,
) -> list[float]:
    """Attach Eve to the channel; returns her per-bit midpoint mean squares."""
    if mode not in ("tap", "inject"):
        raise ValueError("mode must be 'tap' or 'inject'")
    seed = cfg.noise.seed if master_seed is None else master_seed
    m = cfg.noise.samples_per_bit
    _, scale_i = alarm_scales(expected_levels(cfg.resistors, cfg.noise))

    link = SampleLink(_connect(channel_addr, timeout), ROLE_EVE, session_id)
    link.send_control(CTRL_HELLO)
    ready = link.recv()
    if ready.block_index != CTRL_READY:
        raise SessionAbort("channel did not become ready")

    ms_mid: list[float] = []
    try:
        for b in range(cfg.n_bits):
            if mode == "inject":
                inj = injection_current(cfg, seed, b, amplitude, waveform, scale_i)
                _send_samples(link, b, inj)
            tap = _recv_samples(link, b, 2 * m)
            ms_mid.append(float(np.mean(tap[0::2] ** 2)))
    except SessionAbort:
        pass
    finally:
        link.sock.close()
    return ms_mid


def run_splitter(
    listen_addr: tuple[str, int],
    cfg: SessionConfig,
    session_id: int = 0,
    master_seed: int | None = None,
    timeout: float = 5.0,
    ready_cb=None,
) -> int:
    """Man-in-the-middle channel: two independent terminations.

    Eve accepts both parties in place of the honest channel and terminates
    each side with her own resistor and generator.  The parties' direct
    compare link immediately exposes the mismatch; returns the number of
    ticks completed before the parties aborted.
    """
    seed = cfg.noise.seed if master_seed is None else master_seed
    m = cfg.noise.samples_per_bit
    dt = cfg.dt
    rl, rh = cfg.resistors.r_low, cfg.resistors.r_high

    links = _accept_roles(listen_addr, {ROLE_ALICE, ROLE_BOB}, session_id, timeout, ready_cb)
    for link in links.values():
        link.send_control(CTRL_READY)

    ticks = 0
    try:
        for b in range(cfg.n_bits):
            loops = {}
            for role, noise_tag in ((ROLE_ALICE, rng.EVE_NOISE_A), (ROLE_BOB, rng.EVE_NOISE_B)):
                u_party, meta = _recv_tick(links[role], b, m, want_meta=True)
                r_party = float(meta[0])
                eve_bit = int(rng.stream(seed, rng.EVE_COIN, b).integers(0, 2, size=2)[role])
                r_eve = rh if eve_bit else rl
                u_eve = party_noise(cfg.noise, seed, noise_tag, b, r_eve)
                loops[role] = solve_ideal(u_party, u_eve, r_party, r_eve, dt)

            for role in (ROLE_ALICE, ROLE_BOB):
                out = np.empty(2 * m)
                out[0::2] = loops[role].u_ch
                out[1::2] = loops[role].i_ch
                _send_samples(links[role], b, out)
            ticks += 1
    except (SessionAbort, OSError):
        pass
    finally:
        for link in links.values():
            link.sock.close()
    return ticks


def parse_hostport(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not port:
        raise ValueError(f"expected host:port, got {text!r}")
    return (host or "127.0.0.1", int(port))
