"""
Tiered control network: server -> controllers -> panels, plus endpoint feedback.

Messages travel as newline-terminated text records::

    SetLength src=server dst=controller0 panel_id=1 roll_id=12 target_mm=65 epoch=42

The first token names the record kind, the rest are ``key=value`` pairs.
Strings are percent-encoded, floats use ``repr`` so they survive exactly.
Unknown keys are ignored when decoding.

Every node runs its own thread and only talks through a ``Transport``.
Measurement windows come from the simulated environment (``World``), not
from a protocol message: endpoints push ``RssiFeedback`` whenever the
environment they sit in says the surface has settled.
"""

import logging
import queue
import socket
import threading
import time
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
from urllib.parse import quote, unquote

import numpy as np

from actuation import ActuationLog, MotorSpec, from_mm, quantize_length, record_move, to_mm
from control import (
    MeasurementPolicy,
    RssiReport,
    SurfaceDriver,
    draw_samples,
    enumerate_sweep,
    group_sweep,
    link_rng,
    true_rssi,
)
from errors import ConsistencyError, DecodeError, DomainError, FeedbackTimeout
from scene import Link, Scene, SurfaceConfig

logger = logging.getLogger(__name__)

SERVER = 'server'
ROLES = ('server', 'controller', 'panel', 'endpoint')


# ---------------------------------------------------------------------------
# Messages

@dataclass(frozen=True)
class SetLength:
    panel_id: int
    roll_id: int
    target_mm: int
    epoch: int


@dataclass(frozen=True)
class Ack:
    panel_id: int
    roll_id: int
    epoch: int
    actual_mm: int


@dataclass(frozen=True)
class RssiFeedback:
    link_id: str
    value_dbm: float
    epoch: int
    seq: int


@dataclass(frozen=True)
class Hello:
    node_id: str
    role: str


@dataclass(frozen=True)
class Error:
    code: str
    detail: str


Message = Union[SetLength, Ack, RssiFeedback, Hello, Error]
MESSAGE_TYPES = {cls.__name__: cls for cls in (SetLength, Ack, RssiFeedback, Hello, Error)}
# Only actuation traffic crosses the lossy panel radio.
LOSSY_TYPES = (SetLength, Ack)


@dataclass(frozen=True)
class Envelope:
    src: str
    dst: str
    message: Message


def _format(value) -> str:
    if isinstance(value, str):
        return quote(value, safe='')
    if isinstance(value, float):
        return repr(value)
    return str(int(value))


def _record(kind: str, pairs: Sequence[Tuple[str, object]]) -> bytes:
    body = ' '.join([kind] + [f"{k}={_format(v)}" for k, v in pairs])
    return (body + '\n').encode('ascii')


def encode(msg: Message) -> bytes:
    return _record(type(msg).__name__, [(f.name, getattr(msg, f.name)) for f in fields(msg)])


def encode_envelope(src: str, dst: str, msg: Message) -> bytes:
    pairs = [('src', src), ('dst', dst)] + [(f.name, getattr(msg, f.name)) for f in fields(msg)]
    return _record(type(msg).__name__, pairs)


def _parse(data: bytes) -> Tuple[str, Dict[str, Tuple[str, int]], int]:
    if not data.endswith(b'\n'):
        raise DecodeError("truncated record (no newline)", len(data))
    body = data[:-1]
    if b'\n' in body:
        raise DecodeError("more than one record", body.index(b'\n'))
    try:
        text = body.decode('ascii')
    except UnicodeDecodeError as e:
        raise DecodeError("non-ASCII byte in record", e.start) from e

    parts = text.split(' ')
    kind = parts[0]
    if kind not in MESSAGE_TYPES:
        raise DecodeError(f"unknown record kind {kind!r}", 0)
    values: Dict[str, Tuple[str, int]] = {}
    pos = len(kind) + 1
    for part in parts[1:]:
        if part:
            key, sep, raw = part.partition('=')
            if not sep or not key:
                raise DecodeError(f"malformed field {part!r}", pos)
            values[key] = (raw, pos + len(key) + 1)
        pos += len(part) + 1
    return kind, values, len(body)


def _convert(kind: str, values: Dict[str, Tuple[str, int]], end: int) -> Message:
    cls = MESSAGE_TYPES[kind]
    kwargs = {}
    for f in fields(cls):
        if f.name not in values:
            raise DecodeError(f"{kind} record missing field '{f.name}'", end)
        raw, offset = values[f.name]
        try:
            if f.type is str:
                kwargs[f.name] = unquote(raw, errors='strict')
            elif f.type is float:
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = int(raw)
        except (ValueError, UnicodeDecodeError) as e:
            raise DecodeError(f"bad value for '{f.name}': {raw!r}", offset) from e
    return cls(**kwargs)


def decode(data: bytes) -> Message:
    """
    Parse one record.

    Raises:
        DecodeError: malformed record, with the byte offset of the problem
    """
    kind, values, end = _parse(data)
    return _convert(kind, values, end)


def decode_envelope(data: bytes) -> Envelope:
    kind, values, end = _parse(data)
    try:
        src = unquote(values['src'][0])
        dst = unquote(values['dst'][0])
    except KeyError as e:
        raise DecodeError(f"record missing routing field {e}", end) from e
    return Envelope(src, dst, _convert(kind, values, end))


def replay_capture(path: Union[str, Path]) -> List[Envelope]:
    """Read back a traffic capture written by a transport."""
    with open(path, 'rb') as f:
        return [decode_envelope(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# Transports

class Transport(ABC):
    """
    Carries encoded envelopes between registered nodes.

    Latency is ``latency_ms`` plus uniform jitter up to ``jitter_ms``.
    SetLength and Ack records are dropped with probability ``loss``.
    """

    kind = 'abstract'

    def __init__(self, latency_ms: float = 0.0, jitter_ms: float = 0.0, loss: float = 0.0,
                 seed: int = 0, capture: Optional[Union[str, Path]] = None):
        if latency_ms < 0 or jitter_ms < 0 or not 0.0 <= loss < 1.0:
            raise DomainError(f"Bad transport model latency={latency_ms} jitter={jitter_ms} loss={loss}")
        self.latency_ms = latency_ms
        self.jitter_ms = jitter_ms
        self.loss = loss
        self.seed = seed
        self.inboxes: Dict[str, queue.Queue] = {}
        self.sent = 0
        self.dropped = 0
        self._rngs: Dict[str, np.random.Generator] = {}
        self._lock = threading.Lock()
        self._closed = False
        self._capture = open(capture, 'ab') if capture else None

    def retry_interval(self, floor: float = 0.05) -> float:
        return max(floor, 2.0 * (self.latency_ms + self.jitter_ms) / 1000.0)

    def register(self, node_id: str) -> queue.Queue:
        inbox = queue.Queue()
        self.inboxes[node_id] = inbox
        return inbox

    def _rng(self, src: str) -> np.random.Generator:
        if src not in self._rngs:
            self._rngs[src] = np.random.default_rng([self.seed, zlib.crc32(src.encode())])
        return self._rngs[src]

    def send(self, src: str, dst: str, msg: Message):
        data = encode_envelope(src, dst, msg)
        with self._lock:
            if self._closed:
                return
            self.sent += 1
            if self._capture:
                self._capture.write(data)
            rng = self._rng(src)
            lost = isinstance(msg, LOSSY_TYPES) and self.loss > 0 and rng.random() < self.loss
            delay = self.latency_ms + (rng.uniform(0.0, self.jitter_ms) if self.jitter_ms > 0 else 0.0)
            if lost:
                self.dropped += 1
        if lost:
            logger.debug(f"dropped {type(msg).__name__} {src} -> {dst}")
            return
        if delay > 0:
            timer = threading.Timer(delay / 1000.0, self._deliver, args=(src, dst, data))
            timer.daemon = True
            timer.start()
        else:
            self._deliver(src, dst, data)

    def _hand_to(self, data: bytes):
        try:
            envelope = decode_envelope(data)
        except DecodeError as e:
            logger.error(f"Dropping malformed record: {e}")
            return
        inbox = self.inboxes.get(envelope.dst)
        if inbox is None:
            logger.warning(f"No node '{envelope.dst}' registered; dropping {type(envelope.message).__name__}")
            return
        inbox.put(envelope)

    def start(self):
        pass

    def close(self):
        with self._lock:
            self._closed = True
            if self._capture:
                self._capture.close()
                self._capture = None
        for inbox in self.inboxes.values():
            inbox.put(None)

    @abstractmethod
    def _deliver(self, src: str, dst: str, data: bytes):
        """Move one encoded envelope towards ``dst``."""


class InProcessTransport(Transport):
    """Queues between threads; records still go through the codec."""

    kind = 'inproc'

    def _deliver(self, src, dst, data):
        if not self._closed:
            self._hand_to(data)


class SocketTransport(Transport):
    """
    Loopback TCP: one router socket, one client connection per node.

    A node's first record registers it with the router, which echoes it back
    before the node is considered attached.
    """

    kind = 'socket'

    def __init__(self, host: str = '127.0.0.1', port: int = 0, **kwargs):
        super().__init__(**kwargs)
        self.host = host
        self.port = port
        self._listener: Optional[socket.socket] = None
        self._routes: Dict[str, socket.socket] = {}
        self._route_locks: Dict[str, threading.Lock] = {}
        self._clients: Dict[str, socket.socket] = {}
        self._client_locks: Dict[str, threading.Lock] = {}
        self._threads: List[threading.Thread] = []

    def start(self):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((self.host, self.port))
        self._listener.listen()
        self.port = self._listener.getsockname()[1]
        self._spawn(self._accept_loop, 'router-accept')
        logger.info(f"Router listening on {self.host}:{self.port}")

    def _spawn(self, target, name, *args):
        thread = threading.Thread(target=target, args=args, name=name, daemon=True)
        thread.start()
        self._threads.append(thread)

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._spawn(self._route_loop, 'router-conn', conn)

    @staticmethod
    def _lines(sock: socket.socket):
        buffer = b''
        while True:
            try:
                chunk = sock.recv(65536)
            except OSError:
                return
            if not chunk:
                return
            buffer += chunk
            while b'\n' in buffer:
                line, buffer = buffer.split(b'\n', 1)
                yield line + b'\n'

    def _route_loop(self, conn: socket.socket):
        node_id = None
        for line in self._lines(conn):
            try:
                envelope = decode_envelope(line)
            except DecodeError as e:
                logger.error(f"Router dropping malformed record: {e}")
                continue
            if node_id is None:
                node_id = envelope.src
                self._routes[node_id] = conn
                self._route_locks[node_id] = threading.Lock()
                conn.sendall(line)
                continue
            target = self._routes.get(envelope.dst)
            if target is None:
                logger.warning(f"Router has no route to '{envelope.dst}'")
                continue
            try:
                with self._route_locks[envelope.dst]:
                    target.sendall(line)
            except OSError as e:
                logger.warning(f"Router failed forwarding to '{envelope.dst}': {e}")

    def register(self, node_id: str) -> queue.Queue:
        if self._listener is None:
            self.start()
        inbox = super().register(node_id)
        client = socket.create_connection((self.host, self.port))
        client.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        hello = encode_envelope(node_id, 'router', Hello(node_id, 'attach'))
        client.sendall(hello)
        echoed = b''
        while not echoed.endswith(b'\n'):
            chunk = client.recv(1)
            if not chunk:
                raise ConsistencyError(f"Router closed the connection while attaching '{node_id}'")
            echoed += chunk
        self._clients[node_id] = client
        self._client_locks[node_id] = threading.Lock()
        self._spawn(self._reader_loop, f"reader-{node_id}", client)
        return inbox

    def _reader_loop(self, client: socket.socket):
        for line in self._lines(client):
            if self._closed:
                return
            self._hand_to(line)

    def _deliver(self, src, dst, data):
        if self._closed:
            return
        client = self._clients.get(src)
        if client is None:
            logger.warning(f"Node '{src}' is not attached; dropping record")
            return
        try:
            with self._client_locks[src]:
                client.sendall(data)
        except OSError as e:
            logger.warning(f"Send from '{src}' failed: {e}")

    def close(self):
        super().close()
        for sock in list(self._clients.values()) + list(self._routes.values()):
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()
        if self._listener is not None:
            self._listener.close()


def make_transport(kind: str, latency_ms: float = 0.0, jitter_ms: float = 0.0, loss: float = 0.0,
                   seed: int = 0, capture: Optional[Union[str, Path]] = None,
                   host: str = '127.0.0.1', port: int = 0) -> Transport:
    if kind == 'inproc':
        return InProcessTransport(latency_ms=latency_ms, jitter_ms=jitter_ms, loss=loss, seed=seed, capture=capture)
    if kind == 'socket':
        return SocketTransport(host, port, latency_ms=latency_ms, jitter_ms=jitter_ms, loss=loss,
                               seed=seed, capture=capture)
    raise DomainError(f"Unknown transport '{kind}' (expected inproc or socket)")


# ---------------------------------------------------------------------------
# Panel behaviour

@dataclass
class PanelState:
    """Roll lengths as one panel's motors know them."""

    panel_id: int
    lengths: Dict[int, float]
    bounds: Dict[int, Tuple[float, float]]
    motor: MotorSpec = MotorSpec()
    log: ActuationLog = field(default_factory=ActuationLog)
    last_epoch: int = -1
    applied: Dict[int, int] = field(default_factory=dict)

    @classmethod
    def for_panel(cls, scene: Scene, panel_id: int, motor: MotorSpec = MotorSpec()) -> 'PanelState':
        panel = scene.panel(panel_id)
        return cls(
            panel_id,
            {r.id: quantize_length(r.exposed_length, motor.min_step) for r in panel.rolls},
            {r.id: r.length_bounds for r in panel.rolls},
            motor,
        )


def panel_loop(state: PanelState, inbound: Sequence[Message]) -> List[Message]:
    """
    Apply SetLength commands in order and answer each one.

    A repeat of the last command a roll applied is acknowledged again
    without moving. Epochs older than the newest applied one are refused as
    stale. Only the last epoch per roll is remembered.
    """
    out: List[Message] = []
    for msg in inbound:
        if not isinstance(msg, SetLength):
            continue
        if state.applied.get(msg.roll_id) == msg.epoch:
            out.append(Ack(state.panel_id, msg.roll_id, msg.epoch, to_mm(state.lengths[msg.roll_id])))
            continue
        if msg.epoch < state.last_epoch:
            out.append(Error('stale', f"panel {state.panel_id} roll {msg.roll_id} epoch {msg.epoch} < {state.last_epoch}"))
            continue
        if msg.roll_id not in state.lengths:
            out.append(Error('unknown-roll', f"panel {state.panel_id} has no roll {msg.roll_id}"))
            continue
        target = quantize_length(from_mm(msg.target_mm), state.motor.min_step)
        low, high = state.bounds[msg.roll_id]
        if not low - 1e-12 <= target <= high + 1e-12:
            out.append(Error('bounds', f"panel {state.panel_id} roll {msg.roll_id} target {msg.target_mm} mm "
                                       f"outside [{to_mm(low)}, {to_mm(high)}] mm"))
            continue
        record_move(state.log, msg.roll_id, state.lengths[msg.roll_id], target, state.motor)
        state.lengths[msg.roll_id] = target
        state.last_epoch = msg.epoch
        state.applied[msg.roll_id] = msg.epoch
        out.append(Ack(state.panel_id, msg.roll_id, msg.epoch, to_mm(target)))
    return out


# ---------------------------------------------------------------------------
# Simulated environment

class World:
    """
    The physical surface the nodes share.

    Panels write roll lengths into it; endpoints read the channel from it
    when a measurement window opens.
    """

    def __init__(self, scene: Scene, min_step: float = 0.001):
        self.scene = scene.copy()
        for roll in self.scene.rolls:
            roll.exposed_length = quantize_length(roll.exposed_length, min_step)
        self._lock = threading.Lock()
        self._windows: List[queue.Queue] = []

    def set_length(self, roll_id: int, length: float):
        with self._lock:
            self.scene.roll(roll_id).exposed_length = length

    def rssi(self, link: Link, policy: MeasurementPolicy) -> float:
        with self._lock:
            return true_rssi(link, self.scene, self.scene.current_config(), policy)

    def subscribe(self) -> queue.Queue:
        events = queue.Queue()
        self._windows.append(events)
        return events

    def open_window(self, epoch: int):
        for events in self._windows:
            events.put(epoch)

    def close(self):
        for events in self._windows:
            events.put(None)


# ---------------------------------------------------------------------------
# Nodes

def panel_node_id(panel_id: int) -> str:
    return f"panel{panel_id}"


def controller_node_id(index: int) -> str:
    return f"controller{index}"


def endpoint_node_id(link: Link) -> str:
    return f"endpoint-{link.id}"


def _say_hello(transport: Transport, node_id: str, role: str):
    transport.send(node_id, SERVER, Hello(node_id, role))


def run_panel_node(transport: Transport, inbox: queue.Queue, state: PanelState, world: World, controller: str):
    node_id = panel_node_id(state.panel_id)
    _say_hello(transport, node_id, 'panel')
    while True:
        envelope = inbox.get()
        if envelope is None:
            break
        replies = panel_loop(state, [envelope.message])
        for reply in replies:
            if isinstance(reply, Ack):
                world.set_length(reply.roll_id, state.lengths[reply.roll_id])
            transport.send(node_id, controller, reply)


def run_controller_node(transport: Transport, inbox: queue.Queue, node_id: str):
    """Forward commands down to panels and answers up to the server; queue without bound."""
    _say_hello(transport, node_id, 'controller')
    while True:
        envelope = inbox.get()
        if envelope is None:
            break
        depth = inbox.qsize()
        if depth:
            logger.debug(f"{node_id} queue depth {depth}")
        msg = envelope.message
        if isinstance(msg, SetLength):
            transport.send(node_id, panel_node_id(msg.panel_id), msg)
        elif isinstance(msg, (Ack, Error)):
            transport.send(node_id, SERVER, msg)


def run_endpoint_node(transport: Transport, events: queue.Queue, world: World, link: Link,
                      policy: MeasurementPolicy, rng: np.random.Generator):
    """Push ``samples_per_point`` reports each time a measurement window opens."""
    node_id = endpoint_node_id(link)
    _say_hello(transport, node_id, 'endpoint')
    seq = 0
    while True:
        epoch = events.get()
        if epoch is None:
            break
        for sample in draw_samples(world.rssi(link, policy), policy, rng):
            seq += 1
            transport.send(node_id, SERVER, RssiFeedback(link.id, sample, epoch, seq))


class DistributedSurface(SurfaceDriver):
    """Surface driver whose commands and feedback cross a ``Transport``."""

    def __init__(self, scene: Scene, links: Sequence[Link], policy: MeasurementPolicy,
                 motor: MotorSpec, transport: Transport, world: World, inbox: queue.Queue,
                 controller_of: Dict[int, str], feedback_timeout_s: float = 5.0,
                 max_retries: int = 5, retry_floor_s: float = 0.05):
        super().__init__(scene, links, policy, motor)
        self.transport = transport
        self.world = world
        self.inbox = inbox
        self.panel_of = {roll.id: roll.panel_id for roll in scene.rolls}
        self.controller_of = controller_of
        self.feedback_timeout_s = feedback_timeout_s
        self.max_retries = max_retries
        self.retry_interval = transport.retry_interval(retry_floor_s)
        self.retries = 0
        self._early: List[RssiReport] = []

    def _next(self, timeout: float):
        envelope = self.inbox.get(timeout=timeout)
        if envelope is None:
            raise ConsistencyError("Transport closed during a run")
        return envelope.message

    def _send_command(self, command: SetLength):
        self.transport.send(SERVER, self.controller_of[command.panel_id], command)

    def _actuate(self, moves, epoch):
        pending = {
            rid: SetLength(self.panel_of[rid], rid, to_mm(stop), epoch)
            for rid, (_, stop) in moves.items()
        }
        attempts = {rid: 0 for rid in pending}
        for command in pending.values():
            self._send_command(command)
        while pending:
            try:
                msg = self._next(self.retry_interval)
            except queue.Empty:
                for rid, command in pending.items():
                    attempts[rid] += 1
                    if attempts[rid] > self.max_retries:
                        raise FeedbackTimeout(panel_node_id(command.panel_id),
                                              f"roll {rid} unacknowledged after {self.max_retries} retries")
                    self.retries += 1
                    logger.warning(f"Retrying SetLength roll {rid} epoch {epoch} (attempt {attempts[rid]})")
                    self._send_command(command)
                continue
            if isinstance(msg, Ack):
                if msg.epoch == epoch and msg.roll_id in pending:
                    del pending[msg.roll_id]
            elif isinstance(msg, RssiFeedback):
                self._early.append(RssiReport(msg.link_id, msg.value_dbm, msg.epoch, msg.seq))
            elif isinstance(msg, Error):
                if msg.code == 'stale':
                    logger.warning(f"Panel refused stale command: {msg.detail}")
                else:
                    raise ConsistencyError(f"Panel rejected command ({msg.code}): {msg.detail}")

    def _collect(self, epoch):
        reports, self._early = self._early, []
        needed = self.policy.samples_per_point
        counts = {link.id: 0 for link in self.links}
        for report in reports:
            if report.epoch == epoch and report.link_id in counts:
                counts[report.link_id] += 1
        self.world.open_window(epoch)
        deadline = time.monotonic() + self.feedback_timeout_s
        while any(c < needed for c in counts.values()):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                silent = next(l for l in self.links if counts[l.id] < needed)
                raise FeedbackTimeout(endpoint_node_id(silent),
                                      f"{counts[silent.id]}/{needed} reports for epoch {epoch}")
            try:
                msg = self._next(remaining)
            except queue.Empty:
                continue
            if isinstance(msg, RssiFeedback):
                reports.append(RssiReport(msg.link_id, msg.value_dbm, msg.epoch, msg.seq))
                if msg.epoch == epoch and msg.link_id in counts:
                    counts[msg.link_id] += 1
        return reports


ALGORITHMS: Dict[str, Callable] = {'enumerate': enumerate_sweep, 'group': group_sweep}


def run_distributed(scene: Scene, links: Sequence[Link], algorithm: str = 'group',
                    transport: Optional[Transport] = None,
                    policy: MeasurementPolicy = MeasurementPolicy(), motor: MotorSpec = MotorSpec(),
                    seed: int = 0, panels_per_controller: int = 4, feedback_timeout_s: float = 5.0,
                    max_retries: int = 5, retry_floor_s: float = 0.05,
                    **algorithm_kwargs) -> Tuple[SurfaceConfig, ActuationLog]:
    """
    Run ``enumerate`` or ``group`` with every command and report on ``transport``.

    Noise streams and quantization match ``LocalSurface``, so a lossless,
    zero-latency transport reproduces the in-process result exactly.

    Raises:
        FeedbackTimeout: a node stayed silent; names that node
    """
    if algorithm not in ALGORITHMS:
        raise DomainError(f"Unknown algorithm '{algorithm}' (expected one of {sorted(ALGORITHMS)})")
    links = list(links)
    transport = transport or InProcessTransport(seed=seed)
    transport.start()
    world = World(scene, motor.min_step)
    server_inbox = transport.register(SERVER)

    panel_ids = sorted(p.id for p in scene.panels)
    controller_of = {pid: controller_node_id(i // panels_per_controller) for i, pid in enumerate(panel_ids)}
    threads: List[threading.Thread] = []

    def spawn(target, name, *args):
        thread = threading.Thread(target=target, args=args, name=name, daemon=True)
        threads.append(thread)

    for node_id in sorted(set(controller_of.values())):
        spawn(run_controller_node, node_id, transport, transport.register(node_id), node_id)
    for pid in panel_ids:
        state = PanelState.for_panel(world.scene, pid, motor)
        spawn(run_panel_node, panel_node_id(pid), transport, transport.register(panel_node_id(pid)),
              state, world, controller_of[pid])
    for i, link in enumerate(links):
        transport.register(endpoint_node_id(link))
        spawn(run_endpoint_node, endpoint_node_id(link), transport, world.subscribe(), world, link,
              policy, link_rng(seed, i))

    try:
        for thread in threads:
            thread.start()
        expected = len(threads)
        greeted = set()
        deadline = time.monotonic() + feedback_timeout_s
        while len(greeted) < expected:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise FeedbackTimeout('handshake', f"{len(greeted)}/{expected} nodes said hello")
            try:
                envelope = server_inbox.get(timeout=remaining)
            except queue.Empty:
                continue
            if envelope is not None and isinstance(envelope.message, Hello):
                greeted.add(envelope.message.node_id)
        logger.info(f"All {expected} nodes attached over {transport.kind} transport")

        driver = DistributedSurface(scene, links, policy, motor, transport, world, server_inbox, controller_of,
                                    feedback_timeout_s, max_retries, retry_floor_s)
        config, log = ALGORITHMS[algorithm](links, scene, policy, motor=motor, seed=seed, driver=driver,
                                            **algorithm_kwargs)
        logger.info(f"Distributed {algorithm} finished: {transport.sent} records, {transport.dropped} dropped, "
                    f"{driver.retries} retries")
        return config, log
    finally:
        world.close()
        transport.close()
        for thread in threads:
            thread.join(timeout=2.0)
