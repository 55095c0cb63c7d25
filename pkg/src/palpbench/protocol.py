"""Line-based serial contract between host and motion controller.

Wire format: ASCII lines terminated by ``\\n``, numeric args with 3 decimal
places. Host -> device::

    MOV <x> <y>      move the XY stages
    PALP <depth> <limit>   palpate at the current point
    FRC?             read the force sensor
    POS?             read the stage pose
    HOME             home all axes
    STOP             abort and return to IDLE

Device -> host::

    OK <echo...>                 terminal success
    ERR <CODE> <detail...>       terminal failure
    F <newtons>                  FRC? reply (4 decimals)
    P <x> <y> <z>                POS? reply
    D <disp> <force>             streamed palpation sample (then OK)

The device is a state machine (IDLE/MOVING/PALPATING/FAULT); anything but
STOP/POS?/FRC? is refused with ``ERR BUSY`` while not IDLE. A transcript log
uses ``>`` for host lines and ``<`` for device lines, each prefixed with a
monotonic microsecond timestamp.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field, replace
from enum import Enum

from .rig import NoPhantomError, RigError, RigSimulator, StagePose, TravelLimitError

MAX_LINE_BYTES = 64

VERB_ARITY = {
    "MOV": 2,
    "PALP": 2,
    "FRC?": 0,
    "POS?": 0,
    "HOME": 0,
    "STOP": 0,
}


class ProtocolError(Exception):
    """Base for wire-format violations; kind distinguishes rejection causes."""

    kind = "protocol"


class ArityError(ProtocolError):
    kind = "arity"


class UnknownVerbError(ProtocolError):
    kind = "unknown-verb"


class LineTooLongError(ProtocolError):
    kind = "line-too-long"


class BadNumberError(ProtocolError):
    kind = "bad-number"


class FramingError(ProtocolError):
    kind = "framing"


class TransportClosed(Exception):
    pass


class TransactTimeout(Exception):
    pass


class DeviceFault(Exception):
    """Terminal ERR reply, mapped to a typed host-side error."""

    def __init__(self, code, detail=""):
        self.code = code
        self.detail = detail
        super().__init__(f"ERR {code} {detail}".strip())


@dataclass(frozen=True)
class Command:
    verb: str
    args: tuple = ()

    def __post_init__(self):
        if self.verb not in VERB_ARITY:
            raise UnknownVerbError(f"unknown verb {self.verb!r}")
        if len(self.args) != VERB_ARITY[self.verb]:
            raise ArityError(
                f"{self.verb} takes {VERB_ARITY[self.verb]} args, got {len(self.args)}"
            )
        for a in self.args:
            if not math.isfinite(a):
                raise BadNumberError(f"non-finite argument {a!r}")


class DeviceMode(Enum):
    IDLE = "IDLE"
    MOVING = "MOVING"
    PALPATING = "PALPATING"
    FAULT = "FAULT"


@dataclass(frozen=True)
class DeviceState:
    pose: StagePose = StagePose(0.0, 0.0, 0.0)
    mode: DeviceMode = DeviceMode.IDLE
    last_force: float = 0.0


def encode(cmd: Command) -> bytes:
    """Render a command as its wire line; inverse of parse."""
    parts = [cmd.verb] + [f"{a:.3f}" for a in cmd.args]
    return (" ".join(parts) + "\n").encode("ascii")


def parse(line: bytes) -> Command:
    """Parse one wire line. Tolerates repeated spaces; rejects everything else.

    Raises a distinct ProtocolError subclass per rejection kind so fuzz
    harnesses can assert no other exception type ever escapes.
    """
    if len(line) > MAX_LINE_BYTES:
        raise LineTooLongError(f"line of {len(line)} bytes exceeds {MAX_LINE_BYTES}")
    try:
        text = line.decode("ascii")
    except UnicodeDecodeError as e:
        raise FramingError(f"non-ASCII byte at offset {e.start}") from None
    if text.endswith("\n"):
        text = text[:-1]
    if "\n" in text or "\r" in text or "\x00" in text:
        raise FramingError("embedded control character")
    tokens = text.split()
    if not tokens:
        raise FramingError("empty line")
    verb = tokens[0]
    if verb not in VERB_ARITY:
        raise UnknownVerbError(f"unknown verb {verb!r}")
    args = []
    for tok in tokens[1:]:
        try:
            value = float(tok)
        except ValueError:
            raise BadNumberError(f"bad numeric argument {tok!r}") from None
        if not math.isfinite(value):
            raise BadNumberError(f"non-finite argument {tok!r}")
        args.append(value)
    if len(args) != VERB_ARITY[verb]:
        raise ArityError(f"{verb} takes {VERB_ARITY[verb]} args, got {len(args)}")
    return Command(verb=verb, args=tuple(args))


def device_step(state: DeviceState, cmd: Command, sim: RigSimulator):
    """Apply one command to the device; returns (new_state, response lines).

    MOV/PALP delegate to the simulator and reply ``OK <echo>`` on completion
    (the virtual clock makes them synchronous). PALP interleaves ``D`` sample
    lines before its terminal OK so the host sees force in real time. STOP is
    honored from any mode and always lands in IDLE.
    """
    busy = state.mode not in (DeviceMode.IDLE,)
    if cmd.verb == "STOP":
        return replace(state, mode=DeviceMode.IDLE), ["OK STOP"]
    if cmd.verb == "POS?":
        p = state.pose
        return state, [f"P {p.x:.3f} {p.y:.3f} {p.z:.3f}"]
    if cmd.verb == "FRC?":
        return state, [f"F {state.last_force:.4f}"]
    if busy:
        return state, [f"ERR BUSY device is {state.mode.value}"]

    if cmd.verb == "HOME":
        sim.home()
        return replace(state, pose=sim.pose, mode=DeviceMode.IDLE), ["OK HOME"]

    if cmd.verb == "MOV":
        x, y = cmd.args
        try:
            pose = sim.move_to(x, y)
        except TravelLimitError as e:
            return state, [f"ERR LIMIT {e.axis} max {e.clamped:.3f}"]
        return replace(state, pose=pose), [f"OK MOV {x:.3f} {y:.3f}"]

    if cmd.verb == "PALP":
        depth, limit = cmd.args
        try:
            record = sim.palpate(max_depth=depth, force_limit=limit)
        except NoPhantomError as e:
            return replace(state, mode=DeviceMode.FAULT), [f"ERR NOSAMPLE {e}"]
        except (RigError, ValueError) as e:
            return state, [f"ERR ARG {e}"]
        lines = [f"D {d:.3f} {f:.4f}" for d, f in record.force_series]
        lines.append(f"OK PALP {depth:.3f}")
        peak = record.peak_force
        return replace(state, pose=sim.pose, last_force=peak), lines

    return state, [f"ERR VERB {cmd.verb}"]  # unreachable for valid commands


def device_handle_line(state: DeviceState, line: bytes, sim: RigSimulator):
    """Parse + step; malformed input never crashes or moves the stage."""
    try:
        cmd = parse(line)
    except ProtocolError as e:
        return state, [f"ERR PARSE {e.kind}"]
    return device_step(state, cmd, sim)


def _to_wire(reply: str) -> bytes:
    """Clamp a reply to printable ASCII + newline (the device's byte alphabet)."""
    raw = reply.encode("ascii", "replace")
    return bytes(b if 0x20 <= b <= 0x7E else ord("?") for b in raw) + b"\n"


class DeviceEmulator:
    """Device-side endpoint: feed it host lines, read back response lines."""

    def __init__(self, sim: RigSimulator):
        self.sim = sim
        self.state = DeviceState(pose=sim.pose)

    def handle(self, line: bytes):
        self.state, replies = device_handle_line(self.state, line, self.sim)
        return [_to_wire(r) for r in replies]


class EmulatorTransport:
    """In-memory byte pipe to a DeviceEmulator (the loopback test bench link)."""

    def __init__(self, emulator: DeviceEmulator):
        self.emulator = emulator
        self._rx = queue.Queue()
        self.closed = False
        # fault injection for driver tests: drop the next n responses
        self.drop_responses = 0

    def write_line(self, line: bytes):
        if self.closed:
            raise TransportClosed("transport closed")
        for reply in self.emulator.handle(line):
            if self.drop_responses > 0:
                self.drop_responses -= 1
                continue
            self._rx.put(reply)

    def read_line(self, timeout):
        if self.closed:
            raise TransportClosed("transport closed")
        try:
            return self._rx.get(timeout=timeout)
        except queue.Empty:
            raise TransactTimeout(f"no response within {timeout} s") from None

    def close(self):
        self.closed = True


@dataclass
class Transcript:
    """Wire log: '>' host lines, '<' device lines, monotonic us timestamps."""

    entries: list = field(default_factory=list)
    _t_us: int = 0

    def log(self, direction, line: bytes):
        import time

        self._t_us = max(self._t_us + 1, time.monotonic_ns() // 1000)
        self.entries.append(f"{self._t_us:>14d} {direction} {line.decode('ascii', 'replace').rstrip()}")

    def text(self):
        return "\n".join(self.entries) + ("\n" if self.entries else "")


IDEMPOTENT_VERBS = {"FRC?", "POS?", "STOP"}


class HostDriver:
    """Host-side driver: one in-flight command, serialized behind a lock."""

    def __init__(self, transport, timeout=2.0, transcript=None):
        self.transport = transport
        self.timeout = timeout
        self.transcript = transcript
        self._lock = threading.Lock()

    def transact(self, cmd: Command, on_sample=None, timeout=None):
        """Send a command and await its terminal OK/ERR.

        Streamed ``D`` lines are surfaced through on_sample(disp, force) as
        they arrive. Queries (FRC?/POS?/STOP) are retried once on timeout;
        motion commands are never silently retried.
        """
        timeout = self.timeout if timeout is None else timeout
        with self._lock:
            attempts = 2 if cmd.verb in IDEMPOTENT_VERBS else 1
            last_exc = None
            for _ in range(attempts):
                try:
                    return self._transact_once(cmd, on_sample, timeout)
                except TransactTimeout as e:
                    last_exc = e
            raise last_exc

    def _transact_once(self, cmd, on_sample, timeout):
        line = encode(cmd)
        if self.transcript:
            self.transcript.log(">", line)
        self.transport.write_line(line)
        samples = []
        while True:
            reply = self.transport.read_line(timeout=timeout)
            if self.transcript:
                self.transcript.log("<", reply)
            text = reply.decode("ascii").rstrip("\n")
            if text.startswith("D "):
                _, d, f = text.split()
                pair = (float(d), float(f))
                samples.append(pair)
                if on_sample:
                    on_sample(*pair)
                continue
            if text.startswith("OK"):
                return Response(ok=True, line=text, samples=samples)
            if text.startswith("ERR"):
                parts = text.split(maxsplit=2)
                code = parts[1] if len(parts) > 1 else "UNKNOWN"
                detail = parts[2] if len(parts) > 2 else ""
                raise DeviceFault(code, detail)
            # F/P query replies are terminal too
            return Response(ok=True, line=text, samples=samples)

    def move_to(self, x, y):
        return self.transact(Command("MOV", (x, y)))

    def palpate(self, depth, limit, on_sample=None):
        return self.transact(Command("PALP", (depth, limit)), on_sample=on_sample)

    def read_force(self):
        resp = self.transact(Command("FRC?"))
        return float(resp.line.split()[1])

    def read_pose(self):
        resp = self.transact(Command("POS?"))
        _, x, y, z = resp.line.split()
        return StagePose(float(x), float(y), float(z))

    def stop(self):
        return self.transact(Command("STOP"))

    def home(self):
        return self.transact(Command("HOME"))


@dataclass
class Response:
    ok: bool
    line: str
    samples: list


def loopback(sim: RigSimulator, timeout=2.0, transcript=None):
    """Convenience: emulator + in-memory transport + driver in one call."""
    emulator = DeviceEmulator(sim)
    transport = EmulatorTransport(emulator)
    driver = HostDriver(transport, timeout=timeout, transcript=transcript)
    return driver, emulator, transport
