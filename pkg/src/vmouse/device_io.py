"""Serial log format, command grammar, device emulator, and log ingestion.

The wire format is line-oriented ASCII (see PROTOCOL.md).  Each sample is
one CSV record ``t_us,btnL,btnR,dxf,dyf,dxr,dyr,mx,my`` with integer raw
counts at base CPI and integer fused cursor counts at user CPI.  Lines
starting with ``#`` are annotations (stream header, applied commands);
command errors appear as ``ERR <reason>`` lines.  The fused columns are
bit-reproducible from the raw columns given the active (p, k), because
the device fuses the already-quantized raw integers and carries
remainders across samples.
"""
from __future__ import annotations

import queue
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .arm import ArmModel, ArmSession, simulate_aim_game
from .fusion import BASE_CPI, CarryAccumulator, SAMPLE_DT_US, VirtualConfig

PROTOCOL_VERSION = 1
HEADER_MAGIC = f"# vmouse-log v{PROTOCOL_VERSION}"
RECORD_FIELDS = 9


class ProtocolError(ValueError):
    pass


class ParseError(ProtocolError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        where = f" (line {lineno})" if lineno is not None else ""
        super().__init__(f"{message}{where}")


class CommandError(ProtocolError):
    pass


@dataclass(frozen=True)
class LogRecord:
    t_us: int
    btn_l: int
    btn_r: int
    dxf: int
    dyf: int
    dxr: int
    dyr: int
    mx: int
    my: int


def encode_record(rec: LogRecord) -> str:
    return (f"{rec.t_us},{rec.btn_l},{rec.btn_r},{rec.dxf},{rec.dyf},"
            f"{rec.dxr},{rec.dyr},{rec.mx},{rec.my}")


def decode_record(line: str, lineno: int | None = None) -> LogRecord:
    parts = line.strip().split(",")
    if len(parts) != RECORD_FIELDS:
        raise ParseError(f"expected {RECORD_FIELDS} fields, got {len(parts)}", lineno)
    try:
        vals = [int(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"non-integer field: {exc}", lineno) from None
    if vals[0] < 0:
        raise ParseError("timestamp must be unsigned", lineno)
    if vals[1] not in (0, 1) or vals[2] not in (0, 1):
        raise ParseError("button fields must be 0 or 1", lineno)
    return LogRecord(*vals)


# ---------------------------------------------------------------------------
# Command grammar

@dataclass(frozen=True)
class DeviceCommand:
    kind: str                    # SET_P | SET_CPI | START | STOP
    value: float | None = None


_CMD_RE = re.compile(r"^\s*([A-Z_]+)(?:\s+(\S+))?\s*$")


def parse_command(text: str) -> DeviceCommand:
    m = _CMD_RE.match(text)
    if not m:
        raise CommandError(f"unrecognized command syntax: {text!r}")
    kind, arg = m.group(1), m.group(2)
    if kind in ("START", "STOP"):
        if arg is not None:
            raise CommandError(f"{kind} takes no argument")
        return DeviceCommand(kind)
    if kind == "SET_P":
        try:
            v = int(arg)
        except (TypeError, ValueError):
            raise CommandError("SET_P requires an integer percent") from None
        if not 0 <= v <= 100:
            raise CommandError(f"SET_P percent out of range 0..100: {v}")
        return DeviceCommand(kind, v)
    if kind == "SET_CPI":
        try:
            v = float(arg)
        except (TypeError, ValueError):
            raise CommandError("SET_CPI requires a number") from None
        if not 0 < v <= BASE_CPI:
            raise CommandError(f"SET_CPI out of range (0, {BASE_CPI:.0f}]: {v}")
        return DeviceCommand(kind, v)
    raise CommandError(f"unknown command {kind}")


class FusedQuantizer:
    """Integer mx/my from integer raw fields, carrying remainders.

    Shared by the emulator and the log verifier so both produce identical
    sequences.  Position/CPI changes keep the accumulated remainders, as
    the device would.
    """

    def __init__(self, p_percent: int, user_cpi: float) -> None:
        self.set_config(p_percent, user_cpi)
        self._ax = CarryAccumulator()
        self._ay = CarryAccumulator()

    def set_config(self, p_percent: int, user_cpi: float) -> None:
        self.p_percent = int(p_percent)
        self.user_cpi = float(user_cpi)
        self.p = self.p_percent / 100.0
        self.k = self.user_cpi / BASE_CPI

    def push(self, dxf: int, dyf: int, dxr: int, dyr: int) -> tuple[int, int]:
        fx = self.k * ((1.0 - self.p) * dxf + self.p * dxr)
        fy = self.k * (dyf + dyr) / 2.0
        return self._ax.push(fx), self._ay.push(fy)


# ---------------------------------------------------------------------------
# Emulator

_PLAY_RE = re.compile(r"^\s*PLAY\s+([0-9.]+)\s*$")


def emulator_run(
    model: ArmModel,
    cfg: VirtualConfig,
    script: Iterable[str],
    seed: int = 0,
) -> Iterator[str]:
    """Yield protocol lines for a command + activity schedule.

    Script items are device commands (``SET_P 40``, ``SET_CPI 800``,
    ``START``, ``STOP``) or ``PLAY <seconds>`` activity blocks during
    which the synthetic user plays the aim game.  Command changes apply
    from the next emitted sample.  Bad commands produce ``ERR`` lines.
    """
    p_percent = cfg.p_percent
    user_cpi = cfg.user_cpi
    yield HEADER_MAGIC
    yield f"# seed={seed} p_percent={p_percent} user_cpi={user_cpi:g} rate_hz=500"
    quant = FusedQuantizer(p_percent, user_cpi)
    running = False
    sample_no = 0
    raw_ax = [CarryAccumulator() for _ in range(4)]

    for item in script:
        item = item.strip()
        if not item:
            continue
        m = _PLAY_RE.match(item)
        if m:
            seconds = float(m.group(1))
            if not running:
                # activity while stopped produces no records
                continue
            live_cfg = VirtualConfig(p_percent=p_percent, user_cpi=user_cpi)
            session = ArmSession(model, live_cfg, seed=seed + sample_no)
            log = session.capture_log()
            simulate_aim_game(model, live_cfg, seconds, seed=seed + sample_no,
                              session=session)
            clicks = set(session.click_samples)
            for i, (dxf, dyf, dxr, dyr) in enumerate(log):
                ints = [raw_ax[j].push(v) for j, v in enumerate((dxf, dyf, dxr, dyr))]
                mx, my = quant.push(*ints)
                sample_no += 1
                btn = 1 if i in clicks else 0
                yield encode_record(LogRecord(
                    sample_no * SAMPLE_DT_US, btn, 0, *ints, mx, my))
            continue
        try:
            cmd = parse_command(item)
        except CommandError as exc:
            yield f"ERR {exc}"
            continue
        if cmd.kind == "START":
            running = True
        elif cmd.kind == "STOP":
            running = False
        elif cmd.kind == "SET_P":
            p_percent = int(cmd.value)
            quant.set_config(p_percent, user_cpi)
        elif cmd.kind == "SET_CPI":
            user_cpi = float(cmd.value)
            quant.set_config(p_percent, user_cpi)
        yield f"# CMD {item} applied_at={sample_no * SAMPLE_DT_US}"


def run_to_queue(lines: Iterator[str], q: "queue.Queue[str | None]") -> None:
    """Pump emitted lines into a bounded queue; blocks while the queue is full.

    Appends None as an end-of-stream marker.
    """
    for line in lines:
        q.put(line)
    q.put(None)


# ---------------------------------------------------------------------------
# Ingestion

@dataclass
class IngestResult:
    records: list[LogRecord]
    config: dict
    command_log: list[tuple[int, str]]     # (record index, command text)
    mismatches: int
    warnings: list[str]

    @property
    def clicks(self) -> list[int]:
        return [i for i, r in enumerate(self.records) if r.btn_l or r.btn_r]

    def cursor_path(self, origin: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
        """Accumulated (t_seconds, x, y) cursor positions, screen-y down."""
        out = np.zeros((len(self.records) + 1, 3))
        out[0, 1:] = origin
        for i, r in enumerate(self.records):
            out[i + 1, 0] = r.t_us * 1e-6
            out[i + 1, 1] = out[i, 1] + r.mx
            out[i + 1, 2] = out[i, 2] - r.my
        return out


def ingest_lines(lines: Iterable[str]) -> IngestResult:
    records: list[LogRecord] = []
    config: dict = {}
    commands: list[tuple[int, str]] = []
    warnings: list[str] = []
    mismatches = 0
    quant: FusedQuantizer | None = None
    pending: list[str] = []

    lines = list(lines)
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line.lstrip("# ").strip()
            if body.startswith("CMD"):
                cmd_text = body[3:].split("applied_at=")[0].strip()
                commands.append((len(records), cmd_text))
                try:
                    cmd = parse_command(cmd_text)
                except CommandError:
                    warnings.append(f"line {lineno}: unparseable command echo")
                    continue
                if quant is not None:
                    if cmd.kind == "SET_P":
                        quant.set_config(int(cmd.value), quant.user_cpi)
                    elif cmd.kind == "SET_CPI":
                        quant.set_config(quant.p_percent, float(cmd.value))
            elif "=" in body:
                for kv in body.split():
                    if "=" in kv:
                        key, val = kv.split("=", 1)
                        config[key] = val
                if "p_percent" in config and quant is None:
                    quant = FusedQuantizer(
                        int(config["p_percent"]), float(config["user_cpi"]))
            continue
        if line.startswith("ERR"):
            warnings.append(f"line {lineno}: device error: {line[3:].strip()}")
            continue
        is_final = lineno == len(lines)
        try:
            rec = decode_record(line, lineno)
        except ParseError as exc:
            if is_final:
                warnings.append(f"truncated final line dropped: {exc}")
                continue
            raise
        records.append(rec)
        if quant is not None:
            mx, my = quant.push(rec.dxf, rec.dyf, rec.dxr, rec.dyr)
            if (mx, my) != (rec.mx, rec.my):
                mismatches += 1
    return IngestResult(records, config, commands, mismatches, warnings)


def ingest_log(path: str | Path) -> IngestResult:
    text = Path(path).read_text(encoding="ascii")
    return ingest_lines(text.splitlines())


def split_sessions(result: IngestResult, trials_per_session: int = 15) -> list[list[tuple[int, int]]]:
    """Group click events into sessions and return per-trial record spans.

    A session is trials_per_session + 1 consecutive clicks (the first click
    starts the session); each trial spans the records after one click up to
    and including the next.  Clicks between full sessions are discarded.
    """
    clicks = result.clicks
    per = trials_per_session + 1
    sessions = []
    for g in range(0, len(clicks) - per + 1, per):
        group = clicks[g:g + per]
        sessions.append([
            (group[j] + 1, group[j + 1]) for j in range(trials_per_session)
        ])
    return sessions
