"""Packet ingestion, tumbling flow windows and per-window feature vectors.

The packet-CSV format is ``timestamp,device_id,src_ip,dst_ip,protocol,size,direction``
with a mandatory header row.  The feature-CSV format is
``device_id,window_start,icmp_pct,tcp_pct,udp_pct,ip_diversity,packet_count,mean_packet_size[,label]``.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from enum import Enum
from typing import IO, Iterable, Iterator

PACKET_COLUMNS = ("timestamp", "device_id", "src_ip", "dst_ip", "protocol", "size", "direction")
FEATURE_NAMES = ("icmp_pct", "tcp_pct", "udp_pct", "ip_diversity", "packet_count", "mean_packet_size")
FEATURE_COLUMNS = ("device_id", "window_start") + FEATURE_NAMES

DEFAULT_WINDOW_LENGTH = 20.0


class Protocol(str, Enum):
    ICMP = "ICMP"
    TCP = "TCP"
    UDP = "UDP"
    OTHER = "OTHER"


class Direction(str, Enum):
    INBOUND = "INBOUND"
    OUTBOUND = "OUTBOUND"


class MalformedRowError(ValueError):
    """A CSV row that cannot be parsed; ``line`` is 1-based, header included."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass(frozen=True)
class PacketMeta:
    timestamp: float
    device_id: str
    src_ip: str
    dst_ip: str
    protocol: Protocol
    size: int
    direction: Direction

    @property
    def remote_ip(self) -> str:
        """Address of the peer on the far side of ``device_id``."""
        return self.dst_ip if self.direction is Direction.OUTBOUND else self.src_ip


@dataclass(frozen=True)
class FlowWindow:
    device_id: str
    window_start: float
    window_length: float
    packets: tuple = ()


@dataclass(frozen=True)
class FeatureVector:
    icmp_pct: float = 0.0
    tcp_pct: float = 0.0
    udp_pct: float = 0.0
    ip_diversity: float = 0.0
    packet_count: int = 0
    mean_packet_size: float = 0.0

    def as_tuple(self) -> tuple:
        return astuple(self)

    def __iter__(self):
        return iter(astuple(self))

    def __len__(self) -> int:
        return len(fields(self))

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "FeatureVector":
        v = list(values)
        if len(v) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} feature values, got {len(v)}")
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]), int(v[4]), float(v[5]))


def _text_stream(source) -> IO[str]:
    if isinstance(source, (io.TextIOBase,)) or hasattr(source, "encoding"):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_packet(row: list, line: int) -> PacketMeta:
    if len(row) != len(PACKET_COLUMNS):
        raise MalformedRowError(line, f"expected {len(PACKET_COLUMNS)} columns, got {len(row)}")
    ts_s, device, src, dst, proto_s, size_s, dir_s = (c.strip() for c in row)
    try:
        ts = float(ts_s)
    except ValueError:
        raise MalformedRowError(line, f"unparseable timestamp {ts_s!r}") from None
    if not math.isfinite(ts) or ts < 0:
        raise MalformedRowError(line, f"timestamp must be finite and non-negative, got {ts_s!r}")
    try:
        size = int(size_s)
    except ValueError:
        raise MalformedRowError(line, f"unparseable size {size_s!r}") from None
    if size < 0:
        raise MalformedRowError(line, f"negative size {size}")
    try:
        proto = Protocol(proto_s)
    except ValueError:
        raise MalformedRowError(line, f"unknown protocol {proto_s!r}") from None
    try:
        direction = Direction(dir_s)
    except ValueError:
        raise MalformedRowError(line, f"unknown direction {dir_s!r}") from None
    if not device:
        raise MalformedRowError(line, "empty device_id")
    return PacketMeta(ts, device, src, dst, proto, size, direction)


def iter_packets(source, strict: bool = True, errors: list | None = None) -> Iterator[PacketMeta]:
    """Stream PacketMeta records from a packet-CSV text or byte stream.

    In strict mode the first malformed row raises :class:`MalformedRowError`.
    Otherwise bad rows are skipped and, when ``errors`` is given, appended to it.
    A missing or wrong header always raises.
    """
    reader = csv.reader(_text_stream(source))
    header = next(reader, None)
    if header is None:
        return
    if tuple(h.strip() for h in header) != PACKET_COLUMNS:
        raise MalformedRowError(1, f"header must be {','.join(PACKET_COLUMNS)}")
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        try:
            yield _parse_packet(row, line)
        except MalformedRowError as exc:
            if strict:
                raise
            if errors is not None:
                errors.append(exc)


def ingest_packets(source, strict: bool = True, errors: list | None = None) -> list[PacketMeta]:
    return list(iter_packets(source, strict=strict, errors=errors))


def window_start_for(timestamp: float, window_length: float) -> float:
    """Start of the half-open window ``[start, start + length)`` holding ``timestamp``."""
    idx = math.floor(timestamp / window_length)
    # the division can round across a boundary; nudge back into the interval
    if idx * window_length > timestamp:
        idx -= 1
    elif (idx + 1) * window_length <= timestamp:
        idx += 1
    return idx * window_length


def windowize(packets: Iterable[PacketMeta], window_length: float = DEFAULT_WINDOW_LENGTH) -> list[FlowWindow]:
    if not window_length > 0:
        raise ValueError(f"window_length must be positive, got {window_length}")
    buckets = defaultdict(list)
    for p in packets:
        buckets[(p.device_id, window_start_for(p.timestamp, window_length))].append(p)
    return [
        FlowWindow(device, start, window_length, tuple(buckets[(device, start)]))
        for device, start in sorted(buckets)
    ]


def extract_features(window: FlowWindow) -> FeatureVector:
    n = len(window.packets)
    if n == 0:
        return FeatureVector()
    counts = {proto: 0 for proto in Protocol}
    total = 0
    remotes = set()
    for p in window.packets:
        counts[p.protocol] += 1
        total += p.size
        remotes.add(p.remote_ip)
    return FeatureVector(
        icmp_pct=counts[Protocol.ICMP] / n,
        tcp_pct=counts[Protocol.TCP] / n,
        udp_pct=counts[Protocol.UDP] / n,
        ip_diversity=len(remotes) / n,
        packet_count=n,
        mean_packet_size=total / n,
    )


# ----------------------------------------------------------- feature CSV


def fmt_float(x: float) -> str:
    """Feature values: 9 significant digits."""
    return f"{x:.9g}"


def fmt_window_start(x: float) -> str:
    # Epoch-scale starts need more than 9 digits; print the shortest exact form.
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return repr(x)


def feature_row(device_id: str, window_start: float, fv: FeatureVector, label: str | None = None) -> list[str]:
    row = [device_id, fmt_window_start(window_start)]
    row += [fmt_float(fv.icmp_pct), fmt_float(fv.tcp_pct), fmt_float(fv.udp_pct),
            fmt_float(fv.ip_diversity), str(int(fv.packet_count)), fmt_float(fv.mean_packet_size)]
    if label is not None:
        row.append(label)
    return row


def write_feature_csv(out: IO[str], rows: Iterable[tuple], with_label: bool = False) -> None:
    """Write ``(device_id, window_start, FeatureVector[, label])`` tuples."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(FEATURE_COLUMNS + (("label",) if with_label else ()))
    for r in rows:
        w.writerow(feature_row(r[0], r[1], r[2], r[3] if with_label else None))


@dataclass(frozen=True)
class FeatureRecord:
    device_id: str
    window_start: float
    features: FeatureVector
    label: str | None = None


def read_feature_csv(source, require_label: bool | None = None) -> list[FeatureRecord]:
    """Parse a feature CSV.  ``require_label`` True/False enforces the presence
    or absence of the ``label`` column; None accepts either."""
    reader = csv.reader(_text_stream(source))
    header = next(reader, None)
    if header is None:
        raise MalformedRowError(1, "missing header")
    header = tuple(h.strip() for h in header)
    if header == FEATURE_COLUMNS:
        has_label = False
    elif header == FEATURE_COLUMNS + ("label",):
        has_label = True
    else:
        raise MalformedRowError(1, f"header must be {','.join(FEATURE_COLUMNS)}[,label]")
    if require_label is True and not has_label:
        raise MalformedRowError(1, "label column required")
    if require_label is False and has_label:
        raise MalformedRowError(1, "unexpected label column")
    width = len(header)
    out = []
    for row in reader:
        if not row:
            continue
        line = reader.line_num
        if len(row) != width:
            raise MalformedRowError(line, f"expected {width} columns, got {len(row)}")
        try:
            start = float(row[1])
            vals = [float(x) for x in row[2:8]]
        except ValueError as exc:
            raise MalformedRowError(line, str(exc)) from None
        if not all(math.isfinite(v) for v in vals) or not vals[4].is_integer():
            raise MalformedRowError(line, "non-finite value or fractional packet_count")
        label = row[8] if has_label else None
        if has_label and not label:
            raise MalformedRowError(line, "empty label")
        out.append(FeatureRecord(row[0], start, FeatureVector.from_values(vals), label))
    return out
