"""
Текстовый формат трассы каналов (UTF-8, одна запись на строку).

    # mmwrt-trace v1 digest=<sha256>
    I,timestep,tx_id,rx_id,n_mpc,geometric_ops,obstruction_checks,tuples_visited,early_exits,
      tuples_by_order,checked_by_order,pruned_by_order,rays_by_order,wall_time_ns
    M,timestep,tx_id,rx_id,kind,delay_s,gain_db,aod_az,aod_el,aoa_az,aoa_el,phase_rad,parent_hash,order
    # end instances=<N>

За записью I следуют ровно n_mpc записей M этого экземпляра. Профили по
порядкам - целые через ';'. Вещественные числа пишутся repr(), поэтому
чтение восстанавливает их бит в бит. Фаза D-луча уже содержит набег фазы
распространения (член -2*pi*tau*f_c при сборке H не добавляется).
wall_time_ns пишется только с include_timing, иначе '-': без него файлы
одного и того же прогона совпадают побайтно.
"""
import csv
import io
import logging
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, TextIO

from .exceptions import TraceFormatError
from .qd import Mpc, MpcKind
from .raytracer import OpCounter
from .scenario import ChannelInstance

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HEADER_RE = re.compile(r"^# mmwrt-trace v(\d+) digest=([0-9a-f]*)$")
FOOTER_RE = re.compile(r"^# end instances=(\d+)$")
INSTANCE_FIELDS = 14
MPC_FIELDS = 14


@dataclass
class Trace:
    digest: str
    instances: List[ChannelInstance]
    version: int = SCHEMA_VERSION


def _profile(values: List[int]) -> str:
    return ";".join(str(v) for v in values)


def _parse_profile(text: str) -> List[int]:
    return [int(v) for v in text.split(";")] if text else []


def write_trace(instances: Iterable[ChannelInstance], sink: TextIO, digest: str = "",
                include_timing: bool = False) -> int:
    writer = csv.writer(sink, lineterminator="\n")
    sink.write(f"# mmwrt-trace v{SCHEMA_VERSION} digest={digest}\n")
    count = 0
    for instance in instances:
        c = instance.counters
        wall = str(instance.wall_time_ns) if include_timing and instance.wall_time_ns is not None else "-"
        writer.writerow([
            "I", instance.timestep, instance.tx_id, instance.rx_id, len(instance.mpcs),
            c.geometric_ops, c.obstruction_checks, c.tuples_visited, c.early_exits,
            _profile(c.tuples_by_order), _profile(c.checked_by_order), _profile(c.pruned_by_order),
            _profile(instance.rays_by_order), wall,
        ])
        for m in instance.mpcs:
            writer.writerow([
                "M", instance.timestep, instance.tx_id, instance.rx_id, m.kind.value,
                repr(m.delay_s), repr(m.gain_db), repr(m.aod[0]), repr(m.aod[1]),
                repr(m.aoa[0]), repr(m.aoa[1]), repr(m.phase), m.parent, m.order,
            ])
        count += 1
    sink.write(f"# end instances={count}\n")
    return count


def _instance(record: int, row: List[str]) -> ChannelInstance:
    if len(row) != INSTANCE_FIELDS:
        raise TraceFormatError(record, f"instance record needs {INSTANCE_FIELDS} fields, got {len(row)}")
    counters = OpCounter(
        geometric_ops=int(row[5]),
        obstruction_checks=int(row[6]),
        tuples_visited=int(row[7]),
        early_exits=int(row[8]),
        tuples_by_order=_parse_profile(row[9]),
        checked_by_order=_parse_profile(row[10]),
        pruned_by_order=_parse_profile(row[11]),
    )
    return ChannelInstance(
        timestep=int(row[1]), tx_id=row[2], rx_id=row[3], mpcs=[], counters=counters,
        rays_by_order=_parse_profile(row[12]),
        wall_time_ns=None if row[13] == "-" else int(row[13]),
    )


def _mpc(record: int, row: List[str]) -> Mpc:
    if len(row) != MPC_FIELDS:
        raise TraceFormatError(record, f"MPC record needs {MPC_FIELDS} fields, got {len(row)}")
    return Mpc(
        delay_s=float(row[5]),
        gain_db=float(row[6]),
        aod=(float(row[7]), float(row[8])),
        aoa=(float(row[9]), float(row[10])),
        phase=float(row[11]),
        kind=MpcKind(row[4]),
        parent=int(row[12]),
        order=int(row[13]),
    )


def read_trace(source: TextIO) -> Trace:
    """Строгое чтение: обрыв файла, лишние или недостающие MPC - ошибка с номером записи."""
    try:
        lines = source.read().splitlines()
    except UnicodeDecodeError as exc:
        raise TraceFormatError(0, f"trace is not valid UTF-8: {exc.reason} at byte {exc.start}") from exc
    if not lines:
        raise TraceFormatError(0, "empty trace: header missing")
    header = HEADER_RE.match(lines[0])
    if header is None:
        raise TraceFormatError(1, "bad or missing header")
    version, digest = int(header.group(1)), header.group(2)
    if version != SCHEMA_VERSION:
        raise TraceFormatError(1, f"unsupported trace schema version {version}")

    instances: List[ChannelInstance] = []
    expected: Optional[int] = None
    footer: Optional[int] = None
    for number, line in enumerate(lines[1:], start=2):
        if footer is not None:
            raise TraceFormatError(number, "data after end-of-trace marker")
        if line.startswith("#"):
            match = FOOTER_RE.match(line)
            if match is None:
                raise TraceFormatError(number, "unexpected comment line")
            footer = number
            if expected is not None and len(instances[-1].mpcs) != expected:
                raise TraceFormatError(number, "instance ends before all its MPC records")
            if int(match.group(1)) != len(instances):
                raise TraceFormatError(number, f"footer announces {match.group(1)} instances, "
                                               f"found {len(instances)}")
            continue
        if not line:
            raise TraceFormatError(number, "blank line inside trace")
        row = next(csv.reader(io.StringIO(line)))
        try:
            if row[0] == "I":
                if expected is not None and len(instances[-1].mpcs) != expected:
                    raise TraceFormatError(number, "previous instance is missing MPC records")
                instances.append(_instance(number, row))
                expected = int(row[4])
            elif row[0] == "M":
                if not instances or len(instances[-1].mpcs) >= expected:
                    raise TraceFormatError(number, "MPC record without an open instance")
                owner = instances[-1]
                if (int(row[1]), row[2], row[3]) != (owner.timestep, owner.tx_id, owner.rx_id):
                    raise TraceFormatError(number, "MPC record does not belong to the current instance")
                owner.mpcs.append(_mpc(number, row))
            else:
                raise TraceFormatError(number, f"unknown record type {row[0]!r}")
        except (ValueError, IndexError) as exc:
            raise TraceFormatError(number, str(exc)) from exc

    if footer is None:
        raise TraceFormatError(len(lines), "truncated trace: end-of-trace marker missing")
    logger.debug("read %d instances from trace", len(instances))
    return Trace(digest=digest, instances=instances, version=version)
