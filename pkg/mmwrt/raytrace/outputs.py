"""Файлы результатов: атомарная запись, CSV, манифест прогона."""
import contextlib
import csv
import logging
import os
import platform
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, List, Sequence, TextIO

from django.utils.version import get_version

from . import __version__
from .exceptions import ConfigError
from .scenario import LinkMetric, LoadedScenario, RunResult
from .schemas import RunManifest

logger = logging.getLogger(__name__)

TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.json"
LINKS_FILE = "link_metrics.csv"
COUNTERS_FILE = "counters.csv"
OUTPUT_FILES = (TRACE_FILE, LINKS_FILE, COUNTERS_FILE, MANIFEST_FILE)

LINK_COLUMNS = ["timestep", "time_s", "rx_id", "tx_id", "n_mpc", "rx_power_dbm", "snr_db", "sinr_db"]
COUNTER_COLUMNS = ["timestep", "tx_id", "rx_id", "geometric_ops", "obstruction_checks", "tuples_visited",
                   "rays_checked", "early_exits", "rays", "rays_by_order", "pruned_by_order", "wall_time_ns"]


@contextlib.contextmanager
def atomic_output(path: Path) -> Iterator[TextIO]:
    """Пишет во временный файл рядом с path и переименовывает только при успехе."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def staged_directory(path: Path) -> Iterator[Path]:
    """
    Результаты прогона пишутся во временный каталог рядом с path и встают на
    место только после того, как записан каждый файл. Нового каталога ещё нет -
    он переименовывается целиком; в существующем заменяются файлы OUTPUT_FILES,
    а не выписанные в этот раз удаляются, чтобы не смешивать два прогона.
    """
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise ConfigError(f"{path}: output path exists and is not a directory")
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent))
    os.chmod(staging, 0o755)
    try:
        yield staging
        if path.is_dir():
            for name in OUTPUT_FILES:
                if (staging / name).exists():
                    os.replace(staging / name, path / name)
                else:
                    with contextlib.suppress(FileNotFoundError):
                        (path / name).unlink()
            staging.rmdir()
        else:
            os.replace(staging, path)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def write_csv(sink: TextIO, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_links(links: Iterable[LinkMetric], sink: TextIO) -> None:
    write_csv(sink, LINK_COLUMNS, (
        (l.timestep, l.time_s, l.rx_id, l.tx_id, l.n_mpc, l.rx_power_dbm, l.snr_db, l.sinr_db)
        for l in links
    ))


def read_links(path: Path) -> List[LinkMetric]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != LINK_COLUMNS:
                raise ConfigError(f"{path}: unexpected link metric columns {reader.fieldnames}")
            return [
                LinkMetric(
                    timestep=int(row["timestep"]), time_s=float(row["time_s"]), rx_id=row["rx_id"],
                    tx_id=row["tx_id"], n_mpc=int(row["n_mpc"]), rx_power_dbm=float(row["rx_power_dbm"]),
                    snr_db=float(row["snr_db"]), sinr_db=float(row["sinr_db"]),
                )
                for row in reader
            ]
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: link metrics not found") from exc
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_counters(result: RunResult, sink: TextIO, include_timing: bool = False) -> None:
    def rows():
        for i in result.instances:
            c = i.counters
            yield (i.timestep, i.tx_id, i.rx_id, c.geometric_ops, c.obstruction_checks, c.tuples_visited,
                   c.rays_checked, c.early_exits, sum(i.rays_by_order),
                   ";".join(map(str, i.rays_by_order)), ";".join(map(str, c.pruned_by_order)),
                   i.wall_time_ns if include_timing else "-")

    write_csv(sink, COUNTER_COLUMNS, rows())


def host_metadata() -> dict:
    return {
        "python": platform.python_version(),
        "platform": platform.platform(),
        "machine": platform.machine(),
        "django": get_version(),
    }


def build_manifest(loaded: LoadedScenario, result: RunResult, command: str) -> RunManifest:
    counters = result.counters
    return RunManifest(
        config_digest=loaded.digest,
        seed=loaded.config.seed,
        tool_version=__version__,
        command=command,
        t_rt_s=result.t_rt_s,
        t_ns_s=result.t_ns_s,
        instances=len(result.instances),
        rays=result.rays,
        mpcs=result.mpcs,
        geometric_ops=counters.geometric_ops,
        obstruction_checks=counters.obstruction_checks,
        tuples_visited=counters.tuples_visited,
        triangles=loaded.mesh.T,
        steps=loaded.config.steps,
        host=host_metadata(),
        scenario=loaded.config.model_dump(mode="json"),
    )


def read_manifest(path: Path) -> RunManifest:
    try:
        return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: manifest not found") from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid manifest: {exc}") from exc

