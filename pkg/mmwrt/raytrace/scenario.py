"""
Сценарий: загрузка TOML, мобильность узлов, шаги по времени и оркестрация
трассировщик -> QD -> фильтры после QD -> экземпляры канала -> метрики линий.

Работа делится по шагам времени: один шаг - все направленные пары (tx, rx).
Воркеры получают сетку и материалы один раз через initializer; pool.map
сохраняет порядок, поэтому выход всегда в каноническом порядке
(шаг, пара, порядок лучей) при любом --jobs.
"""
import hashlib
import io
import json
import logging
import math
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from . import channel, simplify
from .exceptions import ConfigError, LinkOutageError
from .geometry import TriangleMesh, load_mesh, write_mesh
from .qd import Mpc, expand_rays, resample_policy
from .raytracer import OpCounter, trace_pair
from .rng import stream
from .scenes import builtin_mesh, placeholder_materials
from .schemas import MaterialTable, NodeSpec, ScenarioConfig, TraceConfig

logger = logging.getLogger(__name__)


# ----- Загрузка -----
def validation_message(exc: ValidationError) -> str:
    first = exc.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"{location}: {first['msg']}"


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: file not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc


def load_materials(path: Path) -> MaterialTable:
    data = _read_toml(Path(path))
    try:
        return MaterialTable.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {validation_message(exc)}") from exc


@dataclass(frozen=True)
class LoadedScenario:
    config: ScenarioConfig
    mesh: TriangleMesh
    materials: MaterialTable
    source: Optional[Path] = None

    @property
    def digest(self) -> str:
        """SHA-256 по каноническому JSON сценария, тексту сетки и таблице материалов."""
        h = hashlib.sha256()
        h.update(json.dumps(self.config.model_dump(mode="json"), sort_keys=True).encode("utf-8"))
        h.update(mesh_text(self.mesh).encode("utf-8"))
        h.update(json.dumps(self.materials.model_dump(mode="json"), sort_keys=True).encode("utf-8"))
        return h.hexdigest()

    def trace_config(self) -> TraceConfig:
        return self.config.trace_config()


def mesh_text(mesh: TriangleMesh) -> str:
    buffer = io.StringIO()
    write_mesh(mesh, buffer)
    return buffer.getvalue()


def build_scenario(config: ScenarioConfig, base_dir: Path = Path("."), source: Optional[Path] = None) -> LoadedScenario:
    environment = config.environment
    if environment.materials is not None:
        materials = load_materials(base_dir / environment.materials)
    else:
        materials = placeholder_materials()

    if environment.mesh is not None:
        mesh_path = base_dir / environment.mesh
        try:
            mesh = load_mesh(mesh_path.read_bytes(), material_ids=materials.ids)
        except FileNotFoundError as exc:
            raise ConfigError(f"{mesh_path}: mesh file not found") from exc
    else:
        mesh = builtin_mesh(environment.builtin, environment.size)
        unknown = set(int(m) for m in mesh.material_ids) - materials.ids
        if unknown:
            raise ConfigError(f"builtin scene {environment.builtin!r} uses materials {sorted(unknown)} "
                              "missing from the material table")
    return LoadedScenario(config=config, mesh=mesh, materials=materials, source=source)


def load_scenario(path) -> LoadedScenario:
    path = Path(path)
    data = _read_toml(path)
    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {validation_message(exc)}") from exc
    loaded = build_scenario(config, path.parent, source=path)
    logger.info("loaded scenario %s: T=%d, %d nodes, %d steps", config.name, loaded.mesh.T,
                len(config.nodes), config.steps)
    return loaded


def with_overrides(loaded: LoadedScenario, **overrides) -> LoadedScenario:
    """Переопределения из командной строки; None означает «оставить как в файле»."""
    data = loaded.config.model_dump()
    simplification = data["simplification"]
    for key in ("max_reflection_order", "rel_threshold_db", "abs_threshold_db"):
        value = overrides.pop(key, None)
        if value is not None:
            simplification[key] = value
    for key, value in overrides.items():
        if key not in data:
            raise ConfigError(f"unknown scenario override {key!r}")
        if value is not None:
            data[key] = value
    try:
        config = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(validation_message(exc)) from exc
    return LoadedScenario(config=config, mesh=loaded.mesh, materials=loaded.materials, source=loaded.source)


# ----- Мобильность -----
def position_at(node: NodeSpec, t_s: float) -> np.ndarray:
    """Кусочно-линейное движение по waypoints с постоянной скоростью; после конца пути - последняя точка."""
    if t_s < 0:
        raise ConfigError("time must be non-negative")
    waypoints = np.asarray(node.path, dtype=float)
    if len(waypoints) == 1 or node.speed_mps == 0.0:
        return waypoints[0].copy()
    remaining = node.speed_mps * t_s
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        leg = float(np.linalg.norm(b - a))
        if remaining <= leg:
            return a + (b - a) * (remaining / leg) if leg > 0 else a.copy()
        remaining -= leg
    return waypoints[-1].copy()


# ----- Экземпляры канала -----
@dataclass
class ChannelInstance:
    timestep: int
    tx_id: str
    rx_id: str
    mpcs: List[Mpc]
    counters: OpCounter = field(default_factory=OpCounter)
    rays_by_order: List[int] = field(default_factory=list)
    wall_time_ns: Optional[int] = None

    @property
    def pair(self) -> Tuple[str, str]:
        return self.tx_id, self.rx_id

    @property
    def is_outage(self) -> bool:
        return not self.mpcs


def pairs(config: ScenarioConfig) -> List[Tuple[NodeSpec, NodeSpec]]:
    """Все направленные пары (tx-узел, rx-узел), включая перекрёстные для помех."""
    return [(tx, rx) for tx in config.transmitters for rx in config.receivers]


def pair_key(tx: NodeSpec, rx: NodeSpec) -> str:
    return f"{tx.id}->{rx.id}"


def _rays_by_order(orders: Sequence[int]) -> List[int]:
    profile: List[int] = []
    for order in orders:
        while len(profile) <= order:
            profile.append(0)
        profile[order] += 1
    return profile


_CONTEXT: Optional[LoadedScenario] = None


def _init_worker(loaded: LoadedScenario) -> None:
    global _CONTEXT
    _CONTEXT = loaded


def _step_task(timestep: int) -> List[ChannelInstance]:
    return trace_step(_CONTEXT, timestep)


def trace_step(loaded: LoadedScenario, timestep: int) -> List[ChannelInstance]:
    config = loaded.config
    cfg = loaded.trace_config()
    t_s = timestep * config.timestep_s
    positions = {node.id: position_at(node, t_s) for node in config.nodes}
    policy = resample_policy(timestep, enabled=config.qd_enabled)
    traced: Dict[Tuple[bytes, bytes], ChannelInstance] = {}

    instances = []
    for tx, rx in pairs(config):
        started = time.perf_counter_ns()
        p_tx, p_rx = positions[tx.id], positions[rx.id]
        reverse = traced.get((p_rx.tobytes(), p_tx.tobytes())) if config.symmetric else None
        if reverse is not None:
            instance = ChannelInstance(
                timestep=timestep, tx_id=tx.id, rx_id=rx.id,
                mpcs=[m.reversed() for m in reverse.mpcs],
                rays_by_order=list(reverse.rays_by_order),
            )
        else:
            key = pair_key(tx, rx)
            rays, counter = trace_pair(p_tx, p_rx, loaded.mesh, loaded.materials, cfg,
                                       stream(config.seed, "reflection_loss", key))
            mpcs = expand_rays(rays, loaded.mesh, loaded.materials, policy, config.seed, key)
            if config.qd_enabled and config.post_qd_filter:
                mpcs = simplify.apply_thresholds(mpcs, config.simplification)
            instance = ChannelInstance(
                timestep=timestep, tx_id=tx.id, rx_id=rx.id, mpcs=mpcs, counters=counter,
                rays_by_order=_rays_by_order(ray.reflection_order for ray in rays),
            )
            traced[(p_tx.tobytes(), p_rx.tobytes())] = instance
        instance.wall_time_ns = time.perf_counter_ns() - started
        instances.append(instance)
    return instances


def run(loaded: LoadedScenario, jobs: int = 1) -> Iterator[ChannelInstance]:
    """Экземпляры канала в каноническом порядке; результат не зависит от jobs."""
    steps = range(loaded.config.steps)
    if jobs <= 1:
        for timestep in steps:
            yield from trace_step(loaded, timestep)
        return
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(loaded,)) as pool:
        chunksize = max(1, len(steps) // (4 * jobs))
        for batch in pool.map(_step_task, steps, chunksize=chunksize):
            yield from batch


# ----- Оценка линий (SVD + SNR/SINR) -----
@dataclass(frozen=True)
class LinkMetric:
    timestep: int
    time_s: float
    rx_id: str
    tx_id: str
    n_mpc: int
    rx_power_dbm: float
    snr_db: float
    sinr_db: float

    def value(self, metric: str) -> float:
        return {"sinr": self.sinr_db, "snr": self.snr_db, "rx_power": self.rx_power_dbm}[metric]


def _beamformer(H: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    try:
        return channel.svd_beamforming(H)
    except LinkOutageError:
        return None


def evaluate_links(instances: Sequence[ChannelInstance], loaded: LoadedScenario) -> List[LinkMetric]:
    """
    Для каждого шага и каждого приёмника: H по всем входящим линиям, SVD для
    обслуживающей линии, SNR и SINR с помехами от остальных передатчиков.
    Передатчик мешает со своим собственным beamforming-вектором; неактивный
    или без обслуживаемого приёмника - молчит.
    """
    config = loaded.config
    carrier = config.carrier_freq_hz
    budget = config.link
    nodes = {node.id: node for node in config.nodes}
    by_step: Dict[int, Dict[Tuple[str, str], ChannelInstance]] = {}
    for instance in instances:
        by_step.setdefault(instance.timestep, {})[instance.pair] = instance

    metrics = []
    for timestep in sorted(by_step):
        step = by_step[timestep]
        matrices = {
            key: channel.assemble_H(inst.mpcs, nodes[key[0]].array, nodes[key[1]].array, carrier)
            for key, inst in step.items()
        }
        precoders = {}
        for tx in config.transmitters:
            served = [rx for rx in config.receivers if rx.serves == tx.id]
            if not tx.active or not served or (tx.id, served[0].id) not in matrices:
                continue
            pair = _beamformer(matrices[(tx.id, served[0].id)])
            if pair is not None:
                precoders[tx.id] = pair[0]

        for rx in config.receivers:
            key = (rx.serves, rx.id)
            if key not in step:
                continue
            H = matrices[key]
            serving = nodes[rx.serves]
            pair = _beamformer(H) if serving.active else None
            if pair is None:
                metrics.append(LinkMetric(timestep, timestep * config.timestep_s, rx.id, rx.serves,
                                          len(step[key].mpcs), math.nan, math.nan, math.nan))
                continue
            w_tx, w_rx = pair
            link = channel.Link(serving.tx_power_dbm, H, w_tx, w_rx)
            interferers = [
                channel.Interferer(tx.tx_power_dbm, matrices[(tx.id, rx.id)], precoders.get(tx.id))
                for tx in config.transmitters
                if tx.id != rx.serves and (tx.id, rx.id) in matrices
            ]
            metrics.append(LinkMetric(
                timestep=timestep,
                time_s=timestep * config.timestep_s,
                rx_id=rx.id,
                tx_id=rx.serves,
                n_mpc=len(step[key].mpcs),
                rx_power_dbm=channel.rx_power_dbm(link),
                snr_db=channel.snr_db(link, budget),
                sinr_db=channel.sinr_db(link, interferers, budget),
            ))
    return metrics


# ----- Полный прогон -----
@dataclass
class RunResult:
    instances: List[ChannelInstance]
    links: List[LinkMetric]
    t_rt_s: float
    t_ns_s: float

    @property
    def counters(self) -> OpCounter:
        total = OpCounter()
        for instance in self.instances:
            total = total.merge(instance.counters)
        return total

    @property
    def rays(self) -> int:
        return sum(sum(instance.rays_by_order) for instance in self.instances)

    @property
    def mpcs(self) -> int:
        return sum(len(instance.mpcs) for instance in self.instances)


def execute(loaded: LoadedScenario, jobs: int = 1) -> RunResult:
    """Трассировка (время T_RT) и затем оценка линий (время T_ns)."""
    started = time.perf_counter()
    instances = list(run(loaded, jobs=jobs))
    t_rt = time.perf_counter() - started

    started = time.perf_counter()
    links = evaluate_links(instances, loaded)
    t_ns = time.perf_counter() - started

    logger.info("traced %d instances in %.3f s, evaluated %d links in %.3f s",
                len(instances), t_rt, len(links), t_ns)
    return RunResult(instances=instances, links=links, t_rt_s=t_rt, t_ns_s=t_ns)
