"""
Трассировщик методом изображений (MoI).

Геометрия строится пачкой по глубинам дерева отражений r = 0..R: на глубине r
все упорядоченные кортежи треугольников без подряд идущих повторов
(T * (T - 1)^(r - 1) штук). Затем допустимые лучи выстраиваются в порядке
обхода дерева в глубину (кортеж-префикс раньше своих продолжений), получают
потери на отражение и усиление, проходят пороги и только потом проверяются на
перекрытие. Лучи выдаются в том же порядке.

Учёт операций (OpCounter) совпадает с оценкой сложности дерева отражений:
r геометрических операций на кортеж и (r + 1) * T - 2r проверок перекрытия
на полностью проверенный луч.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.constants import speed_of_light

from . import simplify
from .exceptions import ConfigError, GeometryError
from .geometry import TriangleMesh, Triangle, Vec3, mirror_point, mirror_points, plane_crossings
from .qd import sample_rician
from .rng import RngStream, stream, tuple_hash
from .schemas import MaterialTable, QdMaterialParams, TraceConfig

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass
class OpCounter:
    """Счётчики операций одного экземпляра канала; поля *_by_order индексируются порядком r."""
    geometric_ops: int = 0
    obstruction_checks: int = 0
    tuples_visited: int = 0
    early_exits: int = 0
    tuples_by_order: List[int] = field(default_factory=list)
    checked_by_order: List[int] = field(default_factory=list)
    pruned_by_order: List[int] = field(default_factory=list)

    SCALARS = ("geometric_ops", "obstruction_checks", "tuples_visited", "early_exits")
    PROFILES = ("tuples_by_order", "checked_by_order", "pruned_by_order")

    @staticmethod
    def _add(values: List[int], order: int, amount: int) -> None:
        while len(values) <= order:
            values.append(0)
        values[order] += amount

    def visit(self, order: int, count: int) -> None:
        self.tuples_visited += count
        self.geometric_ops += order * count
        self._add(self.tuples_by_order, order, count)

    def checked(self, order: int) -> None:
        self._add(self.checked_by_order, order, 1)

    def pruned(self, order: int) -> None:
        self._add(self.pruned_by_order, order, 1)

    @property
    def rays_checked(self) -> int:
        return sum(self.checked_by_order)

    @property
    def total_ops(self) -> int:
        return self.geometric_ops + self.obstruction_checks

    def merge(self, other: "OpCounter") -> "OpCounter":
        merged = OpCounter(**{name: getattr(self, name) + getattr(other, name) for name in self.SCALARS})
        for name in self.PROFILES:
            for source in (self, other):
                for order, count in enumerate(getattr(source, name)):
                    merged._add(getattr(merged, name), order, count)
        return merged


@dataclass(frozen=True, eq=False)
class PathGeometry:
    triangle_tuple: Tuple[int, ...]
    points: np.ndarray

    @property
    def reflection_order(self) -> int:
        return len(self.triangle_tuple)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def length_m(self) -> float:
        return float(self.segment_lengths.sum())


@dataclass(frozen=True, eq=False)
class DeterministicRay:
    reflection_order: int
    triangle_tuple: Tuple[int, ...]
    points: np.ndarray
    length_m: float
    delay_s: float
    gain_db: float
    aod: Tuple[float, float]
    aoa: Tuple[float, float]
    phase: float
    reflection_losses_db: Tuple[float, ...] = ()
    ray_id: int = 0

    def same_as(self, other: "DeterministicRay") -> bool:
        return (
            self.triangle_tuple == other.triangle_tuple
            and np.array_equal(self.points, other.points)
            and (self.length_m, self.delay_s, self.gain_db, self.aod, self.aoa, self.phase)
            == (other.length_m, other.delay_s, other.gain_db, other.aod, other.aoa, other.phase)
        )


@dataclass(eq=False)
class _Candidate:
    geometry: PathGeometry
    losses_db: Tuple[float, ...]
    length_m: float
    gain_db: float


# ----- Счёт кортежей и операций -----
def tuples_at_order(T: int, r: int) -> int:
    if r == 0:
        return 1
    return T * (T - 1) ** (r - 1)


def predicted_tuple_count(T: int, R: int) -> int:
    return sum(tuples_at_order(T, r) for r in range(R + 1))


def predicted_geometric_ops(T: int, R: int) -> int:
    return sum(r * tuples_at_order(T, r) for r in range(1, R + 1))


def check_units(r: int, T: int) -> int:
    """Полная стоимость проверки перекрытия одного луча порядка r: сумма по r + 1 отрезкам."""
    if r == 0:
        return T
    return (r + 1) * T - 2 * r


def eq1_operation_bound(T: int, R: int) -> int:
    """r + (r + 1) T операций на каждый узел дерева отражений."""
    return sum((r + (r + 1) * T) * tuples_at_order(T, r) for r in range(R + 1))


def enumerate_tuples(T: int, r: int) -> np.ndarray:
    """Все кортежи длины r без подряд идущих повторов, в лексикографическом порядке."""
    tuples = np.zeros((1, 0), dtype=np.int64)
    for _ in range(r):
        if tuples.shape[0] == 0 or T == 0:
            return np.zeros((0, r), dtype=np.int64)
        if tuples.shape[1] == 0:
            tuples = np.arange(T, dtype=np.int64)[:, None]
            continue
        last = tuples[:, -1]
        k = np.arange(T - 1, dtype=np.int64)
        following = k[None, :] + (k[None, :] >= last[:, None])
        tuples = np.concatenate(
            [np.repeat(tuples, T - 1, axis=0), following.reshape(-1, 1)], axis=1
        )
    return tuples


# ----- Геометрия лучей -----
def image_chain(rx: Vec3, triangles: Sequence[Triangle]) -> List[Vec3]:
    """
    RX^(1..r): RX^(k) - отражение RX^(k-1) в k-м треугольнике со стороны RX.
    Кортеж упорядочен от TX, поэтому треугольники берутся в обратном порядке.
    """
    if len(triangles) == 0:
        raise GeometryError("image chain needs at least one reflecting triangle")
    images = []
    image = np.asarray(rx, dtype=float)
    for tri in reversed(triangles):
        image = mirror_point(image, tri)
        images.append(image)
    return images


def _build_paths(tx: Vec3, rx: Vec3, tuples: np.ndarray, mesh: TriangleMesh):
    n, r = tuples.shape
    points = np.zeros((n, r + 2, 3))
    points[:, 0] = tx
    points[:, -1] = rx
    if r == 0:
        return points, np.full(n, bool(np.linalg.norm(rx - tx) > 0.0))

    images = np.zeros((n, r + 1, 3))
    images[:, 0] = rx
    for k in range(1, r + 1):
        column = tuples[:, r - k]
        images[:, k] = mirror_points(images[:, k - 1], mesh.normals[column], mesh.offsets[column])

    alive = np.arange(n)
    start = np.tile(tx, (n, 1))
    for i in range(r):
        column = tuples[alive, i]
        target = images[alive, r - i]
        hit, ok = plane_crossings(start, target, mesh.normals[column], mesh.offsets[column])
        if ok.any():
            ok[ok] = mesh.contains(hit[ok], column[ok])
        points[alive, i + 1] = hit
        alive = alive[ok]
        start = hit[ok]
    valid = np.zeros(n, dtype=bool)
    valid[alive] = True
    return points, valid


def build_path(tx: Vec3, rx: Vec3, triangle_tuple: Sequence[int], mesh: TriangleMesh,
               counter: Optional[OpCounter] = None) -> Optional[PathGeometry]:
    triangle_tuple = tuple(int(i) for i in triangle_tuple)
    if any(a == b for a, b in zip(triangle_tuple, triangle_tuple[1:])):
        return None
    tuples = np.array([triangle_tuple], dtype=np.int64).reshape(1, len(triangle_tuple))
    points, valid = _build_paths(np.asarray(tx, float), np.asarray(rx, float), tuples, mesh)
    if counter is not None:
        counter.geometric_ops += len(triangle_tuple)
    if not valid[0]:
        return None
    return PathGeometry(triangle_tuple, points[0])


def segment_exclusions(triangle_tuple: Tuple[int, ...], segment: int) -> set:
    """Отрезок i соединяет P^(i) и P^(i+1); исключаются его собственные отражатели."""
    excluded = set()
    if segment >= 1:
        excluded.add(triangle_tuple[segment - 1])
    if segment < len(triangle_tuple):
        excluded.add(triangle_tuple[segment])
    return excluded


def check_obstruction(path: PathGeometry, mesh: TriangleMesh, counter: Optional[OpCounter] = None) -> bool:
    """True, если все r + 1 отрезков свободны. Проверка прерывается на первом перекрытом отрезке."""
    if counter is not None:
        counter.checked(path.reflection_order)
    segments = path.reflection_order + 1
    for i in range(segments):
        excluded = segment_exclusions(path.triangle_tuple, i)
        if counter is not None:
            counter.obstruction_checks += mesh.T - len(excluded)
        if mesh.obstruction_mask(path.points[i], path.points[i + 1], excluded).any():
            if counter is not None and i < segments - 1:
                counter.early_exits += 1
            return False
    return True


# ----- Усиление, потери, фаза -----
def deterministic_gain_db(length_m: float, reflection_losses_db: Sequence[float], wavelength_m: float) -> float:
    return 20.0 * math.log10(wavelength_m / (4.0 * math.pi * length_m)) - float(sum(reflection_losses_db))


def sample_reflection_loss(material: QdMaterialParams, rng: np.random.Generator) -> float:
    return sample_rician(material.s_rl, material.sigma_rl, rng)


def reflection_losses(triangle_tuple: Tuple[int, ...], mesh: TriangleMesh, materials: MaterialTable,
                      cfg: TraceConfig, rng: RngStream) -> Tuple[float, ...]:
    """Потери разыгрываются один раз на (пара, кортеж) и не меняются между шагами."""
    if not triangle_tuple:
        return ()
    generator = rng.child(tuple_hash(triangle_tuple)).generator()
    losses = []
    for index in triangle_tuple:
        material_id = int(mesh.material_ids[index])
        material = materials.materials.get(material_id)
        if material is None:
            raise ConfigError(f"triangle {index} uses material {material_id} missing from the table")
        loss = sample_reflection_loss(material, generator)
        if cfg.clamp_reflection_loss:
            low, high = cfg.rl_clamp_db
            loss = min(max(loss, low), high)
        losses.append(loss)
    return tuple(losses)


def ray_phase(order: int, length_m: float, wavelength_m: float) -> float:
    """180 градусов на каждое отражение плюс фаза распространения, в [0, 2pi)."""
    phase = (order * math.pi - TWO_PI * math.fmod(length_m / wavelength_m, 1.0)) % TWO_PI
    return 0.0 if phase >= TWO_PI else phase


def direction_angles(direction: np.ndarray) -> Tuple[float, float]:
    """Азимут в (-pi, pi] от оси +x, угол места в [-pi/2, pi/2] от плоскости x-y."""
    x, y, z = (float(c) for c in direction)
    azimuth = math.atan2(y, x)
    if azimuth <= -math.pi:
        azimuth = math.pi
    norm = math.sqrt(x * x + y * y + z * z)
    elevation = math.asin(max(-1.0, min(1.0, z / norm)))
    return azimuth, elevation


def make_ray(geometry: PathGeometry, losses_db: Tuple[float, ...], length_m: float, gain_db: float,
             wavelength_m: float) -> DeterministicRay:
    points = geometry.points
    order = geometry.reflection_order
    return DeterministicRay(
        reflection_order=order,
        triangle_tuple=geometry.triangle_tuple,
        points=points,
        length_m=length_m,
        delay_s=length_m / speed_of_light,
        gain_db=gain_db,
        aod=direction_angles(points[1] - points[0]),
        aoa=direction_angles(points[-2] - points[-1]),
        phase=ray_phase(order, length_m, wavelength_m),
        reflection_losses_db=losses_db,
        ray_id=tuple_hash(geometry.triangle_tuple),
    )


def synthetic_ray(delay_s: float = 50e-9, gain_db: float = -80.0, order: int = 1) -> DeterministicRay:
    """Опорный D-луч без сцены, для статистики QD."""
    length = delay_s * speed_of_light
    points = np.zeros((order + 2, 3))
    points[:, 0] = np.linspace(0.0, length, order + 2)
    return DeterministicRay(
        reflection_order=order,
        triangle_tuple=tuple(range(order)),
        points=points,
        length_m=length,
        delay_s=delay_s,
        gain_db=gain_db,
        aod=(0.0, 0.0),
        aoa=(math.pi, 0.0),
        phase=0.0,
        ray_id=tuple_hash(tuple(range(order))),
    )


# ----- Трассировка пары узлов -----
def trace_pair(tx: Vec3, rx: Vec3, mesh: TriangleMesh, materials: MaterialTable, cfg: TraceConfig,
               rng: Optional[RngStream] = None) -> Tuple[List[DeterministicRay], OpCounter]:
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if rng is None:
        rng = stream(cfg.seed, "reflection_loss")
    counter = OpCounter()
    wavelength = cfg.wavelength_m

    # фаза 1: геометрия и усиление для всех допустимых кортежей
    candidates = []
    for order in range(cfg.max_reflection_order + 1):
        tuples = enumerate_tuples(mesh.T, order)
        counter.visit(order, tuples.shape[0])
        if tuples.shape[0] == 0:
            continue
        points, valid = _build_paths(tx, rx, tuples, mesh)
        for k in np.flatnonzero(valid):
            geometry = PathGeometry(tuple(int(i) for i in tuples[k]), points[k])
            length = geometry.length_m
            losses = reflection_losses(geometry.triangle_tuple, mesh, materials, cfg, rng)
            candidates.append(_Candidate(geometry, losses, length,
                                         deterministic_gain_db(length, losses, wavelength)))

    # обход дерева в глубину: префикс кортежа раньше его продолжений
    candidates.sort(key=lambda c: c.geometry.triangle_tuple)

    # фаза 2: пороги и проверка перекрытия
    if cfg.threshold_after_obstruction:
        # все кандидаты уже проверены, отсечение проверок не экономит: pruned_by_order не растёт
        clear = [c for c in candidates if check_obstruction(c.geometry, mesh, counter)]
        survivors = _apply_thresholds(clear, cfg)
    else:
        selected = _apply_thresholds(candidates, cfg)
        _count_pruned(candidates, selected, counter)
        survivors = [c for c in selected if check_obstruction(c.geometry, mesh, counter)]

    rays = [make_ray(c.geometry, c.losses_db, c.length_m, c.gain_db, wavelength) for c in survivors]
    logger.debug("traced pair: %d candidates, %d rays, %d checks", len(candidates), len(rays),
                 counter.obstruction_checks)
    return rays, counter


def _apply_thresholds(candidates: List[_Candidate], cfg: TraceConfig) -> List[_Candidate]:
    kept = simplify.filter_absolute(candidates, cfg.abs_threshold_db)
    return simplify.filter_relative(kept, cfg.rel_threshold_db)


def _count_pruned(before: List[_Candidate], after: List[_Candidate], counter: OpCounter) -> None:
    kept = {id(c) for c in after}
    for candidate in before:
        if id(candidate) not in kept:
            counter.pruned(candidate.geometry.reflection_order)
