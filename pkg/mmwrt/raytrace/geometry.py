"""
Треугольная сетка окружения и геометрические примитивы метода изображений:
зеркальное отражение точки, пересечение отрезка с плоскостью, барицентрическая
проверка принадлежности и проверка перекрытия отрезка.

Все длины в метрах, float64. Точки - numpy-массивы формы (3,).
"""
import io
import logging
import math
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Optional, TextIO, Union

import numpy as np

from .exceptions import GeometryError, MeshParseError

logger = logging.getLogger(__name__)

AREA_EPS = 1e-12          # m^2, минимальная площадь треугольника
PARALLEL_EPS = 1e-12      # |direction . normal| ниже этого - отрезок параллелен плоскости
BARYCENTRIC_EPS = 1e-12   # граница треугольника считается внутренней
OBSTRUCTION_EPS = 1e-9    # допуск по параметру пересечения при проверке перекрытия

Vec3 = np.ndarray


def vec3(x: float, y: float, z: float) -> Vec3:
    point = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(point)):
        raise GeometryError(f"non-finite coordinates {point.tolist()}")
    return point


def _as_point(value) -> Vec3:
    point = np.asarray(value, dtype=float).reshape(3)
    if not np.all(np.isfinite(point)):
        raise GeometryError(f"non-finite coordinates {point.tolist()}")
    return point


@dataclass(frozen=True, eq=False)
class Triangle:
    v0: Vec3
    v1: Vec3
    v2: Vec3
    material_id: int = 0

    def __post_init__(self):
        for name in ("v0", "v1", "v2"):
            object.__setattr__(self, name, _as_point(getattr(self, name)))

    @property
    def area(self) -> float:
        return 0.5 * float(np.linalg.norm(np.cross(self.v1 - self.v0, self.v2 - self.v0)))

    @property
    def normal(self) -> Vec3:
        cross = np.cross(self.v1 - self.v0, self.v2 - self.v0)
        norm = float(np.linalg.norm(cross))
        if 0.5 * norm <= AREA_EPS:
            raise GeometryError("degenerate triangle (collinear vertices)")
        return cross / norm

    @property
    def offset(self) -> float:
        return float(self.normal @ self.v0)

    @property
    def centroid(self) -> Vec3:
        return (self.v0 + self.v1 + self.v2) / 3.0


@dataclass(frozen=True, eq=False)
class Segment:
    a: Vec3
    b: Vec3

    def __post_init__(self):
        object.__setattr__(self, "a", _as_point(self.a))
        object.__setattr__(self, "b", _as_point(self.b))
        if not np.linalg.norm(self.b - self.a) > 0.0:
            raise GeometryError("zero-length segment")

    @property
    def direction(self) -> Vec3:
        return self.b - self.a

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


class TriangleMesh:
    """
    Неизменяемая сетка: вершины (T, 3, 3), материалы (T,), единичные нормали
    и смещения плоскостей n.v0. Массивы только для чтения, поэтому сетку можно
    свободно передавать между параллельными воркерами.
    """

    def __init__(self, triangles: Iterable[Triangle] = ()):
        triangles = list(triangles)
        if triangles:
            vertices = np.array([[t.v0, t.v1, t.v2] for t in triangles], dtype=float)
        else:
            vertices = np.zeros((0, 3, 3), dtype=float)
        material_ids = np.array([t.material_id for t in triangles], dtype=np.int64)

        e1 = vertices[:, 1] - vertices[:, 0]
        e2 = vertices[:, 2] - vertices[:, 0]
        cross = np.cross(e1, e2)
        double_area = np.linalg.norm(cross, axis=1)
        degenerate = np.flatnonzero(0.5 * double_area <= AREA_EPS)
        if degenerate.size:
            raise GeometryError(f"degenerate triangle at index {int(degenerate[0])}")

        normals = cross / double_area[:, None] if len(triangles) else np.zeros((0, 3))
        self.vertices = vertices
        self.material_ids = material_ids
        self.normals = normals
        self.offsets = np.einsum("ij,ij->i", normals, vertices[:, 0])
        self._e1 = e1
        self._e2 = e2
        self._d00 = np.einsum("ij,ij->i", e1, e1)
        self._d01 = np.einsum("ij,ij->i", e1, e2)
        self._d11 = np.einsum("ij,ij->i", e2, e2)
        self._denom = self._d00 * self._d11 - self._d01 ** 2
        for array in (self.vertices, self.material_ids, self.normals, self.offsets,
                      self._e1, self._e2, self._d00, self._d01, self._d11, self._denom):
            array.flags.writeable = False

    @property
    def T(self) -> int:
        return int(self.vertices.shape[0])

    def __len__(self) -> int:
        return self.T

    def triangle(self, index: int) -> Triangle:
        v0, v1, v2 = self.vertices[index]
        return Triangle(v0, v1, v2, int(self.material_ids[index]))

    @property
    def triangles(self) -> list:
        return [self.triangle(i) for i in range(self.T)]

    def barycentric(self, points: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Барицентрические координаты (u, v, w) точек points[k] в треугольнике indices[k]."""
        rel = points - self.vertices[indices, 0]
        d20 = np.einsum("ij,ij->i", rel, self._e1[indices])
        d21 = np.einsum("ij,ij->i", rel, self._e2[indices])
        denom = self._denom[indices]
        v = (self._d11[indices] * d20 - self._d01[indices] * d21) / denom
        w = (self._d00[indices] * d21 - self._d01[indices] * d20) / denom
        return np.stack([1.0 - v - w, v, w], axis=1)

    def contains(self, points: np.ndarray, indices: np.ndarray) -> np.ndarray:
        return np.all(self.barycentric(points, indices) >= -BARYCENTRIC_EPS, axis=1)

    def obstruction_mask(self, a: Vec3, b: Vec3, exclude: Iterable[int] = ()) -> np.ndarray:
        """
        Маска треугольников, пересекающих открытый отрезок (a, b):
        параметр пересечения строго в (eps, 1 - eps) и точка внутри треугольника.
        """
        hits = np.zeros(self.T, dtype=bool)
        if self.T == 0:
            return hits
        direction = b - a
        denom = self.normals @ direction
        numer = self.offsets - self.normals @ a
        crossing = np.abs(denom) >= PARALLEL_EPS
        t = np.divide(numer, denom, out=np.full(self.T, np.nan), where=crossing)
        crossing &= (t > OBSTRUCTION_EPS) & (t < 1.0 - OBSTRUCTION_EPS)
        excluded = list(exclude)
        if excluded:
            crossing[excluded] = False
        candidates = np.flatnonzero(crossing)
        if candidates.size:
            points = a + t[candidates, None] * direction
            hits[candidates] = self.contains(points, candidates)
        return hits


# ----- Скалярные операции -----
def mirror_point(p: Vec3, tri: Triangle) -> Vec3:
    """Specular image of p across the supporting plane of tri: q = p - 2(p.n - d)n."""
    p = _as_point(p)
    normal = tri.normal
    return p - 2.0 * (p @ normal - normal @ tri.v0) * normal


def mirror_points(points: np.ndarray, normals: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    distance = np.einsum("ij,ij->i", points, normals) - offsets
    return points - 2.0 * distance[:, None] * normals


def segment_plane_intersect(seg: Segment, tri: Triangle) -> Optional[Vec3]:
    normal = tri.normal
    direction = seg.direction
    denom = float(normal @ direction)
    if abs(denom) < PARALLEL_EPS:
        return None
    t = (float(normal @ tri.v0) - float(normal @ seg.a)) / denom
    if not 0.0 < t < 1.0:
        return None
    return seg.a + t * direction


def plane_crossings(a: np.ndarray, b: np.ndarray, normals: np.ndarray, offsets: np.ndarray):
    """
    Векторный вариант segment_plane_intersect для пачки отрезков (a[k], b[k]) и плоскостей.
    Возвращает (точки, маска допустимых пересечений).
    """
    direction = b - a
    denom = np.einsum("ij,ij->i", normals, direction)
    numer = offsets - np.einsum("ij,ij->i", normals, a)
    valid = np.abs(denom) >= PARALLEL_EPS
    t = np.divide(numer, denom, out=np.full(denom.shape, np.nan), where=valid)
    valid &= (t > 0.0) & (t < 1.0)
    t = np.where(valid, t, 0.0)
    return a + t[:, None] * direction, valid


def barycentric_coordinates(p: Vec3, tri: Triangle) -> np.ndarray:
    e1 = tri.v1 - tri.v0
    e2 = tri.v2 - tri.v0
    rel = _as_point(p) - tri.v0
    d00, d01, d11 = e1 @ e1, e1 @ e2, e2 @ e2
    d20, d21 = rel @ e1, rel @ e2
    denom = d00 * d11 - d01 * d01
    if 0.5 * math.sqrt(max(denom, 0.0)) <= AREA_EPS:
        raise GeometryError("degenerate triangle (collinear vertices)")
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.array([1.0 - v - w, v, w])


def point_in_triangle(p: Vec3, tri: Triangle) -> bool:
    return bool(np.all(barycentric_coordinates(p, tri) >= -BARYCENTRIC_EPS))


def segment_obstructed(seg: Segment, mesh: TriangleMesh, exclude: Iterable[int] = ()) -> bool:
    return bool(mesh.obstruction_mask(seg.a, seg.b, exclude).any())


# ----- Формат файла сетки -----
def _mesh_text(source: Union[bytes, str, BinaryIO, TextIO]) -> str:
    if isinstance(source, str):
        return source
    try:
        raw = source if isinstance(source, bytes) else source.read()
    except UnicodeDecodeError as exc:
        raise MeshParseError(0, f"mesh is not valid UTF-8: {exc.reason}") from exc
    if isinstance(raw, str):
        return raw
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw.count(b"\n", 0, exc.start) + 1
        raise MeshParseError(line, f"invalid UTF-8 byte at offset {exc.start}") from exc


def load_mesh(source: Union[bytes, str, BinaryIO, TextIO], material_ids: Optional[set] = None) -> TriangleMesh:
    """
    Одна строка - один треугольник: девять координат и целый id материала.
    Строки, начинающиеся с '#', и пустые строки пропускаются.
    """
    text = _mesh_text(source)
    triangles = []
    for number, line in enumerate(io.StringIO(text), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 10:
            raise MeshParseError(number, f"expected 9 coordinates and a material id, got {len(fields)} fields")
        try:
            coords = [float(value) for value in fields[:9]]
            material_id = int(fields[9])
        except ValueError as exc:
            raise MeshParseError(number, str(exc)) from exc
        if not all(math.isfinite(value) for value in coords):
            raise MeshParseError(number, "non-finite coordinate")
        if material_ids is not None and material_id not in material_ids:
            raise MeshParseError(number, f"unknown material id {material_id}")
        triangle = Triangle(coords[0:3], coords[3:6], coords[6:9], material_id)
        if triangle.area <= AREA_EPS:
            raise MeshParseError(number, "degenerate triangle")
        triangles.append(triangle)

    logger.debug("loaded mesh with %d triangles", len(triangles))
    return TriangleMesh(triangles)


def write_mesh(mesh: TriangleMesh, sink: TextIO) -> None:
    sink.write("# v0x v0y v0z v1x v1y v1z v2x v2y v2z material_id\n")
    for vertices, material_id in zip(mesh.vertices, mesh.material_ids):
        coords = " ".join(repr(float(value)) for value in vertices.reshape(-1))
        sink.write(f"{coords} {int(material_id)}\n")
