"""
Синтетические окружения: коробка (аналог Indoor1), L-образный коридор и
двор с корпусами. Каждая прямоугольная поверхность - два треугольника.
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

from .exceptions import ConfigError
from .geometry import Triangle, TriangleMesh
from .schemas import MaterialTable, QdMaterialParams

logger = logging.getLogger(__name__)

# ----- Материалы -----
FLOOR = 1
CEILING = 2
WALL = 3
BUILDING = 4
GROUND = 5

BOX_SIZE = (10.0, 19.0, 3.0)
CORRIDOR_HEIGHT = 3.0
COURTYARD_SIZE = (120.0, 70.0, 10.0)


def placeholder_materials() -> MaterialTable:
    """Значения не откалиброваны: это правдоподобные заглушки, а не результаты измерений."""
    common = dict(
        sigma_rl=2.0, s_k=10.0, sigma_k=2.0,
        s_gamma_pre=3e-9, sigma_gamma_pre=0.5e-9, s_gamma_post=5e-9, sigma_gamma_post=1e-9,
        s_sigma_s_pre=3.0, sigma_sigma_s_pre=1.0, s_sigma_s_post=3.0, sigma_sigma_s_post=1.0,
        lambda_pre=5e8, lambda_post=5e8, n_pre=3, n_post=5, angle_spread=0.05,
    )
    return MaterialTable(materials={
        FLOOR: QdMaterialParams(name="floor (non-calibrated)", s_rl=12.0, **common),
        CEILING: QdMaterialParams(name="ceiling (non-calibrated)", s_rl=12.0, **common),
        WALL: QdMaterialParams(name="wall (non-calibrated)", s_rl=10.0, **common),
        BUILDING: QdMaterialParams(name="building (non-calibrated)", s_rl=8.0, **common),
        GROUND: QdMaterialParams(name="ground (non-calibrated)", s_rl=14.0, **common),
    })


def quad(p0, p1, p2, p3, material_id: int) -> List[Triangle]:
    """Четырёхугольник p0-p1-p2-p3 (вершины по контуру) как два треугольника."""
    return [Triangle(p0, p1, p2, material_id), Triangle(p0, p2, p3, material_id)]


def _box_faces(lo: Sequence[float], hi: Sequence[float], floor: Optional[int], ceiling: int,
               wall: int) -> List[Triangle]:
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    faces = []
    if floor is not None:
        faces += quad((x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0), floor)
    faces += quad((x0, y0, z1), (x0, y1, z1), (x1, y1, z1), (x1, y0, z1), ceiling)
    faces += quad((x0, y0, z0), (x0, y0, z1), (x1, y0, z1), (x1, y0, z0), wall)
    faces += quad((x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1), wall)
    faces += quad((x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1), wall)
    faces += quad((x1, y0, z0), (x1, y0, z1), (x1, y1, z1), (x1, y1, z0), wall)
    return faces


def _check_size(size: Iterable[float]) -> Tuple[float, float, float]:
    size = tuple(float(v) for v in size)
    if len(size) != 3 or not all(v > 0 for v in size):
        raise ConfigError(f"scene size must be three positive lengths, got {size}")
    return size


def box_mesh(size: Sequence[float] = BOX_SIZE) -> TriangleMesh:
    """Закрытая комната [0, X] x [0, Y] x [0, Z]; T = 12."""
    x, y, z = _check_size(size)
    return TriangleMesh(_box_faces((0.0, 0.0, 0.0), (x, y, z), FLOOR, CEILING, WALL))


def l_corridor_mesh(height: float = CORRIDOR_HEIGHT) -> TriangleMesh:
    """
    L-коридор: горизонтальное плечо x in [0, 20], y in [0, 4] и вертикальное
    x in [16, 20], y in [0, 20]; пол, потолок и шесть стен, T = 20.
    """
    if not height > 0:
        raise ConfigError("corridor height must be positive")
    h = float(height)
    triangles = []
    for (x0, y0), (x1, y1) in (((0.0, 0.0), (16.0, 4.0)), ((16.0, 0.0), (20.0, 20.0))):
        triangles += quad((x0, y0, 0.0), (x1, y0, 0.0), (x1, y1, 0.0), (x0, y1, 0.0), FLOOR)
        triangles += quad((x0, y0, h), (x0, y1, h), (x1, y1, h), (x1, y0, h), CEILING)
    outline = [(0.0, 0.0), (20.0, 0.0), (20.0, 20.0), (16.0, 20.0), (16.0, 4.0), (0.0, 4.0)]
    for (xa, ya), (xb, yb) in zip(outline, outline[1:] + outline[:1]):
        triangles += quad((xa, ya, 0.0), (xb, yb, 0.0), (xb, yb, h), (xa, ya, h), WALL)
    return TriangleMesh(triangles)


def courtyard_mesh(size: Sequence[float] = COURTYARD_SIZE) -> TriangleMesh:
    """Площадка X x Y с тремя корпусами высотой Z вдоль краёв; T = 32."""
    x, y, z = _check_size(size)
    triangles = quad((0.0, 0.0, 0.0), (x, 0.0, 0.0), (x, y, 0.0), (0.0, y, 0.0), GROUND)
    blocks = (
        ((0.05 * x, 0.75 * y), (0.45 * x, 0.95 * y)),
        ((0.55 * x, 0.75 * y), (0.95 * x, 0.95 * y)),
        ((0.80 * x, 0.10 * y), (0.95 * x, 0.60 * y)),
    )
    for (bx0, by0), (bx1, by1) in blocks:
        triangles += _box_faces((bx0, by0, 0.0), (bx1, by1, z), None, BUILDING, BUILDING)
    return TriangleMesh(triangles)


def builtin_mesh(name: str, size: Optional[Sequence[float]] = None) -> TriangleMesh:
    if name == "box":
        return box_mesh(size or BOX_SIZE)
    if name == "l_corridor":
        return l_corridor_mesh(size[2] if size else CORRIDOR_HEIGHT)
    if name == "courtyard":
        return courtyard_mesh(size or COURTYARD_SIZE)
    raise ConfigError(f"unknown builtin scene {name!r}")

