import textwrap

import numpy as np
import pytest

from raytrace.geometry import Triangle, TriangleMesh
from raytrace.scenes import FLOOR, WALL, box_mesh, l_corridor_mesh, placeholder_materials, quad
from raytrace.schemas import MaterialTable, QdMaterialParams, TraceConfig


@pytest.fixture
def box():
    return box_mesh()


@pytest.fixture
def corridor():
    return l_corridor_mesh()


@pytest.fixture
def corner():
    """Открытый угол: пол и две стены, T = 6; пути внутри квадранта ничем не перекрыты."""
    triangles = quad((0, 0, 0), (10, 0, 0), (10, 10, 0), (0, 10, 0), FLOOR)
    triangles += quad((0, 0, 0), (0, 10, 0), (0, 10, 3), (0, 0, 3), WALL)
    triangles += quad((0, 0, 0), (0, 0, 3), (10, 0, 3), (10, 0, 0), WALL)
    return TriangleMesh(triangles)


@pytest.fixture
def materials():
    return placeholder_materials()


@pytest.fixture
def fixed_loss_materials():
    """RL = 10 dB без разброса, без диффузных компонент."""
    params = QdMaterialParams(s_rl=10.0, sigma_rl=0.0)
    return MaterialTable(materials={i: params for i in range(1, 6)})


@pytest.fixture
def baseline_cfg():
    def make(R=2, **kwargs):
        kwargs = {"rel_threshold_db": -np.inf, "abs_threshold_db": -1000.0, **kwargs}
        return TraceConfig(max_reflection_order=R, **kwargs)
    return make


@pytest.fixture
def plane_z0():
    return Triangle((-100, -100, 0), (100, -100, 0), (0, 100, 0))


@pytest.fixture
def write_scenario(tmp_path):
    """Пишет TOML сценария в tmp_path и возвращает путь."""
    def write(body: str, name: str = "scenario.toml"):
        path = tmp_path / name
        path.write_text(textwrap.dedent(body), encoding="utf-8")
        return path
    return write


MOVING_BOX = """
    name = "moving-box"
    steps = {steps}
    seed = 5
    qd_enabled = {qd}

    [environment]
    builtin = "box"

    [simplification]
    max_reflection_order = {R}
    rel_threshold_db = -inf
    abs_threshold_db = -1000.0

    [[nodes]]
    id = "ap"
    kind = "tx"
    tx_power_dbm = 20.0
    position = [5.0, 1.0, 2.5]
    array = {{ rows = 2, cols = 2 }}

    [[nodes]]
    id = "ue"
    kind = "rx"
    serves = "ap"
    waypoints = [[5.3, 3.0, 1.5], [5.3, 17.0, 1.5]]
    speed_mps = 40.0
    array = {{ rows = 2, cols = 2 }}
"""


@pytest.fixture
def moving_box(write_scenario):
    def make(steps=6, R=2, qd="false", name="scenario.toml"):
        return write_scenario(MOVING_BOX.format(steps=steps, R=R, qd=qd), name=name)
    return make
