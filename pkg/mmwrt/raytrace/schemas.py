import math
from typing import Dict, List, Literal, Optional, Tuple

from ninja import Schema
from pydantic import Field, field_serializer, field_validator, model_validator
from scipy.constants import speed_of_light

from .conf import get_setting

NodeKind = Literal["tx", "rx", "interferer-tx", "interferer-rx"]
TX_KINDS = ("tx", "interferer-tx")
RX_KINDS = ("rx", "interferer-rx")


def setting_default(name: str):
    """Значение по умолчанию поля берётся из settings.MMWRT в момент создания схемы."""
    return lambda: get_setting(name)


# ----- Материалы (параметры QD) -----
class QdMaterialParams(Schema):
    """
    Параметры материала для потерь на отражение и диффузной модели.
    Единицы: s_rl/sigma_rl, s_k/sigma_k, s_sigma_s_*/sigma_sigma_s_* в dB,
    s_gamma_*/sigma_gamma_* в секундах, lambda_* в 1/s, angle_spread в радианах.
    S задаётся в dB и переводится в натуральные единицы множителем ln(10)/10.
    """
    name: str = ""
    s_rl: float = 10.0
    sigma_rl: float = 0.0
    s_k: float = 10.0
    sigma_k: float = 0.0
    s_gamma_pre: float = Field(3e-9, gt=0.0)
    sigma_gamma_pre: float = 0.0
    s_gamma_post: float = Field(5e-9, gt=0.0)
    sigma_gamma_post: float = 0.0
    s_sigma_s_pre: float = 3.0
    sigma_sigma_s_pre: float = 0.0
    s_sigma_s_post: float = 3.0
    sigma_sigma_s_post: float = 0.0
    lambda_pre: float = 5e8
    lambda_post: float = 5e8
    n_pre: int = Field(0, ge=0)
    n_post: int = Field(0, ge=0)
    angle_spread: float = Field(0.0, ge=0.0)

    @field_validator(
        "sigma_rl", "sigma_k", "sigma_gamma_pre", "sigma_gamma_post",
        "sigma_sigma_s_pre", "sigma_sigma_s_post",
    )
    @classmethod
    def _non_negative_sigma(cls, value: float) -> float:
        if not value >= 0.0:
            raise ValueError("standard deviations must be >= 0")
        return value

    @model_validator(mode="after")
    def _rates_for_counts(self):
        if self.n_pre > 0 and not self.lambda_pre > 0:
            raise ValueError("lambda_pre must be > 0 when n_pre > 0")
        if self.n_post > 0 and not self.lambda_post > 0:
            raise ValueError("lambda_post must be > 0 when n_post > 0")
        return self


class MaterialTable(Schema):
    materials: Dict[int, QdMaterialParams]

    def get(self, material_id: int) -> QdMaterialParams:
        return self.materials[material_id]

    @property
    def ids(self) -> set:
        return set(self.materials)


# ----- Упрощения и трассировка -----
class SimplificationSetting(Schema):
    max_reflection_order: int = Field(4, ge=0)
    rel_threshold_db: float = -math.inf
    abs_threshold_db: float = -200.0

    @field_validator("rel_threshold_db", mode="before")
    @classmethod
    def _minus_infinity_string(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("-inf", "-infinity"):
            return -math.inf
        return value

    @field_validator("rel_threshold_db")
    @classmethod
    def _relative_not_nan(cls, value: float) -> float:
        if math.isnan(value) or value == math.inf:
            raise ValueError("relative threshold must be a number or -inf")
        return value

    @field_serializer("rel_threshold_db", when_used="json")
    def _dump_minus_infinity(self, value: float):
        # JSON не знает -inf: пишем строку, которую принимает валидатор выше
        return "-inf" if value == -math.inf else value

    @field_validator("abs_threshold_db")
    @classmethod
    def _absolute_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("absolute threshold must be finite")
        return value


class TraceConfig(SimplificationSetting):
    carrier_freq_hz: float = Field(default_factory=setting_default("DEFAULT_CARRIER_HZ"), gt=0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    threshold_after_obstruction: bool = False
    clamp_reflection_loss: bool = False
    rl_clamp_db: Tuple[float, float] = Field(default_factory=lambda: tuple(get_setting("RL_CLAMP_DB")))

    @property
    def wavelength_m(self) -> float:
        return speed_of_light / self.carrier_freq_hz


# ----- Антенны и бюджет линии -----
class ArrayConfig(Schema):
    """
    Планарная решётка. Без поворота лежит в плоскости y-z:
    строки вдоль z, столбцы вдоль y, нормаль (boresight) вдоль +x.
    """
    rows: int = Field(1, ge=1)
    cols: int = Field(1, ge=1)
    spacing: float = Field(0.5, gt=0)   # в длинах волн
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    @property
    def size(self) -> int:
        return self.rows * self.cols


class LinkBudget(Schema):
    tx_power_dbm: float = 20.0
    bandwidth_hz: float = Field(default_factory=setting_default("DEFAULT_BANDWIDTH_HZ"), gt=0)
    noise_figure_db: float = Field(default_factory=setting_default("DEFAULT_NOISE_FIGURE_DB"))
    noise_psd_dbm_hz: float = Field(default_factory=setting_default("NOISE_PSD_DBM_HZ"))

    @property
    def noise_floor_dbm(self) -> float:
        return self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz) + self.noise_figure_db


# ----- Узлы и сценарий -----
class NodeSpec(Schema):
    id: str
    kind: NodeKind
    tx_power_dbm: Optional[float] = None
    serves: Optional[str] = None
    active: bool = True
    array: ArrayConfig = ArrayConfig()
    position: Optional[Tuple[float, float, float]] = None
    waypoints: Optional[List[Tuple[float, float, float]]] = None
    speed_mps: float = Field(0.0, ge=0.0)

    @model_validator(mode="after")
    def _check_node(self):
        if (self.position is None) == (self.waypoints is None):
            raise ValueError(f"node {self.id}: give exactly one of position / waypoints")
        if len(self.path) < 1:
            raise ValueError(f"node {self.id}: at least one waypoint is required")
        for point in self.path:
            if not all(math.isfinite(c) for c in point):
                raise ValueError(f"node {self.id}: waypoint coordinates must be finite")
        if self.is_tx != (self.tx_power_dbm is not None):
            raise ValueError(f"node {self.id}: tx_power_dbm is required for tx kinds and only for them")
        if not self.is_tx and self.serves is None:
            raise ValueError(f"node {self.id}: receivers must name the tx they are bound to (serves)")
        return self

    @property
    def path(self) -> List[Tuple[float, float, float]]:
        return self.waypoints if self.waypoints is not None else [self.position]

    @property
    def is_tx(self) -> bool:
        return self.kind in TX_KINDS


class EnvironmentSpec(Schema):
    mesh: Optional[str] = None
    builtin: Optional[Literal["box", "l_corridor", "courtyard"]] = None
    size: Optional[Tuple[float, float, float]] = None
    materials: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.mesh is None) == (self.builtin is None):
            raise ValueError("environment needs exactly one of mesh / builtin")
        return self


class ScenarioConfig(Schema):
    name: str
    environment: EnvironmentSpec
    nodes: List[NodeSpec]
    timestep_s: float = Field(default_factory=setting_default("DEFAULT_TIMESTEP_S"), gt=0)
    steps: int = Field(1, ge=1)
    carrier_freq_hz: float = Field(default_factory=setting_default("DEFAULT_CARRIER_HZ"), gt=0)
    link: LinkBudget = Field(default_factory=LinkBudget)
    qd_enabled: bool = False
    post_qd_filter: bool = True
    simplification: SimplificationSetting = Field(default_factory=SimplificationSetting)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    symmetric: bool = False
    threshold_after_obstruction: bool = False
    clamp_reflection_loss: bool = False

    @model_validator(mode="after")
    def _check_topology(self):
        ids = [node.id for node in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        transmitters = {node.id for node in self.nodes if node.is_tx}
        for node in self.nodes:
            if not node.is_tx and node.serves not in transmitters:
                raise ValueError(f"node {node.id}: serves unknown transmitter {node.serves!r}")
        if not transmitters or len(transmitters) == len(self.nodes):
            raise ValueError("a scenario needs at least one transmitter and one receiver")
        return self

    def node(self, node_id: str) -> NodeSpec:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    @property
    def transmitters(self) -> List[NodeSpec]:
        return [node for node in self.nodes if node.is_tx]

    @property
    def receivers(self) -> List[NodeSpec]:
        return [node for node in self.nodes if not node.is_tx]

    def trace_config(self) -> TraceConfig:
        return TraceConfig(
            max_reflection_order=self.simplification.max_reflection_order,
            rel_threshold_db=self.simplification.rel_threshold_db,
            abs_threshold_db=self.simplification.abs_threshold_db,
            carrier_freq_hz=self.carrier_freq_hz,
            seed=self.seed,
            threshold_after_obstruction=self.threshold_after_obstruction,
            clamp_reflection_loss=self.clamp_reflection_loss,
        )


# ----- Отчёты -----
class RunManifest(Schema):
    config_digest: str
    seed: int
    tool_version: str
    command: str
    t_rt_s: float
    t_ns_s: float
    instances: int
    rays: int
    mpcs: int
    geometric_ops: int
    obstruction_checks: int
    tuples_visited: int
    triangles: int
    steps: int
    host: Dict[str, str]
    scenario: dict


class ComparisonReport(Schema):
    metric: str
    rx_id: str
    nrmse: float = Field(ge=0.0)
    speedup: float = Field(gt=0.0)
    ops_speedup: float
    rays_baseline: int
    rays_simplified: int
    checks_saved: int
    mean_diff: float
    stderr_diff: float
    outage_floor_db: float
    acceptable: bool
