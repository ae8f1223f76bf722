"""
Квази-детерминированная (QD) модель: вокруг каждого отражённого D-луча
генерируются диффузные пре- и пост-курсоры.

Для луча порядка r каждый отражатель даёт свою пачку из N_pre + N_post
компонент с параметрами своего материала; вместе с главным курсором
получается r * (N_pre + N_post) + 1 MPC. Прямой луч диффузных компонент не
порождает.

Усиление диффузной компоненты (в dB):
    PG_i = PG_0 - K_dB - (10 / ln 10) * |tau_i - tau_0| / gamma + S_dB,
где K_dB, gamma, sigma_s ~ Rician на каждую сторону кластера, S_dB ~ N(0, sigma_s^2).
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .exceptions import ConfigError
from .rng import RngStream, stream
from .schemas import QdMaterialParams

if TYPE_CHECKING:
    from .geometry import TriangleMesh
    from .raytracer import DeterministicRay
    from .schemas import MaterialTable

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DB_PER_NEPER = 10.0 / math.log(10.0)


class MpcKind(str, Enum):
    MAIN = "main-cursor"
    PRE = "pre-cursor"
    POST = "post-cursor"


@dataclass(frozen=True)
class Mpc:
    delay_s: float
    gain_db: float
    aod: Tuple[float, float]
    aoa: Tuple[float, float]
    phase: float
    kind: MpcKind
    parent: int
    order: int = 0

    def reversed(self) -> "Mpc":
        """Тот же путь в обратном направлении: AoD и AoA меняются местами."""
        return replace(self, aod=self.aoa, aoa=self.aod)


def sample_rician(s: float, sigma: float, rng: np.random.Generator, size=None):
    """|Z|, Z = (s + sigma*N1) + j*sigma*N2. При sigma = 0 возвращается ровно s."""
    if sigma < 0:
        raise ConfigError(f"Rician deviation must be >= 0, got {sigma}")
    if sigma == 0:
        return float(s) if size is None else np.full(size, float(s))
    real = rng.normal(s, sigma, size)
    imag = rng.normal(0.0, sigma, size)
    result = np.hypot(real, imag)
    return float(result) if size is None else result


def rician_mean(s: float, sigma: float) -> float:
    if sigma == 0:
        return float(s)
    return float(stats.rice.mean(abs(s) / sigma, scale=sigma))


def main_cursor(dray: "DeterministicRay") -> Mpc:
    return Mpc(
        delay_s=dray.delay_s,
        gain_db=dray.gain_db,
        aod=dray.aod,
        aoa=dray.aoa,
        phase=dray.phase,
        kind=MpcKind.MAIN,
        parent=dray.ray_id,
        order=dray.reflection_order,
    )


def _wrap_azimuth(azimuth: np.ndarray) -> np.ndarray:
    wrapped = np.mod(azimuth + math.pi, TWO_PI) - math.pi
    return np.where(wrapped <= -math.pi, math.pi, wrapped)


def _truncate_pre_cursors(offsets: np.ndarray, tau0: float, rng: np.random.Generator) -> np.ndarray:
    """
    Пре-курсоры идут назад от tau_0 и должны остаться при tau > 0. Смещения,
    дошедшие до tau_0, заново разыгрываются равномерно между последним
    допустимым смещением и tau_0; число пре-курсоров не меняется.
    """
    over = offsets >= tau0
    if not over.any():
        return offsets
    first = int(np.argmax(over))
    low = float(offsets[first - 1]) if first else 0.0
    high = float(np.nextafter(tau0, 0.0))
    truncated = offsets.copy()
    truncated[first:] = np.sort(rng.uniform(low, high, offsets.size - first))
    return truncated


def _diffuse_batch(dray: "DeterministicRay", params: QdMaterialParams, rng: np.random.Generator) -> List[Mpc]:
    tau0 = dray.delay_s
    batch = []
    sides = (
        (MpcKind.PRE, params.n_pre, params.lambda_pre, params.s_gamma_pre, params.sigma_gamma_pre,
         params.s_sigma_s_pre, params.sigma_sigma_s_pre),
        (MpcKind.POST, params.n_post, params.lambda_post, params.s_gamma_post, params.sigma_gamma_post,
         params.s_sigma_s_post, params.sigma_sigma_s_post),
    )
    for kind, count, rate, s_gamma, sigma_gamma, s_sigma_s, sigma_sigma_s in sides:
        if count == 0:
            continue
        k_db = sample_rician(params.s_k, params.sigma_k, rng)
        gamma = sample_rician(s_gamma, sigma_gamma, rng)
        sigma_s = sample_rician(s_sigma_s, sigma_sigma_s, rng)
        offsets = np.cumsum(rng.exponential(1.0 / rate, count))
        if kind is MpcKind.PRE:
            offsets = _truncate_pre_cursors(offsets, tau0, rng)
            delays = tau0 - offsets
        else:
            delays = tau0 + offsets
        spread = rng.normal(0.0, sigma_s, count) if sigma_s > 0 else np.zeros(count)
        gains = dray.gain_db - k_db - DB_PER_NEPER * offsets / max(gamma, np.finfo(float).tiny) + spread

        b = params.angle_spread
        if b > 0:
            jitter = rng.laplace(0.0, b, (count, 4))
        else:
            jitter = np.zeros((count, 4))
        aod_az = _wrap_azimuth(dray.aod[0] + jitter[:, 0])
        aod_el = np.clip(dray.aod[1] + jitter[:, 1], -math.pi / 2, math.pi / 2)
        aoa_az = _wrap_azimuth(dray.aoa[0] + jitter[:, 2])
        aoa_el = np.clip(dray.aoa[1] + jitter[:, 3], -math.pi / 2, math.pi / 2)
        phases = rng.uniform(0.0, TWO_PI, count)

        for i in range(count):
            batch.append(Mpc(
                delay_s=float(delays[i]),
                gain_db=float(gains[i]),
                aod=(float(aod_az[i]), float(aod_el[i])),
                aoa=(float(aoa_az[i]), float(aoa_el[i])),
                phase=float(phases[i]),
                kind=kind,
                parent=dray.ray_id,
                order=dray.reflection_order,
            ))
    return batch


def multi_bounce(dray: "DeterministicRay", material_per_reflector: Sequence[Optional[QdMaterialParams]],
                 rng: np.random.Generator) -> List[Mpc]:
    """Главный курсор и по одной диффузной пачке на каждый отражатель, в порядке от TX к RX."""
    if dray.reflection_order < 1:
        raise ConfigError("the direct ray does not generate diffuse components")
    if len(material_per_reflector) != dray.reflection_order:
        raise ConfigError(
            f"expected {dray.reflection_order} reflector materials, got {len(material_per_reflector)}"
        )
    mpcs = [main_cursor(dray)]
    for index, params in enumerate(material_per_reflector):
        if params is None:
            raise ConfigError(f"missing QD material for reflector {index} of ray {dray.triangle_tuple}")
        mpcs.extend(_diffuse_batch(dray, params, rng))
    return mpcs


def generate_cluster(dray: "DeterministicRay", params: QdMaterialParams, rng: np.random.Generator) -> List[Mpc]:
    return multi_bounce(dray, [params] * dray.reflection_order, rng)


@dataclass(frozen=True)
class ResamplePolicy:
    """
    Диффузные компоненты разыгрываются заново на каждом шаге: поток ключуется
    (timestep, пара, луч), поэтому соседние шаги независимы, а повтор шага воспроизводим.
    """
    timestep: int
    enabled: bool = True

    def stream(self, seed: int, pair_key: str, ray_id: int) -> Optional[RngStream]:
        if not self.enabled:
            return None
        return stream(seed, "diffuse", self.timestep, pair_key, ray_id)


def resample_policy(timestep: int, enabled: bool = True) -> ResamplePolicy:
    return ResamplePolicy(timestep=timestep, enabled=enabled)


def expand_rays(rays: Sequence["DeterministicRay"], mesh: "TriangleMesh", materials: "MaterialTable",
                policy: ResamplePolicy, seed: int, pair_key: str) -> List[Mpc]:
    mpcs = []
    for ray in rays:
        rng_stream = policy.stream(seed, pair_key, ray.ray_id)
        if rng_stream is None or ray.reflection_order == 0:
            mpcs.append(main_cursor(ray))
            continue
        reflector_materials = [
            materials.materials.get(int(mesh.material_ids[index])) for index in ray.triangle_tuple
        ]
        mpcs.extend(multi_bounce(ray, reflector_materials, rng_stream.generator()))
    return mpcs


# ----- Статистика для qd_stats -----
@dataclass(frozen=True)
class QdCheck:
    name: str
    empirical: float
    analytic: float
    tolerance: float

    @property
    def passed(self) -> bool:
        if self.name == "phase_ks":
            return self.empirical < self.analytic
        return abs(self.empirical - self.analytic) <= self.tolerance * abs(self.analytic)


def pinned(params: QdMaterialParams) -> QdMaterialParams:
    """K и S фиксированы (sigma_K = 0, sigma_s = 0), gamma без разброса."""
    return params.model_copy(update={
        "sigma_k": 0.0,
        "s_sigma_s_pre": 0.0, "sigma_sigma_s_pre": 0.0,
        "s_sigma_s_post": 0.0, "sigma_sigma_s_post": 0.0,
        "sigma_gamma_pre": 0.0, "sigma_gamma_post": 0.0,
    })


def cluster_statistics(params: QdMaterialParams, n_clusters: int, rng: np.random.Generator,
                       parent: Optional["DeterministicRay"] = None) -> List[QdCheck]:
    """
    Эмпирические характеристики n_clusters кластеров первого порядка против аналитики:
    средний интервал прихода пост-курсоров, наклон спада (dB/s), разброс углов, KS фаз.
    """
    if parent is None:
        from .raytracer import synthetic_ray
        parent = synthetic_ray()
    if params.n_post < 1:
        raise ConfigError("cluster statistics need n_post >= 1")

    inter_arrivals, offsets, gains, azimuth_offsets, phases = [], [], [], [], []
    for _ in range(n_clusters):
        cluster = generate_cluster(parent, params, rng)
        post = [m for m in cluster if m.kind is MpcKind.POST]
        delays = np.array([m.delay_s for m in post])
        inter_arrivals.append(np.diff(np.concatenate([[parent.delay_s], delays])))
        offsets.append(delays - parent.delay_s)
        gains.append(np.array([m.gain_db for m in post]) - parent.gain_db)
        diffuse = [m for m in cluster if m.kind is not MpcKind.MAIN]
        azimuth_offsets.append(np.array([m.aod[0] for m in diffuse]) - parent.aod[0])
        phases.append(np.array([m.phase for m in diffuse]))

    inter_arrivals = np.concatenate(inter_arrivals)
    offsets = np.concatenate(offsets)
    gains = np.concatenate(gains)
    azimuth_offsets = np.concatenate(azimuth_offsets)
    phases = np.concatenate(phases)

    slope = float(np.polyfit(offsets, gains, 1)[0])
    ks = stats.kstest(phases / TWO_PI, "uniform").statistic
    checks = [
        QdCheck("inter_arrival_mean_s", float(inter_arrivals.mean()), 1.0 / params.lambda_post, 0.01),
        QdCheck("decay_slope_db_per_s", slope, -DB_PER_NEPER / params.s_gamma_post, 0.05),
        QdCheck("angle_std_rad", float(azimuth_offsets.std()), math.sqrt(2.0) * params.angle_spread, 0.02),
        QdCheck("phase_ks", float(ks), 1.6276 / math.sqrt(phases.size), 0.0),
    ]
    for check in checks:
        logger.info("%s: empirical=%g analytic=%g passed=%s", check.name, check.empirical,
                    check.analytic, check.passed)
    return checks
