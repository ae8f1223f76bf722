"""
Упрощения трассировки: уменьшение максимального порядка отражений R' < R и
отсечение слабых MPC по относительному (gamma_th) и абсолютному (Gamma_th) порогам.

Фильтры работают с любыми объектами, у которых есть gain_db: с D-лучами внутри
трассировщика (до проверки перекрытия) и с полными списками MPC после QD.
"""
import logging
import math
from typing import List, Sequence, TypeVar

from .exceptions import ConfigError
from .schemas import SimplificationSetting, TraceConfig

logger = logging.getLogger(__name__)

BASELINE_ABS_THRESHOLD_DB = -1000.0

Item = TypeVar("Item")


def filter_absolute(mpcs: Sequence[Item], abs_threshold_db: float) -> List[Item]:
    """Оставляет MPC с PG_i >= Gamma_th; граница включается."""
    return [m for m in mpcs if m.gain_db >= abs_threshold_db]


def filter_relative(mpcs: Sequence[Item], rel_threshold_db: float) -> List[Item]:
    """Оставляет MPC с PG_i - PG_strong >= gamma_th; при -inf возвращает вход как есть."""
    if not mpcs or rel_threshold_db == -math.inf:
        return list(mpcs)
    strongest = max(m.gain_db for m in mpcs)
    return [m for m in mpcs if m.gain_db - strongest >= rel_threshold_db]


def apply_thresholds(mpcs: Sequence[Item], setting: SimplificationSetting) -> List[Item]:
    """Сначала абсолютный порог, потом относительный."""
    kept = filter_absolute(mpcs, setting.abs_threshold_db)
    return filter_relative(kept, setting.rel_threshold_db)


def baseline_setting(max_reflection_order: int) -> SimplificationSetting:
    return SimplificationSetting(
        max_reflection_order=max_reflection_order,
        rel_threshold_db=-math.inf,
        abs_threshold_db=BASELINE_ABS_THRESHOLD_DB,
    )


def with_setting(cfg: TraceConfig, setting: SimplificationSetting) -> TraceConfig:
    return cfg.model_copy(update={
        "max_reflection_order": setting.max_reflection_order,
        "rel_threshold_db": setting.rel_threshold_db,
        "abs_threshold_db": setting.abs_threshold_db,
    })


def saved_checks(M: int, M_pruned: int, r_profile: Sequence[int], T: int) -> int:
    """
    Число проверок перекрытия, которых удалось избежать.
    r_profile[r] - сколько отброшенных лучей имели порядок r; каждый экономит
    полную стоимость своей проверки, (r + 1) * T минус собственные отражатели.
    """
    from .raytracer import check_units

    if M_pruned > M or M_pruned < 0:
        raise ConfigError(f"pruned ray count {M_pruned} outside [0, {M}]")
    if sum(r_profile) != M_pruned:
        raise ConfigError(f"order profile sums to {sum(r_profile)}, expected {M_pruned}")
    return sum(count * check_units(order, T) for order, count in enumerate(r_profile))


def reduction_factor(M: int, M_pruned: int) -> float:
    """(M - M') / M: доля лучей, прошедших пороги."""
    if M == 0:
        return 1.0
    return (M - M_pruned) / M
