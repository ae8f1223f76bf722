"""
Точность и сложность: NRMSE, ускорение, оконная статистика, ECDF и сверка
счётчиков операций с оценкой сложности дерева отражений.

Стандартное отклонение везде популяционное (ddof=0).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ComplexityMismatchError, ConfigError, GridMismatchError, MetricError
from .raytracer import OpCounter, check_units, predicted_geometric_ops, predicted_tuple_count, tuples_at_order
from .schemas import ComparisonReport, RunManifest
from .simplify import saved_checks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeries:
    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ConfigError(f"time and value arrays differ in shape: {t.shape} vs {v.shape}")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ConfigError("time stamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    def __len__(self) -> int:
        return int(self.t.size)

    def with_floor(self, floor: float) -> "TimeSeries":
        """NaN и -inf (обрыв линии) заменяются конечным полом."""
        v = np.where(np.isfinite(self.v) | (self.v == math.inf), self.v, floor)
        return TimeSeries(self.t, v)


def _check_aligned(x: TimeSeries, x_hat: TimeSeries) -> None:
    if len(x) != len(x_hat) or not np.allclose(x.t, x_hat.t, rtol=0.0, atol=1e-12):
        raise GridMismatchError(f"time grids differ: {len(x)} vs {len(x_hat)} samples")


def nrmse(x: TimeSeries, x_hat: TimeSeries) -> float:
    """RMSE(x, x_hat) / sigma(x_hat); x_hat - базовый прогон."""
    _check_aligned(x, x_hat)
    sigma = float(np.std(x_hat.v))
    if not sigma > 0.0:
        raise MetricError("baseline has zero spread: NRMSE normalization is undefined")
    return float(np.sqrt(np.mean((x.v - x_hat.v) ** 2))) / sigma


def speedup(t_rt_base: float, t_ns_base: float, t_rt_simp: float, t_ns_simp: float,
            n_runs: int = 1000) -> float:
    """(T_RT + n * T_ns) базового прогона к тому же для упрощённого."""
    if min(t_rt_base, t_ns_base, t_rt_simp, t_ns_simp) < 0:
        raise MetricError("run times must be non-negative")
    numerator = t_rt_base + n_runs * t_ns_base
    denominator = t_rt_simp + n_runs * t_ns_simp
    if not denominator > 0 or not numerator > 0:
        raise MetricError("total run time must be positive")
    return numerator / denominator


def ops_speedup(base: OpCounter, simplified: OpCounter) -> float:
    if simplified.total_ops == 0:
        return math.inf if base.total_ops else 1.0
    return base.total_ops / simplified.total_ops


def checks_saved(counter: OpCounter, T: int) -> int:
    """Проверки перекрытия, пропущенные благодаря порогам."""
    pruned = sum(counter.pruned_by_order)
    return saved_checks(counter.rays_checked + pruned, pruned, counter.pruned_by_order, T)


# ----- Оконная статистика -----
@dataclass(frozen=True)
class WindowStat:
    start_s: float
    mean: float
    std: float

    @property
    def outage(self) -> bool:
        return math.isnan(self.mean)


def windowed_stats(series: TimeSeries, window_s: float = 0.1, sub_s: float = 0.005) -> List[WindowStat]:
    """Средние по подокнам sub_s, затем по каждому окну: среднее и std средних подокон."""
    ratio = window_s / sub_s
    per_window = int(round(ratio))
    if per_window < 1 or abs(ratio - per_window) > 1e-9 * ratio:
        raise ConfigError(f"window {window_s} s is not a multiple of the sub-window {sub_s} s")
    if len(series) == 0:
        return []
    t0 = series.t[0]
    index = np.floor((series.t - t0) / sub_s + 1e-6).astype(np.int64)
    n_windows = (int(index[-1]) + 1) // per_window
    stats = []
    for w in range(n_windows):
        means = []
        for sub in range(w * per_window, (w + 1) * per_window):
            values = series.v[index == sub]
            means.append(float(np.mean(values)) if values.size else math.nan)
        means = np.array(means)
        stats.append(WindowStat(start_s=float(t0 + w * window_s), mean=float(np.mean(means)),
                                std=float(np.std(means))))
    return stats


def ecdf(samples: Sequence[float]) -> List[Tuple[float, float]]:
    """Точки правой-непрерывной ступенчатой функции; равные значения сливаются."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        return []
    if not np.all(np.isfinite(values)):
        raise MetricError("ECDF needs finite samples")
    unique, counts = np.unique(values, return_counts=True)
    fractions = np.cumsum(counts) / values.size
    return [(float(u), float(f)) for u, f in zip(unique, fractions)]


# ----- Сверка сложности -----
@dataclass(frozen=True)
class ComplexitySample:
    T: int
    R: int
    counter: OpCounter
    instances: int = 1


def accounted_operations(counter: OpCounter, T: int) -> int:
    """r + (r + 1) T на каждый посещённый кортеж порядка r."""
    return sum((r + (r + 1) * T) * n for r, n in enumerate(counter.tuples_by_order))


def _slope(ts: Sequence[int], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ts), np.log(values), 1)[0])


@dataclass
class ComplexityReport:
    rows: List[dict]
    exponents: Dict[int, float] = field(default_factory=dict)
    measured_exponents: Dict[int, float] = field(default_factory=dict)


def validate_complexity(samples: Sequence[ComplexitySample], exponent_tolerance: float = 0.3) -> ComplexityReport:
    """
    Точное совпадение числа кортежей (по глубинам), геометрических операций и,
    если не было досрочных выходов, проверок перекрытия; затем наклон log-log
    операций от T для каждого R сравнивается с R + 1.
    """
    if len({s.R for s in samples}) < 3:
        raise ConfigError("complexity validation needs runs at three or more reflection orders")

    diff, rows = [], []
    for s in samples:
        c, n = s.counter, s.instances
        expected = {
            "tuples_visited": predicted_tuple_count(s.T, s.R) * n,
            "geometric_ops": predicted_geometric_ops(s.T, s.R) * n,
        }
        for r in range(s.R + 1):
            expected[f"tuples_by_order[{r}]"] = tuples_at_order(s.T, r) * n
        if c.early_exits == 0:
            expected["obstruction_checks"] = sum(
                check_units(r, s.T) * count for r, count in enumerate(c.checked_by_order)
            )
        profile = c.tuples_by_order + [0] * max(0, s.R + 1 - len(c.tuples_by_order))
        actual = {
            "tuples_visited": c.tuples_visited,
            "geometric_ops": c.geometric_ops,
            "obstruction_checks": c.obstruction_checks,
            **{f"tuples_by_order[{r}]": profile[r] for r in range(s.R + 1)},
        }
        for quantity, value in expected.items():
            if actual[quantity] != value:
                diff.append({"quantity": quantity, "T": s.T, "R": s.R, "expected": value,
                             "actual": actual[quantity]})
        rows.append({"T": s.T, "R": s.R, "tuples_visited": c.tuples_visited,
                     "accounted_ops": accounted_operations(c, s.T) / n, "measured_ops": c.total_ops / n})

    report = ComplexityReport(rows=rows)
    for R in sorted({s.R for s in samples}):
        group = sorted((row for row in rows if row["R"] == R), key=lambda row: row["T"])
        if len({row["T"] for row in group}) < 2:
            continue
        ts = [row["T"] for row in group]
        report.exponents[R] = _slope(ts, [row["accounted_ops"] for row in group])
        report.measured_exponents[R] = _slope(ts, [max(row["measured_ops"], 1) for row in group])
        if abs(report.exponents[R] - (R + 1)) > exponent_tolerance:
            diff.append({"quantity": "growth_exponent", "T": ts, "R": R, "expected": R + 1,
                         "actual": round(report.exponents[R], 3)})
        logger.info("R=%d: accounted growth exponent %.3f, measured %.3f", R, report.exponents[R],
                    report.measured_exponents[R])

    if diff:
        raise ComplexityMismatchError(diff)
    return report


# ----- Сравнение прогонов -----
def compare_series(baseline: TimeSeries, simplified: TimeSeries, floor_db: float) -> Tuple[float, float, float]:
    """(NRMSE, среднее и стандартная ошибка разности simplified - baseline) после пола обрыва."""
    base = baseline.with_floor(floor_db)
    simp = simplified.with_floor(floor_db)
    value = nrmse(simp, base)
    delta = simp.v - base.v
    stderr = float(np.std(delta, ddof=1) / math.sqrt(delta.size)) if delta.size > 1 else 0.0
    return value, float(np.mean(delta)), stderr


def comparison_report(metric: str, rx_id: str, baseline: TimeSeries, simplified: TimeSeries,
                      base_manifest: RunManifest, simp_manifest: RunManifest,
                      base_counter: OpCounter, simp_counter: OpCounter, triangles: int,
                      floor_db: float, acceptable: float, n_runs: int) -> ComparisonReport:
    value, mean_diff, stderr = compare_series(baseline, simplified, floor_db)
    return ComparisonReport(
        metric=metric,
        rx_id=rx_id,
        nrmse=value,
        speedup=speedup(base_manifest.t_rt_s, base_manifest.t_ns_s,
                        simp_manifest.t_rt_s, simp_manifest.t_ns_s, n_runs),
        ops_speedup=ops_speedup(base_counter, simp_counter),
        rays_baseline=base_manifest.rays,
        rays_simplified=simp_manifest.rays,
        checks_saved=checks_saved(simp_counter, triangles),
        mean_diff=mean_diff,
        stderr_diff=stderr,
        outage_floor_db=floor_db,
        acceptable=value <= acceptable,
    )


def series_for(links: Sequence, rx_id: str, metric: str) -> Optional[TimeSeries]:
    rows = [link for link in links if link.rx_id == rx_id]
    if not rows:
        return None
    rows.sort(key=lambda link: link.timestep)
    return TimeSeries([link.time_s for link in rows], [link.value(metric) for link in rows])
