import logging
import math
from pathlib import Path
from typing import List, Tuple

from raytrace import outputs
from raytrace.conf import get_setting
from raytrace.exceptions import ConfigError, MetricError
from raytrace.metrics import checks_saved, compare_series, ops_speedup, series_for, speedup
from raytrace.scenario import execute, load_scenario, with_overrides

from ._base import RaytraceCommand, on_off, threshold_db

logger = logging.getLogger(__name__)

COLUMNS = ["R", "gamma_th_db", "speedup", "ops_speedup", "nrmse", "rays_baseline", "rays_simplified",
           "checks_saved", "acceptable"]


def parse_grid(text: str) -> Tuple[List[int], List[float]]:
    """'R=1..4,gamma=-inf,-40,-25,-15' -> ([1, 2, 3, 4], [-inf, -40, -25, -15])."""
    values = {"R": [], "gamma": []}
    key = None
    for token in (t.strip() for t in text.split(",")):
        if "=" in token:
            key, token = (part.strip() for part in token.split("=", 1))
            if key not in values:
                raise ConfigError(f"unknown grid axis {key!r}; use R and gamma")
        if key is None or not token:
            raise ConfigError(f"malformed grid {text!r}")
        if key == "R":
            if ".." in token:
                low, high = (int(v) for v in token.split(".."))
                values["R"].extend(range(low, high + 1))
            else:
                values["R"].append(int(token))
        else:
            values["gamma"].append(threshold_db(token))
    if not values["R"] or not values["gamma"]:
        raise ConfigError(f"grid {text!r} needs both R and gamma values")
    return values["R"], values["gamma"]


class Command(RaytraceCommand):
    help = (
        "Run the baseline once and every (R, gamma_th) cell of --grid, writing sweep.csv with columns "
        + ", ".join(COLUMNS)
        + ". nrmse is the worst receiver of each cell."
    )

    def add_arguments(self, parser):
        parser.add_argument("--scenario", required=True)
        parser.add_argument("--grid", required=True, help="e.g. R=1..4,gamma=-inf,-40,-25,-15")
        parser.add_argument("--out", required=True, help="output directory")
        parser.add_argument("--metric", choices=["sinr", "snr", "rx_power"], default="sinr")
        parser.add_argument("--qd", choices=["on", "off"])
        parser.add_argument("--seed", type=int)
        parser.add_argument("--steps", type=int)
        parser.add_argument("--jobs", type=int, default=None)

    def handle(self, *args, **options):
        try:
            orders, gammas = parse_grid(options["grid"])
        except ValueError as exc:
            raise ConfigError(f"malformed grid {options['grid']!r}: {exc}") from exc
        metric = options["metric"]
        jobs = options.get("jobs") or get_setting("DEFAULT_JOBS")
        floor = get_setting("OUTAGE_FLOOR_DB")
        acceptable = get_setting("NRMSE_ACCEPTABLE")
        n_runs = get_setting("NS_REPETITIONS")

        scenario = with_overrides(
            load_scenario(options["scenario"]),
            qd_enabled=on_off(options.get("qd")), seed=options.get("seed"), steps=options.get("steps"),
        )
        # базовый прогон должен покрывать все порядки сетки
        base_order = max(scenario.config.simplification.max_reflection_order, max(orders))
        baseline_scenario = with_overrides(scenario, max_reflection_order=base_order, rel_threshold_db=-math.inf)
        baseline = execute(baseline_scenario, jobs=jobs)
        base_counter = baseline.counters
        receivers = sorted({link.rx_id for link in baseline.links})

        rows = []
        for R in orders:
            for gamma in gammas:
                cell = execute(with_overrides(scenario, max_reflection_order=R, rel_threshold_db=gamma), jobs=jobs)
                worst = 0.0
                for rx_id in receivers:
                    try:
                        value, _, _ = compare_series(series_for(baseline.links, rx_id, metric),
                                                     series_for(cell.links, rx_id, metric), floor)
                    except MetricError as exc:
                        logger.warning("R=%d gamma=%s rx=%s: %s", R, gamma, rx_id, exc)
                        value = math.nan
                    worst = max(worst, value) if not math.isnan(value) else math.nan
                cell_counter = cell.counters
                rows.append([
                    R, gamma,
                    speedup(baseline.t_rt_s, baseline.t_ns_s, cell.t_rt_s, cell.t_ns_s, n_runs),
                    ops_speedup(base_counter, cell_counter),
                    worst, baseline.rays, cell.rays,
                    checks_saved(cell_counter, scenario.mesh.T),
                    bool(worst <= acceptable),
                ])
                self.stdout.write(f"R={R} gamma={gamma}: NRMSE={worst:.4f} speedup={rows[-1][2]:.2f}")

        with outputs.atomic_output(Path(options["out"]) / "sweep.csv") as fh:
            outputs.write_csv(fh, COLUMNS, rows)
