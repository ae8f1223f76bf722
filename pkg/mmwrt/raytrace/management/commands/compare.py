from pathlib import Path

from raytrace import outputs
from raytrace.conf import get_setting
from raytrace.exceptions import ConfigError, GridMismatchError
from raytrace.metrics import comparison_report, series_for
from raytrace.raytracer import OpCounter
from raytrace.schemas import ComparisonReport
from raytrace.tracefile import read_trace

from ._base import RaytraceCommand

COLUMNS = list(ComparisonReport.model_fields)


def load_run(directory: Path):
    manifest = outputs.read_manifest(directory / outputs.MANIFEST_FILE)
    links = outputs.read_links(directory / outputs.LINKS_FILE)
    try:
        with open(directory / outputs.TRACE_FILE, encoding="utf-8") as fh:
            trace = read_trace(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{directory}: trace not found") from exc
    counter = OpCounter()
    for instance in trace.instances:
        counter = counter.merge(instance.counters)
    return manifest, links, counter


class Command(RaytraceCommand):
    help = (
        "Compare a simplified run against a baseline run, one CSV row per receiver. Columns: "
        + ", ".join(COLUMNS)
        + ". NRMSE uses the population standard deviation of the baseline; outages are mapped "
          "to the outage floor before comparison."
    )

    def add_arguments(self, parser):
        parser.add_argument("--baseline", required=True)
        parser.add_argument("--simplified", required=True)
        parser.add_argument("--metric", choices=["sinr", "snr", "rx_power"], default="sinr")
        parser.add_argument("--out", required=True, help="report CSV")
        parser.add_argument("--floor-db", type=float, default=None)
        parser.add_argument("--n-runs", type=int, default=None, help="repetitions in T_RT + n * T_ns")

    def handle(self, *args, **options):
        floor = options.get("floor_db")
        floor = get_setting("OUTAGE_FLOOR_DB") if floor is None else floor
        n_runs = options.get("n_runs") or get_setting("NS_REPETITIONS")
        acceptable = get_setting("NRMSE_ACCEPTABLE")
        metric = options["metric"]

        base_manifest, base_links, base_counter = load_run(Path(options["baseline"]))
        simp_manifest, simp_links, simp_counter = load_run(Path(options["simplified"]))
        receivers = sorted({link.rx_id for link in base_links})
        if receivers != sorted({link.rx_id for link in simp_links}):
            raise GridMismatchError("baseline and simplified runs have different receivers")

        reports = []
        for rx_id in receivers:
            baseline = series_for(base_links, rx_id, metric)
            simplified = series_for(simp_links, rx_id, metric)
            reports.append(comparison_report(
                metric, rx_id, baseline, simplified, base_manifest, simp_manifest,
                base_counter, simp_counter, base_manifest.triangles, floor, acceptable, n_runs,
            ))

        with outputs.atomic_output(Path(options["out"])) as fh:
            fh.write(f"# population std; outage_floor_db={floor!r}; acceptable_nrmse={acceptable!r}\n")
            outputs.write_csv(fh, COLUMNS, ([getattr(r, c) for c in COLUMNS] for r in reports))

        for report in reports:
            flag = "" if report.acceptable else "  (above acceptable NRMSE)"
            self.stdout.write(
                f"{report.rx_id}: NRMSE={report.nrmse:.4f} speedup={report.speedup:.2f} "
                f"ops_speedup={report.ops_speedup:.2f}{flag}"
            )
