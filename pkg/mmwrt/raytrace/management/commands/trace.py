from pathlib import Path

from raytrace import outputs
from raytrace.conf import get_setting
from raytrace.scenario import execute, load_scenario, with_overrides
from raytrace.tracefile import write_trace

from ._base import RaytraceCommand, on_off, threshold_arg, threshold_db


class Command(RaytraceCommand):
    help = (
        "Trace a scenario: writes trace.csv, manifest.json and link_metrics.csv into --out "
        "(counters.csv with --emit-counters). Thresholds accept -inf as --rel-threshold-db=-inf."
    )

    def add_arguments(self, parser):
        parser.add_argument("--scenario", required=True, help="scenario TOML file")
        parser.add_argument("--out", required=True, help="output directory")
        parser.add_argument("--max-reflections", type=int, dest="max_reflection_order")
        parser.add_argument("--rel-threshold-db", type=threshold_arg, dest="rel_threshold_db")
        parser.add_argument("--abs-threshold-db", type=float, dest="abs_threshold_db")
        parser.add_argument("--qd", choices=["on", "off"])
        parser.add_argument("--seed", type=int)
        parser.add_argument("--steps", type=int)
        parser.add_argument("--jobs", type=int, default=None)
        parser.add_argument("--emit-counters", action="store_true")
        parser.add_argument("--include-timing", action="store_true",
                            help="also write per-instance wall times into the trace")
        parser.add_argument("--threshold-after-obstruction", action="store_true", default=None)
        parser.add_argument("--no-post-qd-filter", action="store_false", dest="post_qd_filter", default=None)
        parser.add_argument("--symmetric", action="store_true", default=None)
        parser.add_argument("--clamp-rl", action="store_true", dest="clamp_reflection_loss", default=None)

    def handle(self, *args, **options):
        loaded = with_overrides(
            load_scenario(options["scenario"]),
            max_reflection_order=options.get("max_reflection_order"),
            rel_threshold_db=threshold_db(options.get("rel_threshold_db")),
            abs_threshold_db=options.get("abs_threshold_db"),
            qd_enabled=on_off(options.get("qd")),
            seed=options.get("seed"),
            steps=options.get("steps"),
            threshold_after_obstruction=options.get("threshold_after_obstruction"),
            post_qd_filter=options.get("post_qd_filter"),
            symmetric=options.get("symmetric"),
            clamp_reflection_loss=options.get("clamp_reflection_loss"),
        )
        jobs = options.get("jobs") or get_setting("DEFAULT_JOBS")
        result = execute(loaded, jobs=jobs)

        out = Path(options["out"])
        include_timing = options.get("include_timing", False)
        manifest = outputs.build_manifest(loaded, result, command="trace")
        # все файлы пишутся в staging и встают на место вместе
        with outputs.staged_directory(out) as staging:
            with open(staging / outputs.TRACE_FILE, "w", encoding="utf-8", newline="") as fh:
                write_trace(result.instances, fh, digest=loaded.digest, include_timing=include_timing)
            with open(staging / outputs.LINKS_FILE, "w", encoding="utf-8", newline="") as fh:
                outputs.write_links(result.links, fh)
            if options.get("emit_counters"):
                with open(staging / outputs.COUNTERS_FILE, "w", encoding="utf-8", newline="") as fh:
                    outputs.write_counters(result, fh, include_timing=include_timing)
            (staging / outputs.MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")

        self.stdout.write(
            f"{manifest.instances} instances, {manifest.rays} rays, {manifest.mpcs} MPCs "
            f"(T_RT={manifest.t_rt_s:.3f} s, T_ns={manifest.t_ns_s:.3f} s) -> {out}"
        )
