from pathlib import Path

from raytrace import outputs
from raytrace.exceptions import ConfigError
from raytrace.qd import cluster_statistics, pinned
from raytrace.rng import stream
from raytrace.scenario import load_materials
from raytrace.scenes import WALL, placeholder_materials

from ._base import RaytraceCommand

MIN_SAMPLES = 1000
COLUMNS = ["name", "empirical", "analytic", "tolerance", "passed"]


class Command(RaytraceCommand):
    help = (
        "Empirical vs analytic statistics of the diffuse model: post-cursor inter-arrival mean, "
        "decay slope, angular spread and a KS test of the phases. Columns: " + ", ".join(COLUMNS)
    )

    def add_arguments(self, parser):
        parser.add_argument("--samples", type=int, default=100_000, help="number of clusters")
        parser.add_argument("--materials", help="materials TOML; builtin placeholders if omitted")
        parser.add_argument("--material", type=int, default=WALL)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--pin", action="store_true", help="pin K, S and gamma for the decay check")
        parser.add_argument("--out", help="CSV file; stdout if omitted")

    def handle(self, *args, **options):
        samples = options["samples"]
        if samples is None or samples < MIN_SAMPLES:
            raise ConfigError(f"--samples must be at least {MIN_SAMPLES}, got {samples}")
        table = load_materials(Path(options["materials"])) if options.get("materials") else placeholder_materials()
        material_id = options["material"]
        if material_id not in table.materials:
            raise ConfigError(f"material {material_id} is not in the table")
        params = table.get(material_id)
        if options.get("pin"):
            params = pinned(params)

        rng = stream(options["seed"], "qd_stats", material_id).generator()
        checks = cluster_statistics(params, samples, rng)
        rows = [[c.name, c.empirical, c.analytic, c.tolerance, c.passed] for c in checks]

        if options.get("out"):
            with outputs.atomic_output(Path(options["out"])) as fh:
                outputs.write_csv(fh, COLUMNS, rows)
        else:
            outputs.write_csv(self.stdout, COLUMNS, rows)
        failed = [c.name for c in checks if not c.passed]
        if failed:
            self.stderr.write(f"checks outside tolerance: {', '.join(failed)}")
