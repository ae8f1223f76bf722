class RayTracingError(Exception):
    """Base class for every error raised by the raytrace app."""


class GeometryError(RayTracingError):
    pass


class MeshParseError(RayTracingError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(RayTracingError):
    pass


class TraceFormatError(RayTracingError):
    def __init__(self, record: int, message: str):
        self.record = record
        super().__init__(f"record {record}: {message}")


class LinkOutageError(RayTracingError):
    """The channel matrix is identically zero: no MPC survived."""


class ComplexityMismatchError(RayTracingError):
    def __init__(self, diff: list[dict]):
        self.diff = diff
        lines = "; ".join(
            f"{d['quantity']} at T={d['T']} R={d['R']}: expected {d['expected']}, got {d['actual']}"
            for d in diff
        )
        super().__init__(f"operation counts disagree with the reflection-tree accounting: {lines}")


class GridMismatchError(RayTracingError):
    pass


class MetricError(RayTracingError):
    """A metric is undefined for the given input (zero baseline spread, non-positive times)."""
