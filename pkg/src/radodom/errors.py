"""Exception hierarchy shared by all modules."""


class RadarOdometryError(Exception):
    """Base class; ``module`` names the stage that raised."""

    module = "radodom"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class GeometryError(RadarOdometryError):
    module = "geometry"


class ParseError(RadarOdometryError):
    module = "io"


class ConfigError(RadarOdometryError):
    module = "config"


class DegenerateGeometryError(RadarOdometryError):
    module = "ego-velocity"


class VelocityUnavailable(RadarOdometryError):
    module = "ego-velocity"


class UnusableFrameError(RadarOdometryError):
    module = "features"


class RegistrationInfeasible(RadarOdometryError):
    module = "scan-matching"


class AssociationError(RadarOdometryError):
    module = "evaluation"


class SimulationError(RadarOdometryError):
    module = "radar-sim"


class PipelineError(RadarOdometryError):
    module = "pipeline"
