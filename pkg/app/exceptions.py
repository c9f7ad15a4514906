"""Domain errors raised by the simulator services.

Routers translate these into HTTP errors; the race harness turns the
flight-ending ones into crash records.
"""


class RaceSimError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigError(RaceSimError):
    pass


class UnknownTrack(ConfigError):
    pass


class BehindCamera(RaceSimError):
    pass


class NoConvergence(RaceSimError):
    pass


class NonFinite(RaceSimError):
    pass


class DegenerateConfiguration(RaceSimError):
    pass


class FarBehind(RaceSimError):
    pass


class SingularInnovation(RaceSimError):
    pass


class StaleMeasurement(RaceSimError):
    pass


class NonMonotonicTime(RaceSimError):
    pass


class FilterDiverged(RaceSimError):
    pass


class ParseError(RaceSimError):
    pass


class InfeasibleTrajectory(RaceSimError):
    pass


class SolverDiverged(RaceSimError):
    pass


class InfeasibleBounds(ConfigError):
    pass


class NoLaps(RaceSimError):
    pass
