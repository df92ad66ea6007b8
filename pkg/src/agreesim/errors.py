"""Exception types shared across the simulator."""


class AgreesimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(AgreesimError):
    """Invalid scenario, grid, or CLI configuration."""


class ProtocolError(AgreesimError):
    """A protocol-level contract was violated (bad inbox, bad reduce call)."""


class TopologyError(AgreesimError):
    """A message was routed across a non-existent edge."""


class TraceError(AgreesimError):
    """A trace is malformed or a query falls outside its round range."""


class AnalysisError(AgreesimError):
    """An analysis precondition failed or internal cross-checks disagreed."""
