class LabError(Exception):
    """Base class for errors raised by hodgelab."""


class DegreeError(LabError, ValueError):
    pass


class MetricError(LabError, ValueError):
    """A metric sample is not symmetric positive definite or violates its floor."""


class InadmissibleLedger(LabError, ValueError):
    """Exponent data violating the admissibility inequalities."""


class SolverError(LabError, RuntimeError):
    pass


class AmbiguousKernel(LabError):
    pass
