"""
Exception hierarchy for the solver
"""

from typing import Optional


class SolverError(Exception):
    """Base class for every error raised by the solver"""


class ConfigError(SolverError):
    """Invalid or malformed case configuration"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = ""
        if key is not None:
            location = f" [{key}"
            if line is not None:
                location += f", line {line}"
            location += "]"
        super().__init__(f"{message}{location}")


class GeometryError(SolverError):
    """Surface evaluation or construction failure"""


class UnsupportedTopologyError(GeometryError):
    """Cell whose fluid region is not a single connected polyhedron"""

    def __init__(self, index, message: str = "multiple disjoint fluid components"):
        self.index = tuple(int(i) for i in index)
        super().__init__(f"unsupported cut-cell topology at cell {self.index}: {message}")


class PhysicsError(SolverError, ValueError):
    """Thermodynamic state outside the domain of the equations"""


class WSRDError(SolverError):
    """Redistribution map missing or inconsistent"""


class PoissonError(SolverError):
    """Pressure Poisson solve did not converge"""

    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"Poisson solve did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e} > {tol:.1e})"
        )


class SolverAbort(SolverError):
    """Non-physical state detected during time integration"""

    def __init__(self, message: str, dump_path: Optional[str] = None):
        self.dump_path = dump_path
        super().__init__(message)


class DiagnosticsError(SolverError, ValueError):
    """Diagnostic requested on unusable data"""
