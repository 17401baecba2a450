"""
Exception hierarchy.

Every error carries the module that raised it and a short code, so the CLI can
print a single machine-parsable line such as ``energy/DegenerateExponent: ...``.
"""

from typing import Optional


class HyperlapError(ValueError):
    """Base class for all domain errors."""

    module: str = "hyperlap"
    code: str = "Error"

    def __init__(self, message: str = "", module: Optional[str] = None):
        super().__init__(message or self.code)
        if module is not None:
            self.module = module

    @property
    def tag(self) -> str:
        return f"{self.module}/{self.code}"


# -----------------------------
# hypergraph
# -----------------------------
class HypergraphError(HyperlapError):
    module = "hypergraph"


class EdgeTooSmall(HypergraphError):
    code = "EdgeTooSmall"


class NonpositiveWeight(HypergraphError):
    code = "NonpositiveWeight"


class VertexOutOfRange(HypergraphError):
    code = "VertexOutOfRange"


class EmptyVertexSet(HypergraphError):
    code = "EmptyVertexSet"


class DuplicateVertex(HypergraphError):
    code = "DuplicateVertex"


class MalformedInput(HypergraphError):
    code = "MalformedInput"


class Disconnected(HypergraphError):
    code = "Disconnected"


# -----------------------------
# energy
# -----------------------------
class EnergyError(HyperlapError):
    module = "energy"


class InvalidExponent(EnergyError):
    code = "InvalidExponent"


class DegenerateExponent(EnergyError):
    code = "DegenerateExponent"


class DimensionMismatch(EnergyError):
    code = "DimensionMismatch"


# -----------------------------
# dynamics
# -----------------------------
class DynamicsError(HyperlapError):
    module = "dynamics"


class StepUnstable(DynamicsError):
    code = "StepUnstable"


class ProxNoConverge(DynamicsError):
    code = "ProxNoConverge"


class InfeasibleInit(DynamicsError):
    code = "InfeasibleInit"


class GridMismatch(DynamicsError):
    code = "GridMismatch"


class ControlShape(DynamicsError):
    code = "ControlShape"


# -----------------------------
# control
# -----------------------------
class ControlError(HyperlapError):
    module = "control"


class NoDescent(ControlError):
    code = "NoDescent"


class InvalidSweep(ControlError):
    code = "InvalidSweep"


# -----------------------------
# spectral
# -----------------------------
class SpectralError(HyperlapError):
    module = "spectral"


class NewtonNoConverge(SpectralError):
    code = "NewtonNoConverge"


class NoConverge(SpectralError):
    code = "NoConverge"


class ZeroVector(SpectralError):
    code = "ZeroVector"


class NotMeanFree(SpectralError):
    code = "NotMeanFree"


# -----------------------------
# cli
# -----------------------------
class CliError(HyperlapError):
    module = "cli"


class BadInput(CliError):
    code = "BadInput"


class InvariantViolated(CliError):
    code = "InvariantViolated"
