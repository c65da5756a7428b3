"""Exceptions raised by the numerical engine."""

from typing import Any, List, Optional


class MorseActionError(RuntimeError):
    """ base class for every engine failure """


class ManifoldError(MorseActionError):
    pass


class BoundaryConditionError(MorseActionError):
    pass


class LagrangianError(MorseActionError):
    pass


class UnsupportedFeature(MorseActionError):
    pass


class LegendreStagnation(MorseActionError):
    def __init__(self, message:str, residual:float):
        super().__init__(message)
        self.residual = residual


class NonFiniteAction(MorseActionError):
    def __init__(self, message:str, cell:int):
        super().__init__(message)
        self.cell = cell


class NewtonFailure(MorseActionError):
    def __init__(self, message:str, reason:str, residual:float):
        super().__init__(message)
        self.reason = reason
        self.residual = residual


class DegeneracyError(MorseActionError):
    def __init__(self, message:str, ids:Optional[List[str]]=None):
        super().__init__(message)
        self.ids = ids or []


class CalibrationError(MorseActionError):
    pass


class OverlappingBalls(MorseActionError):
    def __init__(self, message:str, pair:Any):
        super().__init__(message)
        self.pair = pair


class FlowError(MorseActionError):
    pass


class BoundaryCompositionError(MorseActionError):
    def __init__(self, message:str, degree:int, composition:Any):
        super().__init__(message)
        self.degree = degree
        self.composition = composition


class AmbiguousTerminal(MorseActionError):
    pass


class LeakedSublevel(MorseActionError):
    pass


class MissingArtifact(MorseActionError):
    def __init__(self, message:str, stage:str):
        super().__init__(message)
        self.stage = stage
