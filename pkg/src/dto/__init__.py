# src/dto/__init__.py
from .result_dto import (
    # Enums
    MethodEnum, LossKindEnum,

    # Estimation DTOs
    FitResultDTO, SolutionPathDTO, TuneReportDTO,

    # Inference DTOs
    ContrastDTO, InferenceReportDTO, CalibrationReportDTO,

    # Run manifest
    RunManifestDTO
)
from .simulation_dto import (
    ScenarioEnum,
    TreeVariantEnum,
    ResponseKindEnum,
    SimConfig
)

__all__ = [
    # Enums
    "MethodEnum",
    "LossKindEnum",
    "ScenarioEnum",
    "TreeVariantEnum",
    "ResponseKindEnum",

    # Estimation DTOs
    "FitResultDTO",
    "SolutionPathDTO",
    "TuneReportDTO",

    # Inference DTOs
    "ContrastDTO",
    "InferenceReportDTO",
    "CalibrationReportDTO",

    # Simulation
    "SimConfig",

    # Run manifest
    "RunManifestDTO",
]
