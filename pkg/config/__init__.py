from .settings import (
    settings, get_settings, Settings,
    SolverConfig, PathConfig, SelectionConfig,
    BaselineConfig, InferenceConfig, RuntimeConfig, AppConfig
)

__all__ = [
    "settings",
    "get_settings",
    "Settings",
    "SolverConfig",
    "PathConfig",
    "SelectionConfig",
    "BaselineConfig",
    "InferenceConfig",
    "RuntimeConfig",
    "AppConfig"
]
