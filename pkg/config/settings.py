import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

class SolverConfig(BaseModel):
    """Accelerated proximal gradient settings"""
    max_iter: int = Field(default=20000, ge=1)
    tol: float = Field(default=1e-9, gt=0)
    restart: bool = Field(default=True)
    backtracking: bool = Field(default=False)
    power_iter_tol: float = Field(default=1e-8, gt=0)
    power_iter_max: int = Field(default=500, ge=1)
    # groups at least this large get a refined (two-pass) mean
    compensated_threshold: int = Field(default=10000, ge=1)

class PathConfig(BaseModel):
    """Lambda grid settings"""
    n_lambda: int = Field(default=50, ge=2)
    lambda_min_ratio: float = Field(default=1e-3, gt=0, le=1)
    lambda_max: Optional[float] = Field(default=None, gt=0)
    refine_steps: int = Field(default=20, ge=0)

class SelectionConfig(BaseModel):
    """Partition extraction and tuning settings"""
    tol_rel: float = Field(default=1e-8, gt=0)
    folds: int = Field(default=5, ge=2)

class BaselineConfig(BaseModel):
    """Comparison estimator settings"""
    ridge_newton_tol: float = Field(default=1e-10, gt=0)
    ridge_newton_max_iter: int = Field(default=100, ge=1)

class InferenceConfig(BaseModel):
    """Data fission and offset GLM settings"""
    delta: float = Field(default=0.9, gt=0.5, lt=1.0)
    glm_tol: float = Field(default=1e-10, gt=0)
    glm_max_iter: int = Field(default=100, ge=1)
    separation_bound: float = Field(default=30.0, gt=0)
    score_tol: float = Field(default=1e-8, gt=0)
    offset_in_selection: bool = Field(default=True)
    alpha: float = Field(default=0.05, gt=0, lt=1)

class RuntimeConfig(BaseModel):
    """Process-level settings"""
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)

class AppConfig(BaseModel):
    """Application settings"""
    title: str = Field(default="equisparse")
    description: str = Field(default="Tree-guided feature aggregation for linear and logistic regression")
    version: str = Field(default="0.1.0")
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

class Settings(BaseModel):
    """Main settings class"""
    app: AppConfig = AppConfig()
    solver: SolverConfig = SolverConfig()
    path: PathConfig = PathConfig()
    selection: SelectionConfig = SelectionConfig()
    baseline: BaselineConfig = BaselineConfig()
    inference: InferenceConfig = InferenceConfig()
    runtime: RuntimeConfig = RuntimeConfig()

def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() == "true"

# Load settings from environment
def get_settings() -> Settings:
    """
    Get settings with environment variable overrides

    Environment variable examples:
    - EQUISPARSE__APP__LOG_LEVEL=DEBUG
    - EQUISPARSE__SOLVER__MAX_ITER=50000
    - EQUISPARSE__INFERENCE__DELTA=0.8
    - EQUISPARSE__RUNTIME__THREADS=4 (fallback: EQUISPARSE_THREADS=4)
    """
    load_dotenv("./.env")

    threads = (
            os.getenv("EQUISPARSE__RUNTIME__THREADS") or
            os.getenv("EQUISPARSE_THREADS") or
            "1"
    )
    lambda_max = os.getenv("EQUISPARSE__PATH__LAMBDA_MAX")

    return Settings(
        app=AppConfig(
            log_level=os.getenv("EQUISPARSE__APP__LOG_LEVEL", "INFO").upper(),
        ),
        solver=SolverConfig(
            max_iter=int(os.getenv("EQUISPARSE__SOLVER__MAX_ITER", "20000")),
            tol=float(os.getenv("EQUISPARSE__SOLVER__TOL", "1e-9")),
            restart=_env_bool("EQUISPARSE__SOLVER__RESTART", "true"),
            backtracking=_env_bool("EQUISPARSE__SOLVER__BACKTRACKING", "false"),
            power_iter_tol=float(os.getenv("EQUISPARSE__SOLVER__POWER_ITER_TOL", "1e-8")),
            power_iter_max=int(os.getenv("EQUISPARSE__SOLVER__POWER_ITER_MAX", "500")),
            compensated_threshold=int(os.getenv("EQUISPARSE__SOLVER__COMPENSATED_THRESHOLD", "10000")),
        ),
        path=PathConfig(
            n_lambda=int(os.getenv("EQUISPARSE__PATH__N_LAMBDA", "50")),
            lambda_min_ratio=float(os.getenv("EQUISPARSE__PATH__LAMBDA_MIN_RATIO", "1e-3")),
            lambda_max=float(lambda_max) if lambda_max else None,
            refine_steps=int(os.getenv("EQUISPARSE__PATH__REFINE_STEPS", "20")),
        ),
        selection=SelectionConfig(
            tol_rel=float(os.getenv("EQUISPARSE__SELECTION__TOL_REL", "1e-8")),
            folds=int(os.getenv("EQUISPARSE__SELECTION__FOLDS", "5")),
        ),
        baseline=BaselineConfig(
            ridge_newton_tol=float(os.getenv("EQUISPARSE__BASELINE__RIDGE_NEWTON_TOL", "1e-10")),
            ridge_newton_max_iter=int(os.getenv("EQUISPARSE__BASELINE__RIDGE_NEWTON_MAX_ITER", "100")),
        ),
        inference=InferenceConfig(
            delta=float(os.getenv("EQUISPARSE__INFERENCE__DELTA", "0.9")),
            glm_tol=float(os.getenv("EQUISPARSE__INFERENCE__GLM_TOL", "1e-10")),
            glm_max_iter=int(os.getenv("EQUISPARSE__INFERENCE__GLM_MAX_ITER", "100")),
            separation_bound=float(os.getenv("EQUISPARSE__INFERENCE__SEPARATION_BOUND", "30")),
            offset_in_selection=_env_bool("EQUISPARSE__INFERENCE__OFFSET_IN_SELECTION", "true"),
        ),
        runtime=RuntimeConfig(
            threads=int(threads),
            seed=int(os.getenv("EQUISPARSE__RUNTIME__SEED", "0")),
        ),
    )

# Global settings instance
settings = get_settings()
