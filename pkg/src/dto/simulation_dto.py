from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from src.exceptions import OutOfRange

class ScenarioEnum(str, Enum):
    EXP1 = "exp1"
    EXP2 = "exp2"
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"

class TreeVariantEnum(str, Enum):
    """T0 full tree; T1-T3 delete 10/20/30 nodes below the true groups; T4/T5 delete 3/6 above"""
    T0 = "T0"
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"

class ResponseKindEnum(str, Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"

_SCENARIO_DEFAULTS = {
    ScenarioEnum.EXP1: {"n": 50, "p": 60, "K": 10},
    ScenarioEnum.EXP2: {"n": 50, "K": 20, "p_s": 3},
    ScenarioEnum.S1: {"n": 50, "p": 100, "K": 10},
    ScenarioEnum.S2: {"n": 500, "p": 400, "K": 100},
    ScenarioEnum.S3: {"n": 50, "p": 400, "K": 20, "response": ResponseKindEnum.BERNOULLI},
}

# ===============================
# Simulation config
# ===============================

class SimConfig(BaseModel):
    scenario: ScenarioEnum = Field(..., description="Simulation scenario")
    n: int = Field(..., ge=2, description="Training sample size (validation uses the same)")
    p: int = Field(..., ge=1, description="Feature count")
    K: int = Field(..., ge=1, description="True group count")
    seed: int = Field(default=0, ge=0)
    poisson_rate: float = Field(default=0.02, gt=0, description="Rate of the iid Poisson design")
    snr_divisor: float = Field(default=5.0, gt=0, description="sigma^2 = ||X beta*||^2 / (snr_divisor * n)")
    tree_variant: TreeVariantEnum = Field(default=TreeVariantEnum.T0)
    p_s: Optional[int] = Field(default=None, ge=1, description="Subtree size (exp2)")
    response: ResponseKindEnum = Field(default=ResponseKindEnum.GAUSSIAN)
    n_test: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_scenario(self) -> "SimConfig":
        if self.K > self.p:
            raise ValueError(f"K={self.K} exceeds p={self.p}")
        if self.scenario == ScenarioEnum.EXP1 and (self.p, self.K) != (60, 10):
            raise ValueError("exp1 uses the fixed tree with p=60 and K=10")
        if self.scenario == ScenarioEnum.EXP2:
            if self.p_s is None or self.p != 20 * self.p_s or self.K != 20:
                raise ValueError("exp2 needs K=20 and p = 20 * p_s")
        if self.scenario == ScenarioEnum.S1 and (self.p, self.n) != (100, 50):
            raise ValueError("s1 uses p=100 and n=50")
        if self.scenario == ScenarioEnum.S2 and 4 * self.K != self.p:
            raise ValueError("s2 keeps K/p = 0.25")
        return self

    @property
    def test_size(self) -> int:
        if self.n_test is not None:
            return self.n_test
        if self.scenario in (ScenarioEnum.EXP1, ScenarioEnum.EXP2):
            return 500
        return 10 * self.n

    @classmethod
    def for_scenario(cls, scenario: ScenarioEnum, **overrides: Any) -> "SimConfig":
        """Scenario defaults with overrides; None overrides are ignored"""
        scenario = ScenarioEnum(scenario)
        values = dict(_SCENARIO_DEFAULTS[scenario])
        values.update({k: v for k, v in overrides.items() if v is not None})
        if scenario == ScenarioEnum.EXP2 and overrides.get("p") is None:
            values["p"] = 20 * values["p_s"]
        try:
            return cls(scenario=scenario, **values)
        except ValidationError as e:
            raise OutOfRange(f"Invalid {scenario.value} configuration: {e.errors()[0]['msg']}")
