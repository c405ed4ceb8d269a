from __future__ import annotations

import math
from typing import Optional

from pydantic import BaseModel, field_validator


class MetricsRow(BaseModel):
    problem: str
    variant: str
    dx: float
    dt: float
    nu: int
    seed: int = 0
    rmse_relative: float = math.nan
    chi2_normalized: float = math.nan
    chi2_geomean: float = math.nan
    error_uncertainty_ratio: float = math.nan  # median over (t, x, field)
    runtime_seconds: float = math.nan
    gamma_sq: float = math.nan
    marginals: str = "smoothed"
    error: Optional[str] = None  # set when the run failed

    @field_validator("rmse_relative", "chi2_normalized", "chi2_geomean", "gamma_sq")
    @classmethod
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError(f"metric must be non-negative, got {value}")
        return value

