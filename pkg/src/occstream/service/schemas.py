"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

Scalar = Union[str, int, float, bool, None]


class Health(BaseModel):
    status: str = "ok"
    version: str


class ErrorBody(BaseModel):
    error: str
    detail: str
    key: Optional[str] = None


class WindowSizeRequest(BaseModel):
    probabilities: list[float] = Field(min_length=1)
    tau: int = Field(ge=1)
    confidence: float = Field(0.95, gt=0.0, lt=1.0)


class WindowSizeResponse(BaseModel):
    n: int
    lemma_satisfied: bool
    p_min: float
    quantile: float


class Ball(BaseModel):
    center: list[float] = Field(min_length=1)
    radius: float = Field(gt=0.0)


class ClusterDistanceRequest(BaseModel):
    a: Ball
    b: Ball
    samples: int = Field(100_000, ge=1, le=5_000_000)
    seed: int = 0
    method: Literal["monte_carlo", "exact"] = "monte_carlo"


class ClusterDistanceResponse(BaseModel):
    raw: float
    normalized: float


class InstanceIn(BaseModel):
    features: list[float] = Field(min_length=1)
    label: Optional[Literal[0, 1]] = None
    context: Optional[int] = Field(None, ge=0)


class SessionCreate(BaseModel):
    framework: Literal["single", "occomplete", "ocfuzzy", "occluster"] = "single"
    classifier: Literal["sa", "hstrees", "nnd"] = "sa"
    config: dict[str, Scalar] = Field(default_factory=dict,
                                      description="FrameworkConfig fields, e.g. contexts or threshold")
    initialization: list[InstanceIn] = Field(min_length=2)


class SessionInfo(BaseModel):
    id: str
    framework: str
    classifier: str
    dimension: int
    threshold: float
    init_size: int
    seen: int
    config: dict[str, Scalar]


class StepRequest(BaseModel):
    instances: list[InstanceIn] = Field(min_length=1)
    train: bool = True


class Verdict(BaseModel):
    label: Literal["NORMAL", "OUTLIER"]
    score: float
    context: Optional[int]


class StepResponse(BaseModel):
    verdicts: list[Verdict]
    seen: int


class SnapshotRow(BaseModel):
    model_config = ConfigDict(extra="allow")

    context_id: int
    training_count: int
    weight: Optional[float] = None
    radius: Optional[float] = None


class Snapshot(BaseModel):
    session: str
    framework: str
    rows: list[SnapshotRow]


class RunRequest(BaseModel):
    config: dict[str, Scalar] = Field(description="flat experiment configuration, same keys as the config file")
    out: str


class RunResponse(BaseModel):
    out: str
    files: dict[str, str]
    mean_prequential_auc: dict[str, float]


class CompareRequest(BaseModel):
    run_dirs: list[str] = Field(min_length=1)
    metric: Literal["prequential_auc", "g_mean", "sensitivity", "specificity"] = "prequential_auc"
    rope: float = Field(0.01, ge=0.0)
    baseline: Optional[str] = None
    out: Optional[str] = None


class ComparisonRow(BaseModel):
    comparison: str
    p_left: float
    p_rope: float
    p_right: float
    mean_difference: float


class EvaluateRequest(BaseModel):
    scores: list[float] = Field(min_length=1)
    truth: list[bool] = Field(min_length=1)
    threshold: Optional[float] = None


class EvaluateResponse(BaseModel):
    auc: Optional[float]
    threshold: Optional[float]
    informedness: Optional[float]
    g_mean: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
