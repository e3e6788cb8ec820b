"""Pydantic request/response models shared by the HTTP service and the CLI.

Images travel as base64-encoded PNG payloads; cube maps use the canonical
6-tile strip form. File-path fields (checkpoints, dataset directories,
output paths) are resolved where the operation executes.
"""

from typing import Literal, Optional

from pydantic import BaseModel

from .masking import RectSpec
from .training import TrainConfig


class TrainConfigModel(BaseModel):
    learning_rate: float = 4e-4
    batch_size: int = 8
    face_size: int = 256
    critic_steps_per_gen_step: int = 1
    max_steps: int = 1000
    seed: int = 0
    checkpoint_interval: int = 100
    adversarial_weight: float = 0.001
    gradient_penalty_weight: float = 10.0
    l1_weight: float = 1.2

    def to_config(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())

    @classmethod
    def from_config(cls, config: TrainConfig) -> "TrainConfigModel":
        return cls(**{f: getattr(config, f) for f in cls.model_fields})


class RectModel(BaseModel):
    x0: int
    y0: int
    width: int
    height: int

    def to_spec(self) -> RectSpec:
        return RectSpec(self.x0, self.y0, self.width, self.height)

    @classmethod
    def from_spec(cls, rect: RectSpec) -> "RectModel":
        return cls(x0=rect.x0, y0=rect.y0, width=rect.width, height=rect.height)


class ConvertRequest(BaseModel):
    image_b64: str
    to: Literal["cubemap", "equirect"]
    face_size: int = 256
    width: int = 512
    height: int = 256
    filter: Literal["bilinear", "nearest"] = "bilinear"


class ImageResponse(BaseModel):
    image_b64: str


class MaskRequest(BaseModel):
    width: int = 512
    height: int = 256
    seed: int = 0


class MaskResponse(BaseModel):
    mask_b64: str
    rect: RectModel


class InferRequest(BaseModel):
    checkpoint_path: str
    image_b64: str
    mask_b64: Optional[str] = None
    rect: Optional[RectModel] = None
    fill: float = 0.5


class TrainRequest(BaseModel):
    data_dir: str
    out_dir: str
    config: TrainConfigModel = TrainConfigModel()
    resume_from: Optional[str] = None
    fill: float = 0.5


class TrainResponse(BaseModel):
    checkpoint_path: str
    csv_path: str
    jsonl_path: str
    steps: int
    hole_l1_step1: Optional[float]
    hole_l1_final: float


class MetricsRowModel(BaseModel):
    image_id: str
    ssim: float
    psnr: float
    l1: float
    l2: float


class EvaluateRequest(BaseModel):
    checkpoint_path: str
    data_dir: str
    hole_seed: int = 0
    region: Literal["full", "hole"] = "full"
    fill: float = 0.5
    limit: Optional[int] = None


class EvaluateResponse(BaseModel):
    domain: str
    region: str
    rows: list[MetricsRowModel]
    summary: dict[str, float]


class GridRequest(BaseModel):
    checkpoint_path: str
    data_dir: str
    out_path: str
    hole_seed: int = 0
    fill: float = 0.5
    limit: Optional[int] = None


class GridResponse(BaseModel):
    out_path: str
    images: int


class HealthResponse(BaseModel):
    status: str
    version: str
    projection_convention: str


class ErrorBody(BaseModel):
    error: str
    type: str
