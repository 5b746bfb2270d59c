"""Pydantic request bodies for the /v1 API."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class BoardConfigBody(BaseModel):
    metric: str
    direction: Literal["maximize", "minimize"]


class DatasetPushRequest(BaseModel):
    name: str
    files: dict[str, str]  # path -> base64 content
    board: BoardConfigBody | None = None


class ResourcesBody(BaseModel):
    gpus: int = 1
    cpus: int = 1
    mem_mb: int = 1024


class SessionCreateRequest(BaseModel):
    dataset: str
    code_files: dict[str, str]  # path -> base64 content
    entrypoint: str = "main.py"
    hyperparams: dict[str, float | str] = Field(default_factory=dict)
    priority: int = 0
    resources: ResourcesBody | None = None


class TuneRequest(BaseModel):
    hyperparams: dict[str, float | str] = Field(default_factory=dict)


class ForkRequest(BaseModel):
    checkpoint: int | str = "latest"
    hyperparams: dict[str, float | str] = Field(default_factory=dict)
    user: str | None = None


class InferRequest(BaseModel):
    input_b64: str
    checkpoint: int | str = "latest"


class RandomSweepBody(BaseModel):
    ranges: dict[str, tuple[float, float]]
    n: int
    seed: int = 0


class SweepRequest(BaseModel):
    dataset: str
    code_files: dict[str, str]
    entrypoint: str = "main.py"
    grid: dict[str, list[float | str]] | None = None
    random: RandomSweepBody | None = None
    base_hyperparams: dict[str, float | str] = Field(default_factory=dict)
    priority: int = 0
