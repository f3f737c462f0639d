"""Request and response models for the JSON endpoints."""

from __future__ import annotations

from pydantic import BaseModel, Field


class Point(BaseModel):
    x: float
    y: float


class AssignRequest(BaseModel):
    gaze: Point
    centroids: list[Point]
    tau_cm: float | None = Field(default=None, ge=0, description="omit for pure nearest-cell assignment")


class AssignResponse(BaseModel):
    target: int | None = Field(description="1-based cell index, null when targetless")
    distance_cm: float | None = Field(description="null when there are no centroids")


class CueStatsRequest(BaseModel):
    hits: int = Field(ge=0)
    misses: int = Field(ge=0)
    false_plays: int = Field(ge=0)
    correct_rejects: int = Field(ge=0)


class CueStatsResponse(BaseModel):
    n: int
    hit_rate: float | str
    miss_rate: float | str
    precision: float | str
    accuracy: float | str


class HitRateRequest(BaseModel):
    style: str = "grid"
    n: int = Field(ge=1, le=8)
    sigma_x: float = Field(default=0.85, ge=0)
    sigma_y: float = Field(default=1.83, ge=0)
    trials: int = Field(default=100_000, ge=1, le=10_000_000)
    seed: int = 0
    truth: str = "cells"


class HitRateResponse(BaseModel):
    style: str
    n: int
    hit_rate: float
    trials: int


class Cell(BaseModel):
    index: int
    name: str
    centroid_cm: Point
    bbox_px: tuple[int, int, int, int]


class LayoutResponse(BaseModel):
    tau_cm: float
    cells: list[Cell]
