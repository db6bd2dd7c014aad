"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    """A command invocation: flat config keys plus input documents as text."""

    config: Dict[str, Any] = Field(default_factory=dict)
    series_csv: Optional[str] = None
    surrogate: Optional[str] = None
    chain_csv: Optional[str] = None


class ArtifactResponse(BaseModel):
    files: Dict[str, str] = Field(default_factory=dict)
    report: Dict[str, Any] = Field(default_factory=dict)
    exit_code: int = 0


class ErrorResponse(BaseModel):
    error: str
    kind: str
    exit_code: int
    step: Optional[int] = None


class StreamCreate(BaseModel):
    config: Dict[str, Any] = Field(default_factory=dict)
    surrogate: Optional[str] = None
    columns: List[str] = Field(default_factory=list)


class StreamCreated(BaseModel):
    stream_id: str


class Observation(BaseModel):
    t: float
    value: List[float]


class EventOut(BaseModel):
    kind: str
    step: int
    timestamp: Optional[float] = None
    mean: Optional[List[float]] = None
    var: Optional[List[List[float]]] = None
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    gap: Optional[float] = None
    forecast_mean: Optional[List[float]] = None
    forecast_var: Optional[List[List[float]]] = None


class EventsResponse(BaseModel):
    events: List[EventOut]
    halted: bool = False
