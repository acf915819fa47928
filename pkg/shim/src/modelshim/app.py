"""FastAPI application implementing the pairdistill wire protocol."""

from __future__ import annotations

import logging
from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from .config import ShimConfig
from .models import GeneratorBackend, NliBackend, TaskBackend

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "v1"

# the control codes the task model was trained with; anything else is a 400
KNOWN_CONTROL_CODES = (
    "Generate a short, abstractive summary of the given sentence:",
    "Generate a short, extractive summary of the given sentence:",
    "Generate a long, abstractive summary of the given sentence:",
    "Generate a long, extractive summary of the given sentence:",
    "Generate a paraphrase of the given sentence:",
)


class GenerateRequest(BaseModel):
    protocol_version: Literal["v1"]
    id: str = Field(min_length=1)
    prefix: str
    mode: Literal["sample", "distribution"]
    top_p: float = Field(gt=0.0, le=1.0)
    max_tokens: int = Field(ge=1)
    count: int = Field(ge=1)
    seed: int


class GenerateResponse(BaseModel):
    protocol_version: Literal["v1"] = PROTOCOL_VERSION
    id: str
    sentences: list[str] | None = None
    topk: list[tuple[str, float]] | None = None


class NliRequest(BaseModel):
    protocol_version: Literal["v1"]
    id: str = Field(min_length=1)
    premise: str | None = None
    hypothesis: str | None = None
    pairs: list[tuple[str, str]] | None = None

    @model_validator(mode="after")
    def _single_xor_batch(self):
        single = self.premise is not None and self.hypothesis is not None
        batch = self.pairs is not None
        if single == batch:
            raise ValueError("provide either premise+hypothesis or pairs, not both")
        if batch and not self.pairs:
            raise ValueError("pairs must be non-empty")
        return self


class NliResponse(BaseModel):
    protocol_version: Literal["v1"] = PROTOCOL_VERSION
    id: str
    entail_prob: float | None = None
    entail_probs: list[float] | None = None


class InferRequest(BaseModel):
    protocol_version: Literal["v1"]
    id: str = Field(min_length=1)
    input: str
    control_code: str = Field(min_length=1)


class InferResponse(BaseModel):
    protocol_version: Literal["v1"] = PROTOCOL_VERSION
    id: str
    output: str


class HealthResponse(BaseModel):
    status: Literal["ok"] = "ok"
    models: list[str]


def create_app(config: ShimConfig) -> FastAPI:
    """Load the configured backends and build the service."""
    app = FastAPI(title="modelshim", version="0.1.0")
    generator = (
        GeneratorBackend(config.generator_model, config.device, config.top_k)
        if config.generator_model
        else None
    )
    nli = (
        NliBackend(config.nli_model, config.device, config.max_batch_size)
        if config.nli_model
        else None
    )
    task = TaskBackend(config.task_model, config.device) if config.task_model else None

    def _require(backend, name):
        if backend is None:
            raise HTTPException(status_code=503, detail=f"no {name} model configured")
        return backend

    @app.post("/v1/generate", response_model_exclude_none=True)
    def generate(request: GenerateRequest) -> GenerateResponse:
        backend = _require(generator, "generator")
        try:
            if request.mode == "sample":
                sentences = backend.sample(
                    request.prefix,
                    count=request.count,
                    top_p=request.top_p,
                    max_tokens=request.max_tokens,
                    seed=request.seed,
                )
                return GenerateResponse(id=request.id, sentences=sentences)
            topk = backend.distribution(request.prefix)
            return GenerateResponse(id=request.id, topk=topk)
        except HTTPException:
            raise
        except Exception as exc:
            logger.exception("generate failed")
            raise HTTPException(status_code=500, detail=f"generation failed: {exc}")

    @app.post("/v1/nli", response_model_exclude_none=True)
    def nli_score(request: NliRequest) -> NliResponse:
        backend = _require(nli, "nli")
        try:
            if request.pairs is not None:
                probs = backend.score_pairs([tuple(p) for p in request.pairs])
                return NliResponse(id=request.id, entail_probs=probs)
            (prob,) = backend.score_pairs([(request.premise, request.hypothesis)])
            return NliResponse(id=request.id, entail_prob=prob)
        except HTTPException:
            raise
        except Exception as exc:
            logger.exception("nli scoring failed")
            raise HTTPException(status_code=500, detail=f"nli scoring failed: {exc}")

    @app.post("/v1/infer")
    def infer(request: InferRequest) -> InferResponse:
        backend = _require(task, "task")
        if request.control_code not in KNOWN_CONTROL_CODES:
            raise HTTPException(
                status_code=400, detail=f"unknown control_code {request.control_code!r}"
            )
        try:
            # the control code is already part of the input; nothing is prepended
            output = backend.infer(request.input)
            return InferResponse(id=request.id, output=output)
        except HTTPException:
            raise
        except Exception as exc:
            logger.exception("inference failed")
            raise HTTPException(status_code=500, detail=f"inference failed: {exc}")

    @app.get("/v1/health")
    def health() -> HealthResponse:
        loaded = [
            backend.name for backend in (generator, nli, task) if backend is not None
        ]
        return HealthResponse(models=loaded)

    return app
