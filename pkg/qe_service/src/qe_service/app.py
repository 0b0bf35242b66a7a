"""FastAPI application implementing the router's QE wire protocol.

    POST /score  {"source", "hypotheses": [...]} -> {"scores": [...]}
    POST /embed  {"source"}                      -> {"embedding": [...]}
    GET  /meta                                   -> {"model", "dim", "max_batch_size"}

Scores are order-preserving; hypotheses are processed in request-local
batches of at most ``max_batch_size`` (no cross-request batching, which
keeps responses deterministic). Every non-2xx response body is
{"error": string}.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServiceConfig
from .models import load_model


class ScoreRequest(BaseModel):
    source: str
    hypotheses: list[str]


class EmbedRequest(BaseModel):
    source: str


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    model = load_model(config.model, device=config.device)
    app = FastAPI(title="qe-service", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def invalid_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": f"invalid request body: {exc.errors()[:1]}"})

    @app.exception_handler(Exception)
    async def model_failure(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"{type(exc).__name__}: {exc}"})

    @app.get("/meta")
    def meta():
        return {"model": model.identifier, "dim": model.dim, "max_batch_size": config.max_batch_size}

    @app.post("/score")
    def score(request: ScoreRequest):
        if not request.hypotheses:
            return JSONResponse(status_code=400, content={"error": "hypotheses must be non-empty"})
        scores: list[float] = []
        for start in range(0, len(request.hypotheses), config.max_batch_size):
            chunk = request.hypotheses[start:start + config.max_batch_size]
            scores.extend(model.score_batch(request.source, chunk))
        return {"scores": scores}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        return {"embedding": [float(v) for v in model.embed(request.source)]}

    return app
