"""HTTP service implementing the summarization and embedding protocol.

POST /summarize and POST /embed follow the pipeline's wire schemas;
schema violations answer 400 and requests before the model finishes
loading answer 503.  Generation runs under a lock so concurrent requests
never interleave decoder state.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .encoders import default_registry
from .models import T5_TASK_PREFIX, load_checkpoint, uses_task_prefix

log = logging.getLogger(__name__)


@dataclass
class ModelBundle:
    model: object
    tokenizer: object
    model_id: str


@dataclass
class ServerState:
    bundle: ModelBundle | None = None
    encoders: dict = field(default_factory=default_registry)
    lock: threading.Lock = field(default_factory=threading.Lock)


def load_bundle(model_dir: str | Path) -> ModelBundle:
    model_dir = Path(model_dir)
    model, tokenizer = load_checkpoint(model_dir)
    id_file = model_dir / "model_id"
    model_id = (
        id_file.read_text(encoding="utf-8").strip()
        if id_file.is_file()
        else model.config.model_type
    )
    return ModelBundle(model=model, tokenizer=tokenizer, model_id=model_id)


class SummarizeRequest(BaseModel):
    text: str
    max_input_tokens: int = Field(ge=1)
    max_summary_tokens: int = Field(ge=1)
    num_beams: int = Field(ge=1)
    length_penalty: float = Field(gt=0)
    repetition_penalty: float = Field(gt=0)


class EmbedRequest(BaseModel):
    encoder: str
    texts: list[str]


def generate_summary(bundle: ModelBundle, req: SummarizeRequest) -> str:
    model, tokenizer = bundle.model, bundle.tokenizer
    text = req.text
    if uses_task_prefix(model):
        text = T5_TASK_PREFIX + text
    encoded = tokenizer(
        [text],
        return_tensors="pt",
        truncation=True,
        max_length=req.max_input_tokens,
    )
    with torch.no_grad():
        output = model.generate(
            encoded.input_ids,
            attention_mask=encoded.attention_mask,
            num_beams=req.num_beams,
            length_penalty=req.length_penalty,
            repetition_penalty=req.repetition_penalty,
            max_new_tokens=req.max_summary_tokens,
            min_new_tokens=min(2, req.max_summary_tokens),
            do_sample=False,
            early_stopping=req.num_beams > 1,
        )
    return tokenizer.decode(output[0], skip_special_tokens=True).strip()


def create_app(state: ServerState) -> FastAPI:
    app = FastAPI(title="modelserver")

    @app.exception_handler(RequestValidationError)
    async def _bad_schema(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/healthz")
    def healthz():
        loaded = state.bundle is not None
        return {
            "model_id": state.bundle.model_id if loaded else None,
            "loaded": loaded,
        }

    @app.post("/summarize")
    def summarize(req: SummarizeRequest):
        if state.bundle is None:
            return JSONResponse(
                status_code=503, content={"error": "model not loaded"}
            )
        if not req.text.strip():
            return JSONResponse(status_code=400, content={"error": "empty text"})
        with state.lock:
            summary = generate_summary(state.bundle, req)
        return {"summary": summary, "model_id": state.bundle.model_id}

    @app.post("/embed")
    def embed(req: EmbedRequest):
        encoder = state.encoders.get(req.encoder)
        if encoder is None:
            return JSONResponse(
                status_code=400,
                content={"error": f"unknown encoder {req.encoder!r}"},
            )
        vectors = encoder.encode(req.texts)
        return {"dim": encoder.dim, "vectors": vectors}

    return app


def serve(model_dir: str | Path, host: str = "127.0.0.1", port: int = 8900):
    """Blocking entry point: load the checkpoint, then serve forever."""
    import uvicorn

    state = ServerState(bundle=load_bundle(model_dir))
    log.info("serving %s on %s:%d", state.bundle.model_id, host, port)
    uvicorn.run(create_app(state), host=host, port=port, log_level="info")
