"""FastAPI application implementing the sidecar wire protocol."""
from __future__ import annotations

import logging

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .model import DIM, ModelBundle

log = logging.getLogger(__name__)


def create_app(bundle: ModelBundle) -> FastAPI:
    app = FastAPI(title="addrmatch-sidecar")
    app.state.bundle = bundle

    @app.get("/health")
    async def health():
        return {"status": "ok", "dim": DIM, "max_batch": bundle.max_batch}

    @app.post("/embed")
    async def embed(body: dict):
        texts = body.get("texts")
        if not isinstance(texts, list) or \
                not all(isinstance(t, str) for t in texts):
            return JSONResponse({"error": "texts must be a list of strings"},
                                status_code=422)
        if len(texts) > bundle.max_batch:
            return JSONResponse(
                {"error": f"batch too large (max {bundle.max_batch})"},
                status_code=422)
        try:
            vectors = bundle.embed(texts)
        except Exception as exc:  # noqa: BLE001 - protocol: 500 on model failure
            log.exception("embed failed")
            return JSONResponse({"error": f"model failure: {exc}"},
                                status_code=500)
        return {"vectors": [[float(x) for x in row] for row in vectors]}

    @app.post("/score")
    async def score(body: dict):
        pairs = body.get("pairs")
        if (not isinstance(pairs, list)
                or not all(isinstance(p, list) and len(p) == 2
                           and all(isinstance(s, str) for s in p)
                           for p in pairs)):
            return JSONResponse(
                {"error": "pairs must be a list of [a, b] string pairs"},
                status_code=422)
        if len(pairs) > bundle.max_batch:
            return JSONResponse(
                {"error": f"batch too large (max {bundle.max_batch})"},
                status_code=422)
        try:
            probs = bundle.score([(a, b) for a, b in pairs])
        except Exception as exc:  # noqa: BLE001
            log.exception("score failed")
            return JSONResponse({"error": f"model failure: {exc}"},
                                status_code=500)
        return {"probabilities": probs}

    return app
