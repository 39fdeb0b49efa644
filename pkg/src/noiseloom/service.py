"""Session-oriented HTTP service for the interactive edit loop.

Sessions keep the *initial* latent plus an ordered edit history; generation
results are derived values.  Replaying the history from the creation seed
reproduces the current latent bitwise, which is also how snapshots are
restored: only seeds and events are ever persisted.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field, model_validator

from .attention import attention_to_pgm
from .editing import GuidanceItem, LayoutGuidance, guidance_to_jsonable, parse_guidance
from .errors import NoiseLoomError
from .latent import LatentGrid, RegionMask, Region, latent_to_bytes, resample_region
from .toy import GenerationResult, ToyEngine, ToyModelParams, label_map_to_pgm, label_map_to_png

log = logging.getLogger(__name__)


class SessionCreate(BaseModel):
    seed: int
    prompt: list[str] = Field(default_factory=list)
    params: dict = Field(default_factory=dict)


class RepaintBody(BaseModel):
    fresh_seed: int
    blocks: list[tuple[int, int]] | None = None
    box: tuple[int, int, int, int] | None = None

    @model_validator(mode="after")
    def _exactly_one_mask(self):
        if (self.blocks is None) == (self.box is None):
            raise ValueError("provide exactly one of 'blocks' or 'box'")
        if self.blocks is not None and len(self.blocks) == 0:
            raise ValueError("'blocks' must select at least one block")
        if self.box is not None and (self.box[2] <= self.box[0] or self.box[3] <= self.box[1]):
            raise ValueError("'box' is empty")
        return self


class GuidanceItemBody(BaseModel):
    box: tuple[int, int, int, int]
    category: str


class GuidanceBody(BaseModel):
    items: list[GuidanceItemBody] = Field(min_length=1)
    pairing_seed: int = 0


class LayoutBody(BaseModel):
    guidance: GuidanceBody


@dataclass
class Session:
    id: str
    seed: int
    prompt: tuple[str, ...]
    params: ToyModelParams
    engine: ToyEngine
    latent: LatentGrid
    events: list[dict] = field(default_factory=list)
    cached: GenerationResult | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


def _mask_from_body(body: RepaintBody, session: Session) -> RegionMask:
    rows, cols = session.params.block_rows, session.params.block_cols
    if body.blocks is not None:
        return RegionMask.from_blocks(body.blocks, rows, cols)
    return RegionMask.from_region(Region(*body.box), rows, cols)


def apply_event(engine: ToyEngine, latent: LatentGrid, event: dict) -> LatentGrid:
    """One history event folded onto a latent; the replay building block."""
    if event["type"] == "repaint":
        rows, cols = engine.params.block_rows, engine.params.block_cols
        mask = RegionMask.from_blocks([tuple(b) for b in event["blocks"]], rows, cols)
        return resample_region(latent, mask, event["fresh_seed"])
    if event["type"] == "layout":
        guidance, _ = parse_guidance(event["guidance"])
        swapped, _ = engine.swap(latent, guidance, event["guidance"]["pairing_seed"])
        return swapped
    raise NoiseLoomError(f"unknown history event type {event['type']!r}")


def replay_session(engine: ToyEngine, seed: int, events: list[dict]) -> LatentGrid:
    latent = engine.sample(seed)
    for event in events:
        latent = apply_event(engine, latent, event)
    return latent


def result_payload(result: GenerationResult, swaps=None) -> dict:
    attn = result.step0_attention
    payload = {
        "label_map": result.label_map.labels.tolist(),
        "label_names": list(result.label_map.names),
        "step0_attention": {
            "tokens": list(attn.token_names),
            "maps": {name: attn.column(name).tolist() for name in attn.token_names},
        },
        "provenance": result.provenance,
    }
    if swaps is not None:
        payload["swaps"] = [s.to_jsonable() for s in swaps]
    return payload


def create_app(
    default_params: ToyModelParams | None = None,
    snapshot_path: str | None = None,
    ui_dir: str | None = None,
) -> FastAPI:
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    base_params = default_params or ToyModelParams()

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app):
        _load_snapshot()
        yield
        _save_snapshot()

    app = FastAPI(title="noiseloom", version="0.1.0", lifespan=lifespan)
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def get_session(sid: str) -> Session:
        session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        return session

    def build_session(sid: str, seed: int, prompt: tuple[str, ...], overrides: dict, events) -> Session:
        try:
            params = (
                ToyModelParams(**{**asdict(base_params), **overrides}) if overrides else base_params
            )
            engine = ToyEngine(prompt, params)
            latent = replay_session(engine, seed, list(events))
        except (NoiseLoomError, TypeError) as exc:
            raise HTTPException(
                status_code=422,
                detail=[{"loc": ["body", "params"], "msg": str(exc), "type": "value_error"}],
            ) from exc
        return Session(
            id=sid, seed=seed, prompt=prompt, params=params, engine=engine,
            latent=latent, events=list(events),
        )

    def engine_guard(fn):
        try:
            return fn()
        except HTTPException:
            raise
        except NoiseLoomError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    def generation_of(session: Session) -> GenerationResult:
        if session.cached is None:
            session.cached = session.engine.generate(
                session.latent,
                provenance={"seed": session.seed, "edits": list(session.events)},
            )
        return session.cached

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "sessions": len(sessions)}

    @app.post("/sessions")
    def create_session(body: SessionCreate):
        sid = uuid.uuid4().hex[:12]
        session = build_session(sid, body.seed, tuple(body.prompt), body.params, [])
        with registry_lock:
            sessions[sid] = session
        return {"id": sid}

    @app.post("/sessions/{sid}/generate")
    def generate(sid: str):
        session = get_session(sid)
        with session.lock:
            result = engine_guard(lambda: generation_of(session))
            return result_payload(result)

    @app.post("/sessions/{sid}/repaint")
    def repaint(sid: str, body: RepaintBody):
        session = get_session(sid)
        with session.lock:
            def mutate():
                mask = _mask_from_body(body, session)
                new_latent = resample_region(session.latent, mask, body.fresh_seed)
                blocks = [[int(r), int(c)] for r, c in zip(*mask.bits.nonzero())]
                session.latent = new_latent
                session.events.append(
                    {"type": "repaint", "blocks": blocks, "fresh_seed": body.fresh_seed}
                )
                session.cached = None
                return generation_of(session)

            return result_payload(engine_guard(mutate))

    @app.post("/sessions/{sid}/layout")
    def layout(sid: str, body: LayoutBody):
        session = get_session(sid)
        with session.lock:
            def mutate():
                guidance = LayoutGuidance(
                    tuple(
                        GuidanceItem(Region(*[int(v) for v in it.box]), it.category)
                        for it in body.guidance.items
                    )
                )
                swapped, swaps = session.engine.swap(
                    session.latent, guidance, body.guidance.pairing_seed
                )
                session.latent = swapped
                session.events.append(
                    {
                        "type": "layout",
                        "guidance": guidance_to_jsonable(guidance, body.guidance.pairing_seed),
                        "swaps": [s.to_jsonable() for s in swaps],
                    }
                )
                session.cached = None
                return generation_of(session), swaps

            result, swaps = engine_guard(mutate)
            return result_payload(result, swaps)

    @app.get("/sessions/{sid}/history")
    def history(sid: str):
        session = get_session(sid)
        return {
            "id": session.id,
            "seed": session.seed,
            "prompt": list(session.prompt),
            "events": session.events,
        }

    @app.get("/sessions/{sid}/image")
    def image(sid: str, scale: int = 16):
        session = get_session(sid)
        with session.lock:
            result = engine_guard(lambda: generation_of(session))
        return Response(label_map_to_png(result.label_map, scale), media_type="image/png")

    @app.get("/sessions/{sid}/labels.pgm")
    def labels_pgm(sid: str):
        session = get_session(sid)
        with session.lock:
            result = engine_guard(lambda: generation_of(session))
        return Response(label_map_to_pgm(result.label_map), media_type="image/x-portable-graymap")

    @app.get("/sessions/{sid}/attention/{token}")
    def attention(sid: str, token: str, format: str = "json"):
        session = get_session(sid)
        with session.lock:
            attn = engine_guard(lambda: session.engine.attention(session.latent))
        if token not in attn.token_names:
            raise HTTPException(status_code=404, detail=f"unknown token {token!r}")
        if format == "pgm":
            return Response(attention_to_pgm(attn, token), media_type="image/x-portable-graymap")
        return {
            "token": token,
            "rows": attn.values.shape[0],
            "cols": attn.values.shape[1],
            "values": attn.column(token).tolist(),
        }

    @app.get("/sessions/{sid}/latent")
    def latent(sid: str):
        session = get_session(sid)
        with session.lock:
            data = latent_to_bytes(session.latent)
        return Response(data, media_type="application/octet-stream")

    def _load_snapshot():
        if not snapshot_path or not Path(snapshot_path).exists():
            return
        try:
            stored = json.loads(Path(snapshot_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            log.warning("snapshot %s unreadable: %s", snapshot_path, exc)
            return
        for sid, entry in stored.items():
            try:
                session = build_session(
                    sid, entry["seed"], tuple(entry["prompt"]), entry.get("params", {}),
                    entry.get("events", []),
                )
            except HTTPException as exc:
                log.warning("snapshot session %s dropped: %s", sid, exc.detail)
                continue
            sessions[sid] = session
        log.info("restored %d sessions from %s", len(sessions), snapshot_path)

    def _save_snapshot():
        if not snapshot_path:
            return
        payload = {
            sid: {
                "seed": s.seed,
                "prompt": list(s.prompt),
                "events": s.events,
            }
            for sid, s in sessions.items()
        }
        Path(snapshot_path).write_text(json.dumps(payload, sort_keys=True, indent=2))

    return app


def serve(port: int, host: str = "127.0.0.1", params: ToyModelParams | None = None,
          snapshot_path: str | None = None, ui_dir: str | None = None) -> None:
    import uvicorn

    uvicorn.run(create_app(params, snapshot_path, ui_dir), host=host, port=port, log_level="info")
