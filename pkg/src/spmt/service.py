"""HTTP service with per-session correspondence caching.

A session holds one encoded source face. Each added reference eagerly
computes and caches the patch correspondence, so interactive edits (shade,
weights, part assignment) only re-run the cheap blending + rendering path.
"""

from __future__ import annotations

import base64
import io
import threading
import time
import uuid
from dataclasses import dataclass, field

from fastapi import FastAPI, File, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .control import RecipeError, TransferRecipe
from .pipeline import FaceAssets, make_assets, run_transfer
from .sac import SacConfig
from .synthesis import RenderConfig
from .tensor import (
    FeatureMap,
    ImageFormatError,
    InvalidLabelError,
    LabelMask,
    save_image,
)

MAX_BODY_BYTES = 16 * 1024 * 1024
DEFAULT_TTL_SECONDS = 30 * 60


@dataclass
class Reference:
    assets: FaceAssets
    # (digest, direction) -> per-level reconstructions; write-once per key
    cache: dict = field(default_factory=dict)


@dataclass
class Session:
    id: str
    source: FaceAssets
    created_at: float
    refs: list[Reference] = field(default_factory=list)
    correspondence_computations: int = 0
    cache_hits: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._ttl = ttl_seconds

    def create(self, source: FaceAssets) -> Session:
        session = Session(id=uuid.uuid4().hex, source=source, created_at=time.time())
        with self._lock:
            self._evict_locked()
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        session = self._sessions.get(session_id)  # lock-free read path
        if session is None:
            return None
        if time.time() - session.created_at > self._ttl:
            with self._lock:
                self._sessions.pop(session_id, None)
            return None
        return session

    def _evict_locked(self) -> None:
        now = time.time()
        stale = [k for k, s in self._sessions.items() if now - s.created_at > self._ttl]
        for k in stale:
            del self._sessions[k]


def _decode_upload(image_bytes: bytes, mask_bytes: bytes) -> FaceAssets:
    from PIL import Image
    import numpy as np

    from .tensor import WORKING_SIZE

    try:
        img = Image.open(io.BytesIO(image_bytes))
        img.load()
    except Exception as exc:
        raise ImageFormatError(f"cannot decode image: {exc}") from exc
    if img.mode != "RGB":
        raise ImageFormatError(f"expected RGB image, got mode {img.mode}")
    if img.size != (WORKING_SIZE, WORKING_SIZE):
        img = img.resize((WORKING_SIZE, WORKING_SIZE), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0 * 2.0 - 1.0
    image = FeatureMap(arr.transpose(2, 0, 1))

    try:
        msk = Image.open(io.BytesIO(mask_bytes))
        msk.load()
    except Exception as exc:
        raise ImageFormatError(f"cannot decode mask: {exc}") from exc
    if msk.mode != "L":
        msk = msk.convert("L")
    if msk.size != (WORKING_SIZE, WORKING_SIZE):
        msk = msk.resize((WORKING_SIZE, WORKING_SIZE), Image.NEAREST)
    mask = LabelMask(np.asarray(msk, dtype=np.uint8))
    return make_assets(image, mask)


def _sac_config_from_recipe(body: dict) -> tuple[SacConfig, RenderConfig]:
    base = SacConfig()
    sac_cfg = SacConfig(
        beta=float(body.get("beta", base.beta)),
        mode=body.get("mode", base.mode),
        alphas=tuple(body.get("alphas", base.alphas)),
    )
    render_cfg = RenderConfig(
        hm_postprocess=not bool(body.get("noHm", False)),
        seam_feather_radius=int(body.get("feather", RenderConfig().seam_feather_radius)),
    )
    return sac_cfg, render_cfg


def create_app(ttl_seconds: float = DEFAULT_TTL_SECONDS) -> FastAPI:
    app = FastAPI(title="spmt")
    store = SessionStore(ttl_seconds)
    app.state.store = store

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Metrics"],
    )

    @app.middleware("http")
    async def limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > MAX_BODY_BYTES:
            return JSONResponse({"error": "body exceeds 16 MiB"}, status_code=413)
        return await call_next(request)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(image: UploadFile = File(...), mask: UploadFile = File(...)):
        try:
            assets = _decode_upload(await image.read(), await mask.read())
        except (ImageFormatError, InvalidLabelError, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        session = store.create(assets)
        return {"id": session.id}

    @app.post("/sessions/{session_id}/references", status_code=201)
    async def add_reference(
        session_id: str, image: UploadFile = File(...), mask: UploadFile = File(...)
    ):
        session = store.get(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        try:
            assets = _decode_upload(await image.read(), await mask.read())
        except (ImageFormatError, InvalidLabelError, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        ref = Reference(assets=assets)
        # eager fill so the first slider move is already cached
        _fill_cache(session, ref, SacConfig(), direction="transfer")
        with session.lock:
            session.refs.append(ref)
            ref_id = len(session.refs) - 1
        return {"refId": ref_id}

    @app.post("/sessions/{session_id}/transfer")
    async def transfer(session_id: str, request: Request, report: str | None = None):
        session = store.get(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        if not session.refs:
            return JSONResponse({"error": "session has no references"}, status_code=422)
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "invalid JSON body"}, status_code=422)
        try:
            recipe = TransferRecipe.from_json_dict(body)
            sac_cfg, render_cfg = _sac_config_from_recipe(body)
        except (RecipeError, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)

        try:
            png, metrics_json = _run_cached_transfer(
                session, recipe, sac_cfg, render_cfg
            )
        except (RecipeError, ValueError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)

        if report == "json":
            return JSONResponse(
                {
                    "imageBase64": base64.b64encode(png).decode("ascii"),
                    "metrics": __import__("json").loads(metrics_json),
                }
            )
        return Response(
            content=png, media_type="image/png", headers={"X-Metrics": metrics_json}
        )

    @app.get("/sessions/{session_id}/stats")
    def stats(session_id: str):
        session = store.get(session_id)
        if session is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        return {
            "correspondenceComputations": session.correspondence_computations,
            "cacheHits": session.cache_hits,
        }

    return app


def _fill_cache(session: Session, ref: Reference, cfg: SacConfig, direction: str):
    """Compute-or-fetch the reconstructions for one reference."""
    from .pipeline import compute_reconstructions

    key = (cfg.correspondence_digest(), direction)
    cached = ref.cache.get(key)
    if cached is not None:
        session.cache_hits += 1
        return cached
    if direction == "transfer":
        recons = compute_reconstructions(session.source, ref.assets, cfg)
    else:  # removal: roles swapped, reference face becomes the source
        recons = compute_reconstructions(ref.assets, session.source, cfg)
    session.correspondence_computations += 1
    with session.lock:
        ref.cache.setdefault(key, recons)
    return recons


def _run_cached_transfer(
    session: Session,
    recipe: TransferRecipe,
    sac_cfg: SacConfig,
    render_cfg: RenderConfig,
) -> tuple[bytes, str]:
    if recipe.removal:
        ref = session.refs[0]
        recons = _fill_cache(session, ref, sac_cfg, "removal")
        removal_recipe = TransferRecipe(
            shade=recipe.shade,
            ref_weights=(1.0,),
            transfer_parts=recipe.transfer_parts,
            removal=True,
        )
        out, rep = run_transfer(
            ref.assets,
            [session.source],
            removal_recipe,
            sac_cfg,
            render_cfg,
            cached_recons=[recons],
        )
    else:
        if len(recipe.ref_weights) != len(session.refs):
            raise RecipeError(
                f"{len(session.refs)} references loaded but "
                f"{len(recipe.ref_weights)} weights supplied"
            )
        recons = [
            _fill_cache(session, ref, sac_cfg, "transfer") for ref in session.refs
        ]
        out, rep = run_transfer(
            session.source,
            [r.assets for r in session.refs],
            recipe,
            sac_cfg,
            render_cfg,
            cached_recons=recons,
        )
    buf = io.BytesIO()
    save_image(out, buf)
    return buf.getvalue(), rep.to_json()
