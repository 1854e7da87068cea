"""Stateful HTTP preview service for interactive object placement.

Single session: one manifest, one monotonically increasing revision.
Mutations are serialized through an exclusive lock; reads serve the
published snapshot, and previews for a fixed (revision, camera,
downsample) are byte-identical cached PNGs.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, HTTPException, Response
from pydantic import BaseModel

from .imaging import encode_png
from .manifest import SceneManifest, load_manifest, save_manifest
from .pipeline import AssetSet, compose_world, load_assets
from .splat_render import render_splats
from .transforms import Sim3

__all__ = ["SessionState", "create_app"]


class PlacementBody(BaseModel):
    scale: float
    quat_wxyz: list[float]
    t: list[float]


class SaveBody(BaseModel):
    path: str


class SessionState:
    def __init__(self, manifest: SceneManifest, assets: AssetSet | None = None):
        self.lock = threading.RLock()
        self.manifest = manifest
        self.assets = assets if assets is not None else load_assets(manifest)
        self.revision = 0
        self._composed = {}       # revision -> ComposedWorld
        self._previews = {}       # (revision, camera, down) -> png bytes

    def snapshot(self):
        with self.lock:
            return self.revision, self.manifest

    def update_placement(self, name: str, placement: Sim3) -> int:
        with self.lock:
            self.manifest = self.manifest.with_placement(name, placement)
            self.revision += 1
            self._composed.clear()
            self._previews.clear()
            return self.revision

    def composed(self, revision: int, manifest: SceneManifest):
        with self.lock:
            if revision not in self._composed:
                self._composed[revision] = compose_world(manifest, self.assets)
            return self._composed[revision]

    def preview_png(self, camera_name: str, down: int) -> tuple[bytes, int]:
        revision, manifest = self.snapshot()
        key = (revision, camera_name, down)
        with self.lock:
            cached = self._previews.get(key)
        if cached is not None:
            return cached, revision
        cam = manifest.camera(camera_name).scaled(down)
        world = self.composed(revision, manifest)
        rgb, _ = render_splats(world.splats, cam)
        png = encode_png(rgb)
        with self.lock:
            self._previews[key] = png
        return png, revision

    def scene_summary(self) -> dict:
        revision, manifest = self.snapshot()
        return {
            "revision": revision,
            "frame_label": manifest.frame_label,
            "objects": [
                {
                    "name": o.name,
                    "placement": o.placement.to_json(),
                    "align_residual": o.align_residual,
                }
                for o in manifest.objects
            ],
            "cameras": [dict(name=name, **cam.to_json()) for name, cam in manifest.cameras],
        }


def create_app(source) -> FastAPI:
    """Build the service around a manifest path, a SceneManifest, or an
    existing SessionState."""
    if isinstance(source, SessionState):
        state = source
    elif isinstance(source, SceneManifest):
        state = SessionState(source)
    else:
        state = SessionState(load_manifest(source))

    app = FastAPI(title="splatworld preview service")
    app.state.session = state

    @app.get("/api/health")
    def health():
        return {"status": "ok", "revision": state.snapshot()[0]}

    @app.get("/api/scene")
    def scene():
        return state.scene_summary()

    @app.post("/api/objects/{name}/placement")
    def update_placement(
        name: str, body: PlacementBody, if_match: str | None = Header(default=None)
    ):
        with state.lock:
            revision, manifest = state.snapshot()
            try:
                manifest.object(name)
            except KeyError:
                raise HTTPException(404, f"unknown object '{name}'") from None
            if if_match is not None and if_match.strip() != str(revision):
                raise HTTPException(
                    409, f"revision conflict: expected {revision}, got {if_match}"
                )
            if not (np.isfinite(body.scale) and body.scale > 0):
                raise HTTPException(422, f"placement scale must be positive, got {body.scale}")
            try:
                placement = Sim3(body.scale, np.asarray(body.quat_wxyz), np.asarray(body.t))
            except (ValueError, TypeError) as e:
                raise HTTPException(422, f"invalid transform: {e}") from None
            new_revision = state.update_placement(name, placement)
        return {"revision": new_revision}

    @app.get("/api/preview")
    def preview(camera: str = "head", down: int = 4):
        if down < 1:
            raise HTTPException(422, "down must be >= 1")
        try:
            png, revision = state.preview_png(camera, down)
        except KeyError:
            raise HTTPException(404, f"unknown camera '{camera}'") from None
        return Response(
            content=png,
            media_type="image/png",
            headers={"X-Scene-Revision": str(revision)},
        )

    @app.post("/api/save")
    def save(body: SaveBody):
        with state.lock:
            _, manifest = state.snapshot()
            try:
                save_manifest(manifest, Path(body.path))
            except OSError as e:
                raise HTTPException(422, f"cannot save manifest: {e}") from None
            revision = state.revision
        return {"ok": True, "path": body.path, "revision": revision}

    return app
