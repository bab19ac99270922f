"""Local render service: header metadata over HTTP, frames over WebSocket.

Clients send one JSON frame request per message; the server numbers
messages per connection in arrival order and replies with a binary
frame ``<u32 request_id, u32 render_micros, u32 color_evals, payload>``
(little-endian).  Only the newest pending request is rendered: a burst
of stale poses is coalesced away, but the final request of any burst is
always answered.  Validation failures come back as JSON text frames and
leave the connection open.  The loaded tree is never mutated.
"""

from __future__ import annotations

import asyncio
import io
import json
import struct
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from PIL import Image

from .camera import Camera
from .fileio import encoding_flags, image_to_u8
from .octree import FourierPlenOctree
from .render import RenderParams, render_image

MAX_PIXELS = 1 << 20
REPLY_HEADER = struct.Struct("<III")

_REQUIRED_FIELDS = {
    "world_from_camera",
    "focal",
    "width",
    "height",
    "time_step",
    "variant",
    "quality",
}
VARIANTS = ("as-loaded", "force-baseline")
QUALITIES = ("png", "raw")


class RequestError(ValueError):
    pass


def parse_frame_request(text: str, n_frames: int) -> dict:
    """Decode and validate one frame-request message."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RequestError(f"malformed JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise RequestError("request must be a JSON object")
    missing = _REQUIRED_FIELDS - raw.keys()
    if missing:
        raise RequestError(f"missing fields: {', '.join(sorted(missing))}")
    unknown = raw.keys() - _REQUIRED_FIELDS
    if unknown:
        raise RequestError(f"unknown fields: {', '.join(sorted(unknown))}")

    pose = raw["world_from_camera"]
    if not (isinstance(pose, list) and len(pose) == 16):
        raise RequestError("world_from_camera must be a list of 16 numbers")
    width, height, time_step = raw["width"], raw["height"], raw["time_step"]
    for name, value in (("width", width), ("height", height), ("time_step", time_step)):
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 0):
            raise RequestError(f"{name} must be a non-negative integer")
    if width < 1 or height < 1:
        raise RequestError("width and height must be positive")
    if width * height > MAX_PIXELS:
        raise RequestError(f"width*height exceeds {MAX_PIXELS} pixels")
    if not time_step < n_frames:
        raise RequestError(f"time_step {time_step} out of range [0, {n_frames})")
    if raw["variant"] not in VARIANTS:
        raise RequestError(f"variant must be one of {VARIANTS}")
    if raw["quality"] not in QUALITIES:
        raise RequestError(f"quality must be one of {QUALITIES}")

    try:
        camera = Camera(
            world_from_camera=np.asarray(pose, dtype=np.float64).reshape(4, 4),
            focal=float(raw["focal"]),
            width=width,
            height=height,
        )
    except (ValueError, TypeError) as exc:
        raise RequestError(str(exc)) from exc
    return {
        "camera": camera,
        "time_step": time_step,
        "variant": raw["variant"],
        "quality": raw["quality"],
    }


def render_reply_payload(
    fpo: FourierPlenOctree, request: dict, packed_children: np.ndarray | None = None
) -> tuple[bytes, int, int]:
    """Render one request; returns (payload, render_micros, color_evals)."""
    params = RenderParams(
        decode_cache=True,
        force_baseline=request["variant"] == "force-baseline",
    )
    image, stats = render_image(
        fpo, request["camera"], request["time_step"], params, packed_children
    )
    pixels = image_to_u8(image)
    if request["quality"] == "raw":
        payload = pixels.tobytes()
    else:
        buf = io.BytesIO()
        Image.fromarray(pixels, "RGB").save(buf, format="PNG")
        payload = buf.getvalue()
    return payload, int(stats["wall_ms"] * 1000.0), int(stats["color_evals"])


def create_app(fpo: FourierPlenOctree) -> FastAPI:
    app = FastAPI()
    packed_children = fpo.structure.packed_children()
    pool = ThreadPoolExecutor(max_workers=1)

    @app.get("/meta")
    def meta() -> dict:
        return {
            "T": fpo.n_frames,
            "K_sigma": fpo.k_sigma,
            "K_z": fpo.k_sh,
            "depth": fpo.structure.max_depth,
            "encoding_flags": encoding_flags(fpo),
            "bounds": {
                "half_extent": fpo.half_extent,
                "centers": fpo.centers.tolist(),
            },
        }

    @app.websocket("/stream")
    async def stream(ws: WebSocket) -> None:
        await ws.accept()
        slot: dict = {}
        wakeup = asyncio.Event()
        closed = False

        async def reader() -> None:
            nonlocal closed
            count = 0
            try:
                while True:
                    text = await ws.receive_text()
                    count += 1
                    try:
                        slot["request"] = parse_frame_request(text, fpo.n_frames)
                        slot["id"] = count
                    except RequestError as exc:
                        await ws.send_text(
                            json.dumps({"error": str(exc), "request_id": count})
                        )
                        continue
                    wakeup.set()
            finally:
                closed = True
                wakeup.set()

        reader_task = asyncio.create_task(reader())
        loop = asyncio.get_running_loop()
        answered = 0
        try:
            while True:
                await wakeup.wait()
                wakeup.clear()
                if closed:
                    break
                request_id = slot["id"]
                if request_id == answered:
                    continue
                payload, micros, evals = await loop.run_in_executor(
                    pool, render_reply_payload, fpo, slot["request"], packed_children
                )
                await ws.send_bytes(
                    REPLY_HEADER.pack(request_id, micros, evals) + payload
                )
                answered = request_id
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            reader_task.cancel()

    return app
