"""FastAPI application: latest-frame stream endpoints and JSON wrappers."""

from __future__ import annotations

import asyncio
import math

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, Response, StreamingResponse

from ..errors import GazeError
from ..eval import UNDEFINED, cue_stats, hit_rate_simulated
from ..geometry import CalibrationProfile, GazePointCm, assign_target
from ..imaging import decode_ppm
from ..layout import LayoutStyle, parse_screenshot
from ..runtime import LatestFrameSlot
from . import schemas as S

BOUNDARY = "gazeframe"
STREAM_CONTENT_TYPE = f"multipart/x-mixed-replace; boundary={BOUNDARY}"
POLL_S = 0.05


def multipart_part(payload: bytes, content_type: str) -> bytes:
    head = f"--{BOUNDARY}\r\nContent-Type: {content_type}\r\nContent-Length: {len(payload)}\r\n\r\n"
    return head.encode("ascii") + payload + b"\r\n"


def _ratio(v) -> float | str:
    return "undefined" if v is UNDEFINED else v


def create_app(slot: LatestFrameSlot | None = None, calibration: CalibrationProfile | None = None) -> FastAPI:
    slot = slot or LatestFrameSlot()
    cal = calibration or CalibrationProfile()
    app = FastAPI(title="gazetarget")
    app.state.slot = slot

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.get("/frame")
    def frame() -> Response:
        item = slot.latest()
        if item is None:
            return PlainTextResponse("NoFrameYet", status_code=503)
        return Response(item[1], media_type=slot.content_type)

    @app.get("/stream")
    async def stream() -> StreamingResponse:
        async def parts():
            seen = 0
            while not slot.closed:
                # non-blocking peek so the event loop stays free; latest-wins
                item = slot.latest()
                if item is None or item[0] <= seen:
                    await asyncio.sleep(POLL_S)
                    continue
                seen, payload = item
                yield multipart_part(payload, slot.content_type)

        return StreamingResponse(parts(), media_type=STREAM_CONTENT_TYPE)

    @app.post("/assign", response_model=S.AssignResponse)
    def assign(req: S.AssignRequest) -> S.AssignResponse:
        tau = math.inf if req.tau_cm is None else req.tau_cm
        res = assign_target(GazePointCm(req.gaze.x, req.gaze.y), [(c.x, c.y) for c in req.centroids], tau)
        dist = None if math.isinf(res.distance_cm) else res.distance_cm
        return S.AssignResponse(target=None if res.index is None else res.index + 1, distance_cm=dist)

    @app.post("/cuestats", response_model=S.CueStatsResponse)
    def cuestats(req: S.CueStatsRequest) -> S.CueStatsResponse:
        cs = cue_stats(req.hits, req.misses, req.false_plays, req.correct_rejects)
        return S.CueStatsResponse(
            n=cs.n,
            hit_rate=_ratio(cs.hit_rate),
            miss_rate=_ratio(cs.miss_rate),
            precision=_ratio(cs.precision),
            accuracy=_ratio(cs.accuracy),
        )

    @app.post("/hitrate/simulate", response_model=S.HitRateResponse)
    def hitrate(req: S.HitRateRequest) -> S.HitRateResponse:
        try:
            style = LayoutStyle.parse(req.style)
            rate = hit_rate_simulated(style, req.n, (req.sigma_x, req.sigma_y), req.trials, req.seed, req.truth, cal)
        except (ValueError, GazeError) as exc:
            raise HTTPException(422, str(exc)) from exc
        return S.HitRateResponse(style=style.value, n=req.n, hit_rate=rate, trials=req.trials)

    @app.post("/layout/parse", response_model=S.LayoutResponse)
    async def layout_parse(request: Request) -> S.LayoutResponse:
        """Body: a binary PPM screenshot matching the service calibration."""
        try:
            lmap = parse_screenshot(decode_ppm(await request.body()), cal)
        except GazeError as exc:
            raise HTTPException(422, f"{type(exc).__name__}: {exc}") from exc
        cells = [
            S.Cell(index=c.index, name=c.name, centroid_cm=S.Point(x=c.centroid_cm.x, y=c.centroid_cm.y), bbox_px=c.bbox_px)
            for c in lmap.cells
        ]
        return S.LayoutResponse(tau_cm=lmap.tau_cm, cells=cells)

    return app
