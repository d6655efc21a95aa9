"""HTTP control plane over a pentest session.

The console UI and the CLI client verbs both speak exactly this
surface; nothing here reaches into the simulator past the session.
"""

from __future__ import annotations

import asyncio
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..errors import SimError, SnapshotWhileBusy
from ..scenario.model import OsDescriptor
from .session import PentestSession


class DiscoverBody(BaseModel):
    cidr: str
    port: int = 80
    via: list[str] = Field(default_factory=list)


class RemoteExploitBody(BaseModel):
    exploit_id: str
    addr: str
    port: int
    assumed_os: dict[str, str] = Field(default_factory=dict)
    via: list[str] = Field(default_factory=list)


class LocalExploitBody(BaseModel):
    exploit_id: str
    agent_id: str


def _http_error(exc: SimError) -> HTTPException:
    return HTTPException(status_code=400,
                         detail={"error": exc.code, "detail": str(exc)})


def create_app(session: PentestSession,
               frontend_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="insight control api")
    app.state.session = session

    def check_not_paused():
        if session.paused:
            raise HTTPException(status_code=409,
                                detail={"error": "PAUSED",
                                        "detail": "session is paused"})

    @app.get("/scenario")
    def scenario() -> dict:
        return session.topology()

    @app.get("/agents")
    def agents() -> dict:
        return {"agents": session.agents_view()}

    @app.post("/actions/discover")
    def discover(body: DiscoverBody) -> dict:
        check_not_paused()
        try:
            hosts = session.discover_network(body.cidr, body.port,
                                             via=body.via or None)
        except SimError as e:
            raise _http_error(e)
        except ValueError as e:
            raise HTTPException(status_code=400,
                                detail={"error": "EINVAL", "detail": str(e)})
        return {"hosts": [h.as_dict() for h in hosts]}

    @app.post("/actions/exploit-remote")
    def exploit_remote(body: RemoteExploitBody) -> dict:
        check_not_paused()
        assumed = OsDescriptor(**body.assumed_os) if body.assumed_os else None
        try:
            result = session.run_remote_exploit(
                body.exploit_id, (body.addr, body.port),
                assumed_os=assumed, via=body.via or None)
        except SimError as e:
            raise _http_error(e)
        return result.as_dict()

    @app.post("/actions/exploit-local")
    def exploit_local(body: LocalExploitBody) -> dict:
        check_not_paused()
        try:
            result = session.run_local_exploit(body.agent_id,
                                               body.exploit_id)
        except SimError as e:
            raise _http_error(e)
        return result.as_dict()

    @app.get("/events/stream")
    async def events_stream(after: int = -1, follow: bool = False,
                            poll: float = 0.2) -> StreamingResponse:
        """Ordered JSONL push of event records with seq > after. With
        follow=true the response stays open and tails new events."""

        async def gen():
            last = after
            while True:
                for rec in session.events.records:
                    if rec.seq > last:
                        last = rec.seq
                        yield rec.to_json() + "\n"
                if not follow:
                    return
                await asyncio.sleep(poll)

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    @app.post("/control/pause")
    def pause() -> dict:
        session.paused = True
        return {"paused": True}

    @app.post("/control/resume")
    def resume() -> dict:
        session.paused = False
        return {"paused": False}

    @app.post("/control/snapshot")
    def snapshot() -> dict:
        try:
            return session.snapshot()
        except SnapshotWhileBusy as e:
            raise HTTPException(status_code=409,
                                detail={"error": e.code, "detail": str(e)})

    if frontend_dir and Path(frontend_dir).is_dir():
        # mounted last so the API routes above keep precedence
        app.mount("/", StaticFiles(directory=frontend_dir, html=True),
                  name="console")

    return app
