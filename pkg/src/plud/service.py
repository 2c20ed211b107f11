"""HTTP facade over a campaign: the contract the review UI consumes.

One service owns one campaign directory. Mutations (task submission,
iteration scheduling) serialize through a single lock and bump the
campaign revision; submissions carry the revision they were based on and
are rejected with 409 when stale, which makes replays harmless. Iteration
compute (retraining) runs on a background worker so request handling
never blocks on it.
"""

from __future__ import annotations

import mimetypes
import queue
import threading
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .campaign import (
    Campaign,
    CampaignComplete,
    InvalidSubmission,
    StaleRevision,
    TaskStatus,
    UnknownTask,
)


class CampaignService:
    def __init__(self, campaign: Campaign):
        self.campaign = campaign
        self.lock = threading.RLock()
        self.busy = False
        self._jobs: queue.Queue = queue.Queue()
        self._worker = threading.Thread(target=self._run_jobs, daemon=True)
        self._worker.start()

    # -- background work ------------------------------------------------------

    def _run_jobs(self) -> None:
        while True:
            job = self._jobs.get()
            if job is None:
                return
            try:
                job()
            except CampaignComplete:
                pass
            finally:
                with self.lock:
                    self.busy = False

    def _schedule(self, job) -> None:
        self.busy = True
        self._jobs.put(job)

    def shutdown(self) -> None:
        self._jobs.put(None)

    # -- views ------------------------------------------------------------------

    def status(self) -> dict:
        doc = self.campaign.status()
        doc["busy"] = self.busy
        doc["complete"] = (
            self.campaign.ingested
            and not doc["pool_size"]
            and doc["round_in_flight"] is None
        )
        return doc

    def task_payload(self, task) -> dict:
        items = self.campaign.snapshot.items if self.campaign.snapshot else {}
        members = []
        for item_id in task.members:
            record = items.get(item_id)
            has_image = record is not None and record.source_uri is not None
            members.append(
                {
                    "item_id": item_id,
                    "thumbnail": f"/api/items/{item_id}/thumbnail" if has_image else None,
                }
            )
        return {
            "task_id": task.task_id,
            "iteration": task.iteration,
            "status": task.status.value,
            "suggested_label": task.suggested,
            "members": members,
            "size": len(task.members),
        }


def create_app(campaign: Campaign, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="plud review service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    svc = CampaignService(campaign)
    app.state.service = svc

    def _err(status: int, message: str) -> JSONResponse:
        return JSONResponse({"error": message}, status_code=status)

    @app.get("/api/status")
    def get_status(request: Request):
        wanted = request.query_params.get("campaign")
        if wanted is not None and wanted != campaign.config.name:
            return _err(404, f"unknown campaign {wanted!r}")
        if not campaign.ingested:
            return _err(503, "campaign has no ingested dataset yet")
        return svc.status()

    @app.get("/api/tasks")
    def list_tasks(status: str = "PENDING", page: int = 0, page_size: int = 50):
        if page < 0 or page_size < 1:
            return _err(400, "page must be >= 0 and page_size >= 1")
        try:
            wanted = TaskStatus(status)
        except ValueError:
            return _err(400, f"unknown status {status!r}")
        with svc.lock:
            tasks = sorted(
                (t for t in campaign.tasks.values() if t.status is wanted),
                key=lambda t: t.task_id,
            )
            window = tasks[page * page_size : (page + 1) * page_size]
            return {
                "tasks": [svc.task_payload(t) for t in window],
                "total": len(tasks),
                "page": page,
                "page_size": page_size,
                "revision": campaign.revision,
            }

    @app.post("/api/tasks/{task_id}/submit")
    async def submit_task(task_id: str, request: Request):
        body = await request.json()
        label = body.get("label", "")
        misclustered = body.get("misclustered", [])
        item_labels = body.get("item_labels", {})
        revision = body.get("revision")
        if revision is None:
            return _err(422, "submission must carry the revision it was based on")
        with svc.lock:
            try:
                task = campaign.submit_task(
                    task_id,
                    label,
                    misclustered,
                    item_labels,
                    reviewer="HUMAN",
                    revision=int(revision),
                    auto_complete=False,
                )
            except UnknownTask:
                return _err(404, f"no task {task_id!r}")
            except StaleRevision as exc:
                return _err(409, str(exc))
            except InvalidSubmission as exc:
                return _err(422, str(exc))
            payload = {
                "task": svc.task_payload(task),
                "revision": campaign.revision,
                "pending": len(campaign.pending_tasks()),
            }
            if campaign.round_ready_to_complete() and not svc.busy:
                svc._schedule(campaign._complete_round)
        return payload

    @app.post("/api/iterate")
    def iterate():
        with svc.lock:
            if not campaign.ingested:
                return _err(503, "campaign has no ingested dataset yet")
            if svc.busy or campaign.round is not None:
                pending = len(campaign.pending_tasks())
                if pending:
                    return _err(409, f"{pending} review tasks pending")
                return _err(409, "an iteration is already running")
            if campaign.snapshot and not campaign.snapshot.unlabeled_pool:
                return JSONResponse(
                    {"complete": True, "iteration": len(campaign.records)},
                    status_code=200,
                )
            index = len(campaign.records)
            if campaign.model is None:
                svc._schedule(campaign.begin_bootstrap)
            else:
                svc._schedule(campaign.begin_iteration)
            return JSONResponse({"iteration": index}, status_code=202)

    @app.get("/api/items/{item_id}/thumbnail")
    def thumbnail(item_id: str):
        if any(ch in item_id for ch in ("/", "\\", "\x00")) or ".." in item_id:
            return _err(400, "malformed item id")
        items = campaign.snapshot.items if campaign.snapshot else {}
        record = items.get(item_id)
        if record is None or not record.source_uri:
            return _err(404, "no image for this item")
        path = Path(record.source_uri)
        if not path.is_absolute():
            path = campaign.directory / path
        if not path.is_file():
            return _err(404, "image file not found")
        media_type = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        return Response(content=path.read_bytes(), media_type=media_type)

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(campaign: Campaign, port: int = 8080, static_dir: str | None = None) -> None:
    import uvicorn

    app = create_app(campaign, static_dir=static_dir)
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    server.run()
