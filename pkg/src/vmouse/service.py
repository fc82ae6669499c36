"""Local HTTP service: session control, live streaming, and optimization.

State is kept in memory and mirrored to a state directory as JSONL logs
plus optimizer checkpoints, so a restarted service reconstructs every
session exactly.  All payloads are JSON with a ``v`` protocol field; see
PROTOCOL.md for the schemas.
"""
from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from . import analysis
from .analysis import TaskConfig, Trial
from .optimizer import (
    GPState,
    P_GRID,
    SEED_POSITIONS,
    ei_acquire,
    gp_posterior,
    gp_update,
    load_checkpoint,
    posterior_argmin,
    save_checkpoint,
)

PROTOCOL_V = 1


class StartSessionBody(BaseModel):
    d_px: float = Field(gt=0)
    w_px: float = Field(gt=0)
    p_percent: int = Field(default=50, ge=0, le=100)
    cpi: float = Field(default=800.0, gt=0, le=12000)
    source: str = "cursor-only"


class TrialBody(BaseModel):
    prev_target: tuple[float, float]
    target: tuple[float, float]
    click: tuple[float, float]
    path: list[tuple[float, float, float]] = Field(min_length=2)  # t_ms, x, y
    success: bool | None = None


class StepBody(BaseModel):
    pdr: float | None = None
    p_percent: int | None = Field(default=None, ge=20, le=80)
    source: str = "ei"


@dataclass
class SessionState:
    id: str
    task: TaskConfig
    p_percent: int
    cpi: float
    source: str
    trials: list[Trial] = field(default_factory=list)
    gp: GPState = field(default_factory=GPState)
    obs_sources: list[str] = field(default_factory=list)
    opt_cursor: int = 0                  # trials consumed by the optimizer
    suggestion: int | None = None
    seeds_used: int = 0


def _trial_from_body(body: TrialBody) -> Trial:
    path = np.asarray(body.path, dtype=float)
    path[:, 0] /= 1000.0
    mt = float(path[-1, 0] - path[0, 0])
    if mt <= 0:
        raise HTTPException(400, detail="path timestamps must increase")
    return Trial(
        prev_target=tuple(body.prev_target),
        target=tuple(body.target),
        click=tuple(body.click),
        path=path,
        mt=mt,
        success=bool(body.success) if body.success is not None else True,
    )


def _summary_payload(st: SessionState) -> dict:
    kept, removed = analysis.screen_outliers(st.trials, st.task)
    summary = analysis.summarize_session(kept, st.task)
    return {
        "v": PROTOCOL_V,
        "session_id": st.id,
        "n_submitted": len(st.trials),
        "n_removed": len(removed),
        "removed_reasons": [reason for _, reason in removed],
        "summary": {k: getattr(summary, k) for k in analysis.SESSION_CSV_COLUMNS},
    }


class Hub:
    """Per-session fan-out of push messages to websocket subscribers."""

    def __init__(self) -> None:
        self.subscribers: dict[str, list[WebSocket]] = {}

    async def join(self, session_id: str, ws: WebSocket) -> None:
        await ws.accept()
        self.subscribers.setdefault(session_id, []).append(ws)

    def leave(self, session_id: str, ws: WebSocket) -> None:
        subs = self.subscribers.get(session_id, [])
        if ws in subs:
            subs.remove(ws)

    async def push(self, session_id: str, message: dict) -> None:
        message = {"v": PROTOCOL_V, **message}
        for ws in list(self.subscribers.get(session_id, [])):
            try:
                await ws.send_json(message)
            except Exception:
                self.leave(session_id, ws)


def create_app(state_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="vmouse service")
    sessions: dict[str, SessionState] = {}
    hub = Hub()
    root = Path(state_dir) if state_dir is not None else None
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        _restore(root, sessions)

    def get(session_id: str) -> SessionState:
        st = sessions.get(session_id)
        if st is None:
            raise HTTPException(404, detail=f"unknown session id {session_id}")
        return st

    def persist_line(st: SessionState, obj: dict) -> None:
        if root is None:
            return
        with (root / f"{st.id}.jsonl").open("a", encoding="utf-8") as f:
            f.write(json.dumps(obj, separators=(",", ":")) + "\n")

    def persist_opt(st: SessionState) -> None:
        if root is None:
            return
        save_checkpoint(st.gp, root / f"{st.id}.ckpt")
        meta = {
            "opt_cursor": st.opt_cursor,
            "suggestion": st.suggestion,
            "seeds_used": st.seeds_used,
            "p_percent": st.p_percent,
            "obs_sources": st.obs_sources,
        }
        (root / f"{st.id}.meta.json").write_text(json.dumps(meta), encoding="utf-8")

    @app.post("/session/start")
    async def start_session(body: StartSessionBody):
        task = TaskConfig(d_px=body.d_px, w_px=body.w_px)
        st = SessionState(
            id=uuid.uuid4().hex[:12],
            task=task,
            p_percent=body.p_percent,
            cpi=body.cpi,
            source=body.source,
        )
        sessions[st.id] = st
        persist_line(st, {
            "kind": "config",
            "d_px": task.d_px, "w_px": task.w_px,
            "p_percent": st.p_percent, "cpi": st.cpi, "source": st.source,
        })
        centers = analysis.task_geometry(task)
        return {
            "v": PROTOCOL_V,
            "session_id": st.id,
            "p_percent": st.p_percent,
            "targets": centers.tolist(),
            "order": analysis.target_order(task),
        }

    @app.post("/session/{session_id}/trial")
    async def submit_trial(session_id: str, body: TrialBody):
        st = get(session_id)
        trial = _trial_from_body(body)
        st.trials.append(trial)
        persist_line(st, {
            "kind": "trial",
            "prev_target": list(body.prev_target),
            "target": list(body.target),
            "click": list(body.click),
            "path": [list(p) for p in body.path],
            "success": trial.success,
        })
        await hub.push(session_id, {"type": "trial", "n_trials": len(st.trials)})
        return {"v": PROTOCOL_V, "accepted": True, "n_trials": len(st.trials)}

    @app.post("/session/{session_id}/cursor")
    async def push_cursor(session_id: str, body: dict):
        st = get(session_id)
        await hub.push(session_id, {
            "type": "cursor",
            "p_percent": st.p_percent,
            "samples": body.get("samples", []),
        })
        return {"v": PROTOCOL_V, "accepted": True}

    @app.get("/session/{session_id}/summary")
    async def session_summary(session_id: str):
        st = get(session_id)
        try:
            return _summary_payload(st)
        except analysis.AnalysisError as exc:
            raise HTTPException(400, detail=str(exc))

    @app.post("/optimizer/{session_id}/step")
    async def optimizer_step(session_id: str, body: StepBody | None = None):
        st = get(session_id)
        body = body or StepBody()
        observed = None
        if body.pdr is not None:
            p_obs = body.p_percent if body.p_percent is not None else (
                st.suggestion if st.suggestion is not None else st.p_percent)
            st.gp = gp_update(st.gp, (p_obs, body.pdr))
            st.obs_sources.append(body.source)
            observed = (p_obs, body.pdr)
        else:
            new = st.trials[st.opt_cursor:]
            if new:
                pdrs = [analysis.path_deviation(t)[2] for t in new]
                p_obs = st.suggestion if st.suggestion is not None else st.p_percent
                pdr = float(np.mean(pdrs))
                st.gp = gp_update(st.gp, (p_obs, pdr))
                st.obs_sources.append("session")
                st.opt_cursor = len(st.trials)
                observed = (p_obs, pdr)
        if st.gp.n == 0 or st.seeds_used < len(SEED_POSITIONS):
            nxt = SEED_POSITIONS[min(st.seeds_used, len(SEED_POSITIONS) - 1)]
            st.seeds_used += 1
        else:
            nxt = ei_acquire(st.gp)
        st.suggestion = int(nxt)
        st.p_percent = int(nxt)
        persist_opt(st)
        await hub.push(session_id, {"type": "p_changed", "p_percent": st.p_percent})
        out = {
            "v": PROTOCOL_V,
            "next_p": st.p_percent,
            "n_obs": st.gp.n,
        }
        if observed is not None:
            out["observed"] = {"p_percent": observed[0], "pdr": observed[1]}
        if st.gp.n > 0:
            out["posterior_argmin"] = posterior_argmin(st.gp)
        return out

    @app.get("/optimizer/{session_id}/state")
    async def optimizer_state(session_id: str):
        st = get(session_id)
        grid = list(P_GRID)
        mu, sd = gp_posterior(st.gp, grid)
        out = {
            "v": PROTOCOL_V,
            "observations": [
                {"p_percent": x, "pdr": y, "source": s}
                for x, y, s in zip(st.gp.xs, st.gp.ys,
                                   st.obs_sources + ["?"] * st.gp.n)
            ],
            "posterior": {"grid": grid, "mean": mu.tolist(), "sd": sd.tolist()},
            "suggestion": st.suggestion,
            "p_percent": st.p_percent,
        }
        if st.gp.n:
            out["incumbent"] = st.gp.incumbent
            out["posterior_argmin"] = posterior_argmin(st.gp)
        return out

    @app.websocket("/session/{session_id}/stream")
    async def stream(ws: WebSocket, session_id: str):
        if session_id not in sessions:
            await ws.close(code=4004)
            return
        await hub.join(session_id, ws)
        try:
            while True:
                msg = await ws.receive_json()
                await hub.push(session_id, {"type": "relay", **msg})
        except WebSocketDisconnect:
            hub.leave(session_id, ws)

    return app


def _restore(root: Path, sessions: dict[str, SessionState]) -> None:
    for log in sorted(root.glob("*.jsonl")):
        sid = log.stem
        st: SessionState | None = None
        for line in log.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["kind"] == "config":
                st = SessionState(
                    id=sid,
                    task=TaskConfig(d_px=obj["d_px"], w_px=obj["w_px"]),
                    p_percent=obj["p_percent"],
                    cpi=obj["cpi"],
                    source=obj["source"],
                )
            elif obj["kind"] == "trial" and st is not None:
                path = np.asarray(obj["path"], dtype=float)
                path[:, 0] /= 1000.0
                st.trials.append(Trial(
                    prev_target=tuple(obj["prev_target"]),
                    target=tuple(obj["target"]),
                    click=tuple(obj["click"]),
                    path=path,
                    mt=float(path[-1, 0] - path[0, 0]),
                    success=obj.get("success", True),
                ))
        if st is None:
            continue
        ckpt = root / f"{sid}.ckpt"
        if ckpt.exists():
            st.gp = load_checkpoint(ckpt)
        meta_file = root / f"{sid}.meta.json"
        if meta_file.exists():
            meta = json.loads(meta_file.read_text(encoding="utf-8"))
            st.opt_cursor = meta.get("opt_cursor", 0)
            st.suggestion = meta.get("suggestion")
            st.seeds_used = meta.get("seeds_used", 0)
            st.p_percent = meta.get("p_percent", st.p_percent)
            st.obs_sources = meta.get("obs_sources", [])
        sessions[sid] = st
