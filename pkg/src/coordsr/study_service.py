"""HTTP service hosting blinded reader-study sessions.

Serves randomized side-by-side image pairs, records 1-5 Likert responses
for sharpness and noise with served/submitted timestamps, and summarizes
results once unblinded with the sealed key file. Persistence is a single
append-only JSON-lines log (one record per line: session creations and
responses); restart replays the log and reconstructs every session cursor.
A response acknowledged with 200 has been fsynced.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

LOG_NAME = "responses.jsonl"

DEFAULT_ANCHORS = {
    "sharpness": "1 = left much sharper ... 5 = right much sharper",
    "noise": "1 = left much less noisy ... 5 = right much less noisy",
}


class SessionRequest(BaseModel):
    rater: str
    study_id: str


class ResponseRequest(BaseModel):
    pair_id: str
    sharpness: int
    noise: int


@dataclass
class Session:
    session_id: str
    rater: str
    order: list[str]
    cursor: int = 0
    created_at: int = 0
    served_at: dict = field(default_factory=dict)


def _now_ms() -> int:
    return int(time.time() * 1000)


def _order_seed(study_seed: int, rater: str, session_count: int) -> int:
    material = f"{study_seed}:{rater}:{session_count}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "little")


class StudyState:
    """In-memory view of one study, backed by the append-only log."""

    def __init__(self, study_dir, key_file=None):
        self.study_dir = Path(study_dir)
        study = json.loads((self.study_dir / "study.json").read_text())
        self.study_id = study["study_id"]
        self.seed = int(study.get("seed", 0))
        self.pairs = {p["id"]: p for p in study["pairs"]}
        self.pair_ids = [p["id"] for p in study["pairs"]]
        self.anchors = study.get("anchors", DEFAULT_ANCHORS)
        self.key = json.loads(Path(key_file).read_text()) if key_file else None
        self.log_path = self.study_dir / LOG_NAME
        self.lock = threading.Lock()
        self.sessions: dict[str, Session] = {}
        self.session_count = 0
        self.responses: list[dict] = []
        self._replay()

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["type"] == "session":
                self.sessions[rec["session_id"]] = Session(
                    rec["session_id"], rec["rater"], list(rec["order"]),
                    created_at=rec["created_at"],
                )
                self.session_count += 1
            elif rec["type"] == "response":
                self.responses.append(rec)
                sess = self.sessions.get(rec["session_id"])
                if sess is not None:
                    sess.cursor += 1

    def _append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def create_session(self, rater: str) -> Session:
        with self.lock:
            rng = np.random.default_rng(_order_seed(self.seed, rater, self.session_count))
            order = [self.pair_ids[i] for i in rng.permutation(len(self.pair_ids))]
            sess = Session(secrets.token_urlsafe(12), rater, order, created_at=_now_ms())
            self._append({
                "type": "session",
                "session_id": sess.session_id,
                "rater": rater,
                "order": order,
                "created_at": sess.created_at,
                "study_id": self.study_id,
            })
            self.sessions[sess.session_id] = sess
            self.session_count += 1
            return sess

    def current_pair(self, session_id: str):
        with self.lock:
            sess = self.sessions.get(session_id)
            if sess is None:
                raise HTTPException(status_code=404, detail="unknown session")
            if sess.cursor >= len(sess.order):
                return sess, None
            pid = sess.order[sess.cursor]
            if pid not in sess.served_at:
                sess.served_at[pid] = _now_ms()
            return sess, pid

    def record_response(self, session_id: str, pair_id: str,
                        sharpness: int, noise: int) -> int:
        with self.lock:
            sess = self.sessions.get(session_id)
            if sess is None:
                raise HTTPException(status_code=404, detail="unknown session")
            if sess.cursor >= len(sess.order) or sess.order[sess.cursor] != pair_id:
                raise HTTPException(status_code=409,
                                    detail="pair is not this session's current pair")
            record = {
                "type": "response",
                "session_id": session_id,
                "pair_id": pair_id,
                "sharpness": sharpness,
                "noise": noise,
                "served_at": sess.served_at.get(pair_id, _now_ms()),
                "submitted_at": _now_ms(),
            }
            self._append(record)  # durable before the cursor moves / 200 returns
            self.responses.append(record)
            sess.cursor += 1
            return sess.cursor

    def summary(self) -> dict:
        if self.key is None:
            raise HTTPException(status_code=409,
                                detail="summary requires the sealed key file")
        counts = {"sharpness": {str(i): 0 for i in range(1, 6)},
                  "noise": {str(i): 0 for i in range(1, 6)}}
        review_ms = []
        with self.lock:
            responses = list(self.responses)
        for rec in responses:
            assignment = self.key["pairs"].get(rec["pair_id"])
            if assignment is None:
                continue
            a_on_left = assignment["left"] == "a"
            for crit in ("sharpness", "noise"):
                score = rec[crit]
                oriented = score if a_on_left else 6 - score
                counts[crit][str(oriented)] += 1
            review_ms.append(rec["submitted_at"] - rec["served_at"])
        return {
            "study_id": self.study_id,
            "n_responses": len(responses),
            "criteria": counts,
            "orientation": "1 = strongly prefer method A, 3 = equivalent, "
                           "5 = strongly prefer method B",
            "methods": self.key.get("methods", {}),
            "mean_review_ms": float(np.mean(review_ms)) if review_ms else 0.0,
        }


def create_app(study_dir, key_file=None, ui_dir=None) -> FastAPI:
    state = StudyState(study_dir, key_file)
    app = FastAPI(title="reader study service")
    app.state.study = state

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    @app.post("/api/sessions", status_code=201)
    def create_session(body: SessionRequest):
        if body.study_id != state.study_id:
            raise HTTPException(status_code=404, detail="unknown study")
        sess = state.create_session(body.rater)
        return {"session_id": sess.session_id, "n_pairs": len(sess.order)}

    @app.get("/api/sessions/{session_id}/next")
    def next_pair(session_id: str):
        sess, pid = state.current_pair(session_id)
        if pid is None:
            return Response(status_code=204)
        pair = state.pairs[pid]
        return {
            "pair_id": pid,
            "left_url": pair["left_url"],
            "right_url": pair["right_url"],
            "index": sess.cursor,
            "total": len(sess.order),
            "anchors": state.anchors,
        }

    @app.post("/api/sessions/{session_id}/responses")
    def submit_response(session_id: str, body: ResponseRequest):
        for crit, score in (("sharpness", body.sharpness), ("noise", body.noise)):
            if not 1 <= score <= 5:
                raise HTTPException(status_code=400,
                                    detail=f"{crit} score must be in 1..5, got {score}")
        next_index = state.record_response(session_id, body.pair_id,
                                           body.sharpness, body.noise)
        return {"accepted": True, "next_index": next_index}

    @app.get("/api/studies/{study_id}/summary")
    def summary(study_id: str):
        if study_id != state.study_id:
            raise HTTPException(status_code=404, detail="unknown study")
        return state.summary()

    pairs_dir = Path(study_dir) / "pairs"
    if pairs_dir.exists():
        app.mount("/pairs", StaticFiles(directory=pairs_dir), name="pairs")
    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app


def serve(study_dir, key_file=None, ui_dir=None, host: str = "127.0.0.1",
          port: int = 8000) -> None:
    import uvicorn

    app = create_app(study_dir, key_file, ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve a reader study over HTTP.")
    parser.add_argument("--study-dir", required=True)
    parser.add_argument("--key-file")
    parser.add_argument("--ui-dir")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    serve(args.study_dir, args.key_file, args.ui_dir, args.host, args.port)
    return 0


if __name__ == "__main__":
    main()
