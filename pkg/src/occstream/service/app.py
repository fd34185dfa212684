"""FastAPI application exposing the core package.

Framework sessions live in process memory. Each session has its own lock so
steps on one session are serialized while different sessions proceed in
parallel. Run ``uvicorn occstream.service.app:app`` or ``occstream serve``.
"""

from __future__ import annotations

import io
import math
import threading
import uuid
from importlib import metadata

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from ..clustering import MacroCluster, cluster_distance
from ..errors import (ComparisonError, ConfigError, ContractError, InitializationError, SchemaError,
                      StateError, StreamParseError)
from ..evaluation import ConfusionMatrix, auc, g_mean, window_optimal_threshold
from ..frameworks import FrameworkConfig, make_framework
from ..harness import compare_runs, load_config, run_experiment, summarize
from ..sampling import WindowSizeQuery, min_window_size
from . import schemas

try:
    VERSION = metadata.version("artifact")
except metadata.PackageNotFoundError:
    VERSION = "unknown"

app = FastAPI(title="occstream", version=VERSION,
              description="Context-aware streaming one-class classification.")


class _Session:
    def __init__(self, framework, classifier, dimension, fw):
        self.framework, self.classifier, self.dimension, self.fw = framework, classifier, dimension, fw
        self.lock = threading.Lock()


_sessions: dict[str, _Session] = {}
_registry_lock = threading.Lock()


def _error(status, exc, key=None):
    body = schemas.ErrorBody(error=type(exc).__name__, detail=str(exc), key=key)
    return JSONResponse(status_code=status, content=body.model_dump())


@app.exception_handler(ConfigError)
async def _config_error(request: Request, exc: ConfigError):
    return _error(422, exc, exc.key)


@app.exception_handler(ContractError)
@app.exception_handler(ComparisonError)
@app.exception_handler(SchemaError)
@app.exception_handler(StreamParseError)
async def _bad_input(request: Request, exc: Exception):
    return _error(422, exc)


@app.exception_handler(InitializationError)
@app.exception_handler(StateError)
async def _conflict(request: Request, exc: Exception):
    return _error(409, exc)


def _finite(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def _session(session_id) -> _Session:
    with _registry_lock:
        s = _sessions.get(session_id)
    if s is None:
        raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
    return s


def _info(session_id, s: _Session) -> schemas.SessionInfo:
    return schemas.SessionInfo(id=session_id, framework=s.framework, classifier=s.classifier,
                               dimension=s.dimension, threshold=float(s.fw.threshold),
                               init_size=s.fw.init_size, seen=s.fw.seen, config=s.fw.config.to_dict())


@app.get("/health", response_model=schemas.Health)
def health():
    return schemas.Health(version=VERSION)


@app.post("/window-size", response_model=schemas.WindowSizeResponse)
def window_size(req: schemas.WindowSizeRequest):
    res = min_window_size(WindowSizeQuery(tuple(req.probabilities), req.tau, req.confidence))
    return schemas.WindowSizeResponse(n=res.n, lemma_satisfied=res.lemma_satisfied,
                                      p_min=res.p_min, quantile=res.quantile)


@app.post("/cluster-distance", response_model=schemas.ClusterDistanceResponse)
def distance(req: schemas.ClusterDistanceRequest):
    a = MacroCluster(0, np.array(req.a.center), req.a.radius, 1.0)
    b = MacroCluster(1, np.array(req.b.center), req.b.radius, 1.0)
    cd = cluster_distance(a, b, req.samples, req.seed, req.method)
    return schemas.ClusterDistanceResponse(raw=cd.raw, normalized=cd.normalized)


@app.post("/sessions", response_model=schemas.SessionInfo, status_code=201)
def create_session(req: schemas.SessionCreate):
    dims = {len(i.features) for i in req.initialization}
    if len(dims) != 1:
        raise ContractError("initialization instances differ in dimension")
    dimension = dims.pop()
    config = FrameworkConfig.from_mapping(req.config, classifier=req.classifier)
    fw = make_framework(req.framework, config, dimension)
    X = np.array([i.features for i in req.initialization], dtype=float)
    y = np.array([-1 if i.label is None else i.label for i in req.initialization])
    ctx = [i.context for i in req.initialization]
    contexts = None if all(c is None for c in ctx) else np.array([-1 if c is None else c for c in ctx])
    fw.initialize(X, y, contexts)
    session_id = uuid.uuid4().hex
    s = _Session(req.framework, req.classifier, dimension, fw)
    with _registry_lock:
        _sessions[session_id] = s
    return _info(session_id, s)


@app.get("/sessions/{session_id}", response_model=schemas.SessionInfo)
def get_session(session_id: str):
    s = _session(session_id)
    with s.lock:
        return _info(session_id, s)


@app.post("/sessions/{session_id}/step", response_model=schemas.StepResponse)
def step(session_id: str, req: schemas.StepRequest):
    s = _session(session_id)
    for inst in req.instances:
        if len(inst.features) != s.dimension:
            raise ContractError(f"expected {s.dimension} features, got {len(inst.features)}")
    verdicts = []
    with s.lock:
        for inst in req.instances:
            v = s.fw.step(np.array(inst.features, dtype=float), inst.context, req.train)
            verdicts.append(schemas.Verdict(label=v.label, score=v.score, context=v.context))
        seen = s.fw.seen
    return schemas.StepResponse(verdicts=verdicts, seen=seen)


def _snapshot_rows(s: _Session):
    rows = []
    for r in s.fw.snapshot_rows():
        rows.append({k: (None if v == "" else float(v) if k in ("weight", "radius") or k.startswith("center_")
                         else v) for k, v in r.items()})
    return rows


@app.get("/sessions/{session_id}/snapshot", response_model=schemas.Snapshot)
def snapshot(session_id: str):
    s = _session(session_id)
    with s.lock:
        rows = _snapshot_rows(s)
    return schemas.Snapshot(session=session_id, framework=s.framework,
                            rows=[schemas.SnapshotRow(**r) for r in rows])


@app.get("/sessions/{session_id}/snapshot.csv", response_class=PlainTextResponse)
def snapshot_csv(session_id: str):
    s = _session(session_id)
    buf = io.StringIO()
    with s.lock:
        s.fw.write_snapshot(buf)
    return PlainTextResponse(buf.getvalue(), media_type="text/csv")


@app.delete("/sessions/{session_id}", status_code=204)
def delete_session(session_id: str):
    with _registry_lock:
        if _sessions.pop(session_id, None) is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")


@app.post("/runs", response_model=schemas.RunResponse)
def run(req: schemas.RunRequest):
    config = load_config(None, {k: "none" if v is None else str(v) for k, v in req.config.items()})
    result = run_experiment(config, req.out)
    means = {f"{fw}/{clf}": v for (fw, clf), v in summarize(result).items()}
    return schemas.RunResponse(out=str(result.out), files=result.files, mean_prequential_auc=means)


@app.post("/compare", response_model=list[schemas.ComparisonRow])
def compare(req: schemas.CompareRequest):
    report = compare_runs(req.run_dirs, req.metric, req.rope, req.baseline, req.out)
    return [schemas.ComparisonRow(comparison=r.comparison, p_left=r.p_left, p_rope=r.p_rope,
                                  p_right=r.p_right, mean_difference=r.mean_difference) for r in report]


@app.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate(req: schemas.EvaluateRequest):
    if len(req.scores) != len(req.truth):
        raise ContractError("scores and truth differ in length")
    best = window_optimal_threshold(req.scores, req.truth)
    threshold = req.threshold if req.threshold is not None else (best[0] if best else None)
    gm = sens = spec = None
    if threshold is not None:
        cm = ConfusionMatrix.from_scores(req.scores, req.truth, threshold)
        gm, sens, spec = _finite(g_mean(cm)), _finite(cm.sensitivity), _finite(cm.specificity)
    return schemas.EvaluateResponse(auc=_finite(auc(req.scores, req.truth)), threshold=threshold,
                                    informedness=best[1] if best else None, g_mean=gm,
                                    sensitivity=sens, specificity=spec)

