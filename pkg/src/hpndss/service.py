"""HTTP facade over the engine and repository.

JSON in, JSON out, canonical documents throughout; stored documents are
served back verbatim so clients see exactly the canonical bytes.  Single
simulations run synchronously; analyses run as jobs on a small worker pool
and persist their report and traces into the repository.
"""

from __future__ import annotations

import itertools
import os
import threading
from concurrent.futures import ThreadPoolExecutor

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import documents
from .dss import AnalysisRequest, EXHAUSTIVE, HEURISTIC, analyze, report_doc
from .errors import (
    ConflictingId,
    HpnError,
    InvalidNet,
    LivelockDetected,
    NonConvergence,
    NotFound,
    SchemaError,
    UnknownId,
)
from .model import compose, validate
from .repository import MODELS, REPORTS, SCENARIOS, TRACES, Repository
from .simulate import simulate

DEFAULT_ADDR = "127.0.0.1:8077"


def _violations_payload(violations):
    return [
        {"code": v.code, "element": v.element, "message": v.message}
        for v in violations
    ]


def create_app(repo: Repository | str) -> FastAPI:
    repo = repo if isinstance(repo, Repository) else Repository(repo)
    app = FastAPI(title="hpndss", docs_url=None, redoc_url=None)
    app.state.repo = repo
    app.state.jobs = {}
    app.state.jobs_lock = threading.Lock()
    app.state.pool = ThreadPoolExecutor(max_workers=4)
    app.state.counter = itertools.count(1)

    @app.exception_handler(SchemaError)
    def schema_error(_, exc: SchemaError):
        return JSONResponse(
            {"error": "schema", "path": exc.path, "message": exc.message}, status_code=400
        )

    @app.exception_handler(NotFound)
    def not_found(_, exc):
        return JSONResponse({"error": "notFound", "message": str(exc)}, status_code=404)

    @app.exception_handler(UnknownId)
    def unknown_id(_, exc):
        return JSONResponse({"error": "unknownId", "message": str(exc)}, status_code=404)

    @app.exception_handler(ConflictingId)
    def conflict(_, exc):
        return JSONResponse({"error": "conflict", "message": str(exc)}, status_code=409)

    @app.exception_handler(InvalidNet)
    def invalid_net(_, exc: InvalidNet):
        return JSONResponse(
            {"error": "validation", "violations": _violations_payload(exc.violations)},
            status_code=422,
        )

    @app.exception_handler(NonConvergence)
    def non_convergence(_, exc: NonConvergence):
        payload = {"error": "nonConvergence", "message": str(exc)}
        if exc.last_two:
            payload["lastTwo"] = [
                {t: float(v) for t, v in iterate.items()} for iterate in exc.last_two
            ]
        return JSONResponse(payload, status_code=500)

    @app.exception_handler(HpnError)
    def engine_error(_, exc):
        return JSONResponse(
            {"error": type(exc).__name__, "message": str(exc)}, status_code=500
        )

    async def body_of(request: Request) -> dict:
        text = (await request.body()).decode("utf-8")
        doc = documents.loads(text)
        if not isinstance(doc, dict):
            raise SchemaError("$", "expected a JSON object")
        return doc

    # -- documents ---------------------------------------------------------

    def document_routes(kind: str, reader):
        prefix = f"/{kind}"

        @app.post(prefix, name=f"post_{kind}")
        async def post_doc(request: Request):
            doc = await body_of(request)
            value = reader(doc)  # schema check, 400 on failure
            if kind == MODELS:
                result = validate(value)
                if not result.ok:
                    return JSONResponse(
                        {
                            "error": "validation",
                            "violations": _violations_payload(result.violations),
                        },
                        status_code=422,
                    )
            entry_id = repo.put(kind, doc)
            return JSONResponse({"id": entry_id}, status_code=201)

        @app.get(prefix, name=f"list_{kind}")
        def list_docs():
            return repo.list(kind)

        @app.get(prefix + "/{entry_id}", name=f"get_{kind}")
        def get_doc(entry_id: str):
            text = repo.get_text(kind, entry_id)
            return Response(text, media_type="application/json")

        @app.delete(prefix + "/{entry_id}", name=f"delete_{kind}")
        def delete_doc(entry_id: str):
            repo.delete(kind, entry_id)
            return Response(status_code=204)

    document_routes(MODELS, documents.net_from_doc)
    document_routes(SCENARIOS, documents.scenario_from_doc)

    # -- composition ---------------------------------------------------------

    @app.post("/compose")
    async def compose_models(request: Request):
        doc = await body_of(request)
        model_ids = doc.get("models")
        if not isinstance(model_ids, list) or not model_ids:
            raise SchemaError("$.models", "expected a non-empty array of model ids")
        nets = [repo.get_net(mid) for mid in model_ids]
        fusions = []
        for i, raw in enumerate(doc.get("fusions", [])):
            if not isinstance(raw, list) or len(raw) != 4:
                raise SchemaError(f"$.fusions[{i}]", "expected [model, id, model, id]")
            fusions.append(tuple(raw))
        name = doc.get("name", "composite")
        net = compose(nets, fusions, name=name)
        result = validate(net)
        return {
            "net": documents.net_doc(net),
            "violations": _violations_payload(result.violations),
        }

    # -- simulation ------------------------------------------------------------

    def resolve_scenario(doc):
        if isinstance(doc.get("scenarioId"), str):
            scenario = repo.get_scenario(doc["scenarioId"])
        elif "scenario" in doc:
            raw = doc["scenario"]
            scenario = (
                repo.get_scenario(raw)
                if isinstance(raw, str)
                else documents.scenario_from_doc(raw, "$.scenario")
            )
        else:
            scenario = documents.scenario_from_doc(doc)
        if isinstance(doc.get("netId"), str):
            import dataclasses

            scenario = dataclasses.replace(scenario, net=None, net_ref=doc["netId"])
        if "deadline" in doc and "target" not in doc:
            scenario = scenario.with_overrides(deadline=documents._number(doc["deadline"], "$.deadline", minimum=0))
        return scenario

    @app.post("/simulate")
    async def run_simulation(request: Request):
        doc = await body_of(request)
        scenario = resolve_scenario(doc)
        trace = simulate(None, scenario, net_lookup=repo.net_lookup())
        return documents.trace_doc(trace)

    # -- analysis jobs ---------------------------------------------------------

    @app.post("/analyze")
    async def submit_analysis(request: Request):
        doc = await body_of(request)
        scenario = resolve_scenario(doc)
        mode = doc.get("mode", HEURISTIC)
        if mode not in (HEURISTIC, EXHAUSTIVE):
            raise SchemaError("$.mode", f"unknown mode {mode!r}")
        budget = doc.get("maxConfigurations", 1000)
        if not isinstance(budget, int) or budget < 1:
            raise SchemaError("$.maxConfigurations", "expected a positive integer")
        req = AnalysisRequest(scenario, mode=mode, max_configurations=budget)
        job_id = f"job-{next(app.state.counter)}"
        with app.state.jobs_lock:
            app.state.jobs[job_id] = {"id": job_id, "state": "pending"}
        app.state.pool.submit(_run_job, app, repo, job_id, req)
        return JSONResponse({"jobId": job_id}, status_code=202)

    @app.get("/jobs/{job_id}")
    def job_state(job_id: str):
        with app.state.jobs_lock:
            job = app.state.jobs.get(job_id)
            if job is None:
                raise NotFound(f"no job {job_id!r}")
            return dict(job)

    @app.get("/reports/{entry_id}")
    def get_report(entry_id: str):
        return Response(repo.get_text(REPORTS, entry_id), media_type="application/json")

    @app.get("/history")
    def history():
        return repo.history()

    @app.get("/history/compare")
    def compare(ids: str):
        wanted = [x for x in ids.split(",") if x]
        return repo.compare(wanted)

    @app.get("/traces/{entry_id}.csv")
    def get_trace(entry_id: str):
        return Response(repo.get(TRACES, entry_id), media_type="text/csv")

    return app


def _run_job(app, repo: Repository, job_id: str, request: AnalysisRequest):
    with app.state.jobs_lock:
        app.state.jobs[job_id]["state"] = "running"
    try:
        report = analyze(request, net_lookup=repo.net_lookup())
        report_id = f"{job_id}-report"
        refs = {}
        for i, attempt in enumerate(report.attempts):
            if attempt.trace is None:
                continue
            trace_id = f"{report_id}-{i}"
            repo.put(TRACES, documents.trace_csv(attempt.trace), entry_id=trace_id)
            refs[attempt.configuration.id] = trace_id
        doc = report_doc(report, trace_refs=refs)
        repo.put(REPORTS, doc, entry_id=report_id, tags=(report.scenario_name,))
        with app.state.jobs_lock:
            app.state.jobs[job_id].update(state="done", result={"reportId": report_id})
    except Exception as e:  # failure lands in the job, not the worker
        with app.state.jobs_lock:
            app.state.jobs[job_id].update(state="failed", error=f"{type(e).__name__}: {e}")


def serve(addr: str | None = None, repo_path: str | None = None):
    """Run the HTTP service (blocking)."""
    import uvicorn

    addr = addr or os.environ.get("HPNDSS_ADDR", DEFAULT_ADDR)
    repo_path = repo_path or os.environ.get("HPNDSS_REPO", "./hpndss-repo")
    host, _, port = addr.rpartition(":")
    app = create_app(Repository(repo_path))
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
