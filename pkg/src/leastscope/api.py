"""HTTP surface over the gateway.

Agents authenticate with X-Session-Token and use the plan, call, and
session endpoints. Approval surfaces (terminal prompt, web console)
authenticate with X-Operator-Token and use the request list, the event
stream, and the decision endpoint; exactly one resolver wins a race.
All bodies are JSON with a schema_version field; tool-level failures come
back as 200 responses with ok=false so the agent can react, while
authentication failures are 401.
"""

from __future__ import annotations

import argparse
import hmac
import json
import os
import queue
import secrets
from pathlib import Path

from fastapi import Body, Depends, FastAPI, Header, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .errors import (
    AuthenticationError,
    ConflictError,
    ConfigurationError,
    InstanceValidationError,
    LeastScopeError,
    NotFoundError,
    PlanValidationError,
    ScopeMapParseError,
    ScopeMapValidationError,
    SessionError,
    UnknownMethodError,
)
from .fixtures import fixture_scope_map
from .gateway import Gateway, ToolCall, ToolCallEnvelope
from .grants import GrantStore, Verdict
from .scopes import compute_stats, load_scope_map

SCHEMA_VERSION = 1

_STATUS_BY_CODE = {
    AuthenticationError.code: 401,
    SessionError.code: 401,
    NotFoundError.code: 404,
    ConflictError.code: 409,
    PlanValidationError.code: 422,
    UnknownMethodError.code: 422,
    InstanceValidationError.code: 422,
    ScopeMapParseError.code: 400,
    ScopeMapValidationError.code: 400,
    ConfigurationError.code: 400,
}


def _error_response(exc: LeastScopeError) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_CODE.get(exc.code, 500),
        content={"schema_version": SCHEMA_VERSION, **exc.to_dict()},
    )


def _ok(payload: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **payload}


def create_app(gateway: Gateway, operator_token: str) -> FastAPI:
    app = FastAPI(title="leastscope gateway", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(LeastScopeError)
    async def handle_domain_error(_request, exc: LeastScopeError):
        return _error_response(exc)

    def require_operator(
        x_operator_token: str | None = Header(default=None),
    ) -> None:
        if x_operator_token is None or not hmac.compare_digest(
            x_operator_token, operator_token
        ):
            raise AuthenticationError("invalid operator token")

    def session_token(x_session_token: str | None = Header(default=None)) -> str:
        if not x_session_token:
            raise AuthenticationError("missing X-Session-Token header")
        return x_session_token

    # ------------------------------------------------------------------
    # agent surface

    @app.get("/v1/health")
    def health() -> dict:
        return _ok({"ok": True, "apps": list(gateway.app_ids())})

    @app.post("/v1/session")
    def open_session(body: dict = Body(default={})) -> dict:
        opened = gateway.open_session(body.get("user", "default"))
        return _ok(opened)

    @app.delete("/v1/session")
    def close_session(token: str = Depends(session_token)) -> dict:
        session = gateway.store.session_for_token(token)
        gateway.close_session(session.session_id)
        return _ok({"closed": session.session_id})

    @app.post("/v1/plan")
    def submit_plan(body: dict = Body(...), token: str = Depends(session_token)) -> dict:
        calls = [
            ToolCall(
                app_id=c["app"],
                method=c["method"],
                payload=c.get("payload"),
                depends_on=tuple(c.get("depends_on", ())),
            )
            for c in body.get("calls", [])
        ]
        response = gateway.submit_plan(
            token, calls, prompt=body.get("prompt", ""), plan_id=body.get("plan_id")
        )
        return _ok(response)

    @app.get("/v1/plan/{plan_id}")
    def plan_view(plan_id: str, token: str = Depends(session_token)) -> dict:
        session = gateway.store.session_for_token(token)
        view = gateway.plan_view(plan_id)
        if view["session_id"] != session.session_id:
            raise NotFoundError(f"unknown plan {plan_id!r}")
        return _ok(view)

    @app.post("/v1/call")
    def tool_call(body: dict = Body(...), token: str = Depends(session_token)) -> dict:
        envelope = ToolCallEnvelope(
            token=token,
            app_id=body.get("app", ""),
            method=body.get("method", ""),
            plan_id=body.get("plan_id", ""),
            payload=body.get("payload"),
        )
        return _ok({"response": gateway.intercept(envelope)})

    # ------------------------------------------------------------------
    # operator surface

    @app.get("/v1/requests")
    def pending_requests(_: None = Depends(require_operator)) -> dict:
        return _ok({"requests": gateway.pending_requests()})

    @app.get("/v1/requests/stream")
    def request_stream(_: None = Depends(require_operator)) -> StreamingResponse:
        q = gateway.subscribe()

        def gen():
            snapshot = {"event": "snapshot", "requests": gateway.pending_requests()}
            yield f"event: snapshot\ndata: {json.dumps(snapshot, sort_keys=True)}\n\n"
            try:
                while True:
                    try:
                        event = q.get(timeout=15.0)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield (
                        f"event: {event['event']}\n"
                        f"data: {json.dumps(event, sort_keys=True)}\n\n"
                    )
            finally:
                gateway.unsubscribe(q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get("/v1/request/{request_id}")
    def request_view(request_id: str, _: None = Depends(require_operator)) -> dict:
        return _ok({"request": gateway.request_view(request_id)})

    @app.post("/v1/request/{request_id}")
    def resolve_request(
        request_id: str,
        body: dict = Body(...),
        _: None = Depends(require_operator),
    ) -> dict:
        try:
            verdict = Verdict(body.get("verdict", ""))
        except ValueError:
            raise ConfigurationError(
                f"verdict must be one of {[v.value for v in Verdict]}"
            ) from None
        return _ok(gateway.resolve_request(request_id, verdict))

    @app.get("/v1/grants")
    def grants(_: None = Depends(require_operator)) -> dict:
        return _ok({"grants": gateway.grants_listing()})

    @app.post("/v1/grants/revoke")
    def revoke(body: dict = Body(...), _: None = Depends(require_operator)) -> dict:
        gateway.revoke(
            body.get("user", "default"),
            body["app"],
            body["node"],
            now=bool(body.get("now", False)),
        )
        return _ok({"revoked": body["node"], "app": body["app"]})

    @app.get("/v1/trace")
    def trace(_: None = Depends(require_operator)) -> dict:
        return _ok({"trace": gateway.export_trace()})

    @app.get("/v1/log")
    def log(
        _: None = Depends(require_operator),
        after_seq: int = Query(default=0),
    ) -> dict:
        records = [r for r in gateway.store.log_records() if r["seq"] > after_seq]
        return _ok({"records": records})

    @app.get("/v1/apps")
    def apps(_: None = Depends(require_operator)) -> dict:
        out = {}
        for app_id in gateway.app_ids():
            forest = gateway.forest(app_id)
            out[app_id] = {
                "stats": compute_stats(forest).to_dict(),
                "nodes": forest.to_dict()["nodes"],
            }
        return _ok({"apps": out})

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="leastscope-gateway", description="Serve the authorization gateway over HTTP."
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8787)
    parser.add_argument(
        "--apps",
        default="calendar,mail",
        help="comma-separated bundled app fixtures to serve",
    )
    parser.add_argument(
        "--scope-map",
        action="append",
        default=[],
        help="additional scope-map files to serve (repeatable)",
    )
    parser.add_argument(
        "--store",
        default=None,
        help="grant store directory (default: $LEASTSCOPE_HOME/store)",
    )
    parser.add_argument("--memory", action="store_true", help="keep grant state in memory only")
    parser.add_argument(
        "--operator-token",
        default=None,
        help="operator token (default: $LEASTSCOPE_OPERATOR_TOKEN or generated)",
    )
    parser.add_argument("--request-timeout", type=float, default=600.0)
    args = parser.parse_args(argv)

    import uvicorn

    from .cli import leastscope_home

    scope_maps = [fixture_scope_map(a) for a in args.apps.split(",") if a]
    scope_maps.extend(load_scope_map(p) for p in args.scope_map)
    if args.memory:
        store = GrantStore(None)
    else:
        store = GrantStore(Path(args.store) if args.store else leastscope_home() / "store")
    gateway = Gateway(store, scope_maps, request_timeout=args.request_timeout)

    operator_token = (
        args.operator_token
        or os.environ.get("LEASTSCOPE_OPERATOR_TOKEN")
        or secrets.token_urlsafe(16)
    )
    if not args.operator_token and "LEASTSCOPE_OPERATOR_TOKEN" not in os.environ:
        print(f"operator token: {operator_token}", flush=True)

    app = create_app(gateway, operator_token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
