"""The authorization gateway between agent and tool services.

Agents submit execution plans; the gateway solves for the minimal set of
additional hierarchy nodes, surfaces a permission request when the delta
is non-empty, and intercepts every tool call afterward. A call is
forwarded only when its session token is valid, its plan is authorized,
and its method falls under the session's granted nodes; credentials are
attached at forwarding time and never cross the agent channel. Everything
the user decides lands in the grant store's decision log, and every
forwarded call lands in the interaction trace.
"""

from __future__ import annotations

import queue
import secrets
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    AuthenticationError,
    ConflictError,
    NotFoundError,
    PlanValidationError,
    UnknownMethodError,
)
from .grants import GrantStore, Verdict
from .scopes import PermissionForest, ScopeMap, build_forest
from .services import AUTH_HEADER, STAMP_HEADER, MockService
from .solver import solve_plan

DEFAULT_REQUEST_TIMEOUT = 600.0

TRACE_VERSION = 1


class PlanStatus(Enum):
    PENDING_APPROVAL = "PENDING_APPROVAL"
    AUTHORIZED = "AUTHORIZED"
    DENIED = "DENIED"
    EXPIRED = "EXPIRED"


class RequestStatus(Enum):
    PENDING = "PENDING"
    DECIDED = "DECIDED"
    EXPIRED = "EXPIRED"


@dataclass(frozen=True)
class ToolCall:
    """One planned call; ``depends_on`` may only reference earlier indices."""

    app_id: str
    method: str
    payload: dict | None = None
    depends_on: tuple[int, ...] = ()


@dataclass
class ExecutionPlan:
    plan_id: str
    session_id: str
    calls: tuple[ToolCall, ...]
    status: PlanStatus
    created_at: float
    executed: set[int] = field(default_factory=set)
    completed: bool = False


@dataclass
class PermissionRequest:
    """A pending prompt: per-app node deltas plus their descriptions."""

    request_id: str
    session_id: str
    plan_id: str
    user: str
    prompt: str
    delta: dict[str, frozenset[str]]
    descriptions: dict[str, dict[str, str]]
    created_at: float
    expires_at: float
    status: RequestStatus = RequestStatus.PENDING
    verdict: Verdict | None = None


@dataclass(frozen=True)
class ToolCallEnvelope:
    token: str
    app_id: str
    method: str
    plan_id: str
    payload: dict | None = None


@dataclass
class TraceStep:
    """One interaction step: prompt, optional decision, forwarded calls."""

    prompt: str
    decision: dict | None = None
    executed_calls: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "decision": self.decision,
            "executed_calls": [dict(c) for c in self.executed_calls],
        }


@dataclass
class InteractionTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def new_step(self, prompt: str) -> TraceStep:
        step = TraceStep(prompt=prompt)
        self.steps.append(step)
        return step

    def to_dict(self) -> dict:
        return {"trace_version": TRACE_VERSION, "steps": [s.to_dict() for s in self.steps]}


class Gateway:
    """In-process gateway over a grant store and a set of app services."""

    def __init__(
        self,
        store: GrantStore,
        scope_maps: list[ScopeMap] | dict[str, ScopeMap],
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        now=time.time,
    ) -> None:
        if isinstance(scope_maps, dict):
            scope_maps = list(scope_maps.values())
        self._store = store
        self._now = now
        self._timeout = request_timeout
        self._lock = threading.RLock()
        self._stamp = secrets.token_hex(16)
        self._apps: dict[str, tuple[ScopeMap, PermissionForest]] = {}
        self._services: dict[str, MockService] = {}
        for sm in scope_maps:
            forest = build_forest(sm)
            self._apps[sm.app_id] = (sm, forest)
            credential = store.set_credential(sm.app_id)
            self._services[sm.app_id] = MockService(
                app_id=sm.app_id, credential=credential, stamp=self._stamp
            )
        self._plans: dict[str, ExecutionPlan] = {}
        self._requests: dict[str, PermissionRequest] = {}
        self._plan_steps: dict[str, TraceStep] = {}
        self._plan_counter = 0
        self._request_counter = 0
        self.trace = InteractionTrace()
        self._coverage_cache: dict[tuple[str, str], tuple[int, frozenset[str]]] = {}
        self._listeners: list[queue.SimpleQueue] = []
        self.metrics: dict[str, list[int]] = {"intercept_validation_ns": [], "solve_ns": []}

    # ------------------------------------------------------------------
    # configuration access

    @property
    def store(self) -> GrantStore:
        return self._store

    def forest(self, app_id: str) -> PermissionForest:
        return self._require_app(app_id)[1]

    def scope_map(self, app_id: str) -> ScopeMap:
        return self._require_app(app_id)[0]

    def service(self, app_id: str) -> MockService:
        return self._services[app_id]

    def app_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._apps))

    def _require_app(self, app_id: str) -> tuple[ScopeMap, PermissionForest]:
        pair = self._apps.get(app_id)
        if pair is None:
            raise NotFoundError(f"unknown app {app_id!r}")
        return pair

    # ------------------------------------------------------------------
    # sessions

    def open_session(self, user: str = "default") -> dict:
        session = self._store.open_session(user)
        return {"session_id": session.session_id, "token": session.token}

    def close_session(self, session_id: str) -> None:
        self._store.close_session(session_id)

    # ------------------------------------------------------------------
    # plan intake

    def submit_plan(
        self,
        token: str,
        calls: list[ToolCall] | tuple[ToolCall, ...],
        prompt: str = "",
        plan_id: str | None = None,
    ) -> dict:
        """Validate a plan, solve the per-app delta, and either authorize
        it or surface a permission request."""
        session = self._store.session_for_token(token)
        calls = tuple(calls)
        self._validate_calls(calls)
        with self._lock:
            if plan_id is None:
                self._plan_counter += 1
                plan_id = f"plan-{self._plan_counter:04d}"
            elif plan_id in self._plans:
                raise ConflictError(f"plan id {plan_id!r} already used")

            step = self.trace.new_step(prompt)
            self._plan_steps[plan_id] = step

            deltas: dict[str, frozenset[str]] = {}
            for app_id in sorted({c.app_id for c in calls}):
                forest = self._require_app(app_id)[1]
                methods = [c.method for c in calls if c.app_id == app_id]
                granted = self._store.effective_nodes(session.session_id, app_id)
                t0 = time.perf_counter_ns()
                solution = solve_plan(forest, methods, granted)
                self.metrics["solve_ns"].append(time.perf_counter_ns() - t0)
                if solution.delta:
                    deltas[app_id] = solution.delta

            plan = ExecutionPlan(
                plan_id=plan_id,
                session_id=session.session_id,
                calls=calls,
                status=PlanStatus.AUTHORIZED,
                created_at=self._now(),
            )
            self._plans[plan_id] = plan

            if not deltas:
                self._record_plan_uses(plan)
                return {"status": PlanStatus.AUTHORIZED.value, "plan_id": plan_id}

            plan.status = PlanStatus.PENDING_APPROVAL
            self._request_counter += 1
            request = PermissionRequest(
                request_id=f"req-{self._request_counter:04d}",
                session_id=session.session_id,
                plan_id=plan_id,
                user=session.user,
                prompt=prompt,
                delta=deltas,
                descriptions={
                    app_id: {nid: self._describe(app_id, nid) for nid in nodes}
                    for app_id, nodes in deltas.items()
                },
                created_at=self._now(),
                expires_at=self._now() + self._timeout,
            )
            self._requests[request.request_id] = request
            self._notify({"event": "request", "request": self.request_view(request.request_id)})
            return {
                "status": "NEEDS_APPROVAL",
                "plan_id": plan_id,
                "request_id": request.request_id,
                "delta": self._delta_view(request),
            }

    def _validate_calls(self, calls: tuple[ToolCall, ...]) -> None:
        for i, call in enumerate(calls):
            if call.app_id not in self._apps:
                raise PlanValidationError(f"unknown app {call.app_id!r}", call_index=i)
            for dep in call.depends_on:
                if not 0 <= dep < i:
                    raise PlanValidationError(
                        f"call {i} depends on {dep}, which is not an earlier call",
                        call_index=i,
                    )
            forest = self._apps[call.app_id][1]
            try:
                forest.scopes_for_method(call.method)
            except UnknownMethodError:
                raise UnknownMethodError(call.app_id, call.method, call_index=i) from None

    def _describe(self, app_id: str, node_id: str) -> str:
        scope_map, forest = self._apps[app_id]
        node = forest.node(node_id)
        return "; ".join(scope_map.entry(name).description for name in sorted(node.member_scopes))

    def _record_plan_uses(self, plan: ExecutionPlan) -> None:
        """Record which ONCE grants this authorization depends on: nodes
        covering a requirement set that no durable grant covers."""
        uses: dict[str, frozenset[str]] = {}
        for app_id in sorted({c.app_id for c in plan.calls}):
            forest = self._apps[app_id][1]
            durable = self._store.durable_nodes(plan.session_id, app_id)
            effective = self._store.effective_nodes(plan.session_id, app_id)
            once_nodes = effective - durable
            durable_methods = forest.methods_under(durable)
            depended: set[str] = set()
            for call in plan.calls:
                if call.app_id != app_id or call.method in durable_methods:
                    continue
                holders = forest.scopes_for_method(call.method)
                depended |= {
                    nid for nid in once_nodes if forest.descendants[nid] & holders
                }
            if depended:
                uses[app_id] = frozenset(depended)
        self._store.record_plan_grant_use(plan.session_id, plan.plan_id, uses)

    # ------------------------------------------------------------------
    # permission requests

    def pending_requests(self) -> list[dict]:
        with self._lock:
            self._expire_requests()
            return [
                self.request_view(r.request_id)
                for r in sorted(self._requests.values(), key=lambda r: r.request_id)
                if r.status is RequestStatus.PENDING
            ]

    def request_view(self, request_id: str) -> dict:
        with self._lock:
            request = self._requests.get(request_id)
            if request is None:
                raise NotFoundError(f"unknown request {request_id!r}")
            return {
                "request_id": request.request_id,
                "session_id": request.session_id,
                "plan_id": request.plan_id,
                "user": request.user,
                "prompt": request.prompt,
                "status": request.status.value,
                "verdict": request.verdict.value if request.verdict else None,
                "created_at": request.created_at,
                "expires_at": request.expires_at,
                "delta": self._delta_view(request),
            }

    def _delta_view(self, request: PermissionRequest) -> dict:
        return {
            app_id: {
                "nodes": sorted(nodes),
                "descriptions": {
                    nid: request.descriptions[app_id][nid] for nid in sorted(nodes)
                },
                "method_counts": {
                    nid: len(self._apps[app_id][1].node(nid).methods) for nid in sorted(nodes)
                },
            }
            for app_id, nodes in sorted(request.delta.items())
        }

    def _expire_requests(self) -> None:
        now = self._now()
        for request in self._requests.values():
            if request.status is RequestStatus.PENDING and now > request.expires_at:
                request.status = RequestStatus.EXPIRED
                plan = self._plans[request.plan_id]
                plan.status = PlanStatus.EXPIRED
                self._notify(
                    {"event": "expired", "request_id": request.request_id, "plan_id": request.plan_id}
                )

    def resolve_request(self, request_id: str, verdict: Verdict) -> dict:
        """Apply the user's verdict; exactly one resolver can win."""
        with self._lock:
            request = self._requests.get(request_id)
            if request is None:
                raise NotFoundError(f"unknown request {request_id!r}")
            self._expire_requests()
            if request.status is not RequestStatus.PENDING:
                raise ConflictError(
                    f"request {request_id!r} already {request.status.value.lower()}"
                )
            request.status = RequestStatus.DECIDED
            request.verdict = verdict
            plan = self._plans[request.plan_id]
            step = self._plan_steps[request.plan_id]

            for app_id in sorted(request.delta):
                self._store.apply_decision(
                    request.session_id, app_id, request.delta[app_id], verdict
                )
            log_seq = self._store.log_records()[-1]["seq"]
            step.decision = {
                "verdict": verdict.value,
                "apps": {app: sorted(nodes) for app, nodes in sorted(request.delta.items())},
                "session_id": request.session_id,
                "log_seq": log_seq,
            }

            if verdict is Verdict.DENY:
                plan.status = PlanStatus.DENIED
            else:
                plan.status = PlanStatus.AUTHORIZED
                self._record_plan_uses(plan)
            self._notify(
                {
                    "event": "decided",
                    "request_id": request_id,
                    "verdict": verdict.value,
                    "plan_id": plan.plan_id,
                    "plan_status": plan.status.value,
                }
            )
            return {
                "request_id": request_id,
                "verdict": verdict.value,
                "plan_id": plan.plan_id,
                "plan_status": plan.status.value,
            }

    def plan_view(self, plan_id: str) -> dict:
        with self._lock:
            plan = self._plans.get(plan_id)
            if plan is None:
                raise NotFoundError(f"unknown plan {plan_id!r}")
            self._expire_requests()
            return {
                "plan_id": plan.plan_id,
                "session_id": plan.session_id,
                "status": plan.status.value,
                "completed": plan.completed,
                "calls": [
                    {"app": c.app_id, "method": c.method, "executed": i in plan.executed}
                    for i, c in enumerate(plan.calls)
                ],
            }

    # ------------------------------------------------------------------
    # interception

    def intercept(self, envelope: ToolCallEnvelope) -> dict:
        """Validate one tool call; forward it only when fully authorized.

        Every failure is returned as a structured tool-level error so the
        agent sees a uniform channel; nothing is forwarded on failure.
        """
        t0 = time.perf_counter_ns()
        try:
            session = self._store.session_for_token(envelope.token)
        except AuthenticationError as exc:
            self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)
            return _tool_error(exc.code, str(exc), envelope)

        with self._lock:
            self._expire_requests()
            plan = self._plans.get(envelope.plan_id)
            if plan is None or plan.session_id != session.session_id:
                self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)
                return _tool_error(
                    "plan_not_authorized", f"no plan {envelope.plan_id!r} in this session", envelope
                )
            if plan.status is not PlanStatus.AUTHORIZED:
                self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)
                return _tool_error(
                    "plan_not_authorized",
                    f"plan {envelope.plan_id!r} is {plan.status.value}",
                    envelope,
                )
            if envelope.app_id not in self._apps:
                self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)
                return _tool_error("unknown_app", f"unknown app {envelope.app_id!r}", envelope)
            forest = self._apps[envelope.app_id][1]
            try:
                forest.scopes_for_method(envelope.method)
            except UnknownMethodError as exc:
                self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)
                return _tool_error(exc.code, str(exc), envelope)
            covered = self._covered_methods(session.session_id, envelope.app_id)
            if envelope.method not in covered:
                self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)
                return _tool_error(
                    "insufficient_permission",
                    f"method {envelope.method!r} on {envelope.app_id!r} is not covered "
                    "by the session's grants",
                    envelope,
                )
            self.metrics["intercept_validation_ns"].append(time.perf_counter_ns() - t0)

            # Validation passed: attach the credential and forward.
            credential = self._store.fetch_credential(envelope.app_id)
            service = self._services[envelope.app_id]
            response = service.handle(
                envelope.method,
                envelope.payload,
                {STAMP_HEADER: self._stamp, AUTH_HEADER: credential.secret_material},
            )

            log_seq = self._store.log_records()[-1]["seq"]
            call_index = self._mark_executed(plan, envelope)
            step = self._plan_steps[envelope.plan_id]
            step.executed_calls.append(
                {
                    "app": envelope.app_id,
                    "method": envelope.method,
                    "session_id": session.session_id,
                    "plan_id": envelope.plan_id,
                    "call_index": call_index,
                    "log_seq": log_seq,
                }
            )
            return response

    def intercept_call(self, token: str, call: ToolCall, plan_id: str) -> dict:
        """Convenience wrapper building the envelope for a planned call."""
        return self.intercept(
            ToolCallEnvelope(
                token=token,
                app_id=call.app_id,
                method=call.method,
                plan_id=plan_id,
                payload=call.payload,
            )
        )

    def _covered_methods(self, session_id: str, app_id: str) -> frozenset[str]:
        """Methods reachable from the session's effective nodes, cached
        against the session version so reads stay cheap."""
        version = self._store.session_version(session_id)
        key = (session_id, app_id)
        cached = self._coverage_cache.get(key)
        if cached is not None and cached[0] == version:
            return cached[1]
        forest = self._apps[app_id][1]
        nodes = self._store.effective_nodes(session_id, app_id)
        covered = forest.methods_under(nodes)
        self._coverage_cache[key] = (version, covered)
        return covered

    def _mark_executed(self, plan: ExecutionPlan, envelope: ToolCallEnvelope) -> int | None:
        """Tick off the first unexecuted matching plan call; when the whole
        plan has run, consume the ONCE grants it depended on."""
        call_index: int | None = None
        for i, call in enumerate(plan.calls):
            if i in plan.executed:
                continue
            if call.app_id == envelope.app_id and call.method == envelope.method:
                plan.executed.add(i)
                call_index = i
                break
        if (
            not plan.completed
            and plan.calls
            and len(plan.executed) == len(plan.calls)
        ):
            plan.completed = True
            self._store.consume_once_grants(plan.session_id, plan.plan_id)
        return call_index

    # ------------------------------------------------------------------
    # operator surface

    def grants_listing(self) -> dict:
        return self._store.grants_listing()

    def revoke(self, user: str, app_id: str, node_id: str, now: bool = False) -> None:
        if now:
            self._store.revoke_now(user, app_id, node_id)
        else:
            self._store.revoke(user, app_id, node_id)

    def export_trace(self) -> dict:
        with self._lock:
            return self.trace.to_dict()

    def subscribe(self) -> queue.SimpleQueue:
        """Event queue for approval UIs; receives request/decided events."""
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._lock:
            self._listeners.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self._lock:
            if q in self._listeners:
                self._listeners.remove(q)

    def _notify(self, event: dict) -> None:
        for q in self._listeners:
            q.put(event)


def _tool_error(code: str, message: str, envelope: ToolCallEnvelope) -> dict:
    return {
        "ok": False,
        "error": {
            "code": code,
            "message": message,
            "app": envelope.app_id,
            "method": envelope.method,
        },
    }
