"""Scripted agent scenarios.

A scenario file drives one agent against the gateway: per turn it submits
a plan, lets a persona answer the prompt, executes authorized calls, and
may attempt rogue calls, react to injected markers found in tool output
with a revision plan, guess tokens, call services directly, or trigger
administrative revocations. The runner captures every byte delivered to
the agent so leak checks can scan the full agent channel, and returns the
gateway's interaction trace for independent auditing.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, LeastScopeError
from .fixtures import fixture_json, fixture_scope_map
from .gateway import Gateway, ToolCall, ToolCallEnvelope
from .grants import GrantStore
from .scopes import ScopeMap
from .simulate import Persona, make_persona

SCENARIO_SCHEMA_VERSION = 1


@dataclass
class ScenarioResult:
    """Everything a test needs to judge one scenario run."""

    name: str
    gateway: Gateway
    store: GrantStore
    trace: dict = field(default_factory=dict)
    agent_channel: list[str] = field(default_factory=list)
    log_records: list[dict] = field(default_factory=list)
    plan_statuses: dict[str, str] = field(default_factory=dict)

    def agent_bytes(self) -> str:
        return "\n".join(self.agent_channel)


class _Clock:
    """Wall clock with a controllable offset for expiry scenarios."""

    def __init__(self) -> None:
        self.offset = 0.0

    def __call__(self) -> float:
        return time.time() + self.offset


def load_scenario(name_or_path: str | Path) -> dict:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        script = json.loads(path.read_text(encoding="utf-8"))
    else:
        script = fixture_json(f"scenarios/{name_or_path}.json")
    if script.get("schema_version") != SCENARIO_SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported scenario schema {script.get('schema_version')!r}"
        )
    for key in ("name", "apps", "persona", "turns"):
        if key not in script:
            raise ConfigurationError(f"scenario missing {key!r}")
    return script


def run_scenario(
    script: dict,
    scope_maps: dict[str, ScopeMap] | None = None,
    store: GrantStore | None = None,
) -> ScenarioResult:
    """Run one scenario script against a fresh gateway."""
    maps = []
    for app_id in script["apps"]:
        if scope_maps and app_id in scope_maps:
            maps.append(scope_maps[app_id])
        else:
            maps.append(fixture_scope_map(app_id))
    clock = _Clock()
    store = store if store is not None else GrantStore(None)
    gateway = Gateway(
        store,
        maps,
        request_timeout=script.get("request_timeout", 600.0),
        now=clock,
    )
    for app_id, items in script.get("service_seed", {}).items():
        gateway.service(app_id).seed(items)

    runner = _Runner(script, gateway, store, clock)
    return runner.run()


class _Runner:
    def __init__(self, script: dict, gateway: Gateway, store: GrantStore, clock: _Clock) -> None:
        self.script = script
        self.gateway = gateway
        self.store = store
        self.clock = clock
        self.persona: Persona = make_persona(script["persona"])
        self.user = script.get("user", "default")
        self.result = ScenarioResult(name=script["name"], gateway=gateway, store=store)
        self.token = ""
        self.session_id = ""
        self.current_plan_id: str | None = None

    def run(self) -> ScenarioResult:
        self._open_session()
        for turn in self.script["turns"]:
            self._run_turn(turn)
        self.result.trace = self.gateway.export_trace()
        self.result.log_records = self.store.log_records()
        return self.result

    # ------------------------------------------------------------------

    def _open_session(self) -> None:
        opened = self.gateway.open_session(self.user)
        self.token = opened["token"]
        self.session_id = opened["session_id"]

    def _capture(self, payload: dict) -> dict:
        """Record one agent-visible response on the agent channel."""
        self.result.agent_channel.append(json.dumps(payload, sort_keys=True))
        return payload

    def _run_turn(self, turn: dict) -> None:
        if turn.get("advance_time"):
            self.clock.offset += float(turn["advance_time"])
        for admin in turn.get("admin", []):
            self._run_admin(admin)
        if turn.get("new_session"):
            self.gateway.close_session(self.session_id)
            self._open_session()

        responses: list[dict] = []
        if turn.get("plan") is not None:
            responses = self._submit_and_execute(
                prompt=turn.get("prompt", ""),
                plan_calls=turn["plan"],
                execute=turn.get("execute", True),
                execute_prefix=turn.get("execute_prefix"),
                leave_pending=turn.get("leave_pending", False),
                plan_id=turn.get("plan_id"),
            )

        for rogue in turn.get("rogue_calls", []):
            self._attempt_rogue(rogue)
        for direct in turn.get("direct_service_calls", []):
            self._attempt_direct(direct)
        if turn.get("list_pending"):
            self._capture({"pending_requests": self.gateway.pending_requests()})

        reaction = turn.get("on_marker")
        if reaction and _marker_seen(responses, reaction["marker"]):
            revision = self._submit_and_execute(
                prompt=f"[revision] {turn.get('prompt', '')}",
                plan_calls=reaction["plan"],
                execute=reaction.get("execute", True),
                execute_prefix=None,
                leave_pending=False,
                plan_id=None,
            )
            del revision
            for rogue in reaction.get("rogue_calls", []):
                self._attempt_rogue(rogue)

    def _submit_and_execute(
        self,
        prompt: str,
        plan_calls: list[dict],
        execute: bool,
        execute_prefix: int | None,
        leave_pending: bool,
        plan_id: str | None,
    ) -> list[dict]:
        calls = [
            ToolCall(
                app_id=c["app"],
                method=c["method"],
                payload=c.get("payload"),
                depends_on=tuple(c.get("depends_on", ())),
            )
            for c in plan_calls
        ]
        try:
            response = self.gateway.submit_plan(self.token, calls, prompt=prompt, plan_id=plan_id)
        except LeastScopeError as exc:
            self._capture(exc.to_dict())
            return []
        self._capture(response)
        self.current_plan_id = response["plan_id"]

        if response["status"] == "NEEDS_APPROVAL" and not leave_pending:
            verdict = self.persona.decide(self.gateway.request_view(response["request_id"]))
            resolution = self.gateway.resolve_request(response["request_id"], verdict)
            self._capture(resolution)

        status = self.gateway.plan_view(self.current_plan_id)["status"]
        self.result.plan_statuses[self.current_plan_id] = status
        if status != "AUTHORIZED" or not execute:
            return []

        responses: list[dict] = []
        limit = len(calls) if execute_prefix is None else min(execute_prefix, len(calls))
        for call in calls[:limit]:
            out = self.gateway.intercept_call(self.token, call, self.current_plan_id)
            self._capture(out)
            responses.append(out)
        return responses

    def _attempt_rogue(self, rogue: dict) -> None:
        token = self.token
        if rogue.get("token") == "random":
            token = "guessed-" + "0" * 22
        plan_ref = rogue.get("plan", "current")
        if plan_ref == "current":
            plan_id = self.current_plan_id or "plan-none"
        else:
            plan_id = plan_ref
        envelope = ToolCallEnvelope(
            token=token,
            app_id=rogue["app"],
            method=rogue["method"],
            plan_id=plan_id,
            payload=rogue.get("payload"),
        )
        self._capture(self.gateway.intercept(envelope))

    def _attempt_direct(self, direct: dict) -> None:
        service = self.gateway.service(direct["app"])
        response = service.handle(direct["method"], direct.get("payload"), headers={})
        self._capture(response)

    def _run_admin(self, admin: dict) -> None:
        action = admin["action"]
        if action == "revoke":
            self.gateway.revoke(admin.get("user", self.user), admin["app"], admin["node"])
        elif action == "revoke_now":
            self.gateway.revoke(
                admin.get("user", self.user), admin["app"], admin["node"], now=True
            )
        else:
            raise ConfigurationError(f"unknown admin action {action!r}")


def _marker_seen(responses: list[dict], marker: str) -> bool:
    return any(marker in json.dumps(r) for r in responses)
