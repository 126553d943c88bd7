"""Gateway behavior: plan intake, approvals, interception, and revocation."""

from __future__ import annotations

import pytest

from leastscope.errors import (
    AuthenticationError,
    ConflictError,
    NotFoundError,
    PlanValidationError,
    UnknownMethodError,
)
from leastscope.gateway import Gateway, ToolCall, ToolCallEnvelope
from leastscope.grants import GrantStore, Verdict


def open_gateway(gw):
    opened = gw.open_session("alice")
    return opened["token"], opened["session_id"]


def approve(gw, response, verdict=Verdict.SESSION):
    return gw.resolve_request(response["request_id"], verdict)


READS = [ToolCall("calendar", "events.list"), ToolCall("calendar", "events.get")]


def test_plan_needing_nothing_is_authorized(gateway):
    token, _ = open_gateway(gateway)
    assert gateway.submit_plan(token, [], prompt="no-op")["status"] == "AUTHORIZED"


def test_plan_surfaces_minimal_delta(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS, prompt="check schedule")
    assert response["status"] == "NEEDS_APPROVAL"
    delta = response["delta"]["calendar"]
    assert delta["nodes"] == ["calendar.events.readonly"]
    assert delta["method_counts"]["calendar.events.readonly"] == 4
    assert "Read-only access to events" in delta["descriptions"]["calendar.events.readonly"]


def test_merged_node_description_joins_members(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(
        token,
        [ToolCall("calendar", "events.metadata.get"), ToolCall("calendar", "events.attachments.list")],
    )
    merged = "calendar.events.owned.readonly+calendar.events.public.readonly"
    description = response["delta"]["calendar"]["descriptions"][merged]
    assert "; " in description
    assert "calendars you own" in description
    assert "public events" in description


def test_cross_app_plan_single_request(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(
        token, READS + [ToolCall("mail", "messages.list")], prompt="both apps"
    )
    assert sorted(response["delta"]) == ["calendar", "mail"]


def test_approval_authorizes_and_grants(gateway):
    token, session_id = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    assert gateway.plan_view(response["plan_id"])["status"] == "AUTHORIZED"
    assert "calendar.events.readonly" in gateway.store.effective_nodes(session_id, "calendar")


def test_second_resolver_conflicts(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    with pytest.raises(ConflictError):
        approve(gateway, response, Verdict.DENY)


def test_deny_blocks_execution(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response, Verdict.DENY)
    out = gateway.intercept_call(token, READS[0], response["plan_id"])
    assert out["ok"] is False
    assert out["error"]["code"] == "plan_not_authorized"


def test_covered_plan_skips_prompt(gateway):
    token, _ = open_gateway(gateway)
    approve(gateway, gateway.submit_plan(token, READS))
    response = gateway.submit_plan(token, [ToolCall("calendar", "events.list")])
    assert response["status"] == "AUTHORIZED"
    assert "request_id" not in response


def test_unknown_app_in_plan_rejected(gateway):
    token, _ = open_gateway(gateway)
    with pytest.raises(PlanValidationError):
        gateway.submit_plan(token, [ToolCall("nope", "x.y")])


def test_unknown_method_in_plan_rejected(gateway):
    token, _ = open_gateway(gateway)
    with pytest.raises(UnknownMethodError) as info:
        gateway.submit_plan(token, [ToolCall("calendar", "events.explode")])
    assert info.value.call_index == 0


def test_forward_dependency_rejected(gateway):
    token, _ = open_gateway(gateway)
    with pytest.raises(PlanValidationError):
        gateway.submit_plan(
            token,
            [ToolCall("calendar", "events.list", depends_on=(1,)), ToolCall("calendar", "events.get")],
        )


def test_duplicate_plan_id_rejected(gateway):
    token, _ = open_gateway(gateway)
    gateway.submit_plan(token, [], plan_id="p1")
    with pytest.raises(ConflictError):
        gateway.submit_plan(token, [], plan_id="p1")


def test_bad_token_rejected_at_submit(gateway):
    with pytest.raises(AuthenticationError):
        gateway.submit_plan("guessed-" + "0" * 22, READS)


# ----------------------------------------------------------------------
# interception


def test_authorized_call_forwards_and_marks(gateway):
    token, _ = open_gateway(gateway)
    gateway.service("calendar").seed([{"title": "standup"}])
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    out = gateway.intercept_call(token, READS[0], response["plan_id"])
    assert out["ok"] is True
    assert out["result"]["items"] == [{"title": "standup"}]
    steps = gateway.export_trace()["steps"]
    assert steps[-1]["executed_calls"][0]["method"] == "events.list"
    assert steps[-1]["executed_calls"][0]["log_seq"] > 0


def test_intercept_rejects_wrong_session_plan(gateway):
    token_a, _ = open_gateway(gateway)
    opened_b = gateway.open_session("bob")
    response = gateway.submit_plan(token_a, READS)
    approve(gateway, response)
    out = gateway.intercept_call(opened_b["token"], READS[0], response["plan_id"])
    assert out["error"]["code"] == "plan_not_authorized"


def test_intercept_rejects_uncovered_method(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    out = gateway.intercept_call(token, ToolCall("calendar", "events.delete"), response["plan_id"])
    assert out["ok"] is False
    assert out["error"]["code"] == "insufficient_permission"
    assert gateway.service("calendar").served == 0


def test_intercept_rejects_unknown_method(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    out = gateway.intercept_call(token, ToolCall("calendar", "no.such"), response["plan_id"])
    assert out["error"]["code"] == "unknown_method"


def test_intercept_rejects_unknown_app(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    envelope = ToolCallEnvelope(
        token=token, app_id="nope", method="x.y", plan_id=response["plan_id"]
    )
    assert gateway.intercept(envelope)["error"]["code"] == "unknown_app"


def test_intercept_rejects_guessed_token(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    envelope = ToolCallEnvelope(
        token="guessed-" + "0" * 22,
        app_id="calendar",
        method="events.list",
        plan_id=response["plan_id"],
    )
    out = gateway.intercept(envelope)
    assert out["error"]["code"] == "authentication_rejected"
    assert gateway.service("calendar").served == 0


def test_once_grant_consumed_when_plan_completes(gateway):
    token, session_id = open_gateway(gateway)
    call = ToolCall("calendar", "events.insert")
    response = gateway.submit_plan(token, [call])
    approve(gateway, response, Verdict.ONCE)
    assert gateway.intercept_call(token, call, response["plan_id"])["ok"] is True
    assert gateway.store.effective_nodes(session_id, "calendar") == frozenset()
    again = gateway.submit_plan(token, [call])
    assert again["status"] == "NEEDS_APPROVAL"


def test_grant_survives_for_repeated_calls_in_plan(gateway):
    token, _ = open_gateway(gateway)
    calls = [ToolCall("calendar", "events.insert"), ToolCall("calendar", "events.insert")]
    response = gateway.submit_plan(token, calls)
    approve(gateway, response, Verdict.ONCE)
    assert gateway.intercept_call(token, calls[0], response["plan_id"])["ok"] is True
    # plan incomplete: the grant must still authorize the second call
    assert gateway.intercept_call(token, calls[1], response["plan_id"])["ok"] is True


def test_revoke_now_cuts_off_authorized_plan(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response, Verdict.ALWAYS)
    assert gateway.intercept_call(token, READS[0], response["plan_id"])["ok"] is True
    gateway.revoke("alice", "calendar", "calendar.events.readonly", now=True)
    out = gateway.intercept_call(token, READS[1], response["plan_id"])
    assert out["error"]["code"] == "insufficient_permission"


def test_plain_revoke_spares_live_session(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response, Verdict.ALWAYS)
    gateway.revoke("alice", "calendar", "calendar.events.readonly")
    assert gateway.intercept_call(token, READS[0], response["plan_id"])["ok"] is True
    fresh = gateway.open_session("alice")
    assert gateway.submit_plan(fresh["token"], READS)["status"] == "NEEDS_APPROVAL"


# ----------------------------------------------------------------------
# requests and expiry


def test_pending_request_view(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS, prompt="check schedule")
    pending = gateway.pending_requests()
    assert len(pending) == 1
    assert pending[0]["request_id"] == response["request_id"]
    assert pending[0]["status"] == "PENDING"


def test_request_expires_after_timeout(calendar_map):
    clock = {"now": 1000.0}
    gw = Gateway(GrantStore(None), [calendar_map], request_timeout=60.0, now=lambda: clock["now"])
    token, _ = open_gateway(gw)
    response = gw.submit_plan(token, READS)
    clock["now"] += 61.0
    assert gw.pending_requests() == []
    assert gw.plan_view(response["plan_id"])["status"] == "EXPIRED"
    with pytest.raises(ConflictError):
        gw.resolve_request(response["request_id"], Verdict.SESSION)


def test_unknown_request_not_found(gateway):
    with pytest.raises(NotFoundError):
        gateway.resolve_request("req-9999", Verdict.SESSION)
    with pytest.raises(NotFoundError):
        gateway.request_view("req-9999")


def test_subscribers_see_request_and_decision(gateway):
    q = gateway.subscribe()
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    events = [q.get_nowait()["event"] for _ in range(2)]
    assert events == ["request", "decided"]
    gateway.unsubscribe(q)


def test_trace_records_decision_and_log_seq(gateway):
    token, session_id = open_gateway(gateway)
    response = gateway.submit_plan(token, READS, prompt="check schedule")
    approve(gateway, response)
    gateway.intercept_call(token, READS[0], response["plan_id"])
    step = gateway.export_trace()["steps"][0]
    assert step["prompt"] == "check schedule"
    assert step["decision"]["verdict"] == "SESSION"
    assert step["decision"]["session_id"] == session_id
    assert step["decision"]["apps"] == {"calendar": ["calendar.events.readonly"]}
    assert step["decision"]["log_seq"] <= step["executed_calls"][0]["log_seq"]


def test_metrics_collected(gateway):
    token, _ = open_gateway(gateway)
    response = gateway.submit_plan(token, READS)
    approve(gateway, response)
    gateway.intercept_call(token, READS[0], response["plan_id"])
    assert gateway.metrics["solve_ns"]
    assert gateway.metrics["intercept_validation_ns"]
